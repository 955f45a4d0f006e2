//! Desk-scale acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tubeflock::dynamics::{
    axial_momentum, dissipation_rate, energy, integrate_fixed, simulate, IntegratorConfig, PhaseState, TubeSystem,
};
use tubeflock::flocking::{
    flocking_verdict, simulate_classical, simulate_classical_from, velocity_diameter, ClassicalSpec,
};
use tubeflock::functionals::{local_q, mollified_w, WindowSpec};
use tubeflock::initial_data::{sample_configuration, save_snapshot, SamplerSpec};
use tubeflock::neighbor::AxialCellIndex;
use tubeflock::partial::{bound_study, convergence_study, locality_probe, Perturbation};
use tubeflock::{CommKernel, Configuration, Exec, ModelParams, ParticleState, Vec3};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64, outcome: Outcome) -> Outcome {
    let secs = elapsed.as_secs_f64();
    match outcome {
        Ok(d) if secs <= limit_s => Ok(format!("{d} [{secs:.1}s]")),
        Ok(d) => Err(format!("{d} but took {secs:.1}s > {limit_s}s")),
        Err(d) => Err(format!("{d} [{secs:.1}s]")),
    }
}

fn full_sample(seed: u64) -> Configuration {
    let spec = SamplerSpec {
        seed,
        ..SamplerSpec::default()
    };
    sample_configuration(&spec, &ModelParams::default().geometry).expect("default sample")
}

fn with_state(template: &Configuration, s: &PhaseState) -> Configuration {
    let ps = template
        .particles()
        .iter()
        .zip(s.x.iter().zip(&s.v))
        .map(|(p, (x, v))| ParticleState::new(p.id, *x, *v))
        .collect();
    Configuration::new(ps, template.geometry().clone(), template.time()).unwrap()
}

/// Twenty sampled particles closest to the origin.
fn twenty_particles() -> Configuration {
    let full = full_sample(20);
    let mut ps = full.particles().to_vec();
    ps.sort_by(|a, b| a.x.x.abs().total_cmp(&b.x.x.abs()));
    ps.truncate(20);
    Configuration::new(ps, full.geometry().clone(), 0.0).unwrap()
}

fn dissipation_identity() -> Outcome {
    let params = ModelParams::default();
    let icfg = IntegratorConfig::default();
    let initial = twenty_particles();
    let traj = simulate(&initial, &params, &icfg, 2.0, 0.05).map_err(|e| e.to_string())?;
    let system = TubeSystem::for_config(&params, &initial, Exec::Sequential);
    let h = 1e-3;
    let mut worst_rel = 0.0f64;
    let mut worst_rise = 0.0f64;
    let mut prev: Option<f64> = None;
    for c in &traj.snapshots {
        let state = PhaseState::new(c.positions(), c.velocities());
        let plus = integrate_fixed(&system, &state, h, 1, Exec::Sequential).map_err(|e| e.to_string())?;
        let minus = integrate_fixed(&system, &state, -h, 1, Exec::Sequential).map_err(|e| e.to_string())?;
        let ep = energy(&with_state(c, &plus), &params).unwrap();
        let em = energy(&with_state(c, &minus), &params).unwrap();
        let slope = (ep - em) / (2.0 * h);
        let d = dissipation_rate(c, &params);
        worst_rel = worst_rel.max((slope - d).abs() / d.abs());
        let e = energy(c, &params).unwrap();
        if let Some(p) = prev {
            worst_rise = worst_rise.max((e - p) / p.abs());
        }
        prev = Some(e);
    }
    check(
        worst_rel <= 1e-4 && worst_rise <= 1e-6,
        format!("max |dE/dt - D|/|D| = {worst_rel:.2e}, max relative energy rise = {worst_rise:.2e}"),
    )
}

fn momentum_conservation() -> Outcome {
    let params = ModelParams::default();
    let initial = twenty_particles();
    let traj = simulate(&initial, &params, &IntegratorConfig::default(), 2.0, 0.05).map_err(|e| e.to_string())?;
    let p0 = axial_momentum(&traj.snapshots[0]);
    let worst = traj.snapshots[1..]
        .iter()
        .map(|c| (axial_momentum(c) - p0).abs() / c.time())
        .fold(0.0, f64::max);
    check(worst <= 1e-8, format!("max |P(t) - P(0)| / t = {worst:.2e}"))
}

fn sandwich() -> Outcome {
    let params = ModelParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    for trial in 0..200u64 {
        let spec = SamplerSpec {
            seed: 1000 + trial,
            density: rng.random_range(0.2..2.0),
            velocity_scale: rng.random_range(0.0..2.0),
            half_span: rng.random_range(2.0..30.0),
            min_separation: 0.1,
            log_growth: rng.random_bool(0.5),
            transverse_cap: 0.9,
        };
        let c = sample_configuration(&spec, &params.geometry).map_err(|e| e.to_string())?;
        let w = WindowSpec::new(rng.random_range(-30.0..30.0), rng.random_range(0.05..20.0)).unwrap();
        let q = local_q(&c, &params, &w).unwrap();
        let m = mollified_w(&c, &params, &w).unwrap();
        let q2 = local_q(&c, &params, &WindowSpec::new(w.center, 2.0 * w.half_width).unwrap()).unwrap();
        if !(q <= m && m <= q2) {
            return Err(format!("trial {trial}: Q = {q}, W = {m}, Q(2R) = {q2}"));
        }
        checked += 1;
    }
    check(true, format!("Q <= W <= Q(2R) exactly on {checked} configurations"))
}

fn neighbor_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let axis = Vec3::new(1.0, 2.0, -0.5).normalize();
    for trial in 0..100 {
        let n = rng.random_range(0..=500usize);
        let length = rng.random_range(1.0..200.0);
        let pts: Vec<Vec3> = (0..n)
            .map(|_| {
                let a = rng.random_range(-length..length);
                let p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                axis * a + (p - axis * p.dot(&axis)) * 0.7
            })
            .collect();
        let range = rng.random_range(0.1..5.0);
        let width = range * rng.random_range(1.0..3.0);
        let index = AxialCellIndex::build(&pts, &axis, width, range).unwrap();
        for i in 0..n {
            let brute: Vec<usize> = (0..n).filter(|&j| j != i && (pts[i] - pts[j]).norm() <= range).collect();
            if index.neighbors(i) != brute {
                return Err(format!("trial {trial}: neighbor sets of particle {i} differ"));
            }
        }
    }
    check(true, "cell lists equal brute force on 100 configurations".into())
}

fn integrator_order() -> Outcome {
    let params = ModelParams::default();
    let c = Configuration::new(
        vec![
            ParticleState::new(0, Vec3::new(-1.0, 0.1, 0.0), Vec3::new(0.8, 0.0, 0.05)),
            ParticleState::new(1, Vec3::new(1.0, -0.1, 0.0), Vec3::new(-0.8, 0.0, -0.05)),
        ],
        params.geometry.clone(),
        0.0,
    )
    .unwrap();
    let system = TubeSystem::for_config(&params, &c, Exec::Sequential);
    let y0 = PhaseState::new(c.positions(), c.velocities());
    let run = |steps: usize| integrate_fixed(&system, &y0, 1.0 / steps as f64, steps, Exec::Sequential).unwrap();
    let dist = |a: &PhaseState, b: &PhaseState| {
        a.x.iter().zip(&b.x).chain(a.v.iter().zip(&b.v)).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
    };
    let (y1, y2, y4) = (run(10), run(20), run(40));
    let order = (dist(&y1, &y2) / dist(&y2, &y4)).log2();
    check(order >= 3.7, format!("observed order {order:.2} on the colliding pair"))
}

fn partial_convergence() -> Outcome {
    let params = ModelParams::default();
    let r = convergence_study(&full_sample(1), &[40, 80, 160], 10, &params, &IntegratorConfig::default(), 1.0, 0.05)
        .map_err(|e| e.to_string())?;
    let u = &r.summary.final_u;
    let ratio = u[1] / u[0];
    check(
        u[1] < u[0] && ratio < 0.1 && r.summary.slope < 0.0,
        format!(
            "u_10 = {:.3e}, {:.3e}; final ratio {ratio:.2e}; slope {:.3}; horizon {:.2}",
            u[0], u[1], r.summary.slope, r.summary.horizon
        ),
    )
}

fn lemma1_boundedness() -> Outcome {
    let params = ModelParams::default();
    let r = bound_study(&full_sample(1), &[40, 80, 160], &params, &IntegratorConfig::default(), 2.0, 0.05)
        .map_err(|e| e.to_string())?;
    let by_level = r.lemma1_max_by_level();
    let spread = r.lemma1_spread();
    check(
        r.all_finite() && spread <= 10.0,
        format!("max ratio by level {by_level:.3?}, spread {spread:.3}"),
    )
}

fn corollary1_boundedness() -> Outcome {
    let params = ModelParams::default();
    let r = bound_study(&full_sample(1), &[25, 50, 100, 200], &params, &IntegratorConfig::default(), 2.0, 0.05)
        .map_err(|e| e.to_string())?;
    let spread = r.cor1_spread();
    check(
        r.all_finite() && spread <= 10.0,
        format!("worst across-ladder spread of V_n/sqrt(log(e+n)) over t: {spread:.3}"),
    )
}

fn locality() -> Outcome {
    let params = ModelParams::default();
    let icfg = IntegratorConfig::default();
    let full = full_sample(1);
    let kick = Perturbation {
        dx: Vec3::zeros(),
        dv: Vec3::new(0.5, 0.0, 0.0),
    };
    // walk outwards until the particle sits at least twice the measured horizon from I_10
    let mut order: Vec<&ParticleState> = full.particles().iter().filter(|p| p.x.x > 10.0).collect();
    order.sort_by(|a, b| a.x.x.total_cmp(&b.x.x));
    let guess = params.range() + 2.0 * full.max_speed();
    for p in order.into_iter().filter(|p| p.x.x - 10.0 >= guess) {
        let r = locality_probe(&full, 80, p.id, kick, 10, &params, &icfg, 1.0, 0.05, true).map_err(|e| e.to_string())?;
        if r.distance >= 2.0 * r.horizon {
            return check(
                r.max_discrepancy <= 10.0 * icfg.rtol,
                format!(
                    "distance {:.2} = {:.2} horizons, window discrepancy {:.2e}",
                    r.distance,
                    r.distance / r.horizon,
                    r.max_discrepancy
                ),
            );
        }
    }
    Err("no particle at twice the horizon inside level 80".into())
}

fn classical_flocking() -> Outcome {
    let icfg = IntegratorConfig::default();
    let spec = ClassicalSpec::new(50, 0.25, 1.0, 5, 50.0);
    let traj = simulate_classical(&spec, &icfg).map_err(|e| e.to_string())?;
    let d0 = velocity_diameter(&traj.states[0]).unwrap();
    let v = flocking_verdict(&traj, 1e-3 * d0, 100.0).unwrap();
    let pair = PhaseState::new(
        vec![Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0)],
        vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.5, 0.0)],
    );
    let tight = icfg.with_rtol(1e-11).with_atol(1e-13);
    let two = simulate_classical_from(pair, CommKernel::inverse_power(0.5, 1e-9).unwrap(), 1.0, 0.5, &tight)
        .map_err(|e| e.to_string())?;
    let decay = velocity_diameter(&two.states[2]).unwrap() / velocity_diameter(&two.states[0]).unwrap();
    let err = (decay - (-1.0f64).exp()).abs();
    check(
        v.verdict && err <= 1e-4,
        format!(
            "N=50: diameter {:.2e} -> {:.2e}, spread <= {:.2}; N=2 decay error {err:.1e}",
            d0, v.final_velocity_diameter, v.position_spread
        ),
    )
}

fn reproducibility() -> Outcome {
    let params = ModelParams::default();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SamplerSpec {
        half_span: 120.0,
        ..SamplerSpec::default()
    };
    let artifacts = |tag: &str, exec: Exec| -> Result<Vec<u8>, String> {
        let icfg = IntegratorConfig::default().with_exec(exec);
        let full = sample_configuration(&spec, &params.geometry).map_err(|e| e.to_string())?;
        let study = convergence_study(&full, &[40, 80], 10, &params, &icfg, 0.5, 0.05).map_err(|e| e.to_string())?;
        let traj = simulate(&full, &params, &icfg, 0.5, 0.05).map_err(|e| e.to_string())?;
        let snap = dir.path().join(format!("{tag}.jsonl"));
        save_snapshot(traj.last(), "", &snap).map_err(|e| e.to_string())?;
        let mut bytes = std::fs::read(&snap).map_err(|e| e.to_string())?;
        study.write_csv(&mut bytes).map_err(|e| e.to_string())?;
        bytes.extend(serde_json::to_vec(&study.summary).map_err(|e| e.to_string())?);
        Ok(bytes)
    };
    let a = artifacts("a", Exec::Parallel)?;
    let b = artifacts("b", Exec::Parallel)?;
    let s = artifacts("s", Exec::Sequential)?;
    check(
        a == b && a == s,
        format!("{} bytes of snapshot and report identical across runs and execution modes", a.len()),
    )
}

fn main() {
    let criteria: [(&str, f64, fn() -> Outcome); 11] = [
        ("dissipation identity", 10.0, dissipation_identity),
        ("axial momentum", 10.0, momentum_conservation),
        ("sandwich inequality", 5.0, sandwich),
        ("neighbor oracle", 10.0, neighbor_oracle),
        ("integrator order", 5.0, integrator_order),
        ("partial-dynamics convergence", 300.0, partial_convergence),
        ("Lemma 1 boundedness", 300.0, lemma1_boundedness),
        ("Corollary 1 boundedness", 300.0, corollary1_boundedness),
        ("locality", 60.0, locality),
        ("classical flocking", 30.0, classical_flocking),
        ("reproducibility", 300.0, reproducibility),
    ];
    let mut failures = 0;
    for (k, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        match within(start.elapsed(), *limit, outcome) {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", k + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL {:>2} {name}: {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
