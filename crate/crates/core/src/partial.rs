//! Ladders of n-partial dynamics: the particles initially within axial
//! distance `n` of the origin, evolved in isolation.
//!
//! All levels of a ladder advance with one shared step sequence, so two
//! levels whose member sets coincide produce bitwise-identical trajectories
//! and level differences measure the influence of the added shell only.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    integrate_lockstep, phase_state, DynamicsError, IntegratorConfig, TimedFailure, Trajectory, TubeSystem,
};
use crate::functionals::{bound_rows, sup_q, BoundReport, FunctionalError, SupGrid};
use crate::model::{Configuration, ModelError, ModelParams, ParticleState, Vec3};

#[derive(Debug, Error)]
pub enum PartialError {
    #[error("ladder must be non-empty and strictly increasing")]
    NotIncreasing,
    #[error("level n = {n}: {source}")]
    Level {
        n: u64,
        #[source]
        source: TimedFailure,
    },
    #[error("particle {id} is not a member of level n = {n}")]
    MissingId { id: u64, n: u64 },
    #[error("time {0} is not on the snapshot grid")]
    OffGrid(f64),
    #[error("runs have different snapshot grids")]
    GridMismatch,
    #[error(
        "k + horizon = {k} + {horizon:.3} must stay below the smallest level {min_level}; use a larger ladder"
    )]
    HorizonTooLarge { k: u64, horizon: f64, min_level: u64 },
    #[error("perturbed particle is {distance:.3} from the window but must be farther than the horizon {horizon:.3}")]
    TooClose { distance: f64, horizon: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Particles with `|x . n| <= n`, ids preserved.
pub fn select_in(full: &Configuration, n: u64) -> Configuration {
    full.restrict(|p| full.geometry().axial(&p.x).abs() <= n as f64)
}

/// One level of a ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialRun {
    pub n: u64,
    pub ids: Vec<u64>,
    pub trajectory: Trajectory,
}

impl PartialRun {
    fn snapshot_index(&self, t: f64) -> Result<usize, PartialError> {
        self.trajectory
            .snapshots
            .iter()
            .position(|s| s.time() == t)
            .ok_or(PartialError::OffGrid(t))
    }

    /// Ids whose initial axial coordinate satisfies `|x . n| <= k`.
    pub fn window_ids(&self, k: u64) -> Vec<u64> {
        let init = &self.trajectory.snapshots[0];
        init.particles()
            .iter()
            .filter(|p| init.geometry().axial(&p.x).abs() <= k as f64)
            .map(|p| p.id)
            .collect()
    }

    /// Largest speed over all snapshots up to and including index `j`.
    fn max_speed_until(&self, j: usize) -> f64 {
        self.trajectory.snapshots[..=j]
            .iter()
            .map(Configuration::max_speed)
            .fold(0.0, f64::max)
    }
}

/// Runs every level of `levels` from the same full configuration.
pub fn run_ladder(
    full: &Configuration,
    levels: &[u64],
    params: &ModelParams,
    icfg: &IntegratorConfig,
    t_end: f64,
    stride: f64,
) -> Result<Vec<PartialRun>, PartialError> {
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(PartialError::NotIncreasing);
    }
    let configs: Vec<Configuration> = levels.iter().map(|&n| select_in(full, n)).collect();
    run_members(&configs, params, icfg, t_end, stride)
        .map_err(|(k, source)| PartialError::Level { n: levels[k], source })
        .map(|trajs| {
            levels
                .iter()
                .zip(configs.iter().zip(trajs))
                .map(|(&n, (c, trajectory))| PartialRun {
                    n,
                    ids: c.ids(),
                    trajectory,
                })
                .collect()
        })
}

/// Lockstep integration of several configurations; failures name the member.
fn run_members(
    configs: &[Configuration],
    params: &ModelParams,
    icfg: &IntegratorConfig,
    t_end: f64,
    stride: f64,
) -> Result<Vec<Trajectory>, (usize, TimedFailure)> {
    let systems: Vec<TubeSystem> = configs
        .iter()
        .map(|c| TubeSystem::for_config(params, c, icfg.exec))
        .collect();
    let initial = configs.iter().map(phase_state).collect();
    let run = integrate_lockstep(&systems, initial, t_end, stride, *icfg)
        .map_err(|f| (f.member.unwrap_or(0), f))?;
    let mut per_member: Vec<Vec<_>> = vec![Vec::with_capacity(run.times.len()); configs.len()];
    for snapshot in run.states {
        for (k, s) in snapshot.into_iter().enumerate() {
            per_member[k].push(s);
        }
    }
    Ok(configs
        .iter()
        .zip(per_member)
        .map(|(c, states)| {
            let times: Vec<f64> = run.times.iter().map(|t| c.time() + t).collect();
            Trajectory::from_states(c, &times, states, run.stats)
        })
        .collect())
}

fn delta(a: &ParticleState, b: &ParticleState) -> f64 {
    (a.x - b.x).norm() + (a.v - b.v).norm()
}

fn discrepancy_at(a: &PartialRun, b: &PartialRun, id: u64, j: usize) -> Result<f64, PartialError> {
    let pa = a.trajectory.snapshots[j]
        .find(id)
        .ok_or(PartialError::MissingId { id, n: a.n })?;
    let pb = b.trajectory.snapshots[j]
        .find(id)
        .ok_or(PartialError::MissingId { id, n: b.n })?;
    Ok(delta(pa, pb))
}

/// `|x_a - x_b| + |v_a - v_b|` for particle `id` at snapshot time `t`.
pub fn discrepancy(a: &PartialRun, b: &PartialRun, id: u64, t: f64) -> Result<f64, PartialError> {
    let j = a.snapshot_index(t)?;
    if b.trajectory.snapshots.get(j).map(Configuration::time) != Some(t) {
        return Err(PartialError::GridMismatch);
    }
    discrepancy_at(a, b, id, j)
}

/// Supremum of the discrepancy over the window `I_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSup {
    pub value: f64,
    /// The window holds no particle; `value` is then 0.
    pub empty: bool,
}

fn uk_at(a: &PartialRun, b: &PartialRun, ids: &[u64], j: usize) -> Result<WindowSup, PartialError> {
    let mut value = 0.0f64;
    for &id in ids {
        value = value.max(discrepancy_at(a, b, id, j)?);
    }
    Ok(WindowSup {
        value,
        empty: ids.is_empty(),
    })
}

pub fn uk(a: &PartialRun, b: &PartialRun, k: u64, t: f64) -> Result<WindowSup, PartialError> {
    let j = a.snapshot_index(t)?;
    if b.trajectory.snapshots.get(j).map(Configuration::time) != Some(t) {
        return Err(PartialError::GridMismatch);
    }
    uk_at(a, b, &a.window_ids(k), j)
}

/// Distance influence can travel within time `t`: `rbar + 2 t v_max`.
pub fn horizon(v_max: f64, t: f64, rbar: f64) -> f64 {
    rbar + 2.0 * t * v_max
}

/// One row of the convergence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n_low: u64,
    pub n_high: u64,
    pub k: u64,
    pub t: f64,
    pub u_k: f64,
    /// `u_k` of this pair over `u_k` of the previous pair at the same time.
    pub ratio: Option<f64>,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub levels: Vec<u64>,
    pub k: u64,
    pub t_end: f64,
    pub max_speed: f64,
    pub horizon: f64,
    /// Smallest level with `n > rbar + k + horizon`.
    pub n_of_k: Option<u64>,
    /// `u_k(n_j, n_{j+1}, T)` for each consecutive pair.
    pub final_u: Vec<f64>,
    pub final_ratios: Vec<Option<f64>>,
    pub slope: f64,
    pub all_zero: bool,
    pub verdict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub summary: ConvergenceSummary,
}

pub const CONVERGENCE_HEADER: &str = "n_low,n_high,k,t,u_k,ratio,horizon";

impl ConvergenceReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), PartialError> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, csv_path: &Path, json_path: &Path) -> Result<(), PartialError> {
        self.write_csv(std::fs::File::create(csv_path)?)?;
        let mut f = std::fs::File::create(json_path)?;
        serde_json::to_writer_pretty(&mut f, &self.summary)?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

/// Least-squares slope of `ln u` against `n`; zeros are floored at the
/// smallest positive normal float.
pub fn log_slope(n: &[f64], u: &[f64]) -> f64 {
    let m = n.len() as f64;
    if n.len() < 2 {
        return 0.0;
    }
    let y: Vec<f64> = u.iter().map(|&v| v.max(f64::MIN_POSITIVE).ln()).collect();
    let nx = n.iter().sum::<f64>() / m;
    let ny = y.iter().sum::<f64>() / m;
    let sxy: f64 = n.iter().zip(&y).map(|(a, b)| (a - nx) * (b - ny)).sum();
    let sxx: f64 = n.iter().map(|a| (a - nx) * (a - nx)).sum();
    sxy / sxx
}

fn decay_verdict(u: &[f64], ratios: &[Option<f64>], slope: f64) -> bool {
    if u.iter().all(|&v| v == 0.0) {
        return true;
    }
    // exact agreement is the limit of decay, so a zero may repeat
    let decreasing = u.windows(2).all(|w| w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0));
    let defined: Vec<f64> = ratios.iter().flatten().copied().collect();
    let below_one = defined.iter().all(|&r| r < 1.0);
    let shrinking = defined.windows(2).all(|w| w[1] <= w[0]);
    decreasing && below_one && shrinking && (u.len() < 2 || slope < 0.0)
}

/// Cauchy-type differences `u_k` between consecutive levels of a ladder.
#[allow(clippy::too_many_arguments)]
pub fn convergence_study(
    full: &Configuration,
    levels: &[u64],
    k: u64,
    params: &ModelParams,
    icfg: &IntegratorConfig,
    t_end: f64,
    stride: f64,
) -> Result<ConvergenceReport, PartialError> {
    let runs = run_ladder(full, levels, params, icfg, t_end, stride)?;
    convergence_report(&runs, k, params.range())
}

/// Builds the report from already computed ladder runs.
pub fn convergence_report(runs: &[PartialRun], k: u64, rbar: f64) -> Result<ConvergenceReport, PartialError> {
    let top = runs.last().ok_or(PartialError::NotIncreasing)?;
    let times = top.trajectory.times();
    let last = times.len() - 1;
    let t_end = times[last];
    let speeds: Vec<f64> = (0..times.len())
        .map(|j| runs.iter().map(|r| r.max_speed_until(j)).fold(0.0, f64::max))
        .collect();
    let p = horizon(speeds[last], t_end, rbar);
    let min_level = runs[0].n;
    if k as f64 + p >= min_level as f64 {
        return Err(PartialError::HorizonTooLarge {
            k,
            horizon: p,
            min_level,
        });
    }
    let ids = runs[0].window_ids(k);
    let mut rows = Vec::new();
    let mut final_u = Vec::new();
    let mut final_ratios = Vec::new();
    for (j, &t) in times.iter().enumerate() {
        let mut prev: Option<f64> = None;
        for pair in runs.windows(2) {
            let u = uk_at(&pair[0], &pair[1], &ids, j)?.value;
            let ratio = prev.and_then(|q| (q > 0.0).then(|| u / q));
            if j == last {
                final_u.push(u);
                if prev.is_some() {
                    final_ratios.push(ratio);
                }
            }
            rows.push(ConvergenceRow {
                n_low: pair[0].n,
                n_high: pair[1].n,
                k,
                t,
                u_k: u,
                ratio,
                horizon: horizon(speeds[j], t, rbar),
            });
            prev = Some(u);
        }
    }
    let lows: Vec<f64> = runs.iter().take(final_u.len()).map(|r| r.n as f64).collect();
    let slope = log_slope(&lows, &final_u);
    let all_zero = final_u.iter().all(|&u| u == 0.0);
    let verdict = decay_verdict(&final_u, &final_ratios, slope);
    let n_of_k = runs
        .iter()
        .map(|r| r.n)
        .find(|&n| n as f64 > rbar + k as f64 + p);
    Ok(ConvergenceReport {
        rows,
        summary: ConvergenceSummary {
            levels: runs.iter().map(|r| r.n).collect(),
            k,
            t_end,
            max_speed: speeds[last],
            horizon: p,
            n_of_k,
            final_u,
            final_ratios,
            slope,
            all_zero,
            verdict,
        },
    })
}

/// Growth-bound time series for every level of a ladder, normalized by the
/// grid estimate of `sup Q` for the full initial data.
pub fn bound_study(
    full: &Configuration,
    levels: &[u64],
    params: &ModelParams,
    icfg: &IntegratorConfig,
    t_end: f64,
    stride: f64,
) -> Result<BoundReport, PartialError> {
    let q0 = sup_q(full, params, &SupGrid::for_range(params.range()))?.value;
    if !(q0 > 0.0) {
        return Err(FunctionalError::ZeroReference.into());
    }
    let runs = run_ladder(full, levels, params, icfg, t_end, stride)?;
    let mut rows = Vec::new();
    for run in &runs {
        rows.extend(bound_rows(&run.trajectory, run.n, params, q0)?);
    }
    Ok(BoundReport { q0, rows })
}

/// Displacement applied to one particle in a locality probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub dx: Vec3,
    pub dv: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityReport {
    /// Largest discrepancy over the window ids and all snapshots.
    pub max_discrepancy: f64,
    /// Axial distance of the unperturbed particle from the window edge.
    pub distance: f64,
    pub horizon: f64,
    /// False when the particle lies outside level `n` and nothing was run.
    pub simulated: bool,
}

/// Twin runs of level `n`, one with particle `perturb_id` displaced, compared
/// on the window `I_k`.
///
/// With `require_separation` the particle must start farther than the
/// measured horizon from the window.
#[allow(clippy::too_many_arguments)]
pub fn locality_probe(
    full: &Configuration,
    n: u64,
    perturb_id: u64,
    perturbation: Perturbation,
    window_k: u64,
    params: &ModelParams,
    icfg: &IntegratorConfig,
    t_end: f64,
    stride: f64,
    require_separation: bool,
) -> Result<LocalityReport, PartialError> {
    let target = full.find(perturb_id).ok_or(PartialError::MissingId { id: perturb_id, n })?;
    let distance = full.geometry().axial(&target.x).abs() - window_k as f64;
    let base = select_in(full, n);
    if base.find(perturb_id).is_none() {
        return Ok(LocalityReport {
            max_discrepancy: 0.0,
            distance,
            horizon: params.range(),
            simulated: false,
        });
    }
    let moved: Vec<ParticleState> = base
        .particles()
        .iter()
        .map(|p| {
            let mut p = p.clone();
            if p.id == perturb_id {
                p.x += perturbation.dx;
                p.v += perturbation.dv;
            }
            p
        })
        .collect();
    let twin = Configuration::new(moved, base.geometry().clone(), base.time())?;
    let trajs = run_members(&[base, twin], params, icfg, t_end, stride)
        .map_err(|(_, source)| PartialError::Level { n, source })?;
    let runs: Vec<PartialRun> = trajs
        .into_iter()
        .map(|trajectory| PartialRun {
            n,
            ids: trajectory.snapshots[0].ids(),
            trajectory,
        })
        .collect();
    let last = runs[0].trajectory.snapshots.len() - 1;
    let v = runs.iter().map(|r| r.max_speed_until(last)).fold(0.0, f64::max);
    let p = horizon(v, t_end, params.range());
    if require_separation && !(distance > p) {
        return Err(PartialError::TooClose { distance, horizon: p });
    }
    let ids: Vec<u64> = runs[0]
        .window_ids(window_k)
        .into_iter()
        .filter(|&id| id != perturb_id)
        .collect();
    let mut worst = 0.0f64;
    for j in 0..=last {
        worst = worst.max(uk_at(&runs[0], &runs[1], &ids, j)?.value);
    }
    Ok(LocalityReport {
        max_discrepancy: worst,
        distance,
        horizon: p,
        simulated: true,
    })
}
