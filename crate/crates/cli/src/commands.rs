use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use tubeflock::dynamics::{diagnostics, simulate as run_simulation, DynamicsError};
use tubeflock::flocking::{flock_rows, flocking_verdict, simulate_classical, write_flock_csv, FlockError};
use tubeflock::functionals::FunctionalError;
use tubeflock::initial_data::{
    load_snapshot, sample_configuration, verify_membership, write_snapshot, SampleError, SnapshotError,
};
use tubeflock::partial::{bound_study, convergence_study, PartialError};
use tubeflock::{Configuration, ModelError, ModelParams};

use crate::config::{params_digest, sha256_hex, RunConfig};
use crate::CliError;

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

fn model_error(e: ModelError) -> CliError {
    CliError::Config(e.to_string())
}

fn dynamics_error(e: DynamicsError) -> CliError {
    match e {
        DynamicsError::Integration(f) => CliError::Integration(f.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

fn partial_error(e: PartialError) -> CliError {
    match e {
        PartialError::Level { .. } | PartialError::Dynamics(DynamicsError::Integration(_)) => {
            CliError::Integration(e.to_string())
        }
        PartialError::HorizonTooLarge { .. }
        | PartialError::TooClose { .. }
        | PartialError::Functional(FunctionalError::ZeroReference) => CliError::Precondition(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

fn sample_error(e: SampleError) -> CliError {
    match e {
        SampleError::InfeasibleDensity { .. } => CliError::Precondition(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

/// Output directory owned by one command run.
struct Output {
    dir: PathBuf,
}

impl Output {
    fn create(cfg: &RunConfig) -> Result<Self, CliError> {
        let dir = PathBuf::from(&cfg.output.dir);
        fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        Ok(Self { dir })
    }

    fn file(&self, name: &str) -> Result<(PathBuf, File), CliError> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|e| io_error(&path, e))?;
        Ok((path, f))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let (path, mut f) = self.file(name)?;
        serde_json::to_writer_pretty(&mut f, value).map_err(|e| io_error(&path, e))?;
        f.write_all(b"\n").map_err(|e| io_error(&path, e))
    }

    /// Resolved config, seed, and a digest of every input, enough to rerun.
    fn manifest(&self, command: &str, cfg: &RunConfig, snapshot: Option<&Path>) -> Result<(), CliError> {
        let config = serde_json::to_value(cfg).expect("config serializes");
        let mut inputs = serde_json::to_vec(&config).expect("config serializes");
        if let Some(p) = snapshot {
            inputs.extend(fs::read(p).map_err(|e| io_error(p, e))?);
        }
        let params = cfg.params().ok().map(|p| params_digest(&p));
        self.json(
            "manifest.json",
            &json!({
                "command": command,
                "version": env!("CARGO_PKG_VERSION"),
                "config": config,
                "seed": cfg.sampler.seed,
                "snapshot": snapshot.map(|p| p.display().to_string()),
                "inputs_digest": sha256_hex(&inputs),
                "params_digest": params,
            }),
        )
    }
}

/// Initial data: a snapshot file, else explicit particles, else the sampler.
fn initial_configuration(cfg: &RunConfig, params: &ModelParams, snapshot: Option<&Path>) -> Result<Configuration, CliError> {
    if let Some(path) = snapshot {
        let (_, config) = load_snapshot(path).map_err(|e| match e {
            SnapshotError::Io(io) => io_error(path, io),
            other => io_error(path, other),
        })?;
        if config.geometry() != &params.geometry {
            return Err(io_error(path, "snapshot geometry differs from the run configuration"));
        }
        return Ok(config);
    }
    if let Some(particles) = cfg.explicit_particles() {
        return Configuration::new(particles, params.geometry.clone(), 0.0).map_err(model_error);
    }
    sample_configuration(&cfg.sampler(), &params.geometry).map_err(sample_error)
}

pub fn simulate(cfg: &RunConfig, snapshot: Option<&Path>) -> Result<(), CliError> {
    let params = cfg.params()?;
    let icfg = cfg.integrator()?;
    let initial = initial_configuration(cfg, &params, snapshot)?;
    let out = Output::create(cfg)?;
    out.manifest("simulate", cfg, snapshot)?;
    let traj = run_simulation(&initial, &params, &icfg, cfg.study.t_end, cfg.study.stride).map_err(dynamics_error)?;
    if cfg.emits("csv") {
        let rows = diagnostics(&traj, &params).map_err(model_error)?;
        let (path, f) = out.file("diagnostics.csv")?;
        let mut w = csv_writer(f);
        for r in &rows {
            w.serialize(r).map_err(|e| io_error(&path, e))?;
        }
        w.flush().map_err(|e| io_error(&path, e))?;
    }
    if cfg.emits("jsonl") {
        let digest = params_digest(&params);
        let snaps = out.dir.join("snapshots");
        fs::create_dir_all(&snaps).map_err(|e| io_error(&snaps, e))?;
        for (j, c) in traj.snapshots.iter().enumerate() {
            let path = snaps.join(format!("snap_{j:05}.jsonl"));
            let f = File::create(&path).map_err(|e| io_error(&path, e))?;
            write_snapshot(c, &digest, f).map_err(|e| io_error(&path, e))?;
        }
    }
    if cfg.emits("json") {
        let s = traj.stats;
        out.json(
            "summary.json",
            &json!({
                "particles": initial.len(),
                "t_end": traj.last().time(),
                "accepted_steps": s.accepted,
                "rejected_steps": s.rejected,
                "min_step": s.min_step,
                "min_pair_distance": s.min_pair_distance,
                "min_wall_margin": s.min_wall_margin,
            }),
        )?;
    }
    Ok(())
}

fn csv_writer(f: File) -> csv::Writer<File> {
    csv::Writer::from_writer(f)
}

pub fn partial_converge(cfg: &RunConfig) -> Result<(), CliError> {
    let params = cfg.params()?;
    let icfg = cfg.integrator()?;
    let full = initial_configuration(cfg, &params, None)?;
    let out = Output::create(cfg)?;
    out.manifest("partial-converge", cfg, None)?;
    let s = &cfg.study;
    let report =
        convergence_study(&full, &s.nladder, s.k, &params, &icfg, s.t_end, s.stride).map_err(partial_error)?;
    if cfg.emits("csv") {
        let (path, f) = out.file("convergence.csv")?;
        report.write_csv(f).map_err(|e| io_error(&path, e))?;
    }
    if cfg.emits("json") {
        out.json("convergence.json", &report.summary)?;
    }
    if report.summary.verdict {
        Ok(())
    } else {
        Err(CliError::VerdictFailed(format!(
            "u_k at T = {} is {:?}; not decaying along the ladder",
            report.summary.t_end, report.summary.final_u
        )))
    }
}

pub fn bounds_check(cfg: &RunConfig) -> Result<(), CliError> {
    let params = cfg.params()?;
    let icfg = cfg.integrator()?;
    let full = initial_configuration(cfg, &params, None)?;
    let out = Output::create(cfg)?;
    out.manifest("bounds-check", cfg, None)?;
    let s = &cfg.study;
    let report = bound_study(&full, &s.nladder, &params, &icfg, s.t_end, s.stride).map_err(partial_error)?;
    if cfg.emits("csv") {
        let (path, f) = out.file("bounds.csv")?;
        report.write_csv(f).map_err(|e| io_error(&path, e))?;
    }
    let lemma = report.lemma1_spread();
    let cor = report.cor1_spread();
    let pass = report.all_finite() && lemma <= s.spread_factor && cor <= s.spread_factor;
    if cfg.emits("json") {
        out.json(
            "bounds.json",
            &json!({
                "q0": report.q0,
                "lemma1_max_by_level": report.lemma1_max_by_level(),
                "lemma1_spread": lemma,
                "cor1_spread": cor,
                "spread_factor": s.spread_factor,
                "all_finite": report.all_finite(),
                "pass": pass,
            }),
        )?;
    }
    if pass {
        Ok(())
    } else {
        Err(CliError::BoundBlowUp(format!(
            "lemma1 spread {lemma}, corollary1 spread {cor}, allowed {}",
            s.spread_factor
        )))
    }
}

pub fn flock(cfg: &RunConfig) -> Result<(), CliError> {
    let icfg = cfg.integrator()?;
    let spec = cfg.classical();
    let out = Output::create(cfg)?;
    out.manifest("flock", cfg, None)?;
    let flock_error = |e: FlockError| match e {
        FlockError::Integration(f) => CliError::Integration(f.to_string()),
        other => CliError::Config(other.to_string()),
    };
    let traj = simulate_classical(&spec, &icfg).map_err(flock_error)?;
    let rows = flock_rows(&traj).map_err(flock_error)?;
    let threshold = cfg.flock.v_threshold_rel * rows[0].velocity_diameter;
    let verdict = flocking_verdict(&traj, threshold, cfg.flock.x_bound).map_err(flock_error)?;
    if cfg.emits("csv") {
        let (path, f) = out.file("flock.csv")?;
        write_flock_csv(&rows, f).map_err(|e| io_error(&path, e))?;
    }
    if cfg.emits("json") {
        out.json("flock.json", &verdict)?;
    }
    if verdict.verdict {
        Ok(())
    } else {
        Err(CliError::VerdictFailed(format!(
            "final velocity diameter {} (threshold {}), position spread {} (bound {})",
            verdict.final_velocity_diameter, threshold, verdict.position_spread, verdict.x_bound
        )))
    }
}

pub fn sample_init(cfg: &RunConfig) -> Result<(), CliError> {
    let params = cfg.params()?;
    let initial = initial_configuration(cfg, &params, None)?;
    let out = Output::create(cfg)?;
    out.manifest("sample-init", cfg, None)?;
    let (path, f) = out.file("initial.jsonl")?;
    write_snapshot(&initial, &params_digest(&params), f).map_err(|e| io_error(&path, e))?;
    let report = verify_membership(&initial, &params).map_err(model_error)?;
    out.json("membership.json", &report)?;
    if report.is_finite() {
        Ok(())
    } else {
        Err(CliError::BoundBlowUp("membership report has non-finite entries".into()))
    }
}
