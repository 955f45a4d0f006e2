//! The classical finite-N Cucker-Smale model in free space.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{integrate_lockstep, IntegratorConfig, IntegratorStats, ParticleSystem, PhaseState, StateMetrics, TimedFailure};
use crate::exec::Exec;
use crate::model::{CommKernel, ModelError, Vec3};

#[derive(Debug, Error)]
pub enum FlockError {
    #[error("no particles")]
    Empty,
    #[error("invalid setting: {0}")]
    InvalidSetting(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Integration(#[from] TimedFailure),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Pure alignment `v_i' = sum_j psi(|x_i - x_j|)(v_j - v_i)` over all pairs.
#[derive(Debug, Clone)]
pub struct ClassicalSystem {
    kernel: CommKernel,
    exec: Exec,
}

impl ClassicalSystem {
    pub fn new(kernel: CommKernel, exec: Exec) -> Self {
        Self { kernel, exec }
    }
}

impl ParticleSystem for ClassicalSystem {
    fn acceleration(&self, x: &[Vec3], v: &[Vec3], out: &mut [Vec3]) -> Result<StateMetrics, ModelError> {
        let kernel = self.kernel;
        self.exec.fill(out, |i| {
            let mut a = Vec3::zeros();
            for j in 0..x.len() {
                if j != i {
                    a += (v[j] - v[i]) * kernel.rate((x[i] - x[j]).norm());
                }
            }
            a
        });
        Ok(StateMetrics::UNBOUNDED)
    }
}

/// Mean taken relative to the first entry, so equal entries average exactly.
fn mean(values: &[Vec3]) -> Vec3 {
    let base = values[0];
    base + values.iter().map(|w| w - base).sum::<Vec3>() / values.len() as f64
}

/// Means of positions and velocities.
pub fn center_of_mass(state: &PhaseState) -> Result<(Vec3, Vec3), FlockError> {
    if state.is_empty() {
        return Err(FlockError::Empty);
    }
    Ok((mean(&state.x), mean(&state.v)))
}

/// `max_i |v_i - v_c|`.
pub fn velocity_diameter(state: &PhaseState) -> Result<f64, FlockError> {
    let (_, vc) = center_of_mass(state)?;
    Ok(state.v.iter().map(|v| (v - vc).norm()).fold(0.0, f64::max))
}

/// `max_i |x_i - x_c|`.
pub fn position_spread(state: &PhaseState) -> Result<f64, FlockError> {
    let (xc, _) = center_of_mass(state)?;
    Ok(state.x.iter().map(|x| (x - xc).norm()).fold(0.0, f64::max))
}

/// Settings for a classical run with Gaussian initial data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalSpec {
    pub n: usize,
    pub beta: f64,
    /// Mean-field strength; the kernel amplitude is `lambda / n`.
    pub lambda: f64,
    pub seed: u64,
    pub t_end: f64,
    pub stride: f64,
    /// Standard deviation of each position component.
    pub position_scale: f64,
    /// Standard deviation of each velocity component.
    pub velocity_scale: f64,
}

impl ClassicalSpec {
    pub fn new(n: usize, beta: f64, lambda: f64, seed: u64, t_end: f64) -> Self {
        Self {
            n,
            beta,
            lambda,
            seed,
            t_end,
            stride: 0.5,
            position_scale: 1.0,
            velocity_scale: 1.0,
        }
    }

    pub fn kernel(&self) -> Result<CommKernel, FlockError> {
        if self.n < 2 {
            return Err(FlockError::InvalidSetting("need at least two particles"));
        }
        if !(self.lambda >= 0.0) {
            return Err(FlockError::InvalidSetting("lambda must be non-negative"));
        }
        Ok(CommKernel::inverse_power(self.lambda / self.n as f64, self.beta)?)
    }

    /// Gaussian positions and velocities; particle `i` draws from its own stream.
    pub fn initial_state(&self) -> PhaseState {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut x = Vec::with_capacity(self.n);
        let mut v = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(i as u64);
            let mut draw = || Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng));
            x.push(draw() * self.position_scale);
            v.push(draw() * self.velocity_scale);
        }
        PhaseState::new(x, v)
    }
}

/// Snapshots of a classical run.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhaseState>,
    pub stats: IntegratorStats,
}

pub fn simulate_classical(spec: &ClassicalSpec, icfg: &IntegratorConfig) -> Result<ClassicalTrajectory, FlockError> {
    simulate_classical_from(spec.initial_state(), spec.kernel()?, spec.t_end, spec.stride, icfg)
}

/// Classical run from given initial data.
pub fn simulate_classical_from(
    initial: PhaseState,
    kernel: CommKernel,
    t_end: f64,
    stride: f64,
    icfg: &IntegratorConfig,
) -> Result<ClassicalTrajectory, FlockError> {
    if initial.is_empty() {
        return Err(FlockError::Empty);
    }
    if !(t_end >= 0.0) || !(stride > 0.0) {
        return Err(FlockError::InvalidSetting("need t_end >= 0 and stride > 0"));
    }
    let systems = [ClassicalSystem::new(kernel, icfg.exec)];
    let run = integrate_lockstep(&systems, vec![initial], t_end, stride, *icfg)?;
    Ok(ClassicalTrajectory {
        times: run.times,
        states: run.states.into_iter().map(|mut s| s.remove(0)).collect(),
        stats: run.stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlockRow {
    pub t: f64,
    pub velocity_diameter: f64,
    pub position_spread: f64,
}

pub fn flock_rows(traj: &ClassicalTrajectory) -> Result<Vec<FlockRow>, FlockError> {
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(&t, s)| {
            Ok(FlockRow {
                t,
                velocity_diameter: velocity_diameter(s)?,
                position_spread: position_spread(s)?,
            })
        })
        .collect()
}

pub fn write_flock_csv<W: Write>(rows: &[FlockRow], out: W) -> Result<(), FlockError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_flock_csv(rows: &[FlockRow], path: &Path) -> Result<(), FlockError> {
    write_flock_csv(rows, std::fs::File::create(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlockVerdict {
    pub initial_velocity_diameter: f64,
    pub final_velocity_diameter: f64,
    /// Largest position spread over the run.
    pub position_spread: f64,
    pub v_threshold: f64,
    pub x_bound: f64,
    /// Least-squares rate `r` in `diameter ~ exp(-r t)` over the second half of the run.
    pub decay_rate: Option<f64>,
    pub verdict: bool,
}

pub fn flocking_verdict(traj: &ClassicalTrajectory, v_threshold: f64, x_bound: f64) -> Result<FlockVerdict, FlockError> {
    let rows = flock_rows(traj)?;
    let first = rows.first().ok_or(FlockError::Empty)?;
    let last = rows.last().ok_or(FlockError::Empty)?;
    let spread = rows.iter().map(|r| r.position_spread).fold(0.0, f64::max);
    let t_half = 0.5 * (first.t + last.t);
    let tail: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.t >= t_half && r.velocity_diameter > 0.0)
        .map(|r| (r.t, r.velocity_diameter.ln()))
        .collect();
    let decay_rate = (tail.len() >= 2).then(|| {
        let m = tail.len() as f64;
        let tx = tail.iter().map(|p| p.0).sum::<f64>() / m;
        let ty = tail.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = tail.iter().map(|p| (p.0 - tx) * (p.1 - ty)).sum();
        let sxx: f64 = tail.iter().map(|p| (p.0 - tx) * (p.0 - tx)).sum();
        -sxy / sxx
    });
    Ok(FlockVerdict {
        initial_velocity_diameter: first.velocity_diameter,
        final_velocity_diameter: last.velocity_diameter,
        position_spread: spread,
        v_threshold,
        x_bound,
        decay_rate,
        verdict: last.velocity_diameter <= v_threshold && spread <= x_bound,
    })
}
