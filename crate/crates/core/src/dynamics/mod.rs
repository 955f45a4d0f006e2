//! Equations of motion in the tube, energy accounting, and time integration.
//!
//! Particle `i` feels
//!
//! ```text
//! dv_i/dt = sum_j psi(|x_i - x_j|) (v_j - v_i) - sum_{j != i} grad U(x_i - x_j) - grad Theta(x_i)
//! ```
//!
//! with both sums running over neighbors within `rbar`, in ascending id order.

pub mod integrator;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::model::{Configuration, ModelError, ModelParams, Vec3};
use crate::neighbor::AxialCellIndex;

pub use integrator::{
    fixed_step, integrate_fixed, integrate_lockstep, snapshot_times, AcceptedStep, IntegrationError,
    IntegratorConfig, IntegratorStats, Lockstep, LockstepRun, ParticleSystem, PhaseState, StateMetrics,
    TimedFailure,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Integration(#[from] TimedFailure),
    #[error("invalid run request: {0}")]
    InvalidRequest(&'static str),
}

/// Per-particle right-hand side, split into alignment and force parts.
#[derive(Debug, Clone, PartialEq)]
pub struct RhsOutput {
    pub alignment: Vec<Vec3>,
    pub force: Vec<Vec3>,
    pub acceleration: Vec<Vec3>,
}

/// The tube model restricted to a fixed, finite set of particles.
#[derive(Debug, Clone)]
pub struct TubeSystem {
    params: ModelParams,
    ids: Vec<u64>,
    exec: Exec,
}

impl TubeSystem {
    pub fn new(params: ModelParams, ids: Vec<u64>, exec: Exec) -> Self {
        Self { params, ids, exec }
    }

    pub fn for_config(params: &ModelParams, config: &Configuration, exec: Exec) -> Self {
        Self::new(params.clone(), config.ids(), exec)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    fn index(&self, x: &[Vec3]) -> AxialCellIndex {
        AxialCellIndex::build(
            x,
            &self.params.geometry.axis(),
            self.params.cell_width(),
            self.params.range(),
        )
        .expect("cell width is at least the interaction range")
    }

    /// Alignment and force on particle `i`, plus its closest neighbor distance.
    /// Without a repulsive core no pair can collide, so the distance is left at `inf`.
    fn particle_terms(
        &self,
        index: &AxialCellIndex,
        x: &[Vec3],
        v: &[Vec3],
        i: usize,
        scratch: &mut Vec<usize>,
    ) -> Result<(Vec3, Vec3, f64), ModelError> {
        let kernel = &self.params.kernel;
        let potential = &self.params.potential;
        let (_, mut force) = self.params.geometry.confinement(&x[i])?;
        let mut align = Vec3::zeros();
        let mut closest = f64::INFINITY;
        index.neighbors_into(i, scratch);
        for &j in scratch.iter() {
            let d = x[i] - x[j];
            let r = d.norm();
            if r == 0.0 {
                return Err(ModelError::Singular {
                    first: self.ids[i].min(self.ids[j]),
                    second: self.ids[i].max(self.ids[j]),
                });
            }
            align += (v[j] - v[i]) * kernel.rate(r);
            if !potential.is_zero() {
                closest = closest.min(r);
                force += potential.interaction(&d)?.1;
            }
        }
        Ok((align, force, closest))
    }

    fn evaluate(&self, x: &[Vec3], v: &[Vec3]) -> Result<(Vec<(Vec3, Vec3)>, StateMetrics), ModelError> {
        let index = self.index(x);
        let terms = self.exec.map(x.len(), |i| {
            let mut scratch = Vec::new();
            self.particle_terms(&index, x, v, i, &mut scratch)
        });
        let mut out = Vec::with_capacity(terms.len());
        let mut metrics = StateMetrics::UNBOUNDED;
        for (i, t) in terms.into_iter().enumerate() {
            let (align, force, closest) = t?;
            metrics.min_pair = metrics.min_pair.min(closest);
            metrics.wall_margin = metrics.wall_margin.min(self.params.geometry.wall_margin(&x[i]));
            out.push((align, force));
        }
        Ok((out, metrics))
    }
}

impl ParticleSystem for TubeSystem {
    fn acceleration(&self, x: &[Vec3], v: &[Vec3], out: &mut [Vec3]) -> Result<StateMetrics, ModelError> {
        let (terms, metrics) = self.evaluate(x, v)?;
        for (o, (align, force)) in out.iter_mut().zip(terms) {
            *o = align + force;
        }
        Ok(metrics)
    }

    fn guard_scale(&self) -> f64 {
        self.params.range()
    }
}

/// Right-hand side of the velocity equation for every particle.
pub fn total_rhs(config: &Configuration, params: &ModelParams) -> Result<RhsOutput, ModelError> {
    total_rhs_with(config, params, Exec::default())
}

pub fn total_rhs_with(config: &Configuration, params: &ModelParams, exec: Exec) -> Result<RhsOutput, ModelError> {
    let system = TubeSystem::for_config(params, config, exec);
    let (terms, _) = system.evaluate(&config.positions(), &config.velocities())?;
    let (alignment, force): (Vec<Vec3>, Vec<Vec3>) = terms.into_iter().unzip();
    let acceleration = alignment.iter().zip(&force).map(|(a, f)| a + f).collect();
    Ok(RhsOutput {
        alignment,
        force,
        acceleration,
    })
}

/// Per-particle energies `v^2/2 + (1/2) sum_j U(x_i - x_j) + Theta(x_i)`.
pub fn particle_energies(config: &Configuration, params: &ModelParams) -> Result<Vec<f64>, ModelError> {
    let x = config.positions();
    let index = AxialCellIndex::build(
        &x,
        &params.geometry.axis(),
        params.cell_width(),
        params.range(),
    )
    .expect("cell width is at least the interaction range");
    let mut scratch = Vec::new();
    config
        .particles()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (wall, _) = params.geometry.confinement(&p.x)?;
            let mut pair = 0.0;
            index.neighbors_into(i, &mut scratch);
            for &j in &scratch {
                pair += params.potential.energy((x[i] - x[j]).norm());
            }
            Ok(0.5 * p.v.norm_squared() + 0.5 * pair + wall)
        })
        .collect()
}

/// Total mechanical energy.
pub fn energy(config: &Configuration, params: &ModelParams) -> Result<f64, ModelError> {
    Ok(particle_energies(config, params)?.iter().sum())
}

/// `dE/dt = -(1/2) sum_{i != j} psi_ij |v_i - v_j|^2`.
pub fn dissipation_rate(config: &Configuration, params: &ModelParams) -> f64 {
    let x = config.positions();
    let v = config.velocities();
    let index = AxialCellIndex::build(
        &x,
        &params.geometry.axis(),
        params.cell_width(),
        params.range(),
    )
    .expect("cell width is at least the interaction range");
    let mut scratch = Vec::new();
    let mut total = 0.0;
    for i in 0..x.len() {
        index.neighbors_into(i, &mut scratch);
        for &j in &scratch {
            total += params.kernel.rate((x[i] - x[j]).norm()) * (v[i] - v[j]).norm_squared();
        }
    }
    -0.5 * total
}

/// `sum_i v_i . n`.
pub fn axial_momentum(config: &Configuration) -> f64 {
    let n = config.geometry().axis();
    config.particles().iter().map(|p| p.v.dot(&n)).sum()
}

/// Smallest distance between any two particles, `inf` for fewer than two.
pub fn min_pair_distance(config: &Configuration) -> f64 {
    let n = config.geometry().axis();
    let mut order: Vec<(f64, usize)> = config
        .particles()
        .iter()
        .enumerate()
        .map(|(i, p)| (p.x.dot(&n), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let p = config.particles();
    let mut best = f64::INFINITY;
    for (k, &(ak, i)) in order.iter().enumerate() {
        for &(aj, j) in &order[k + 1..] {
            if aj - ak >= best {
                break;
            }
            best = best.min((p[i].x - p[j].x).norm());
        }
    }
    best
}

/// Smallest distance from any particle to the wall, `inf` when empty.
pub fn min_wall_margin(config: &Configuration) -> f64 {
    let g = config.geometry();
    config
        .particles()
        .iter()
        .map(|p| g.wall_margin(&p.x))
        .fold(f64::INFINITY, f64::min)
}

/// Snapshots at increasing times plus integrator statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Configuration>,
    pub stats: IntegratorStats,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(Configuration::time).collect()
    }

    pub fn last(&self) -> &Configuration {
        self.snapshots.last().expect("trajectory holds the initial snapshot")
    }

    pub(crate) fn from_states(
        initial: &Configuration,
        times: &[f64],
        states: impl IntoIterator<Item = PhaseState>,
        stats: IntegratorStats,
    ) -> Self {
        let snapshots = times
            .iter()
            .zip(states)
            .map(|(&t, s)| initial.with_state(&s.x, &s.v, t))
            .collect();
        Self { snapshots, stats }
    }
}

pub(crate) fn phase_state(config: &Configuration) -> PhaseState {
    PhaseState::new(config.positions(), config.velocities())
}

/// Result of [`step_adaptive`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub config: Configuration,
    pub dt: f64,
    pub error: f64,
    pub next_dt: f64,
}

/// One accepted adaptive step starting with trial size `dt`.
pub fn step_adaptive(
    config: &Configuration,
    params: &ModelParams,
    icfg: &IntegratorConfig,
    dt: f64,
) -> Result<StepResult, DynamicsError> {
    let systems = [TubeSystem::for_config(params, config, icfg.exec)];
    let cfg = IntegratorConfig {
        initial_step: dt,
        ..*icfg
    };
    let t0 = config.time();
    let fail = |source| TimedFailure {
        time: t0,
        member: Some(0),
        source,
    };
    let mut stepper = Lockstep::new(&systems, vec![phase_state(config)], t0, cfg).map_err(fail)?;
    let step = stepper.advance(f64::INFINITY).map_err(fail)?;
    let s = stepper.state(0);
    Ok(StepResult {
        config: config.with_state(&s.x, &s.v, stepper.time()),
        dt: step.dt,
        error: step.error,
        next_dt: step.next_dt,
    })
}

/// Integrates `initial` to `t_end`, recording snapshots every `stride` and at `t_end`.
pub fn simulate(
    initial: &Configuration,
    params: &ModelParams,
    icfg: &IntegratorConfig,
    t_end: f64,
    stride: f64,
) -> Result<Trajectory, DynamicsError> {
    if !(t_end >= 0.0) || !(stride > 0.0) {
        return Err(DynamicsError::InvalidRequest("need t_end >= 0 and stride > 0"));
    }
    let systems = [TubeSystem::for_config(params, initial, icfg.exec)];
    let run = integrate_lockstep(&systems, vec![phase_state(initial)], t_end, stride, *icfg)?;
    let times: Vec<f64> = run.times.iter().map(|t| initial.time() + t).collect();
    Ok(Trajectory::from_states(
        initial,
        &times,
        run.states.into_iter().map(|mut s| s.remove(0)),
        run.stats,
    ))
}

/// One row of the per-snapshot diagnostics table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    pub dissipation: f64,
    pub p_axial: f64,
    pub min_dist: f64,
    pub wall_margin: f64,
}

pub fn diagnostics(traj: &Trajectory, params: &ModelParams) -> Result<Vec<Diagnostics>, ModelError> {
    traj.snapshots
        .iter()
        .map(|c| {
            Ok(Diagnostics {
                t: c.time(),
                energy: energy(c, params)?,
                dissipation: dissipation_rate(c, params),
                p_axial: axial_momentum(c),
                min_dist: min_pair_distance(c),
                wall_margin: min_wall_margin(c),
            })
        })
        .collect()
}
