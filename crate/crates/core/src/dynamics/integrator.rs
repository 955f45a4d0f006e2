//! Dormand-Prince 5(4) on second-order particle systems.
//!
//! Several systems can be advanced in lockstep: a step is accepted only if
//! every member accepts it, so all members share one step-size sequence.
//! Ladder studies use this to compare levels without step-control noise.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::model::{ModelError, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error(
        "step size underflow at t = {time}: dt = {step:e} (closest pair {min_pair}, smallest wall margin {wall_margin})"
    )]
    StepUnderflow {
        time: f64,
        step: f64,
        min_pair: f64,
        wall_margin: f64,
    },
    #[error("exceeded {steps} steps at t = {time}")]
    TooManySteps { time: f64, steps: usize },
    #[error("initial state of member {member} rejected: {source}")]
    InitialState {
        member: usize,
        #[source]
        source: ModelError,
    },
    #[error("invalid integrator setting: {0}")]
    InvalidSetting(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    /// Largest particle displacement per step, as a fraction of the closest pair distance.
    pub eta: f64,
    pub max_steps: usize,
    #[serde(default)]
    pub exec: Exec,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            initial_step: 1e-3,
            max_step: 0.1,
            eta: 0.2,
            max_steps: 1_000_000,
            exec: Exec::default(),
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), IntegrationError> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(IntegrationError::InvalidSetting("tolerances must be positive"));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(IntegrationError::InvalidSetting("eta must lie in (0, 1)"));
        }
        if !(self.initial_step > 0.0 && self.max_step > 0.0) {
            return Err(IntegrationError::InvalidSetting("step sizes must be positive"));
        }
        if self.max_steps == 0 {
            return Err(IntegrationError::InvalidSetting("max_steps must be positive"));
        }
        Ok(())
    }

    pub fn with_rtol(mut self, rtol: f64) -> Self {
        self.rtol = rtol;
        self
    }

    pub fn with_atol(mut self, atol: f64) -> Self {
        self.atol = atol;
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }
}

/// Geometric facts about a state, gathered during a force evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateMetrics {
    /// Closest pair among interacting pairs, `inf` if there are none.
    pub min_pair: f64,
    /// Smallest distance to the tube wall, `inf` without a wall.
    pub wall_margin: f64,
}

impl StateMetrics {
    pub const UNBOUNDED: Self = Self {
        min_pair: f64::INFINITY,
        wall_margin: f64::INFINITY,
    };
}

/// `x'' = a(x, x')` for a set of particles.
pub trait ParticleSystem: Sync {
    fn acceleration(&self, x: &[Vec3], v: &[Vec3], out: &mut [Vec3]) -> Result<StateMetrics, ModelError>;

    /// Upper bound on the length scale used by the displacement guard.
    fn guard_scale(&self) -> f64 {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub accepted: usize,
    pub rejected: usize,
    pub min_step: f64,
    pub min_pair_distance: f64,
    pub min_wall_margin: f64,
}

impl Default for IntegratorStats {
    fn default() -> Self {
        Self {
            accepted: 0,
            rejected: 0,
            min_step: f64::INFINITY,
            min_pair_distance: f64::INFINITY,
            min_wall_margin: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub x: Vec<Vec3>,
    pub v: Vec<Vec3>,
}

impl PhaseState {
    pub fn new(x: Vec<Vec3>, v: Vec<Vec3>) -> Self {
        assert_eq!(x.len(), v.len());
        Self { x, v }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

// Dormand-Prince 5(4) tableau; the systems are autonomous so the nodes are not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// One DP5 step from `(x, v)` with first-stage derivative `(v, a0)`.
struct Trial {
    x: Vec<Vec3>,
    v: Vec<Vec3>,
    a_end: Vec<Vec3>,
    metrics: StateMetrics,
    error: f64,
    displacement: f64,
}

fn dp_step<S: ParticleSystem>(
    system: &S,
    state: &PhaseState,
    a0: &[Vec3],
    h: f64,
    tol: Option<(f64, f64)>,
    exec: Exec,
) -> Result<Trial, ModelError> {
    let n = state.len();
    // stage derivatives: kx = velocity, kv = acceleration
    let mut kx: Vec<Vec<Vec3>> = Vec::with_capacity(7);
    let mut kv: Vec<Vec<Vec3>> = Vec::with_capacity(7);
    kx.push(state.v.clone());
    kv.push(a0.to_vec());
    let mut metrics = StateMetrics::UNBOUNDED;
    let mut xs = vec![Vec3::zeros(); n];
    let mut vs = vec![Vec3::zeros(); n];
    for stage in 1..7 {
        let row = &A[stage];
        let combine = |y: &Vec3, k: &[Vec<Vec3>], i: usize| {
            let mut acc = Vec3::zeros();
            for (s, w) in row.iter().enumerate().take(stage) {
                if *w != 0.0 {
                    acc += k[s][i] * *w;
                }
            }
            y + acc * h
        };
        exec.fill(&mut xs, |i| combine(&state.x[i], &kx, i));
        exec.fill(&mut vs, |i| combine(&state.v[i], &kv, i));
        let mut acc = vec![Vec3::zeros(); n];
        metrics = system.acceleration(&xs, &vs, &mut acc)?;
        kx.push(vs.clone());
        kv.push(acc);
    }
    // stage 7 is evaluated at the fifth-order solution (FSAL)
    let x_new = xs;
    let v_new = vs;
    let mut error = 0.0f64;
    let mut displacement = 0.0f64;
    for i in 0..n {
        displacement = displacement.max((x_new[i] - state.x[i]).norm());
        if let Some((rtol, atol)) = tol {
            let mut ex = Vec3::zeros();
            let mut ev = Vec3::zeros();
            for s in 0..7 {
                if E[s] != 0.0 {
                    ex += kx[s][i] * E[s];
                    ev += kv[s][i] * E[s];
                }
            }
            for c in 0..3 {
                let sx = atol + rtol * state.x[i][c].abs().max(x_new[i][c].abs());
                let sv = atol + rtol * state.v[i][c].abs().max(v_new[i][c].abs());
                error = error.max((h * ex[c]).abs() / sx).max((h * ev[c]).abs() / sv);
            }
        }
    }
    Ok(Trial {
        x: x_new,
        v: v_new,
        a_end: kv.pop().unwrap(),
        metrics,
        error,
        displacement,
    })
}

/// Takes one fixed step of size `h` (any sign) with the fifth-order solution.
pub fn fixed_step<S: ParticleSystem>(system: &S, state: &PhaseState, h: f64, exec: Exec) -> Result<PhaseState, ModelError> {
    let mut a0 = vec![Vec3::zeros(); state.len()];
    system.acceleration(&state.x, &state.v, &mut a0)?;
    let trial = dp_step(system, state, &a0, h, None, exec)?;
    Ok(PhaseState::new(trial.x, trial.v))
}

/// `steps` fixed steps of size `h`.
pub fn integrate_fixed<S: ParticleSystem>(
    system: &S,
    state: &PhaseState,
    h: f64,
    steps: usize,
    exec: Exec,
) -> Result<PhaseState, ModelError> {
    let mut y = state.clone();
    for _ in 0..steps {
        y = fixed_step(system, &y, h, exec)?;
    }
    Ok(y)
}

struct Member {
    state: PhaseState,
    accel: Vec<Vec3>,
    metrics: StateMetrics,
}

/// A set of systems advanced with one shared step-size sequence.
pub struct Lockstep<'a, S: ParticleSystem> {
    systems: &'a [S],
    members: Vec<Member>,
    config: IntegratorConfig,
    time: f64,
    step: f64,
    steps_taken: usize,
    stats: IntegratorStats,
    culprit: Option<usize>,
}

/// Outcome of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptedStep {
    pub dt: f64,
    pub error: f64,
    pub next_dt: f64,
}

impl<'a, S: ParticleSystem> Lockstep<'a, S> {
    pub fn new(systems: &'a [S], states: Vec<PhaseState>, t0: f64, config: IntegratorConfig) -> Result<Self, IntegrationError> {
        config.validate()?;
        assert_eq!(systems.len(), states.len(), "one state per system");
        let mut stats = IntegratorStats::default();
        let mut members = Vec::with_capacity(states.len());
        for (k, (system, state)) in systems.iter().zip(states).enumerate() {
            let mut accel = vec![Vec3::zeros(); state.len()];
            let metrics = system
                .acceleration(&state.x, &state.v, &mut accel)
                .map_err(|e| IntegrationError::InitialState { member: k, source: e })?;
            stats.min_pair_distance = stats.min_pair_distance.min(metrics.min_pair);
            stats.min_wall_margin = stats.min_wall_margin.min(metrics.wall_margin);
            members.push(Member { state, accel, metrics });
        }
        Ok(Self {
            systems,
            members,
            time: t0,
            step: config.initial_step.min(config.max_step),
            config,
            steps_taken: 0,
            stats,
            culprit: None,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn states(&self) -> impl Iterator<Item = &PhaseState> {
        self.members.iter().map(|m| &m.state)
    }

    pub fn state(&self, k: usize) -> &PhaseState {
        &self.members[k].state
    }

    pub fn stats(&self) -> IntegratorStats {
        self.stats
    }

    /// Member responsible for the most recent rejection, if any.
    pub fn culprit(&self) -> Option<usize> {
        self.culprit
    }

    /// Proposed size of the next step.
    pub fn next_step(&self) -> f64 {
        self.step
    }

    fn underflow(&self, step: f64) -> IntegrationError {
        let (mut min_pair, mut wall_margin) = (f64::INFINITY, f64::INFINITY);
        for m in &self.members {
            min_pair = min_pair.min(m.metrics.min_pair);
            wall_margin = wall_margin.min(m.metrics.wall_margin);
        }
        IntegrationError::StepUnderflow {
            time: self.time,
            step,
            min_pair,
            wall_margin,
        }
    }

    /// Advances every member by one accepted step of size at most `limit`.
    ///
    /// A trial is rejected and halved when the error estimate exceeds the
    /// tolerance, when a stage leaves the domain, or when some particle
    /// moves further than `eta` times the closest pair distance.
    pub fn advance(&mut self, limit: f64) -> Result<AcceptedStep, IntegrationError> {
        if self.steps_taken >= self.config.max_steps {
            return Err(IntegrationError::TooManySteps {
                time: self.time,
                steps: self.steps_taken,
            });
        }
        let floor = 1e-14 * self.config.initial_step;
        let wanted = self.step.min(self.config.max_step);
        let clipped = wanted > limit;
        let mut h = if clipped { limit } else { wanted };
        let cfg = self.config;
        let tol = Some((cfg.rtol, cfg.atol));
        loop {
            if h < floor {
                return Err(self.underflow(h));
            }
            let systems = self.systems;
            let mut work: Vec<(usize, &Member)> = self.members.iter().enumerate().collect();
            let trials = cfg.exec.map_tasks(&mut work, |(k, m)| {
                let trial = dp_step(&systems[*k], &m.state, &m.accel, h, tol, cfg.exec).ok()?;
                let guard = m.metrics.min_pair.min(systems[*k].guard_scale());
                (trial.displacement <= cfg.eta * guard).then_some(trial)
            });
            let mut worst = 0.0f64;
            for (k, t) in trials.iter().enumerate() {
                let e = t.as_ref().map_or(f64::INFINITY, |t| t.error);
                if !(e <= worst) {
                    worst = e;
                    if !(e <= 1.0) {
                        self.culprit = Some(k);
                    }
                }
            }
            if !(worst <= 1.0) {
                self.stats.rejected += 1;
                h *= 0.5;
                continue;
            }
            for (m, trial) in self.members.iter_mut().zip(trials) {
                let trial = trial.expect("all trials accepted");
                m.state = PhaseState::new(trial.x, trial.v);
                m.accel = trial.a_end;
                m.metrics = trial.metrics;
                self.stats.min_pair_distance = self.stats.min_pair_distance.min(trial.metrics.min_pair);
                self.stats.min_wall_margin = self.stats.min_wall_margin.min(trial.metrics.wall_margin);
            }
            self.time += h;
            self.steps_taken += 1;
            self.stats.accepted += 1;
            self.stats.min_step = self.stats.min_step.min(h);
            let factor = if worst == 0.0 {
                5.0
            } else {
                (0.9 * worst.powf(-0.2)).clamp(0.2, 5.0)
            };
            let mut next = h * factor;
            if clipped && factor >= 1.0 {
                // a step shortened to hit an output time says nothing about the usable size
                next = next.max(wanted);
            }
            self.step = next.min(cfg.max_step);
            return Ok(AcceptedStep {
                dt: h,
                error: worst,
                next_dt: self.step,
            });
        }
    }

    /// Integrates to `target`, landing on it exactly.
    pub fn advance_to(&mut self, target: f64) -> Result<(), IntegrationError> {
        while self.time < target {
            let remaining = target - self.time;
            let slack = 1e-12 * target.abs().max(1.0);
            let wanted = self.step.min(self.config.max_step);
            let limit = if wanted >= remaining - slack { remaining } else { wanted };
            self.advance(limit)?;
            if target - self.time <= slack {
                self.time = target;
            }
        }
        Ok(())
    }
}

/// Output times `stride, 2 stride, ..., t_end`; always ends with `t_end`.
pub fn snapshot_times(t_end: f64, stride: f64) -> Vec<f64> {
    let mut times = Vec::new();
    if t_end <= 0.0 {
        return times;
    }
    let slack = 1e-9 * stride;
    let mut k = 1u64;
    loop {
        let t = k as f64 * stride;
        if t >= t_end - slack {
            break;
        }
        times.push(t);
        k += 1;
    }
    times.push(t_end);
    times
}

/// Lockstep integration with snapshots; entry `[j][k]` is member `k` at time `times[j]`.
pub struct LockstepRun {
    pub times: Vec<f64>,
    pub states: Vec<Vec<PhaseState>>,
    pub stats: IntegratorStats,
}

/// Failure tagged with the time it happened and, when known, the member at fault.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("integration failed at t = {time}: {source}")]
pub struct TimedFailure {
    pub time: f64,
    pub member: Option<usize>,
    #[source]
    pub source: IntegrationError,
}

pub fn integrate_lockstep<S: ParticleSystem>(
    systems: &[S],
    initial: Vec<PhaseState>,
    t_end: f64,
    stride: f64,
    config: IntegratorConfig,
) -> Result<LockstepRun, TimedFailure> {
    let mut run = Lockstep::new(systems, initial, 0.0, config).map_err(|source| TimedFailure {
        time: 0.0,
        member: match source {
            IntegrationError::InitialState { member, .. } => Some(member),
            _ => None,
        },
        source,
    })?;
    let mut times = vec![0.0];
    let mut states = vec![run.states().cloned().collect::<Vec<_>>()];
    for t in snapshot_times(t_end, stride) {
        run.advance_to(t).map_err(|source| TimedFailure {
            time: run.time(),
            member: run.culprit(),
            source,
        })?;
        times.push(run.time());
        states.push(run.states().cloned().collect());
    }
    Ok(LockstepRun {
        times,
        states,
        stats: run.stats(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Harmonic oscillators, `a = -x`.
    struct Spring;
    impl ParticleSystem for Spring {
        fn acceleration(&self, x: &[Vec3], _v: &[Vec3], out: &mut [Vec3]) -> Result<StateMetrics, ModelError> {
            for (o, x) in out.iter_mut().zip(x) {
                *o = -x;
            }
            Ok(StateMetrics::UNBOUNDED)
        }
    }

    const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];

    #[test]
    fn tableau_rows_sum_to_nodes() {
        for (row, c) in A.iter().zip(C) {
            let s: f64 = row.iter().sum();
            assert!((s - c).abs() < 1e-14);
        }
        assert!(E.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn snapshot_grid() {
        assert_eq!(snapshot_times(0.0, 0.1), Vec::<f64>::new());
        let t = snapshot_times(1.0, 0.25);
        assert_eq!(t, vec![0.25, 0.5, 0.75, 1.0]);
        let t = snapshot_times(1.0, 0.3);
        assert_eq!(t.len(), 4);
        assert_eq!(*t.last().unwrap(), 1.0);
    }

    #[test]
    fn spring_matches_cosine() {
        let init = PhaseState::new(vec![Vec3::new(1.0, 0.0, 0.0)], vec![Vec3::zeros()]);
        let cfg = IntegratorConfig::default().with_rtol(1e-10).with_atol(1e-12);
        let run = integrate_lockstep(&[Spring], vec![init], 3.0, 0.5, cfg).unwrap();
        for (t, s) in run.times.iter().zip(&run.states) {
            assert!((s[0].x[0].x - t.cos()).abs() < 1e-8, "t={t}");
        }
        assert_eq!(*run.times.last().unwrap(), 3.0);
    }

    #[test]
    fn fixed_step_is_fifth_order() {
        let init = PhaseState::new(vec![Vec3::new(1.0, 0.0, 0.0)], vec![Vec3::zeros()]);
        let err = |n: usize| {
            let y = integrate_fixed(&Spring, &init, 1.0 / n as f64, n, Exec::Sequential).unwrap();
            (y.x[0].x - 1f64.cos()).abs()
        };
        let order = (err(8) / err(16)).log2();
        assert!(order > 4.7, "order {order}");
    }

    #[test]
    fn backward_fixed_step_inverts_forward() {
        let init = PhaseState::new(vec![Vec3::new(1.0, 0.5, 0.0)], vec![Vec3::new(0.0, 1.0, 0.0)]);
        let fwd = fixed_step(&Spring, &init, 1e-2, Exec::Sequential).unwrap();
        let back = fixed_step(&Spring, &fwd, -1e-2, Exec::Sequential).unwrap();
        assert!((back.x[0] - init.x[0]).norm() < 1e-13);
    }

    #[test]
    fn rejects_bad_settings() {
        let cfg = IntegratorConfig {
            eta: 1.5,
            ..IntegratorConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
