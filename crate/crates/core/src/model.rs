//! Geometry, communication kernels, and pair potentials.
//!
//! Everything in here is a pure function of immutable parameters. The three
//! point evaluations used by the dynamics are [`CommKernel::rate`],
//! [`PairPotential::interaction`] and [`TubeGeometry::confinement`].

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("singular configuration: particles {first} and {second} overlap")]
    Singular { first: u64, second: u64 },
    #[error("position outside the tube: |x_perp| = {radial} >= L = {radius}")]
    OutOfDomain { radial: f64, radius: f64 },
    #[error("duplicate particle id {0}")]
    DuplicateId(u64),
    #[error("unsupported kernel for tube dynamics: {0}")]
    UnsupportedKernel(&'static str),
    #[error("support radius mismatch: kernel {kernel} vs potential {potential}")]
    RangeMismatch { kernel: f64, potential: f64 },
}

fn check(cond: bool, name: &'static str, value: f64, reason: &'static str) -> Result<(), ModelError> {
    if cond && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter { name, value, reason })
    }
}

/// Quintic smoothstep `t^3 (10 - 15 t + 6 t^2)` on `[0, 1]`, with its derivative.
pub(crate) fn smoothstep(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        (0.0, 0.0)
    } else if t >= 1.0 {
        (1.0, 0.0)
    } else {
        let t2 = t * t;
        let value = t2 * t * (10.0 - 15.0 * t + 6.0 * t2);
        let slope = 30.0 * t2 * (1.0 - t) * (1.0 - t);
        (value, slope)
    }
}

/// An infinitely long circular tube with a soft confining wall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeGeometry {
    axis: [f64; 3],
    radius: f64,
    onset: f64,
    exponent: f64,
    amplitude: f64,
}

impl TubeGeometry {
    /// `axis` must be a unit vector, `0 < onset < radius`, `exponent > 0`.
    ///
    /// An `amplitude` of zero switches the wall potential off; the tube
    /// boundary itself is still enforced by the integrator.
    pub fn new(
        axis: Vec3,
        radius: f64,
        onset: f64,
        exponent: f64,
        amplitude: f64,
    ) -> Result<Self, ModelError> {
        check(
            (axis.norm() - 1.0).abs() <= 1e-12,
            "axis",
            axis.norm(),
            "axis must be a unit vector",
        )?;
        check(radius > 0.0, "L", radius, "tube radius must be positive")?;
        check(onset > 0.0 && onset < radius, "h", onset, "wall onset must lie in (0, L)")?;
        check(exponent > 0.0, "gamma", exponent, "wall exponent must be positive")?;
        check(amplitude >= 0.0, "theta0", amplitude, "wall amplitude must be non-negative")?;
        Ok(Self {
            axis: [axis.x, axis.y, axis.z],
            radius,
            onset,
            exponent,
            amplitude,
        })
    }

    /// Tube along the x axis.
    pub fn along_x(radius: f64, onset: f64, exponent: f64, amplitude: f64) -> Result<Self, ModelError> {
        Self::new(Vec3::x(), radius, onset, exponent, amplitude)
    }

    pub fn axis(&self) -> Vec3 {
        Vec3::from(self.axis)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn onset(&self) -> f64 {
        self.onset
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    #[inline]
    pub fn axial(&self, x: &Vec3) -> f64 {
        x.dot(&self.axis())
    }

    /// Orthogonal projection of `x` onto the cross-section.
    #[inline]
    pub fn perp(&self, x: &Vec3) -> Vec3 {
        let n = self.axis();
        x - n * x.dot(&n)
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        self.perp(x).norm() < self.radius
    }

    /// Distance from `x` to the tube wall, negative outside.
    pub fn wall_margin(&self, x: &Vec3) -> f64 {
        self.radius - self.perp(x).norm()
    }

    /// Wall energy `Θ(x)` and the confining force `-∇Θ(x)`.
    pub fn confinement(&self, x: &Vec3) -> Result<(f64, Vec3), ModelError> {
        let perp = self.perp(x);
        let s = perp.norm();
        if s >= self.radius || !s.is_finite() {
            return Err(ModelError::OutOfDomain {
                radial: s,
                radius: self.radius,
            });
        }
        if s <= self.onset || self.amplitude == 0.0 {
            return Ok((0.0, Vec3::zeros()));
        }
        let width = self.radius - self.onset;
        let y = (s - self.onset) / width;
        let ramp = self.amplitude * y * y * y;
        let ramp_slope = 3.0 * self.amplitude * y * y / width;
        let gap = self.radius - s;
        let denom = gap.powf(self.exponent);
        let energy = ramp / denom;
        let slope = ramp_slope / denom + self.exponent * ramp / (denom * gap);
        Ok((energy, -perp * (slope / s)))
    }
}

/// Functional form of the communication rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    /// `K0 (1 + cos(pi u / rbar)) / 2` on `[0, rbar]`, zero beyond.
    TaperedCosine,
    /// `K0 / (1 + u)^beta`, no cutoff. Free-space flocking only.
    InversePower { beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommKernel {
    family: KernelFamily,
    amplitude: f64,
    range: f64,
}

impl CommKernel {
    pub fn tapered_cosine(amplitude: f64, range: f64) -> Result<Self, ModelError> {
        check(amplitude >= 0.0, "K0", amplitude, "kernel amplitude must be non-negative")?;
        check(range > 0.0, "rbar", range, "support radius must be positive")?;
        Ok(Self {
            family: KernelFamily::TaperedCosine,
            amplitude,
            range,
        })
    }

    pub fn inverse_power(amplitude: f64, beta: f64) -> Result<Self, ModelError> {
        check(amplitude >= 0.0, "K0", amplitude, "kernel amplitude must be non-negative")?;
        check(beta > 0.0, "beta", beta, "decay exponent must be positive")?;
        Ok(Self {
            family: KernelFamily::InversePower { beta },
            amplitude,
            range: f64::INFINITY,
        })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Support radius; infinite for the inverse-power family.
    pub fn range(&self) -> f64 {
        self.range
    }

    /// Communication rate `ψ(u)` at distance `u >= 0`.
    #[inline]
    pub fn rate(&self, u: f64) -> f64 {
        let u = u.abs();
        match self.family {
            KernelFamily::TaperedCosine => {
                if u >= self.range {
                    0.0
                } else {
                    0.5 * self.amplitude * (1.0 + (std::f64::consts::PI * u / self.range).cos())
                }
            }
            KernelFamily::InversePower { beta } => self.amplitude / (1.0 + u).powf(beta),
        }
    }
}

/// Short-range repulsion `a |x|^-b S(|x|/rbar)`, or `u0 S(|x|/rbar)` when `a = 0`.
///
/// `S` is one on `[0, s0]`, zero on `[1, inf)`, and a reversed quintic
/// smoothstep in between, so the potential is C2 away from the origin and
/// both it and its gradient vanish at the support edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairPotential {
    strength: f64,
    power: f64,
    range: f64,
    taper_start: f64,
    core: f64,
}

impl PairPotential {
    pub fn new(strength: f64, power: f64, range: f64, taper_start: f64, core: f64) -> Result<Self, ModelError> {
        check(strength >= 0.0, "a", strength, "singular amplitude must be non-negative")?;
        check(power > 0.0, "b", power, "singular exponent must be positive")?;
        check(range > 0.0, "rbar", range, "support radius must be positive")?;
        check(
            taper_start > 0.0 && taper_start < 1.0,
            "s0",
            taper_start,
            "taper start must lie in (0, 1)",
        )?;
        check(core >= 0.0, "u0", core, "finite-core value must be non-negative")?;
        Ok(Self {
            strength,
            power,
            range,
            taper_start,
            core,
        })
    }

    /// The zero potential with the given support radius.
    pub fn none(range: f64) -> Result<Self, ModelError> {
        Self::new(0.0, 1.0, range, 0.5, 0.0)
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn taper_start(&self) -> f64 {
        self.taper_start
    }

    pub fn core(&self) -> f64 {
        self.core
    }

    pub fn is_singular(&self) -> bool {
        self.strength > 0.0
    }

    pub fn is_zero(&self) -> bool {
        self.strength == 0.0 && self.core == 0.0
    }

    /// Taper `S(q)` and `dS/dq`.
    fn taper(&self, q: f64) -> (f64, f64) {
        let width = 1.0 - self.taper_start;
        let (step, slope) = smoothstep((q - self.taper_start) / width);
        (1.0 - step, -slope / width)
    }

    /// Radial profile `U(r)` and `dU/dr`; `r` must be positive.
    #[inline]
    fn radial(&self, r: f64) -> (f64, f64) {
        if r >= self.range {
            return (0.0, 0.0);
        }
        let (s, ds) = self.taper(r / self.range);
        if self.strength > 0.0 {
            let head = self.strength * r.powf(-self.power);
            let head_slope = -self.power * head / r;
            (head * s, head_slope * s + head * ds / self.range)
        } else {
            (self.core * s, self.core * ds / self.range)
        }
    }

    /// Pair energy `U(d)` at separation vector `d`; `U(0)` is `u0` for a finite core.
    #[inline]
    pub fn energy(&self, r: f64) -> f64 {
        if r == 0.0 {
            return if self.strength > 0.0 { f64::INFINITY } else { self.core };
        }
        self.radial(r).0
    }

    /// Energy `U(d)` and force `-∇U(d)` acting on the particle at the tip of `d`.
    #[inline]
    pub fn interaction(&self, d: &Vec3) -> Result<(f64, Vec3), ModelError> {
        let r = d.norm();
        if r == 0.0 {
            return Err(ModelError::Singular { first: 0, second: 0 });
        }
        if r >= self.range {
            return Ok((0.0, Vec3::zeros()));
        }
        let (u, du) = self.radial(r);
        Ok((u, d * (-du / r)))
    }
}

/// Geometry, alignment kernel, and pair potential of the tube model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub geometry: TubeGeometry,
    pub kernel: CommKernel,
    pub potential: PairPotential,
}

impl ModelParams {
    pub fn new(geometry: TubeGeometry, kernel: CommKernel, potential: PairPotential) -> Result<Self, ModelError> {
        if !matches!(kernel.family(), KernelFamily::TaperedCosine) {
            return Err(ModelError::UnsupportedKernel(
                "tube dynamics needs a compactly supported kernel",
            ));
        }
        if kernel.range() != potential.range() {
            return Err(ModelError::RangeMismatch {
                kernel: kernel.range(),
                potential: potential.range(),
            });
        }
        Ok(Self {
            geometry,
            kernel,
            potential,
        })
    }

    /// Common interaction range `rbar` of the kernel and the potential.
    pub fn range(&self) -> f64 {
        self.potential.range()
    }

    /// Default axial cell width for neighbor search.
    pub fn cell_width(&self) -> f64 {
        self.range().max(2.0 * self.geometry.radius())
    }
}

impl Default for ModelParams {
    /// Unit tube along x with walls from half the radius, `K0 = 0.2`,
    /// `rbar = 6`, and a weak inverse-square core.
    ///
    /// The range is wide enough that unit-density samples rarely contain
    /// gaps the alignment cannot bridge.
    fn default() -> Self {
        Self::new(
            TubeGeometry::along_x(1.0, 0.5, 2.0, 1.0).expect("valid geometry"),
            CommKernel::tapered_cosine(0.2, 6.0).expect("valid kernel"),
            PairPotential::new(0.05, 2.0, 6.0, 0.5, 1.0).expect("valid potential"),
        )
        .expect("consistent defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    pub id: u64,
    pub x: Vec3,
    pub v: Vec3,
}

impl ParticleState {
    pub fn new(id: u64, x: Vec3, v: Vec3) -> Self {
        Self { id, x, v }
    }
}

/// A finite set of particles in the tube at time `time`, stored in ascending id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    particles: Vec<ParticleState>,
    geometry: TubeGeometry,
    time: f64,
}

impl Configuration {
    /// Sorts by id and checks distinct ids, confinement, and non-overlap.
    pub fn new(mut particles: Vec<ParticleState>, geometry: TubeGeometry, time: f64) -> Result<Self, ModelError> {
        check(time >= 0.0, "t", time, "time stamp must be non-negative")?;
        particles.sort_by_key(|p| p.id);
        for w in particles.windows(2) {
            if w[0].id == w[1].id {
                return Err(ModelError::DuplicateId(w[0].id));
            }
        }
        for p in &particles {
            let radial = geometry.perp(&p.x).norm();
            if !(radial < geometry.radius()) || !p.v.iter().all(|c| c.is_finite()) {
                return Err(ModelError::OutOfDomain {
                    radial,
                    radius: geometry.radius(),
                });
            }
        }
        let mut order: Vec<usize> = (0..particles.len()).collect();
        order.sort_by(|&i, &j| {
            let (a, b) = (&particles[i].x, &particles[j].x);
            a.x.total_cmp(&b.x)
                .then(a.y.total_cmp(&b.y))
                .then(a.z.total_cmp(&b.z))
        });
        for w in order.windows(2) {
            if particles[w[0]].x == particles[w[1]].x {
                return Err(ModelError::Singular {
                    first: particles[w[0]].id,
                    second: particles[w[1]].id,
                });
            }
        }
        Ok(Self {
            particles,
            geometry,
            time,
        })
    }

    pub fn empty(geometry: TubeGeometry) -> Self {
        Self {
            particles: Vec::new(),
            geometry,
            time: 0.0,
        }
    }

    /// Builds from parts already known to satisfy the invariants.
    pub(crate) fn from_parts_unchecked(particles: Vec<ParticleState>, geometry: TubeGeometry, time: f64) -> Self {
        Self {
            particles,
            geometry,
            time,
        }
    }

    pub fn particles(&self) -> &[ParticleState] {
        &self.particles
    }

    pub fn geometry(&self) -> &TubeGeometry {
        &self.geometry
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.particles.iter().map(|p| p.x).collect()
    }

    pub fn velocities(&self) -> Vec<Vec3> {
        self.particles.iter().map(|p| p.v).collect()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.particles.iter().map(|p| p.id).collect()
    }

    pub fn find(&self, id: u64) -> Option<&ParticleState> {
        self.particles
            .binary_search_by_key(&id, |p| p.id)
            .ok()
            .map(|k| &self.particles[k])
    }

    pub fn axial(&self, k: usize) -> f64 {
        self.geometry.axial(&self.particles[k].x)
    }

    /// Same particles with new phase coordinates; `x` and `v` are in storage order.
    pub(crate) fn with_state(&self, x: &[Vec3], v: &[Vec3], time: f64) -> Self {
        let particles = self
            .particles
            .iter()
            .zip(x.iter().zip(v))
            .map(|(p, (x, v))| ParticleState::new(p.id, *x, *v))
            .collect();
        Self::from_parts_unchecked(particles, self.geometry.clone(), time)
    }

    pub fn max_speed(&self) -> f64 {
        self.particles.iter().map(|p| p.v.norm()).fold(0.0, f64::max)
    }

    /// The sub-configuration of particles satisfying `keep`.
    pub fn restrict(&self, keep: impl Fn(&ParticleState) -> bool) -> Self {
        let particles = self.particles.iter().filter(|p| keep(p)).cloned().collect();
        Self::from_parts_unchecked(particles, self.geometry.clone(), self.time)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fd_gradient(f: impl Fn(&Vec3) -> f64, x: &Vec3, step: f64) -> Vec3 {
        let mut g = Vec3::zeros();
        for k in 0..3 {
            let mut e = Vec3::zeros();
            e[k] = step;
            g[k] = (f(&(x + e)) - f(&(x - e))) / (2.0 * step);
        }
        g
    }

    #[test]
    fn tapered_cosine_values() {
        let k = CommKernel::tapered_cosine(1.0, 2.0).unwrap();
        assert_eq!(k.rate(0.0), 1.0);
        assert_relative_eq!(k.rate(1.0), 0.5, epsilon = 1e-15);
        assert_eq!(k.rate(2.0), 0.0);
        assert_eq!(k.rate(7.0), 0.0);
        assert_eq!(k.rate(-1.3), k.rate(1.3));
    }

    #[test]
    fn inverse_power_value() {
        let k = CommKernel::inverse_power(1.0, 0.5).unwrap();
        assert_relative_eq!(k.rate(3.0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn kernel_rejects_bad_parameters() {
        assert!(CommKernel::tapered_cosine(-1.0, 1.0).is_err());
        assert!(CommKernel::tapered_cosine(1.0, 0.0).is_err());
        assert!(CommKernel::inverse_power(1.0, 0.0).is_err());
    }

    #[test]
    fn pair_interaction_inside_flat_region() {
        let u = PairPotential::new(1.0, 2.0, 2.0, 0.5, 1.0).unwrap();
        let (e, f) = u.interaction(&Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(e, 1.0, epsilon = 1e-15);
        assert_relative_eq!(f, Vec3::new(2.0, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn pair_interaction_outside_support_is_exact_zero() {
        let u = PairPotential::new(1.0, 2.0, 2.0, 0.5, 1.0).unwrap();
        let (e, f) = u.interaction(&Vec3::new(3.0, 0.0, 0.0)).unwrap();
        assert_eq!(e.to_bits(), 0.0f64.to_bits());
        assert_eq!(f, Vec3::zeros());
        let (e, f) = u.interaction(&Vec3::new(2.0, 0.0, 0.0)).unwrap();
        assert_eq!(e, 0.0);
        assert_eq!(f, Vec3::zeros());
    }

    #[test]
    fn pair_interaction_matches_finite_difference_in_taper() {
        let u = PairPotential::new(1.0, 2.0, 2.0, 0.5, 1.0).unwrap();
        let d = Vec3::new(0.7, 0.0, 0.0);
        // q = 0.35 is inside the flat region; also probe the taper itself
        for d in [d, Vec3::new(1.4, 0.2, -0.1), Vec3::new(0.3, 1.1, 0.9)] {
            let (_, f) = u.interaction(&d).unwrap();
            let g = fd_gradient(|x| u.energy(x.norm()), &d, 1e-5);
            assert_relative_eq!(-g, f, max_relative = 1e-6);
        }
    }

    #[test]
    fn zero_separation_is_singular() {
        let u = PairPotential::new(1.0, 2.0, 2.0, 0.5, 1.0).unwrap();
        assert!(matches!(u.interaction(&Vec3::zeros()), Err(ModelError::Singular { .. })));
    }

    #[test]
    fn finite_core_value_at_origin() {
        let u = PairPotential::new(0.0, 2.0, 2.0, 0.5, 3.0).unwrap();
        assert_eq!(u.energy(0.0), 3.0);
        assert_eq!(u.energy(0.5), 3.0);
    }

    #[test]
    fn taper_is_c1_at_support_edge() {
        let u = PairPotential::new(1.0, 2.0, 2.0, 0.5, 1.0).unwrap();
        let (e, du) = u.radial(2.0 - 1e-9);
        assert!(e.abs() < 1e-20 && du.abs() < 1e-12);
    }

    #[test]
    fn confinement_example() {
        let g = TubeGeometry::along_x(1.0, 0.5, 2.0, 1.0).unwrap();
        let (e, _) = g.confinement(&Vec3::new(4.0, 0.75, 0.0)).unwrap();
        assert_relative_eq!(e, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn confinement_vanishes_below_onset() {
        let g = TubeGeometry::along_x(1.0, 0.5, 2.0, 1.0).unwrap();
        let (e, f) = g.confinement(&Vec3::new(0.0, 0.0, 0.25)).unwrap();
        assert_eq!(e, 0.0);
        assert_eq!(f, Vec3::zeros());
    }

    #[test]
    fn confinement_force_matches_finite_difference() {
        let g = TubeGeometry::along_x(1.0, 0.5, 2.0, 1.0).unwrap();
        let x = Vec3::new(0.3, 0.9 * 0.6, 0.9 * 0.8);
        let (_, f) = g.confinement(&x).unwrap();
        let grad = fd_gradient(|y| g.confinement(y).unwrap().0, &x, 1e-7);
        assert_relative_eq!(-grad, f, max_relative = 1e-6);
        // perpendicular to the axis, pointing inwards
        assert_eq!(f.x, 0.0);
        assert!(f.dot(&g.perp(&x)) < 0.0);
    }

    #[test]
    fn confinement_rejects_outside() {
        let g = TubeGeometry::along_x(1.0, 0.5, 2.0, 1.0).unwrap();
        assert!(matches!(
            g.confinement(&Vec3::new(0.0, 1.0, 0.0)),
            Err(ModelError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn geometry_validation() {
        assert!(TubeGeometry::new(Vec3::new(1.0, 1.0, 0.0), 1.0, 0.5, 2.0, 1.0).is_err());
        assert!(TubeGeometry::along_x(1.0, 1.0, 2.0, 1.0).is_err());
        assert!(TubeGeometry::along_x(1.0, 0.5, 0.0, 1.0).is_err());
        let n = Vec3::new(1.0, 2.0, 2.0) / 3.0;
        assert!(TubeGeometry::new(n, 1.0, 0.5, 2.0, 1.0).is_ok());
    }

    #[test]
    fn configuration_invariants() {
        let g = TubeGeometry::along_x(1.0, 0.5, 2.0, 1.0).unwrap();
        let p = |id, x: f64| ParticleState::new(id, Vec3::new(x, 0.0, 0.0), Vec3::zeros());
        let c = Configuration::new(vec![p(3, 1.0), p(1, 0.0)], g.clone(), 0.0).unwrap();
        assert_eq!(c.ids(), vec![1, 3]);
        assert!(matches!(
            Configuration::new(vec![p(1, 0.0), p(1, 1.0)], g.clone(), 0.0),
            Err(ModelError::DuplicateId(1))
        ));
        assert!(matches!(
            Configuration::new(vec![p(1, 0.0), p(2, 0.0)], g.clone(), 0.0),
            Err(ModelError::Singular { .. })
        ));
        let out = ParticleState::new(1, Vec3::new(0.0, 1.5, 0.0), Vec3::zeros());
        assert!(Configuration::new(vec![out], g, 0.0).is_err());
    }

    #[test]
    fn params_reject_mismatched_range() {
        let g = TubeGeometry::along_x(1.0, 0.5, 2.0, 1.0).unwrap();
        let k = CommKernel::tapered_cosine(1.0, 2.0).unwrap();
        let u = PairPotential::new(1.0, 2.0, 1.5, 0.5, 1.0).unwrap();
        assert!(matches!(
            ModelParams::new(g.clone(), k, u),
            Err(ModelError::RangeMismatch { .. })
        ));
        let k = CommKernel::inverse_power(1.0, 0.5).unwrap();
        assert!(ModelParams::new(g, k, u).is_err());
    }
}
