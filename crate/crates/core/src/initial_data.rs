//! Deterministic samplers for finite truncations of admissible configurations,
//! membership diagnostics, and JSON-lines snapshot files.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{min_pair_distance, min_wall_margin};
use crate::functionals::{sup_q, SupEstimate, SupGrid};
use crate::model::{Configuration, ModelError, ModelParams, ParticleState, TubeGeometry, Vec3};

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("infeasible sampler spec: {0}")]
    InvalidSpec(&'static str),
    #[error("could not place {placed} of {wanted} particles with separation {min_separation} within {attempts} attempts")]
    InfeasibleDensity {
        placed: usize,
        wanted: usize,
        min_separation: f64,
        attempts: u64,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Poisson axial positions, uniform disk cross-sections, Gaussian velocities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    pub seed: u64,
    /// Expected particles per unit axial length.
    pub density: f64,
    /// Standard deviation of each velocity component.
    pub velocity_scale: f64,
    /// Particles are placed with axial coordinate in `[-half_span, half_span]`.
    pub half_span: f64,
    pub min_separation: f64,
    /// Scale velocities by `sqrt(log(e + |x . n|))`.
    pub log_growth: bool,
    /// Transverse positions stay within `transverse_cap * L`.
    pub transverse_cap: f64,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            density: 1.0,
            velocity_scale: 0.5,
            half_span: 400.0,
            min_separation: 0.3,
            log_growth: false,
            transverse_cap: 0.5,
        }
    }
}

/// Rejection attempts allowed over a whole sample.
pub const MAX_ATTEMPTS: u64 = 1_000_000;

impl SamplerSpec {
    pub fn validate(&self) -> Result<(), SampleError> {
        if !(self.density > 0.0) {
            return Err(SampleError::InvalidSpec("density must be positive"));
        }
        if !(self.velocity_scale >= 0.0) {
            return Err(SampleError::InvalidSpec("velocity scale must be non-negative"));
        }
        if !(self.half_span > 0.0) {
            return Err(SampleError::InvalidSpec("span must be positive"));
        }
        if !(self.min_separation > 0.0 && self.min_separation < 1.0 / self.density) {
            return Err(SampleError::InvalidSpec("need 0 < d_min < 1/density"));
        }
        if !(self.transverse_cap > 0.0 && self.transverse_cap < 1.0) {
            return Err(SampleError::InvalidSpec("transverse cap must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
#[repr(u64)]
enum Field {
    Count = 0,
    Position = 1,
    Velocity = 2,
}

/// Independent stream for one (field, particle) pair under `seed`.
fn stream(seed: u64, field: Field, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((field as u64) << 56) | index);
    rng
}

/// Two unit vectors completing `axis` to an orthonormal frame.
fn cross_section_basis(axis: &Vec3) -> (Vec3, Vec3) {
    let pick = if axis.x.abs() <= axis.y.abs() && axis.x.abs() <= axis.z.abs() {
        Vec3::x()
    } else if axis.y.abs() <= axis.z.abs() {
        Vec3::y()
    } else {
        Vec3::z()
    };
    let e1 = axis.cross(&pick).normalize();
    let e2 = axis.cross(&e1);
    (e1, e2)
}

pub fn sample_configuration(spec: &SamplerSpec, geometry: &TubeGeometry) -> Result<Configuration, SampleError> {
    spec.validate()?;
    let axis = geometry.axis();
    let (e1, e2) = cross_section_basis(&axis);
    let disk = spec.transverse_cap * geometry.radius();
    let mean = spec.density * 2.0 * spec.half_span;
    let count = Poisson::new(mean)
        .map_err(|_| SampleError::InvalidSpec("expected count out of range"))?
        .sample(&mut stream(spec.seed, Field::Count, 0)) as usize;

    let cell = spec.min_separation;
    let mut grid: HashMap<i64, Vec<usize>> = HashMap::new();
    let mut positions: Vec<Vec3> = Vec::with_capacity(count);
    let mut attempts = 0u64;
    for i in 0..count {
        let mut rng = stream(spec.seed, Field::Position, i as u64);
        loop {
            attempts += 1;
            if attempts > MAX_ATTEMPTS {
                return Err(SampleError::InfeasibleDensity {
                    placed: positions.len(),
                    wanted: count,
                    min_separation: spec.min_separation,
                    attempts: MAX_ATTEMPTS,
                });
            }
            let a = rng.random_range(-spec.half_span..=spec.half_span);
            let rho = disk * rng.random::<f64>().sqrt();
            let phi = std::f64::consts::TAU * rng.random::<f64>();
            let x = axis * a + (e1 * phi.cos() + e2 * phi.sin()) * rho;
            let c = (a / cell).floor() as i64;
            let clear = (c - 1..=c + 1).all(|cc| {
                grid.get(&cc).is_none_or(|members| {
                    members
                        .iter()
                        .all(|&j| (positions[j] - x).norm() >= spec.min_separation)
                })
            });
            if clear {
                grid.entry(c).or_default().push(i);
                positions.push(x);
                break;
            }
        }
    }

    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let particles = positions
        .into_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rng = stream(spec.seed, Field::Velocity, i as u64);
            let mut v = Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng));
            v *= spec.velocity_scale;
            if spec.log_growth {
                v *= (std::f64::consts::E + x.dot(&axis).abs()).ln().sqrt();
            }
            ParticleState::new(i as u64, x, v)
        })
        .collect();
    Ok(Configuration::new(particles, geometry.clone(), 0.0)?)
}

/// Diagnostics certifying that a truncation has finite local functionals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub particles: usize,
    pub sup_q: SupEstimate,
    pub min_pair_distance: f64,
    pub min_wall_margin: f64,
    pub max_wall_energy: f64,
    pub max_speed: f64,
}

impl MembershipReport {
    /// All reported quantities finite; infinite distances mean "no pair" or "no particle".
    pub fn is_finite(&self) -> bool {
        self.sup_q.value.is_finite()
            && self.max_wall_energy.is_finite()
            && self.max_speed.is_finite()
            && (self.particles < 2 || self.min_pair_distance.is_finite())
    }
}

pub fn verify_membership(config: &Configuration, params: &ModelParams) -> Result<MembershipReport, ModelError> {
    let sup = sup_q(config, params, &SupGrid::for_range(params.range()))?;
    let mut max_wall = 0.0f64;
    for p in config.particles() {
        max_wall = max_wall.max(params.geometry.confinement(&p.x)?.0);
    }
    Ok(MembershipReport {
        particles: config.len(),
        sup_q: sup,
        min_pair_distance: min_pair_distance(config),
        min_wall_margin: min_wall_margin(config),
        max_wall_energy: max_wall,
        max_speed: config.max_speed(),
    })
}

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported snapshot format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("line {line}: invalid configuration: {source}")]
    Invalid {
        line: usize,
        #[source]
        source: ModelError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotHeader {
    pub format_version: u32,
    pub time: f64,
    pub geometry: TubeGeometry,
    pub params_digest: String,
    pub particles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParticleLine {
    id: u64,
    x: [f64; 3],
    v: [f64; 3],
}

pub fn write_snapshot<W: Write>(config: &Configuration, params_digest: &str, out: W) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    let header = SnapshotHeader {
        format_version: SNAPSHOT_VERSION,
        time: config.time(),
        geometry: config.geometry().clone(),
        params_digest: params_digest.to_owned(),
        particles: config.len(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for p in config.particles() {
        let line = ParticleLine {
            id: p.id,
            x: [p.x.x, p.x.y, p.x.z],
            v: [p.v.x, p.v.y, p.v.z],
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_snapshot<R: BufRead>(input: R) -> Result<(SnapshotHeader, Configuration), SnapshotError> {
    let mut lines = input.lines();
    let parse_err = |line: usize, e: &dyn std::fmt::Display| SnapshotError::Parse {
        line,
        message: e.to_string(),
    };
    let first = lines.next().ok_or_else(|| parse_err(1, &"missing header"))??;
    let raw: serde_json::Value = serde_json::from_str(&first).map_err(|e| parse_err(1, &e))?;
    let version = raw.get("format_version").and_then(serde_json::Value::as_u64);
    match version {
        Some(v) if v == SNAPSHOT_VERSION as u64 => {}
        Some(v) => {
            return Err(SnapshotError::Version {
                found: v as u32,
                expected: SNAPSHOT_VERSION,
            })
        }
        None => return Err(parse_err(1, &"header lacks format_version")),
    }
    let header: SnapshotHeader = serde_json::from_value(raw).map_err(|e| parse_err(1, &e))?;
    let mut particles = Vec::with_capacity(header.particles);
    for (k, line) in lines.enumerate() {
        let lineno = k + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: ParticleLine = serde_json::from_str(&line).map_err(|e| parse_err(lineno, &e))?;
        particles.push(ParticleState::new(p.id, Vec3::from(p.x), Vec3::from(p.v)));
    }
    if particles.len() != header.particles {
        return Err(parse_err(
            particles.len() + 2,
            &format!("expected {} particles, found {}", header.particles, particles.len()),
        ));
    }
    let config = Configuration::new(particles, header.geometry.clone(), header.time).map_err(|source| {
        SnapshotError::Invalid {
            line: header.particles + 1,
            source,
        }
    })?;
    Ok((header, config))
}

pub fn save_snapshot(config: &Configuration, params_digest: &str, path: &Path) -> std::io::Result<()> {
    write_snapshot(config, params_digest, File::create(path)?)
}

pub fn load_snapshot(path: &Path) -> Result<(SnapshotHeader, Configuration), SnapshotError> {
    read_snapshot(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CommKernel, PairPotential};

    fn geometry() -> TubeGeometry {
        TubeGeometry::along_x(1.0, 0.5, 2.0, 1.0).unwrap()
    }

    fn spec(seed: u64) -> SamplerSpec {
        SamplerSpec {
            seed,
            density: 1.0,
            velocity_scale: 0.5,
            half_span: 20.0,
            min_separation: 0.3,
            log_growth: false,
            transverse_cap: 0.5,
        }
    }

    fn params() -> ModelParams {
        ModelParams::new(
            geometry(),
            CommKernel::tapered_cosine(1.0, 1.5).unwrap(),
            PairPotential::new(0.05, 2.0, 1.5, 0.5, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_configuration(&spec(7), &geometry()).unwrap();
        let b = sample_configuration(&spec(7), &geometry()).unwrap();
        assert_eq!(a, b);
        let c = sample_configuration(&spec(8), &geometry()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sample_respects_separation_and_cap() {
        let g = geometry();
        let c = sample_configuration(&spec(3), &g).unwrap();
        assert!(min_pair_distance(&c) >= 0.3);
        for p in c.particles() {
            assert!(g.perp(&p.x).norm() <= 0.5 * g.radius() + 1e-15);
            assert!(g.axial(&p.x).abs() <= 20.0);
        }
    }

    #[test]
    fn zero_velocity_scale() {
        let mut s = spec(1);
        s.velocity_scale = 0.0;
        s.log_growth = true;
        let c = sample_configuration(&s, &geometry()).unwrap();
        assert!(c.particles().iter().all(|p| p.v == Vec3::zeros()));
    }

    #[test]
    fn log_growth_scales_velocities() {
        let mut s = spec(5);
        let plain = sample_configuration(&s, &geometry()).unwrap();
        s.log_growth = true;
        let grown = sample_configuration(&s, &geometry()).unwrap();
        for (p, q) in plain.particles().iter().zip(grown.particles()) {
            let f = (std::f64::consts::E + p.x.x.abs()).ln().sqrt();
            assert!((q.v - p.v * f).norm() <= 1e-14 * (1.0 + q.v.norm()));
        }
    }

    #[test]
    fn infeasible_specs_rejected() {
        let mut s = spec(1);
        s.min_separation = 1.5;
        assert!(matches!(sample_configuration(&s, &geometry()), Err(SampleError::InvalidSpec(_))));
        let mut s = spec(1);
        s.transverse_cap = 1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn dense_packing_exhausts_attempts() {
        // feasible on paper, but a thin tube cannot fit the disks
        let g = TubeGeometry::along_x(0.01, 0.005, 2.0, 1.0).unwrap();
        let s = SamplerSpec {
            seed: 2,
            density: 1.05,
            velocity_scale: 0.0,
            half_span: 100.0,
            min_separation: 0.95,
            log_growth: false,
            transverse_cap: 0.5,
        };
        assert!(matches!(sample_configuration(&s, &g), Err(SampleError::InfeasibleDensity { .. })));
    }

    #[test]
    fn membership_of_empty_and_single() {
        let p = params();
        let empty = verify_membership(&Configuration::empty(geometry()), &p).unwrap();
        assert_eq!(empty.sup_q.value, 0.0);
        assert!(empty.is_finite());
        let one = Configuration::new(vec![ParticleState::new(0, Vec3::zeros(), Vec3::zeros())], geometry(), 0.0).unwrap();
        let r = verify_membership(&one, &p).unwrap();
        assert!((r.sup_q.value - 0.5).abs() <= 0.025);
    }

    #[test]
    fn sampled_membership_is_finite() {
        let c = sample_configuration(&spec(11), &geometry()).unwrap();
        assert!(verify_membership(&c, &params()).unwrap().is_finite());
    }

    #[test]
    fn snapshot_round_trip_is_bitwise() {
        let c = sample_configuration(&spec(4), &geometry()).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&c, "abc", &mut buf).unwrap();
        let (h, back) = read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(h.params_digest, "abc");
        assert_eq!(back, c);
        for (p, q) in c.particles().iter().zip(back.particles()) {
            for k in 0..3 {
                assert_eq!(p.x[k].to_bits(), q.x[k].to_bits());
                assert_eq!(p.v[k].to_bits(), q.v[k].to_bits());
            }
        }
    }

    #[test]
    fn empty_snapshot_round_trip() {
        let c = Configuration::empty(geometry());
        let mut buf = Vec::new();
        write_snapshot(&c, "", &mut buf).unwrap();
        assert_eq!(read_snapshot(buf.as_slice()).unwrap().1, c);
    }

    #[test]
    fn truncated_snapshot_names_line() {
        let c = sample_configuration(&spec(4), &geometry()).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&c, "", &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        // cut in the middle of the fourth line
        let cut: usize = text.lines().take(3).map(|l| l.len() + 1).sum::<usize>() + 10;
        match read_snapshot(&text.as_bytes()[..cut]) {
            Err(SnapshotError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        // cut at a line boundary: the missing particles are reported
        let cut: usize = text.lines().take(3).map(|l| l.len() + 1).sum();
        match read_snapshot(&text.as_bytes()[..cut]) {
            Err(SnapshotError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn snapshot_version_mismatch() {
        let text = r#"{"format_version":99,"time":0.0}"#;
        assert!(matches!(
            read_snapshot(text.as_bytes()),
            Err(SnapshotError::Version { found: 99, .. })
        ));
    }
}
