//! Run configuration: a TOML document with fixed sections, dotted-path
//! overrides, and the `TUBEFLOCK_SEED` environment variable.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tubeflock::dynamics::IntegratorConfig;
use tubeflock::flocking::ClassicalSpec;
use tubeflock::initial_data::SamplerSpec;
use tubeflock::{CommKernel, Exec, ModelParams, PairPotential, ParticleState, TubeGeometry, Vec3};

use crate::CliError;

pub const SEED_ENV: &str = "TUBEFLOCK_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    #[serde(rename = "L")]
    pub radius: f64,
    pub h: f64,
    pub gamma: f64,
    pub theta0: f64,
    pub axis: [f64; 3],
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            radius: 1.0,
            h: 0.5,
            gamma: 2.0,
            theta0: 1.0,
            axis: [1.0, 0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    TaperedCosine,
    InversePower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    pub family: Family,
    #[serde(rename = "K0")]
    pub k0: f64,
    pub beta: f64,
    pub rbar: f64,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            family: Family::TaperedCosine,
            k0: 0.2,
            beta: 0.25,
            rbar: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialSection {
    pub a: f64,
    pub b: f64,
    pub s0: f64,
    pub u0: f64,
}

impl Default for PotentialSection {
    fn default() -> Self {
        Self {
            a: 0.05,
            b: 2.0,
            s0: 0.5,
            u0: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub eta: f64,
    pub max_steps: usize,
    pub exec: Exec,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let d = IntegratorConfig::default();
        Self {
            rtol: d.rtol,
            atol: d.atol,
            initial_step: d.initial_step,
            max_step: d.max_step,
            eta: d.eta,
            max_steps: d.max_steps,
            exec: d.exec,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub seed: u64,
    pub rho: f64,
    pub sigma: f64,
    /// Half-length `S` of the sampled axial interval `[-S, S]`.
    pub span: f64,
    pub dmin: f64,
    pub loggrowth: bool,
    pub c: f64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let d = SamplerSpec::default();
        Self {
            seed: d.seed,
            rho: d.density,
            sigma: d.velocity_scale,
            span: d.half_span,
            dmin: d.min_separation,
            loggrowth: d.log_growth,
            c: d.transverse_cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    pub nladder: Vec<u64>,
    pub k: u64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub stride: f64,
    /// Largest accepted across-ladder max/min spread of the bound ratios.
    pub spread_factor: f64,
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            nladder: vec![40, 80, 160],
            k: 10,
            t_end: 1.0,
            stride: 0.05,
            spread_factor: 10.0,
        }
    }
}

/// Classical free-space run; the decay exponent is `kernel.beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlockSection {
    #[serde(rename = "N")]
    pub n: usize,
    pub lambda: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub stride: f64,
    pub position_scale: f64,
    pub velocity_scale: f64,
    /// Threshold on the final velocity diameter, relative to the initial one.
    pub v_threshold_rel: f64,
    pub x_bound: f64,
}

impl Default for FlockSection {
    fn default() -> Self {
        Self {
            n: 50,
            lambda: 1.0,
            t_end: 50.0,
            stride: 0.5,
            position_scale: 1.0,
            velocity_scale: 1.0,
            v_threshold_rel: 1e-3,
            x_bound: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    /// Any of `csv`, `json`, `jsonl`; the manifest is always written.
    pub formats: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            formats: vec!["csv".into(), "json".into(), "jsonl".into()],
        }
    }
}

pub const FORMATS: [&str; 3] = ["csv", "json", "jsonl"];

/// Explicit initial particle, used instead of the sampler when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleEntry {
    pub id: u64,
    pub x: [f64; 3],
    pub v: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub geometry: GeometrySection,
    pub kernel: KernelSection,
    pub potential: PotentialSection,
    pub integrator: IntegratorSection,
    pub sampler: SamplerSection,
    pub study: StudySection,
    pub flock: FlockSection,
    pub output: OutputSection,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub particles: Vec<ParticleEntry>,
}

fn config_error(msg: impl std::fmt::Display) -> CliError {
    CliError::Config(msg.to_string())
}

/// Sets `path` (dotted) in `doc` to `raw`, parsed as a TOML value when possible.
pub fn apply_override(doc: &mut toml::Table, path: &str, raw: &str) -> Result<(), CliError> {
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_owned()),
    };
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(config_error(format!("bad override key '{path}'")));
    }
    let (last, parents) = keys.split_last().expect("non-empty path");
    let mut table = doc;
    for key in parents {
        let entry = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| config_error(format!("override '{path}': '{key}' is not a section")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

/// Loads the document at `path`: TOML, or the `config` field of a run manifest.
fn load_document(path: &Path) -> Result<toml::Table, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let manifest: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        let config = manifest
            .get("config")
            .ok_or_else(|| config_error(format!("{}: manifest has no config", path.display())))?;
        let resolved: RunConfig =
            serde_json::from_value(config.clone()).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        return toml::Table::try_from(&resolved).map_err(config_error);
    }
    toml::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

/// File, then `TUBEFLOCK_SEED`, then `--set` overrides.
pub fn resolve(path: Option<&Path>, overrides: &[String], env_seed: Option<String>) -> Result<RunConfig, CliError> {
    let mut doc = match path {
        Some(p) => load_document(p)?,
        None => toml::Table::new(),
    };
    if let Some(seed) = env_seed {
        let seed: u64 = seed
            .trim()
            .parse()
            .map_err(|_| config_error(format!("{SEED_ENV}='{seed}' is not an unsigned integer")))?;
        apply_override(&mut doc, "sampler.seed", &seed.to_string())?;
    }
    for item in overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| config_error(format!("override '{item}' is not key=value")))?;
        apply_override(&mut doc, key.trim(), value.trim())?;
    }
    let config: RunConfig = doc.try_into().map_err(|e: toml::de::Error| config_error(e.message()))?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    /// Re-checks every numeric constraint by building the library types.
    pub fn validate(&self) -> Result<(), CliError> {
        self.geometry()?;
        self.integrator()?;
        self.sampler().validate().map_err(config_error)?;
        if self.kernel.family == Family::TaperedCosine {
            self.params()?;
        }
        let s = &self.study;
        if s.nladder.is_empty() || s.nladder.windows(2).any(|w| w[0] >= w[1]) || s.nladder[0] == 0 {
            return Err(config_error("study.nladder must be a strictly increasing list of positive levels"));
        }
        if !(s.t_end >= 0.0) || !(s.stride > 0.0) {
            return Err(config_error("study.T must be >= 0 and study.stride > 0"));
        }
        if !(s.spread_factor >= 1.0) {
            return Err(config_error("study.spread_factor must be at least 1"));
        }
        let f = &self.flock;
        if f.n < 2 || !(f.lambda >= 0.0) || !(f.t_end >= 0.0) || !(f.stride > 0.0) {
            return Err(config_error("flock needs N >= 2, lambda >= 0, T >= 0, stride > 0"));
        }
        if !(f.position_scale >= 0.0 && f.velocity_scale >= 0.0 && f.v_threshold_rel >= 0.0 && f.x_bound > 0.0) {
            return Err(config_error("flock scales and thresholds must be non-negative"));
        }
        if let Some(bad) = self.output.formats.iter().find(|f| !FORMATS.contains(&f.as_str())) {
            return Err(config_error(format!("unknown output format '{bad}'")));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<TubeGeometry, CliError> {
        let g = &self.geometry;
        TubeGeometry::new(Vec3::from(g.axis), g.radius, g.h, g.gamma, g.theta0).map_err(config_error)
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        let k = &self.kernel;
        let kernel = match k.family {
            Family::TaperedCosine => CommKernel::tapered_cosine(k.k0, k.rbar),
            Family::InversePower => CommKernel::inverse_power(k.k0, k.beta),
        }
        .map_err(config_error)?;
        let p = &self.potential;
        let potential = PairPotential::new(p.a, p.b, k.rbar, p.s0, p.u0).map_err(config_error)?;
        ModelParams::new(self.geometry()?, kernel, potential).map_err(config_error)
    }

    pub fn integrator(&self) -> Result<IntegratorConfig, CliError> {
        let i = &self.integrator;
        let cfg = IntegratorConfig {
            rtol: i.rtol,
            atol: i.atol,
            initial_step: i.initial_step,
            max_step: i.max_step,
            eta: i.eta,
            max_steps: i.max_steps,
            exec: i.exec,
        };
        cfg.validate().map_err(config_error)?;
        Ok(cfg)
    }

    pub fn sampler(&self) -> SamplerSpec {
        let s = &self.sampler;
        SamplerSpec {
            seed: s.seed,
            density: s.rho,
            velocity_scale: s.sigma,
            half_span: s.span,
            min_separation: s.dmin,
            log_growth: s.loggrowth,
            transverse_cap: s.c,
        }
    }

    pub fn classical(&self) -> ClassicalSpec {
        let f = &self.flock;
        ClassicalSpec {
            n: f.n,
            beta: self.kernel.beta,
            lambda: f.lambda,
            seed: self.sampler.seed,
            t_end: f.t_end,
            stride: f.stride,
            position_scale: f.position_scale,
            velocity_scale: f.velocity_scale,
        }
    }

    pub fn explicit_particles(&self) -> Option<Vec<ParticleState>> {
        (!self.particles.is_empty()).then(|| {
            self.particles
                .iter()
                .map(|p| ParticleState::new(p.id, Vec3::from(p.x), Vec3::from(p.v)))
                .collect()
        })
    }

    pub fn emits(&self, format: &str) -> bool {
        self.output.formats.iter().any(|f| f == format)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of the model parameters, stored in snapshot headers.
pub fn params_digest(params: &ModelParams) -> String {
    sha256_hex(&serde_json::to_vec(params).expect("parameters serialize"))
}
