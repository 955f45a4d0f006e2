//! Local energy-plus-count functionals and the growth-bound checkers.
//!
//! For a window of half-width `R` around axial coordinate `mu`,
//! `Q(X; mu, R)` sums `v^2/2 + (1/2) sum_j U + Theta + 1` over the particles
//! whose axial coordinate lies in `[mu - R, mu + R]`. The pair sum inside
//! the braces runs over all particles, windowed or not.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{particle_energies, Trajectory};
use crate::model::{smoothstep, Configuration, ModelError, ModelParams};

#[derive(Debug, Error)]
pub enum FunctionalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("trajectory has no snapshots")]
    EmptyTrajectory,
    #[error("snapshot spacing {gap} exceeds the envelope limit {limit}")]
    CoarseSnapshots { gap: f64, limit: f64 },
    #[error("reference functional Q0 is zero; ratios are undefined")]
    ZeroReference,
    #[error("window half-width must be positive, got {0}")]
    BadWindow(f64),
    #[error("report output failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("report output failed: {0}")]
    Csv(#[from] csv::Error),
}

/// The cutoff `f`: one on `[0, 1]`, a quintic ramp down on `[1, 2]`, zero beyond.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Mollifier;

impl Mollifier {
    pub fn value(self, r: f64) -> f64 {
        1.0 - smoothstep(r - 1.0).0
    }

    pub fn derivative(self, r: f64) -> f64 {
        -smoothstep(r - 1.0).1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub center: f64,
    pub half_width: f64,
}

impl WindowSpec {
    pub fn new(center: f64, half_width: f64) -> Result<Self, FunctionalError> {
        if half_width > 0.0 {
            Ok(Self { center, half_width })
        } else {
            Err(FunctionalError::BadWindow(half_width))
        }
    }

    pub fn contains(&self, axial: f64) -> bool {
        (axial - self.center).abs() <= self.half_width
    }
}

/// Axial coordinate and bracketed local energy `e_i + 1` of every particle.
#[derive(Debug, Clone)]
pub struct LocalTerms {
    axial: Vec<f64>,
    weight: Vec<f64>,
    sorted: Vec<usize>,
    prefix: Vec<f64>,
}

impl LocalTerms {
    pub fn new(config: &Configuration, params: &ModelParams) -> Result<Self, ModelError> {
        let energies = particle_energies(config, params)?;
        let axial: Vec<f64> = (0..config.len()).map(|k| config.axial(k)).collect();
        let weight: Vec<f64> = energies.iter().map(|e| e + 1.0).collect();
        let mut sorted: Vec<usize> = (0..axial.len()).collect();
        sorted.sort_by(|&i, &j| axial[i].total_cmp(&axial[j]).then(i.cmp(&j)));
        let mut prefix = Vec::with_capacity(sorted.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &i in &sorted {
            acc += weight[i];
            prefix.push(acc);
        }
        Ok(Self {
            axial,
            weight,
            sorted,
            prefix,
        })
    }

    pub fn len(&self) -> usize {
        self.axial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axial.is_empty()
    }

    /// Axial extent `(min, max)` of the particles.
    pub fn span(&self) -> Option<(f64, f64)> {
        let first = *self.sorted.first()?;
        let last = *self.sorted.last()?;
        Some((self.axial[first], self.axial[last]))
    }

    fn lower(&self, a: f64) -> usize {
        self.sorted.partition_point(|&i| self.axial[i] < a)
    }

    fn upper(&self, b: f64) -> usize {
        self.sorted.partition_point(|&i| self.axial[i] <= b)
    }

    /// `Q` over the closed axial interval `[a, b]`.
    pub fn interval(&self, a: f64, b: f64) -> f64 {
        let (lo, hi) = (self.lower(a), self.upper(b));
        if hi <= lo {
            0.0
        } else {
            self.prefix[hi] - self.prefix[lo]
        }
    }

    /// `Q` summed directly over the window, without the prefix sums.
    pub fn window(&self, w: &WindowSpec) -> f64 {
        self.axial
            .iter()
            .zip(&self.weight)
            .filter(|(a, _)| w.contains(**a))
            .map(|(_, e)| e)
            .sum()
    }

    pub fn mollified(&self, w: &WindowSpec) -> f64 {
        self.axial
            .iter()
            .zip(&self.weight)
            .map(|(a, e)| Mollifier.value((a - w.center).abs() / w.half_width) * e)
            .sum()
    }

    /// Exact `sup_mu Q(mu, R)`, attained with a particle on the left window edge.
    pub fn sup_over_centers(&self, half_width: f64) -> (f64, f64) {
        let mut best = (0.0, 0.0);
        for (k, &i) in self.sorted.iter().enumerate() {
            let a = self.axial[i];
            let hi = self.upper(a + 2.0 * half_width);
            let q = self.prefix[hi] - self.prefix[k];
            if q > best.0 {
                best = (q, a + half_width);
            }
        }
        best
    }
}

/// `Q(X; mu, R)`.
pub fn local_q(config: &Configuration, params: &ModelParams, window: &WindowSpec) -> Result<f64, ModelError> {
    Ok(LocalTerms::new(config, params)?.window(window))
}

/// `W(X; mu, R) = sum_i f(|x_i . n - mu| / R) (e_i + 1)`.
pub fn mollified_w(config: &Configuration, params: &ModelParams, window: &WindowSpec) -> Result<f64, ModelError> {
    Ok(LocalTerms::new(config, params)?.mollified(window))
}

/// Search grid for [`sup_q`]: centers every `center_step` over the padded
/// span, half-widths growing geometrically by `width_factor`.
///
/// `refine` halves the center step and takes the square root of the width
/// factor per level; every level's grid contains the previous level's.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupGrid {
    pub center_step: f64,
    pub width_factor: f64,
    pub refine: u32,
}

impl SupGrid {
    pub fn for_range(rbar: f64) -> Self {
        Self {
            center_step: rbar / 4.0,
            width_factor: 1.25,
            refine: 0,
        }
    }

    pub fn refined(mut self, levels: u32) -> Self {
        self.refine += levels;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupEstimate {
    pub value: f64,
    pub center: f64,
    pub half_width: f64,
}

/// Smallest admissible half-width at center `mu`.
pub fn min_half_width(mu: f64) -> f64 {
    (std::f64::consts::E + mu.abs()).ln() * (1.0 + 1e-9)
}

/// Grid lower estimate of `sup_mu sup_{R > log(e + |mu|)} Q(X; mu, R) / (2R)`.
///
/// Besides the grid centers, every half-width also tries the centers that
/// put a particle on a window edge, where `Q` jumps.
pub fn sup_q(config: &Configuration, params: &ModelParams, grid: &SupGrid) -> Result<SupEstimate, ModelError> {
    let terms = LocalTerms::new(config, params)?;
    Ok(sup_q_terms(&terms, params.range(), grid))
}

pub fn sup_q_terms(terms: &LocalTerms, rbar: f64, grid: &SupGrid) -> SupEstimate {
    let mut best = SupEstimate {
        value: 0.0,
        center: 0.0,
        half_width: 0.0,
    };
    let Some((lo, hi)) = terms.span() else {
        return best;
    };
    let (lo, hi) = (lo - rbar, hi + rbar);
    let span = hi - lo;
    let subdiv = (1u64 << grid.refine) as f64;
    let step = grid.center_step / subdiv;
    let n_centers = (span / step).floor() as usize;
    let log_factor = grid.width_factor.ln();
    let nearest = if lo <= 0.0 && hi >= 0.0 { 0.0 } else { lo.abs().min(hi.abs()) };
    let min_r = min_half_width(nearest);
    let mut widths = Vec::new();
    let mut j = 0u64;
    loop {
        let r = min_r * (log_factor * (j as f64 / subdiv)).exp();
        if r > span {
            break;
        }
        widths.push(r);
        j += 1;
    }
    if widths.last().is_none_or(|&r| r < span) {
        widths.push(span.max(min_r));
    }
    let mut consider = |mu: f64, r: f64| {
        if r >= min_half_width(mu) {
            let q = terms.interval(mu - r, mu + r) / (2.0 * r);
            if q > best.value {
                best = SupEstimate {
                    value: q,
                    center: mu,
                    half_width: r,
                };
            }
        }
    };
    for &r in &widths {
        for m in 0..=n_centers {
            consider(lo + m as f64 * step, r);
        }
        for &a in &terms.axial {
            consider(a + r, r);
            consider(a - r, r);
        }
    }
    best
}

/// Running speed maximum `V_n`, `M_n = 1 + V_n^2`, and
/// `R_n(t) = (1 + rbar) log(e + n) + int_0^t M_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthEnvelope {
    pub n: u64,
    pub times: Vec<f64>,
    pub max_speed: Vec<f64>,
    pub m: Vec<f64>,
    pub r: Vec<f64>,
}

/// Largest snapshot spacing accepted by [`growth_envelope`].
pub const ENVELOPE_MAX_STRIDE: f64 = 0.05;

pub fn envelope_base(n: u64, rbar: f64) -> f64 {
    (1.0 + rbar) * (std::f64::consts::E + n as f64).ln()
}

pub fn growth_envelope(traj: &Trajectory, n: u64, rbar: f64) -> Result<GrowthEnvelope, FunctionalError> {
    if traj.snapshots.is_empty() {
        return Err(FunctionalError::EmptyTrajectory);
    }
    let times = traj.times();
    for w in times.windows(2) {
        let gap = w[1] - w[0];
        if gap > ENVELOPE_MAX_STRIDE * (1.0 + 1e-9) {
            return Err(FunctionalError::CoarseSnapshots {
                gap,
                limit: ENVELOPE_MAX_STRIDE,
            });
        }
    }
    let mut running = 0.0f64;
    let max_speed: Vec<f64> = traj
        .snapshots
        .iter()
        .map(|c| {
            running = running.max(c.max_speed());
            running
        })
        .collect();
    let m: Vec<f64> = max_speed.iter().map(|v| 1.0 + v * v).collect();
    let mut r = Vec::with_capacity(m.len());
    let mut acc = envelope_base(n, rbar);
    r.push(acc);
    for k in 1..m.len() {
        acc += 0.5 * (times[k] - times[k - 1]) * (m[k] + m[k - 1]);
        r.push(acc);
    }
    Ok(GrowthEnvelope {
        n,
        times,
        max_speed,
        m,
        r,
    })
}

/// One row of a bound report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub t: f64,
    pub n: u64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "supQ_window")]
    pub sup_q_window: f64,
    pub lemma1_ratio: f64,
    pub cor1_ratio: f64,
}

/// `sup_mu Q(X^(n)(t); mu, R_n(t)) / (Q0 R_n(t))` on the snapshot grid.
///
/// Returns the windowed sups alongside the ratios.
pub fn lemma1_check(
    traj: &Trajectory,
    n: u64,
    params: &ModelParams,
    q0: f64,
) -> Result<(Vec<f64>, Vec<f64>), FunctionalError> {
    if !(q0 > 0.0) {
        return Err(FunctionalError::ZeroReference);
    }
    let env = growth_envelope(traj, n, params.range())?;
    let mut sups = Vec::with_capacity(env.r.len());
    let mut ratios = Vec::with_capacity(env.r.len());
    for (c, &r) in traj.snapshots.iter().zip(&env.r) {
        let terms = LocalTerms::new(c, params)?;
        let (q, _) = terms.sup_over_centers(r);
        sups.push(q);
        ratios.push(q / (q0 * r));
    }
    Ok((sups, ratios))
}

/// `V_n(t) / sqrt(log(e + n))`.
pub fn corollary1_check(traj: &Trajectory, n: u64) -> Result<Vec<f64>, FunctionalError> {
    let env = growth_envelope(traj, n, 0.0)?;
    let scale = (std::f64::consts::E + n as f64).ln().sqrt();
    Ok(env.max_speed.iter().map(|v| v / scale).collect())
}

/// Bound rows for one ladder level.
pub fn bound_rows(traj: &Trajectory, n: u64, params: &ModelParams, q0: f64) -> Result<Vec<BoundRow>, FunctionalError> {
    let env = growth_envelope(traj, n, params.range())?;
    let (sups, lemma) = lemma1_check(traj, n, params, q0)?;
    let cor = corollary1_check(traj, n)?;
    Ok((0..env.times.len())
        .map(|k| BoundRow {
            t: env.times[k],
            n,
            v: env.max_speed[k],
            m: env.m[k],
            r: env.r[k],
            sup_q_window: sups[k],
            lemma1_ratio: lemma[k],
            cor1_ratio: cor[k],
        })
        .collect())
}

/// Time series of both bound checks over a ladder of levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub q0: f64,
    pub rows: Vec<BoundRow>,
}

/// Column order of the bound-report CSV.
pub const BOUND_HEADER: [&str; 8] = ["t", "n", "V", "M", "R", "supQ_window", "lemma1_ratio", "cor1_ratio"];

/// `max / min` of positive values; one when all are zero, `inf` when only some are.
pub fn spread(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let mut any = false;
    for v in values {
        any = true;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !any || hi == 0.0 {
        1.0
    } else if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

impl BoundReport {
    pub fn levels(&self) -> Vec<u64> {
        let mut ns: Vec<u64> = self.rows.iter().map(|r| r.n).collect();
        ns.sort_unstable();
        ns.dedup();
        ns
    }

    /// Empirical Lemma 1 constant per level: the largest ratio over time.
    pub fn lemma1_max_by_level(&self) -> Vec<(u64, f64)> {
        self.levels()
            .into_iter()
            .map(|n| {
                let m = self
                    .rows
                    .iter()
                    .filter(|r| r.n == n)
                    .map(|r| r.lemma1_ratio)
                    .fold(0.0, f64::max);
                (n, m)
            })
            .collect()
    }

    pub fn lemma1_spread(&self) -> f64 {
        spread(self.lemma1_max_by_level().into_iter().map(|(_, m)| m))
    }

    /// Largest across-ladder spread of the Corollary 1 series over the common times.
    pub fn cor1_spread(&self) -> f64 {
        let mut times: Vec<f64> = self.rows.iter().map(|r| r.t).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        times
            .into_iter()
            .map(|t| spread(self.rows.iter().filter(|r| r.t == t).map(|r| r.cor1_ratio)))
            .fold(1.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.lemma1_ratio.is_finite() && r.cor1_ratio.is_finite())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), FunctionalError> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), FunctionalError> {
        self.write_csv(std::fs::File::create(path)?)
    }
}
