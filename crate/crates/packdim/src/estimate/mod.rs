//! Finite-scale dimension estimators.
//!
//! Limits `r → 0` are replaced by least-squares slopes of log-masses or
//! log-potentials against log-radius over a scale window, and "for μ-a.e. x"
//! by a low weighted quantile over reference atoms sampled from the measure.
//! Scale windows are expressed in the measure's source units: when a measure
//! carries a recorded similarity, radii are multiplied by its scale before
//! touching coordinates, so estimates do not depend on the normalization.

mod assouad;
mod ball;
mod bounds;
mod decay;
mod profile;

pub use assouad::{assouad_dim, default_level_pairs, resolution_level};
pub use ball::{dim_h_ball, dim_p_ball, local_ball_exponents, Mode};
pub use bounds::{
    assouad_profile_bound, exceptional_dim_bound, falconer_mattila_bound, ExceptionalTarget,
};
pub use decay::{window_decay_check, WindowDecayReport};
pub use profile::{
    critical_point, kernel_exponents, packing_profile, profile_curve, profile_dim, CriticalPoint,
    ProfileCurve,
};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::kernel::ScaleGrid;
use crate::measure::{dist, PointMeasure};
use crate::stats;

/// Tuning knobs shared by every estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Smallest radius of the scale window, before the resolution floor.
    pub r_lo: f64,
    /// Largest radius of the scale window.
    pub r_hi: f64,
    /// Ratio between consecutive radii of the grid.
    pub ratio: f64,
    /// Quantile standing in for the μ-essential infimum.
    pub q: f64,
    /// Step of the t-scan in profile estimates.
    pub dt: f64,
    /// Slack allowed when scoring the kernel criterion.
    pub tau: f64,
    /// Number of reference atoms drawn from the measure.
    pub n_refs: usize,
    pub seed: u64,
    /// Fraction of the window spanned by the sub-windows whose largest slope
    /// gives the upper ball exponent.
    pub upper_span: f64,
    /// Same for the smallest slope giving the lower ball exponent.
    pub lower_span: f64,
    /// Same for the largest slope of the log-potential.
    pub kernel_span: f64,
    /// The window never reaches below this multiple of the typical
    /// nearest-neighbour spacing.
    pub resolution_factor: f64,
    /// Minimum width of the resolved window, in octaves.
    pub min_octaves: f64,
    /// Evaluate reference points sequentially.
    pub serial: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            r_lo: 2f64.powi(-12),
            r_hi: 2f64.powi(-3),
            ratio: 2f64.powf(-0.25),
            q: 0.05,
            dt: 0.02,
            tau: 0.05,
            n_refs: 200,
            seed: 0,
            upper_span: 0.4,
            lower_span: 1.0,
            kernel_span: 0.5,
            resolution_factor: 1.0,
            min_octaves: 2.0,
            serial: false,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_lo > 0.0 && self.r_lo < self.r_hi && self.r_hi <= 1.0) {
            return Err(param(format!(
                "scale window [{}, {}] must satisfy 0 < r_lo < r_hi ≤ 1",
                self.r_lo, self.r_hi
            )));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(param(format!("grid ratio {} outside (0,1)", self.ratio)));
        }
        if !(self.q > 0.0 && self.q <= 0.5) {
            return Err(param(format!("quantile {} outside (0, 0.5]", self.q)));
        }
        if !(self.dt > 0.0 && self.dt <= 1.0) {
            return Err(param(format!("t-step {} outside (0, 1]", self.dt)));
        }
        if !(self.tau >= 0.0) {
            return Err(param("slack τ must be non-negative"));
        }
        if self.n_refs == 0 {
            return Err(param("at least one reference point is needed"));
        }
        for (name, v) in [
            ("upper_span", self.upper_span),
            ("lower_span", self.lower_span),
            ("kernel_span", self.kernel_span),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(param(format!("{name} = {v} outside (0,1]")));
            }
        }
        if !(self.resolution_factor >= 0.0 && self.min_octaves >= 0.0) {
            return Err(param("resolution settings must be non-negative"));
        }
        Ok(())
    }
}

/// An estimated dimension with the settings that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub method: String,
    pub value: f64,
    /// Spread diagnostic; its meaning depends on the method.
    pub half_width: f64,
    /// Scale window actually used, in source units.
    pub window: (f64, f64),
    pub q: f64,
    pub seed: u64,
    pub n_refs: usize,
    /// Set when a profile scan reached its upper end.
    #[serde(default)]
    pub saturated: bool,
}

impl DimensionEstimate {
    pub(crate) fn clamp(mut self, upper: f64) -> Self {
        self.value = self.value.clamp(0.0, upper);
        self
    }
}

/// Reference atoms drawn from the measure with the resolved scale window.
pub(crate) struct RefSample {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    /// Window in source units.
    pub window: (f64, f64),
    /// Radii in coordinate units, decreasing.
    pub radii: Vec<f64>,
    pub ln_r: Vec<f64>,
}

/// Indices of `count` atoms drawn with replacement in proportion to weight.
pub fn sample_atoms(mu: &PointMeasure, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = WeightedIndex::new(mu.weights()).expect("measure weights are positive");
    (0..count).map(|_| dist.sample(&mut rng)).collect()
}

/// Median distance from sampled atoms to their nearest distinct atom, in
/// coordinate units.
pub fn typical_spacing(mu: &PointMeasure, refs: &[usize], serial: bool) -> Option<f64> {
    let nearest = |&i: &usize| -> f64 {
        let x = mu.atom(i);
        mu.atoms()
            .map(|y| dist(x, y))
            .filter(|d| *d > 0.0)
            .fold(f64::INFINITY, f64::min)
    };
    let d: Vec<f64> = if serial {
        refs.iter().map(nearest).collect()
    } else {
        refs.par_iter().map(nearest).collect()
    };
    let finite: Vec<f64> = d.into_iter().filter(|v| v.is_finite()).collect();
    stats::median(&finite)
}

/// Draws reference atoms and fixes the scale window above the atom spacing.
pub(crate) fn prepare(mu: &PointMeasure, cfg: &EstimatorConfig) -> Result<RefSample> {
    cfg.validate()?;
    let idx = sample_atoms(mu, cfg.n_refs, cfg.seed);
    let sigma = mu.length_scale();
    let mut r_lo = cfg.r_lo;
    if let Some(delta) = typical_spacing(mu, &idx, cfg.serial) {
        r_lo = r_lo.max(cfg.resolution_factor * delta / sigma);
    }
    let r_hi = cfg.r_hi.min(1.0 / sigma);
    if !(r_hi > r_lo) || (r_hi / r_lo).log2() < cfg.min_octaves {
        return Err(Error::Insufficient(format!(
            "scale window [{r_lo:.3e}, {r_hi:.3e}] is narrower than {} octaves above the atom spacing",
            cfg.min_octaves
        )));
    }
    let grid = ScaleGrid::spanning(r_lo, r_hi, cfg.ratio)?;
    let radii: Vec<f64> = grid.radii().into_iter().map(|r| (r * sigma).min(1.0)).collect();
    let ln_r = grid.radii().iter().map(|r| r.ln()).collect();
    let mut points = Vec::with_capacity(idx.len() * mu.dim());
    for i in &idx {
        points.extend_from_slice(mu.atom(*i));
    }
    Ok(RefSample {
        points,
        weights: vec![1.0 / idx.len() as f64; idx.len()],
        window: (grid.radii()[grid.len() - 1], r_hi),
        radii,
        ln_r,
    })
}

/// Number of consecutive grid points in a sub-window covering `frac` of
/// the window, never fewer than three.
pub(crate) fn span_len(points: usize, frac: f64) -> usize {
    let len = (frac * (points.saturating_sub(1)) as f64).round() as usize + 1;
    len.max(3).min(points)
}

/// Applies `f` to every reference point, in order.
pub(crate) fn map_refs<T: Send>(
    points: &[f64],
    dim: usize,
    serial: bool,
    f: impl Fn(&[f64]) -> T + Sync + Send,
) -> Vec<T> {
    if serial {
        points.chunks_exact(dim).map(f).collect()
    } else {
        points.par_chunks_exact(dim).map(f).collect()
    }
}

/// Applies `f` to every item, in order.
pub(crate) fn map_items<T: Sync, U: Send>(items: &[T], serial: bool, f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    if serial {
        items.iter().map(f).collect()
    } else {
        items.par_iter().map(f).collect()
    }
}
