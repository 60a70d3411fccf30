use serde::{Deserialize, Serialize};

use super::{map_refs, prepare, span_len, DimensionEstimate, EstimatorConfig};
use crate::error::{Error, Result};
use crate::kernel::{RefDistances, ScaleGrid};
use crate::measure::PointMeasure;
use crate::stats;

/// Balls lighter than this are treated as empty.
const EMPTY_BALL: f64 = 1e-15;

/// Fewer defined exponents than this make a ball estimate meaningless.
const MIN_DEFINED: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Largest local slope of log-mass against log-radius.
    Upper,
    /// Smallest local slope.
    Lower,
}

/// Local mass exponent of one reference point: the extreme least-squares
/// slope of `log μ(B(x,r))` against `log r` over sub-windows of `span`
/// consecutive radii. Empty balls are skipped.
pub(crate) fn ball_exponent(rd: &RefDistances, radii: &[f64], ln_r: &[f64], mode: Mode, span: usize) -> Option<f64> {
    let mut xs = Vec::with_capacity(radii.len());
    let mut ys = Vec::with_capacity(radii.len());
    for (r, lr) in radii.iter().zip(ln_r) {
        let m = rd.mass_within(*r);
        if m >= EMPTY_BALL {
            xs.push(*lr);
            ys.push(m.ln());
        }
    }
    if xs.len() < 2 {
        return None;
    }
    stats::window_slope(&xs, &ys, span.min(xs.len()), mode == Mode::Upper)
}

/// Local exponents at `refs` (flat coordinates) over the radii of `grid`;
/// `span` is the fraction of the window covered by each sub-window.
pub fn local_ball_exponents(
    mu: &PointMeasure,
    refs: &[f64],
    grid: &ScaleGrid,
    mode: Mode,
    span: f64,
) -> Vec<Option<f64>> {
    let radii = grid.radii();
    let ln_r: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let len = span_len(radii.len(), span);
    map_refs(refs, mu.dim(), false, |x| {
        ball_exponent(&RefDistances::new(mu, x), &radii, &ln_r, mode, len)
    })
}

fn ball_estimate(mu: &PointMeasure, cfg: &EstimatorConfig, mode: Mode) -> Result<DimensionEstimate> {
    let sample = prepare(mu, cfg)?;
    let span = match mode {
        Mode::Upper => cfg.upper_span,
        Mode::Lower => cfg.lower_span,
    };
    let len = span_len(sample.radii.len(), span);
    let exps = map_refs(&sample.points, mu.dim(), cfg.serial, |x| {
        ball_exponent(&RefDistances::new(mu, x), &sample.radii, &sample.ln_r, mode, len)
    });
    let mut vals = Vec::new();
    let mut wts = Vec::new();
    for (e, w) in exps.iter().zip(&sample.weights) {
        if let Some(v) = e {
            vals.push(*v);
            wts.push(*w);
        }
    }
    if vals.len() < MIN_DEFINED {
        return Err(Error::Insufficient(format!(
            "only {} reference points have a defined exponent",
            vals.len()
        )));
    }
    let value = stats::weighted_quantile(&vals, &wts, cfg.q).unwrap_or(0.0);
    let q1 = stats::weighted_quantile(&vals, &wts, 0.25).unwrap_or(value);
    let q3 = stats::weighted_quantile(&vals, &wts, 0.75).unwrap_or(value);
    let method = match mode {
        Mode::Upper => "dim_p_ball",
        Mode::Lower => "dim_h_ball",
    };
    Ok(DimensionEstimate {
        method: method.into(),
        value,
        half_width: 0.5 * (q3 - q1),
        window: sample.window,
        q: cfg.q,
        seed: cfg.seed,
        n_refs: cfg.n_refs,
        saturated: false,
    }
    .clamp(mu.dim() as f64 + cfg.tau))
}

/// Low quantile of upper local exponents: packing dimension surrogate.
pub fn dim_p_ball(mu: &PointMeasure, cfg: &EstimatorConfig) -> Result<DimensionEstimate> {
    ball_estimate(mu, cfg, Mode::Upper)
}

/// Low quantile of lower local exponents: Hausdorff dimension surrogate.
pub fn dim_h_ball(mu: &PointMeasure, cfg: &EstimatorConfig) -> Result<DimensionEstimate> {
    ball_estimate(mu, cfg, Mode::Lower)
}
