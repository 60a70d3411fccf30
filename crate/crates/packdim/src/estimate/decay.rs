use serde::{Deserialize, Serialize};

use super::{map_refs, prepare, EstimatorConfig};
use crate::error::{param, Result};
use crate::kernel::RefDistances;
use crate::measure::PointMeasure;

/// Radii tested per admissible scale.
const TEST_RADII: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowDecayReport {
    pub a: f64,
    pub theta: f64,
    pub epsilon: f64,
    pub p: f64,
    pub assouad: f64,
    pub c: f64,
    /// Exponent of the tested bound.
    pub exponent: f64,
    pub refs: usize,
    /// References with no scale `δ` in the window where `μ(B(x,δ)) ≤ c δ^p`.
    pub no_admissible: usize,
    /// References whose bound failed at some tested radius.
    pub violated: usize,
    pub failure_fraction: f64,
    pub window: (f64, f64),
}

/// For each sampled atom `x`, finds the smallest window radius `δ` with
/// `μ(B(x,δ)) ≤ c δ^p` and tests
/// `μ(B(x,r)) ≤ c 4^{A'} r^{A' − (A' − p)/(aθ)}` with `A' = A(1+ε)` at
/// radii spread over `[δ^a, δ^{aθ}]`.
#[allow(clippy::too_many_arguments)]
pub fn window_decay_check(
    mu: &PointMeasure,
    a: f64,
    theta: f64,
    epsilon: f64,
    p: f64,
    assouad: f64,
    c: f64,
    cfg: &EstimatorConfig,
) -> Result<WindowDecayReport> {
    if !(a > 0.0 && a < 1.0 && theta > 0.0 && theta < 1.0) {
        return Err(param(format!("a = {a} and θ = {theta} must lie in (0,1)")));
    }
    if !(epsilon >= 0.0 && c > 0.0) {
        return Err(param("ε must be non-negative and c positive"));
    }
    let sample = prepare(mu, cfg)?;
    let sigma = mu.length_scale();
    let a_eps = assouad * (1.0 + epsilon);
    let exponent = a_eps - (a_eps - p) / (a * theta);
    let c_tilde = c * 4f64.powf(a_eps);
    // Window radii in source units, increasing.
    let mut deltas: Vec<f64> = sample.radii.iter().map(|r| r / sigma).collect();
    deltas.reverse();
    let outcome = map_refs(&sample.points, mu.dim(), cfg.serial, |x| {
        let rd = RefDistances::new(mu, x);
        let ball = |r: f64| rd.mass_within((r * sigma).min(1.0));
        let delta = match deltas.iter().find(|d| ball(**d) <= c * d.powf(p)) {
            Some(d) => *d,
            None => return (true, false),
        };
        let lo = delta.powf(a);
        let hi = delta.powf(a * theta).min(1.0);
        let ok = (0..TEST_RADII).all(|i| {
            let r = if hi > lo {
                lo * (hi / lo).powf(i as f64 / (TEST_RADII - 1) as f64)
            } else {
                lo
            };
            ball(r) <= c_tilde * r.powf(exponent) * (1.0 + 1e-12)
        });
        (false, !ok)
    });
    let no_admissible = outcome.iter().filter(|o| o.0).count();
    let violated = outcome.iter().filter(|o| o.1).count();
    let refs = outcome.len();
    Ok(WindowDecayReport {
        a,
        theta,
        epsilon,
        p,
        assouad,
        c,
        exponent,
        refs,
        no_admissible,
        violated,
        failure_fraction: (no_admissible + violated) as f64 / refs as f64,
        window: sample.window,
    })
}
