use serde::{Deserialize, Serialize};

use super::{map_refs, prepare, span_len, DimensionEstimate, EstimatorConfig};
use crate::error::{param, Result};
use crate::kernel::{KernelParams, RefDistances, ScaleGrid};
use crate::measure::PointMeasure;
use crate::stats;

/// Per reference point, the largest sub-window slope of `log F_{t,s,θ}`
/// against `log r` (coordinate-unit radii of `grid`).
pub fn kernel_exponents(
    mu: &PointMeasure,
    refs: &[f64],
    params: &KernelParams,
    grid: &ScaleGrid,
    span: f64,
) -> Vec<f64> {
    let radii = grid.radii();
    let ln_r: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let len = span_len(radii.len(), span);
    map_refs(refs, mu.dim(), false, |x| {
        let f = RefDistances::new(mu, x).potentials(params, &radii);
        let lf: Vec<f64> = f.iter().map(|v| v.ln()).collect();
        stats::window_slope(&ln_r, &lf, len, true).unwrap_or(0.0)
    })
}

/// A value on the t-scan: either `k·Δt` or an off-grid end point.
#[derive(Clone, Copy, Debug)]
struct TNode {
    t: f64,
    step: Option<usize>,
}

/// t-values scanned for profile index `s`: `0, Δt, 2Δt, …` up to `s`, with
/// `s` itself appended when it is not a multiple of the step.
fn t_grid(s: f64, dt: f64) -> Vec<TNode> {
    let kmax = (s / dt + 1e-9).floor() as usize;
    let mut out: Vec<TNode> = (0..=kmax)
        .map(|k| TNode { t: k as f64 * dt, step: Some(k) })
        .collect();
    if (kmax as f64 * dt - s).abs() > 1e-9 {
        out.push(TNode { t: s, step: None });
    }
    out
}

/// Scan plan shared by all reference points.
struct Plan {
    s_list: Vec<f64>,
    thetas: Vec<f64>,
    dt: f64,
    /// Union of all t-values, ascending.
    nodes: Vec<TNode>,
    /// For each s, indices into `nodes` of its t-grid.
    per_s: Vec<Vec<usize>>,
    /// For each s, the index of `t = s` in `nodes`.
    s_node: Vec<usize>,
}

impl Plan {
    fn new(s_list: &[f64], thetas: &[f64], dt: f64) -> Plan {
        let mut nodes: Vec<TNode> = Vec::new();
        let mut per_s = Vec::new();
        let mut s_node = Vec::new();
        let find_or_add = |n: TNode, nodes: &mut Vec<TNode>| -> usize {
            if let Some(i) = nodes.iter().position(|m| match (m.step, n.step) {
                (Some(a), Some(b)) => a == b,
                (None, None) => m.t == n.t,
                _ => false,
            }) {
                i
            } else {
                nodes.push(n);
                nodes.len() - 1
            }
        };
        for &s in s_list {
            let g = t_grid(s, dt);
            let idx: Vec<usize> = g.iter().map(|n| find_or_add(*n, &mut nodes)).collect();
            s_node.push(*idx.last().unwrap());
            per_s.push(idx);
        }
        // Sort nodes ascending, remapping indices.
        let mut order: Vec<usize> = (0..nodes.len()).collect();
        order.sort_by(|a, b| nodes[*a].t.total_cmp(&nodes[*b].t));
        let mut rank = vec![0; nodes.len()];
        for (new, old) in order.iter().enumerate() {
            rank[*old] = new;
        }
        let nodes = order.iter().map(|i| nodes[*i]).collect();
        let per_s = per_s
            .into_iter()
            .map(|v| v.into_iter().map(|i| rank[i]).collect())
            .collect();
        let s_node = s_node.into_iter().map(|i| rank[i]).collect();
        Plan {
            s_list: s_list.to_vec(),
            thetas: thetas.to_vec(),
            dt,
            nodes,
            per_s,
            s_node,
        }
    }
}

/// `(e^z − 1)/z`, continuous at 0.
fn exprel(z: f64) -> f64 {
    if z.abs() < 1e-12 {
        1.0
    } else {
        z.exp_m1() / z
    }
}

/// `∫_a^b d^{x−1} dd` for `0 < a ≤ b`, continuous in `x`.
fn power_integral(x: f64, a: f64, b: f64) -> f64 {
    let l = (b / a).ln();
    a.powf(x) * l * exprel(x * l)
}

/// Potential `F_{t,s,θ}` of the ideal mass profile `M(d) = min(1, (d/ℓ)^D)`
/// at radius `r`, in closed form (coordinate units).
pub(crate) fn regular_potential(dim: f64, t: f64, s: f64, theta: f64, r: f64, ell: f64) -> f64 {
    if r >= ell {
        return 1.0;
    }
    let base = (r / ell).powf(dim);
    if dim == 0.0 {
        return 1.0;
    }
    let b = r.powf(theta).max(r);
    let mut f = base;
    if b > r {
        f += dim * r.powf(t) * ell.powf(-dim) * power_integral(dim - t, r, b.min(ell));
    }
    if b < ell {
        f += r.powf(theta * (s - t) + t) * dim * ell.powf(-dim) * power_integral(dim - s, b, ell);
    }
    f.min(1.0)
}

/// Step of the dimension grid used to invert potential slopes.
const DIM_STEP: f64 = 0.01;

/// For every `(s, θ, t)` of the plan and every sub-window, the log-slope of
/// the regular-profile potential as a function of the profile dimension,
/// tabulated on `0, DIM_STEP, …, dim_max`.
struct Calibration {
    dims: Vec<f64>,
    windows: usize,
    /// Flattened `[row][window][k]`, rows ordered `[s][θ][t]`.
    slopes: Vec<f64>,
}

impl Calibration {
    fn new(plan: &Plan, radii: &[f64], ln_r: &[f64], span: usize, ell: f64, dim_max: f64) -> Calibration {
        let kmax = (dim_max / DIM_STEP).ceil() as usize;
        let dims: Vec<f64> = (0..=kmax).map(|k| k as f64 * DIM_STEP).collect();
        let windows = radii.len() + 1 - span.clamp(2, radii.len());
        let mut slopes = Vec::new();
        let mut lf = vec![0.0; radii.len()];
        let mut per_window = vec![Vec::with_capacity(dims.len()); windows];
        for (si, &s) in plan.s_list.iter().enumerate() {
            for th in &plan.thetas {
                for &ni in &plan.per_s[si] {
                    let t = plan.nodes[ni].t;
                    per_window.iter_mut().for_each(|v| v.clear());
                    for &dim in &dims {
                        for (j, r) in radii.iter().enumerate() {
                            lf[j] = regular_potential(dim, t, s, *th, *r, ell).ln();
                        }
                        for (w, sl) in stats::window_slopes(ln_r, &lf, span).into_iter().enumerate() {
                            per_window[w].push(sl);
                        }
                    }
                    for v in &per_window {
                        slopes.extend(v);
                    }
                }
            }
        }
        Calibration { dims, windows, slopes }
    }

    /// Dimension whose regular profile reproduces `slope` on window `w` of
    /// row `row`, by linear interpolation; clamped to the table.
    fn invert(&self, row: usize, w: usize, slope: f64) -> f64 {
        let k = self.dims.len();
        let tab = &self.slopes[(row * self.windows + w) * k..(row * self.windows + w + 1) * k];
        if slope <= tab[0] {
            return 0.0;
        }
        // Slopes increase with the dimension; take the first crossing.
        match tab.iter().position(|v| *v >= slope) {
            None => self.dims[k - 1],
            Some(i) => {
                let (y0, y1) = (tab[i - 1], tab[i]);
                let frac = if y1 > y0 { (slope - y0) / (y1 - y0) } else { 1.0 };
                self.dims[i - 1] + frac * DIM_STEP
            }
        }
    }
}

/// Median fitted saturation length over the reference points, kept between
/// the largest radius and twice the bounding-box extent; the extent itself
/// when no fit is available.
fn saturation_length(mu: &PointMeasure, raw: &[RawScan], radii: &[f64]) -> f64 {
    let ext = extent(mu);
    let fits: Vec<f64> = raw.iter().filter_map(|r| r.ln_ell).collect();
    let ell = stats::median(&fits).map(f64::exp).unwrap_or(ext);
    ell.min(2.0 * ext).max(radii[0])
}

/// Largest side of the bounding box, in coordinate units.
fn extent(mu: &PointMeasure) -> f64 {
    let n = mu.dim();
    (0..n)
        .map(|k| {
            let (lo, hi) = mu
                .atoms()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x[k]), hi.max(x[k])));
            hi - lo
        })
        .fold(0.0, f64::max)
}

/// Kernel scores of one reference point for every `(s, θ, t)` of the plan,
/// flattened as `[s][θ][t]`.
///
/// On each sub-window the slope of `log F_{t,s,θ}(x,·)` is converted into
/// the dimension `D̂` of the ideal regular mass profile whose potential has
/// the same slope there, and the score is the largest `D̂ − t`. Whenever
/// `e_t(x) < t` this agrees asymptotically with `e_t(x) − t`, so the
/// admissible `t` are unchanged in the limit; at finite scale it removes
/// the logarithmic factors the potentials pick up near the critical
/// exponent.
///
/// Atoms are grouped into shells cut at every radius `r_j` and every
/// `r_j^θ`; shell sums of `w·d^{−t}` are accumulated once per t (powers
/// advanced by repeated multiplication along the t-grid) and every
/// potential value is then assembled from whole shells.
fn scan_ref(rd: &RefDistances, radii: &[f64], ln_r: &[f64], plan: &Plan, span: usize) -> RawScan {
    let d = rd.distances();
    let n = d.len();
    let nj = radii.len();
    let nth = plan.thetas.len();

    let inner: Vec<usize> = radii.iter().map(|r| rd.count_within(*r)).collect();
    let outer: Vec<Vec<usize>> = plan
        .thetas
        .iter()
        .map(|th| {
            radii
                .iter()
                .zip(&inner)
                .map(|(r, i1)| (*i1).max(d.partition_point(|v| *v < r.powf(*th))))
                .collect()
        })
        .collect();
    let mut cuts: Vec<usize> = vec![0, n];
    cuts.extend(&inner);
    outer.iter().for_each(|o| cuts.extend(o));
    cuts.sort_unstable();
    cuts.dedup();
    let nb = cuts.len() - 1;
    let shell_of = |i: usize| cuts.binary_search(&i).unwrap();
    let inner_b: Vec<usize> = inner.iter().map(|i| shell_of(*i)).collect();
    let outer_b: Vec<Vec<usize>> = outer
        .iter()
        .map(|o| o.iter().map(|i| shell_of(*i)).collect())
        .collect();
    let mass: Vec<f64> = radii.iter().map(|r| rd.mass_within(*r)).collect();

    // Shell sums for every t-node.
    let zero = d.partition_point(|v| *v <= 0.0);
    let lw: Vec<f64> = d.iter().map(|v| if *v > 0.0 { v.ln() } else { 0.0 }).collect();
    let w: Vec<f64> = rd.weights().to_vec();
    let step_factor: Vec<f64> = lw.iter().map(|l| (-plan.dt * l).exp()).collect();
    let mut pw: Vec<f64> = w.clone();
    let mut pw_step = 0usize;
    let mut shells = vec![vec![0.0f64; nb]; plan.nodes.len()];
    let mut tmp = vec![0.0f64; n];
    for (ni, node) in plan.nodes.iter().enumerate() {
        let vals: &[f64] = match node.step {
            Some(k) => {
                while pw_step < k {
                    for (p, f) in pw.iter_mut().zip(&step_factor) {
                        *p *= f;
                    }
                    pw_step += 1;
                }
                &pw
            }
            None => {
                for i in 0..n {
                    tmp[i] = w[i] * (-node.t * lw[i]).exp();
                }
                &tmp
            }
        };
        let row = &mut shells[ni];
        for b in 0..nb {
            let lo = cuts[b].max(zero);
            let hi = cuts[b + 1];
            if hi > lo {
                row[b] = vals[lo..hi].iter().sum();
            }
        }
    }

    let mut slopes = Vec::new();
    let mut lf = vec![0.0f64; nj];
    for (si, &s) in plan.s_list.iter().enumerate() {
        let far_shells = &shells[plan.s_node[si]];
        let mut far_suffix = vec![0.0f64; nb + 1];
        for b in (0..nb).rev() {
            far_suffix[b] = far_suffix[b + 1] + far_shells[b];
        }
        for (ti_th, th) in plan.thetas.iter().enumerate() {
            for &ni in &plan.per_s[si] {
                let t = plan.nodes[ni].t;
                let near_shells = &shells[ni];
                for j in 0..nj {
                    let r = radii[j];
                    let (b1, b2) = (inner_b[j], outer_b[ti_th][j]);
                    let near: f64 = near_shells[b1..b2].iter().sum();
                    let mut f = mass[j];
                    if near > 0.0 {
                        f += r.powf(t) * near;
                    }
                    f += r.powf(th * (s - t) + t) * far_suffix[b2];
                    lf[j] = f.min(1.0).ln();
                }
                slopes.extend(stats::window_slopes(ln_r, &lf, span));
            }
        }
    }
    debug_assert_eq!(
        slopes.len(),
        plan.per_s.iter().map(|v| v.len()).sum::<usize>() * nth * (nj + 1 - span.clamp(2, nj))
    );
    // Saturation length of the mass profile fitted as (r/ℓ)^D.
    let lr: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let lm: Vec<f64> = mass.iter().map(|m| m.ln()).collect();
    let ln_ell = match stats::ls_fit(&lr, &lm) {
        Some((dim, c)) if dim > MIN_FIT_DIM && mass[nj - 1] > 0.0 => Some(-c / dim),
        _ => None,
    };
    RawScan { slopes, ln_ell }
}

/// Below this fitted mass exponent the saturation length is not recorded.
const MIN_FIT_DIM: f64 = 0.05;

/// Window slopes of one reference point, flattened `[s][θ][t][window]`.
struct RawScan {
    slopes: Vec<f64>,
    ln_ell: Option<f64>,
}

/// Scores `max_w D̂_w − t` of one reference point, flattened `[s][θ][t]`.
fn scores(raw: &RawScan, plan: &Plan, cal: &Calibration) -> Vec<f64> {
    let mut out = Vec::with_capacity(raw.slopes.len() / cal.windows);
    let mut row = 0;
    for (si, _) in plan.s_list.iter().enumerate() {
        for _ in &plan.thetas {
            for &ni in &plan.per_s[si] {
                let t = plan.nodes[ni].t;
                let w0 = row * cal.windows;
                let best = (0..cal.windows)
                    .map(|w| cal.invert(row, w, raw.slopes[w0 + w]))
                    .fold(0.0, f64::max);
                out.push(best - t);
                row += 1;
            }
        }
    }
    out
}

/// Largest `t` whose quantile score clears `−τ`, and the same with the
/// median score.
fn pick_t(ts: &[f64], e: &[Vec<f64>], weights: &[f64], q: f64, tau: f64) -> (f64, f64) {
    let mut best = 0.0;
    let mut best_med = 0.0;
    for (ti, t) in ts.iter().enumerate() {
        let scores: Vec<f64> = e.iter().map(|row| row[ti]).collect();
        if stats::weighted_quantile(&scores, weights, q).unwrap_or(f64::NEG_INFINITY) >= -tau {
            best = *t;
        }
        if stats::weighted_quantile(&scores, weights, 0.5).unwrap_or(f64::NEG_INFINITY) >= -tau {
            best_med = *t;
        }
    }
    (best, best_med)
}

/// Profile estimates for every `(s, θ)` pair, indexed `[s][θ]`.
fn profile_grid(mu: &PointMeasure, s_list: &[f64], thetas: &[f64], cfg: &EstimatorConfig) -> Result<Vec<Vec<DimensionEstimate>>> {
    for s in s_list {
        if !(*s > 0.0 && s.is_finite()) {
            return Err(param(format!("profile index s = {s} must be positive")));
        }
    }
    for th in thetas {
        if !(*th > 0.0 && *th <= 1.0) {
            return Err(param(format!("θ = {th} outside (0,1]")));
        }
    }
    let sample = prepare(mu, cfg)?;
    let plan = Plan::new(s_list, thetas, cfg.dt);
    let span = span_len(sample.radii.len(), cfg.kernel_span);
    let raw = map_refs(&sample.points, mu.dim(), cfg.serial, |x| {
        scan_ref(&RefDistances::new(mu, x), &sample.radii, &sample.ln_r, &plan, span)
    });
    let dim_max = s_list.iter().copied().fold(mu.dim() as f64, f64::max) + 1.0;
    let cal = Calibration::new(&plan, &sample.radii, &sample.ln_r, span, saturation_length(mu, &raw, &sample.radii), dim_max);
    let rows: Vec<Vec<f64>> = raw.iter().map(|r| scores(r, &plan, &cal)).collect();
    // Flat potentials pass the slack test for t ≤ τ; a point mass has dimension 0.
    let point_mass = mu.normalize().len() == 1;
    let mut out = Vec::with_capacity(s_list.len());
    let mut offset = 0;
    for (si, &s) in s_list.iter().enumerate() {
        let ts: Vec<f64> = plan.per_s[si].iter().map(|i| plan.nodes[*i].t).collect();
        let mut per_theta = Vec::with_capacity(thetas.len());
        for th in thetas {
            let e: Vec<Vec<f64>> = rows.iter().map(|r| r[offset..offset + ts.len()].to_vec()).collect();
            offset += ts.len();
            let (value, value_med) = if point_mass {
                (0.0, 0.0)
            } else {
                pick_t(&ts, &e, &sample.weights, cfg.q, cfg.tau)
            };
            let method = if *th == 1.0 {
                format!("packing_profile(s={s})")
            } else {
                format!("profile(s={s},theta={th})")
            };
            per_theta.push(
                DimensionEstimate {
                    method,
                    value,
                    half_width: 0.5 * (value_med - value).abs(),
                    window: sample.window,
                    q: cfg.q,
                    seed: cfg.seed,
                    n_refs: cfg.n_refs,
                    saturated: (value - s).abs() < 1e-12,
                }
                .clamp(s),
            );
        }
        out.push(per_theta);
    }
    Ok(out)
}

/// Largest `t ∈ [0, s]` at which the kernel criterion holds for all but a
/// `q`-fraction of reference points, within slack `τ`.
pub fn profile_dim(mu: &PointMeasure, s: f64, theta: f64, cfg: &EstimatorConfig) -> Result<DimensionEstimate> {
    Ok(profile_grid(mu, &[s], &[theta], cfg)?.remove(0).remove(0))
}

/// Profile with integer index `m` and `θ = 1`.
pub fn packing_profile(mu: &PointMeasure, m: usize, cfg: &EstimatorConfig) -> Result<DimensionEstimate> {
    if m == 0 {
        return Err(param("profile index m must be ≥ 1"));
    }
    profile_dim(mu, m as f64, 1.0, cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub per_theta: Vec<(f64, DimensionEstimate)>,
    /// Estimate at the smallest θ.
    pub value: DimensionEstimate,
    /// Least-squares line of the per-θ values against θ.
    pub fit_slope: f64,
    pub fit_intercept: f64,
    /// Largest increase of the per-θ value as θ decreases.
    pub max_increase: f64,
    /// Whether that increase stays within τ.
    pub monotone: bool,
}

/// Ambient-index profiles along a decreasing θ list.
pub fn critical_point(mu: &PointMeasure, thetas: &[f64], cfg: &EstimatorConfig) -> Result<CriticalPoint> {
    if thetas.is_empty() {
        return Err(param("θ list is empty"));
    }
    if thetas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(param("θ list must be strictly decreasing"));
    }
    let n = mu.dim() as f64;
    let per: Vec<DimensionEstimate> = profile_grid(mu, &[n], thetas, cfg)?.remove(0);
    let values: Vec<f64> = per.iter().map(|e| e.value).collect();
    let (fit_slope, fit_intercept) = stats::ls_fit(thetas, &values).unwrap_or((0.0, values[0]));
    let max_increase = values
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max);
    let mut value = per.last().unwrap().clone();
    value.method = "critical_point".into();
    Ok(CriticalPoint {
        per_theta: thetas.iter().copied().zip(per).collect(),
        value,
        fit_slope,
        fit_intercept,
        max_increase,
        monotone: max_increase <= cfg.tau,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub theta: f64,
    pub points: Vec<(f64, f64)>,
    /// Largest slope between consecutive grid points.
    pub max_slope: f64,
    /// Largest excess of `f(b) / (1 + (1/a − 1/b) f(b))` over `f(a)`, over
    /// all grid pairs `a < b`.
    pub self_improving_excess: f64,
}

/// Profile values over an increasing grid of indices `s`.
pub fn profile_curve(mu: &PointMeasure, theta: f64, s_grid: &[f64], cfg: &EstimatorConfig) -> Result<ProfileCurve> {
    if s_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(param("profile index grid must be strictly increasing"));
    }
    let est = profile_grid(mu, s_grid, &[theta], cfg)?;
    let points: Vec<(f64, f64)> = s_grid
        .iter()
        .zip(&est)
        .map(|(s, e)| (*s, e[0].value))
        .collect();
    Ok(ProfileCurve {
        theta,
        max_slope: max_slope(&points),
        self_improving_excess: self_improving_excess(&points),
        points,
    })
}

pub(crate) fn max_slope(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0)
}

/// For `a < b` the profile satisfies `f(b) / (1 + (1/a − 1/b) f(b)) ≤ f(a)`.
pub(crate) fn self_improving_excess(points: &[(f64, f64)]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for (i, (a, fa)) in points.iter().enumerate() {
        for (b, fb) in &points[i + 1..] {
            let lhs = fb / (1.0 + (1.0 / a - 1.0 / b) * fb);
            worst = worst.max(lhs - fa);
        }
    }
    worst
}
