//! Small numerical helpers shared by the estimators.

/// Least-squares slope of `y` against `x`. Returns `None` with fewer than two
/// points or a degenerate abscissa.
pub fn ls_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    if sxx <= 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Slope and intercept of the least-squares line.
pub fn ls_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let slope = ls_slope(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    Some((slope, my - slope * mx))
}

/// Extreme least-squares slope over all contiguous sub-windows covering
/// `len` consecutive points. `take_max` selects the maximum, otherwise the
/// minimum.
pub fn window_slope(x: &[f64], y: &[f64], len: usize, take_max: bool) -> Option<f64> {
    let all = window_slopes(x, y, len);
    let pick = if take_max { f64::max } else { f64::min };
    all.into_iter().reduce(pick)
}

/// Least-squares slopes over every run of `len` consecutive points, in
/// order of the first point; degenerate runs are skipped.
pub fn window_slopes(x: &[f64], y: &[f64], len: usize) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return Vec::new();
    }
    let len = len.clamp(2, n);
    (0..=(n - len))
        .filter_map(|start| ls_slope(&x[start..start + len], &y[start..start + len]))
        .collect()
}

/// Lower weighted quantile: the smallest value whose cumulative weight
/// reaches `q` of the total. Pairs with non-finite values are ignored.
pub fn weighted_quantile(values: &[f64], weights: &[f64], q: f64) -> Option<f64> {
    let mut pairs: Vec<(f64, f64)> = values
        .iter()
        .zip(weights)
        .filter(|(v, w)| v.is_finite() && **w > 0.0)
        .map(|(v, w)| (*v, *w))
        .collect();
    if pairs.is_empty() {
        return None;
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let target = q.clamp(0.0, 1.0) * total;
    let mut acc = 0.0;
    for (v, w) in &pairs {
        acc += w;
        if acc >= target * (1.0 - 1e-12) {
            return Some(*v);
        }
    }
    pairs.last().map(|p| p.0)
}

pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    let w = vec![1.0; values.len()];
    weighted_quantile(values, &w, q)
}

pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Error-free transformation of a sum: `a + b = s + e` exactly.
#[inline]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// Running sums carried as unevaluated (hi, lo) pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

impl DoubleDouble {
    #[inline]
    pub fn add(self, x: f64) -> Self {
        let (s, e) = two_sum(self.hi, x);
        let lo = self.lo + e;
        let (hi, lo) = two_sum(s, lo);
        DoubleDouble { hi, lo }
    }

    #[inline]
    pub fn sub(self, other: DoubleDouble) -> f64 {
        let (s, e) = two_sum(self.hi, -other.hi);
        s + (e + (self.lo - other.lo))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// Prefix sums `p[0] = 0, p[i+1] = p[i] + v[i]` in double-double precision.
pub fn prefix_sums(v: impl Iterator<Item = f64>) -> Vec<DoubleDouble> {
    let mut out = vec![DoubleDouble::default()];
    let mut acc = DoubleDouble::default();
    for x in v {
        acc = acc.add(x);
        out.push(acc);
    }
    out
}

/// Child seeds for `count` independent jobs derived from a master seed;
/// `stream` separates unrelated uses of the same master.
pub fn derive_seeds(master: u64, stream: u64, count: usize) -> Vec<u64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    (0..count).map(|_| rng.random()).collect()
}
