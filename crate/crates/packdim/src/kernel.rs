//! Classical and three-term kernel potentials over radius grids.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{param, Error, Result};
use crate::measure::{dist, PointMeasure};
use crate::stats::{prefix_sums, DoubleDouble};

/// Exponents `(t, s)` and switch parameter `θ` of the kernel
/// `min{1, (r/d)^t, r^{θ(s−t)+t} d^{−s}}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelParams {
    pub t: f64,
    pub s: f64,
    pub theta: f64,
}

impl KernelParams {
    pub fn new(t: f64, s: f64, theta: f64) -> Result<Self> {
        if !(t >= 0.0 && s >= t && s.is_finite()) {
            return Err(param(format!("kernel exponents need 0 ≤ t ≤ s, got t={t}, s={s}")));
        }
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(param(format!("θ = {theta} outside (0,1]")));
        }
        Ok(KernelParams { t, s, theta })
    }

    /// Parameters reducing the kernel to `min{1, (r/d)^m}`.
    pub fn classic(m: f64) -> Result<Self> {
        Self::new(m, m, 1.0)
    }

    #[inline]
    fn far_exponent(&self) -> f64 {
        self.theta * (self.s - self.t) + self.t
    }
}

/// Kernel value at distance `d` and radius `r ∈ (0,1]`, in piecewise form.
#[inline]
pub fn kernel_value(p: &KernelParams, d: f64, r: f64) -> f64 {
    if d <= r {
        1.0
    } else if d < r.powf(p.theta) {
        (r / d).powf(p.t)
    } else {
        r.powf(p.far_exponent()) * d.powf(-p.s)
    }
}

/// Kernel value as the literal minimum of the three terms.
pub fn kernel_value_min_form(p: &KernelParams, d: f64, r: f64) -> f64 {
    if d == 0.0 {
        return 1.0;
    }
    let a = (r / d).powf(p.t);
    let b = r.powf(p.far_exponent()) * d.powf(-p.s);
    1f64.min(a).min(b)
}

/// `Σ w_i min{1, (r/|x−y_i|)^s}` by direct summation.
pub fn classic_potential(mu: &PointMeasure, x: &[f64], s: f64, r: f64) -> f64 {
    let p = KernelParams { t: s, s, theta: 1.0 };
    brute_potential(mu, x, &p, r)
}

/// `Σ w_i kernel(|x−y_i|, r)` by direct summation.
pub fn brute_potential(mu: &PointMeasure, x: &[f64], p: &KernelParams, r: f64) -> f64 {
    mu.atoms()
        .zip(mu.weights())
        .map(|(y, w)| w * kernel_value(p, dist(x, y), r))
        .sum()
}

/// Geometric radii `r_j = r_max · λ^j`, `j = 0..count`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleGrid {
    r_max: f64,
    ratio: f64,
    count: usize,
}

impl ScaleGrid {
    pub fn new(r_max: f64, ratio: f64, count: usize) -> Result<Self> {
        if !(r_max > 0.0 && r_max <= 1.0) {
            return Err(param(format!("r_max = {r_max} outside (0,1]")));
        }
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(param(format!("grid ratio {ratio} outside (0,1)")));
        }
        if count < 2 {
            return Err(param("a scale grid needs at least two radii"));
        }
        Ok(ScaleGrid { r_max, ratio, count })
    }

    /// Grid from `r_hi` down to the last radius not below `r_lo`.
    pub fn spanning(r_lo: f64, r_hi: f64, ratio: f64) -> Result<Self> {
        if !(r_lo > 0.0 && r_lo < r_hi) {
            return Err(param(format!("scale window [{r_lo}, {r_hi}] is empty")));
        }
        let steps = ((r_lo / r_hi).ln() / ratio.ln() + 1e-9).floor() as usize;
        Self::new(r_hi, ratio, steps + 1)
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.count)
            .map(|j| self.r_max * self.ratio.powi(j as i32))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }
}

/// Distances from one reference point to every atom, sorted ascending, with
/// the matching weights. Shared by ball masses and kernel potentials.
#[derive(Clone, Debug)]
pub struct RefDistances {
    d: Vec<f64>,
    ln_d: Vec<f64>,
    w: Vec<f64>,
    mass: Vec<DoubleDouble>,
}

impl RefDistances {
    pub fn new(mu: &PointMeasure, x: &[f64]) -> Self {
        let mut pairs: Vec<(f64, f64)> = mu
            .atoms()
            .zip(mu.weights())
            .map(|(y, w)| (dist(x, y), *w))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let d: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let w: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let ln_d = d.iter().map(|v| if *v > 0.0 { v.ln() } else { f64::NEG_INFINITY }).collect();
        let mass = prefix_sums(w.iter().copied());
        RefDistances { d, ln_d, w, mass }
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn distances(&self) -> &[f64] {
        &self.d
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    /// Smallest positive distance, if any atom differs from the reference.
    pub fn nearest_positive(&self) -> Option<f64> {
        self.d.iter().copied().find(|v| *v > 0.0)
    }

    /// Number of atoms at distance `≤ r`.
    #[inline]
    pub fn count_within(&self, r: f64) -> usize {
        self.d.partition_point(|v| *v <= r)
    }

    /// `μ(B(x, r))` for the closed ball.
    #[inline]
    pub fn mass_within(&self, r: f64) -> f64 {
        self.mass[self.count_within(r)].value()
    }

    /// Prefix sums of `w·d^{−e}` over atoms at positive distance.
    pub fn power_prefix(&self, e: f64) -> Vec<DoubleDouble> {
        prefix_sums(
            self.ln_d
                .iter()
                .zip(&self.w)
                .map(|(l, w)| if l.is_finite() { w * (-e * l).exp() } else { 0.0 }),
        )
    }

    /// Kernel potential at every radius, using the prefix-sum contract: two
    /// binary searches per radius.
    pub fn potentials(&self, p: &KernelParams, radii: &[f64]) -> Vec<f64> {
        let near = self.power_prefix(p.t);
        let far = if p.s == p.t { near.clone() } else { self.power_prefix(p.s) };
        radii
            .iter()
            .map(|&r| self.potential_with(p, r, &near, &far))
            .collect()
    }

    /// One potential value from precomputed prefix arrays for `t` and `s`.
    #[inline]
    pub fn potential_with(
        &self,
        p: &KernelParams,
        r: f64,
        near: &[DoubleDouble],
        far: &[DoubleDouble],
    ) -> f64 {
        let n = self.d.len();
        let i1 = self.count_within(r);
        let rt = r.powf(p.theta);
        let i2 = i1.max(self.d.partition_point(|v| *v < rt));
        let mut f = self.mass[i1].value();
        if i2 > i1 {
            f += r.powf(p.t) * near[i2].sub(near[i1]);
        }
        if n > i2 {
            f += r.powf(p.far_exponent()) * far[n].sub(far[i2]);
        }
        f.min(1.0)
    }
}

/// Potential values `F(x_i, r_j)` for reference points `x_i` and radii `r_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialTable {
    pub dim: usize,
    pub refs: Vec<f64>,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
}

impl PotentialTable {
    pub fn rows(&self) -> usize {
        self.values.len() / self.radii.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.radii.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let j = self.radii.len();
        &self.values[i * j..(i + 1) * j]
    }

    /// Comma-separated export: a header of radii, then one row per reference.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = self.radii.iter().map(|r| format!("{r:e}")).collect();
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.rows() {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Potential table over `refs` (flat, `μ.dim()` coordinates each).
pub fn potential_table(
    mu: &PointMeasure,
    refs: &[f64],
    params: &KernelParams,
    grid: &ScaleGrid,
    serial: bool,
) -> Result<PotentialTable> {
    let n = mu.dim();
    if refs.is_empty() {
        return Err(param("potential table needs at least one reference point"));
    }
    if !refs.len().is_multiple_of(n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: refs.len() % n,
        });
    }
    let radii = grid.radii();
    let row = |x: &[f64]| RefDistances::new(mu, x).potentials(params, &radii);
    let rows: Vec<Vec<f64>> = if serial {
        refs.chunks_exact(n).map(row).collect()
    } else {
        refs.par_chunks_exact(n).map(row).collect()
    };
    Ok(PotentialTable {
        dim: n,
        refs: refs.to_vec(),
        radii,
        values: rows.concat(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_hand_example() {
        let p = KernelParams::new(1.0, 2.0, 0.5).unwrap();
        assert!((kernel_value(&p, 0.5, 0.25) - 0.5).abs() < 1e-15);
        assert!((kernel_value_min_form(&p, 0.5, 0.25) - 0.5).abs() < 1e-15);
        assert_eq!(kernel_value(&p, 0.1, 0.25), 1.0);
        assert_eq!(kernel_value(&p, 0.0, 0.25), 1.0);
        assert_eq!(kernel_value_min_form(&p, 0.0, 0.25), 1.0);
    }

    #[test]
    fn invalid_params() {
        assert!(KernelParams::new(2.0, 1.0, 1.0).is_err());
        assert!(KernelParams::new(0.5, 1.0, 0.0).is_err());
        assert!(KernelParams::new(-0.1, 1.0, 0.5).is_err());
    }

    #[test]
    fn classic_examples() {
        let one = PointMeasure::dirac(&[0.5]).unwrap();
        assert!((classic_potential(&one, &[0.0], 1.0, 0.25) - 0.5).abs() < 1e-15);
        assert_eq!(classic_potential(&one, &[0.0], 1.0, 0.6), 1.0);
        let two = PointMeasure::new(1, vec![0.1, 0.9], vec![0.5, 0.5]).unwrap();
        let v = classic_potential(&two, &[0.0], 1.0, 0.2);
        assert!((v - (0.5 + 0.5 * 0.2 / 0.9)).abs() < 1e-15);
    }

    #[test]
    fn grid_radii() {
        let g = ScaleGrid::new(0.5, 0.5, 4).unwrap();
        assert_eq!(g.radii(), vec![0.5, 0.25, 0.125, 0.0625]);
        let s = ScaleGrid::spanning(2f64.powi(-12), 0.125, 0.5).unwrap();
        assert_eq!(s.len(), 10);
        assert!(ScaleGrid::new(1.5, 0.5, 3).is_err());
        assert!(ScaleGrid::new(0.5, 0.5, 1).is_err());
    }

    #[test]
    fn ball_masses() {
        let mu = PointMeasure::new(1, vec![0.0, 0.1, 0.3], vec![0.5, 0.25, 0.25]).unwrap();
        let rd = RefDistances::new(&mu, &[0.0]);
        assert_eq!(rd.mass_within(0.05), 0.5);
        assert_eq!(rd.mass_within(0.1), 0.75);
        assert_eq!(rd.mass_within(1.0), 1.0);
        assert_eq!(rd.nearest_positive(), Some(0.1));
    }

    #[test]
    fn table_first_column_total_mass() {
        let mu = PointMeasure::new(2, vec![0.0, 0.0, 0.2, 0.3, 0.1, 0.05], vec![0.2, 0.3, 0.5]).unwrap();
        let p = KernelParams::new(0.3, 1.5, 0.4).unwrap();
        let g = ScaleGrid::new(1.0, 0.5, 5).unwrap();
        let t = potential_table(&mu, &[0.0, 0.0, 0.5, 0.5], &p, &g, true).unwrap();
        assert_eq!(t.rows(), 2);
        assert_eq!(t.get(0, 0), 1.0);
        assert_eq!(t.get(1, 0), 1.0);
        assert!(potential_table(&mu, &[], &p, &g, true).is_err());
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("1e0,5e-1"));
    }
}
