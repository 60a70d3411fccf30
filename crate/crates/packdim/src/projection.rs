//! Random orthogonal projections of measures and the projection experiments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{param, Error, Result};
use crate::estimate::{
    assouad_dim, critical_point, default_level_pairs, dim_h_ball, dim_p_ball, falconer_mattila_bound,
    map_items, packing_profile, EstimatorConfig,
};
use crate::measure::{AffineMap, PointMeasure};
use crate::stats;

/// Columns with norm below this after orthogonalization trigger a redraw.
const RANK_TOL: f64 = 1e-10;

/// θ values used for the critical point in experiment reports.
pub const DEFAULT_THETAS: [f64; 5] = [1.0, 0.5, 0.25, 0.125, 0.0625];

/// An `n × m` matrix with orthonormal columns spanning an `m`-plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    n: usize,
    m: usize,
    /// Column-major: entry `(i, k)` at `k * n + i`.
    cols: Vec<f64>,
}

impl Frame {
    /// Frame from column-major entries; columns must be orthonormal.
    pub fn from_columns(n: usize, m: usize, cols: Vec<f64>) -> Result<Frame> {
        if !(1 <= m && m <= n) || cols.len() != n * m {
            return Err(param(format!("an {n}×{m} frame needs 1 ≤ m ≤ n and {} entries", n * m)));
        }
        let f = Frame { n, m, cols };
        let err = f.gram_error();
        if err > 1e-12 {
            return Err(param(format!("frame columns are not orthonormal (error {err:.2e})")));
        }
        Ok(f)
    }

    /// Frame spanned by the given coordinate axes.
    pub fn axes(n: usize, axes: &[usize]) -> Result<Frame> {
        let mut cols = vec![0.0; n * axes.len()];
        for (k, a) in axes.iter().enumerate() {
            if *a >= n {
                return Err(param(format!("axis {a} outside dimension {n}")));
            }
            cols[k * n + a] = 1.0;
        }
        Frame::from_columns(n, axes.len(), cols)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.cols[k * self.n..(k + 1) * self.n]
    }

    /// Largest entry of `FᵀF − I` in absolute value.
    pub fn gram_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..self.m {
            for b in 0..self.m {
                let dot: f64 = self.column(a).iter().zip(self.column(b)).map(|(x, y)| x * y).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    /// Coordinates of `x` in the column basis.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|k| self.column(k).iter().zip(x).map(|(u, v)| u * v).sum())
            .collect()
    }

    /// Short hex digest of the entries.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.cols {
            h.update(v.to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }

    /// Similarity placing the projected unit cube inside `[0,1]^m`.
    pub fn cube_normalization(&self) -> AffineMap {
        let mut offset = Vec::with_capacity(self.m);
        let mut extent: f64 = 0.0;
        for k in 0..self.m {
            let c = self.column(k);
            offset.push(c.iter().map(|u| u.min(0.0)).sum());
            extent = extent.max(c.iter().map(|u| u.abs()).sum());
        }
        AffineMap {
            scale: 1.0 / extent,
            offset,
        }
    }
}

/// Orthonormalizes an `n × m` array of independent standard Gaussians by
/// modified Gram–Schmidt with one re-orthogonalization pass; the span is
/// distributed according to the rotation-invariant measure on `m`-planes.
pub fn sample_grassmann(n: usize, m: usize, seed: u64) -> Result<Frame> {
    if !(1 <= m && m <= n) {
        return Err(param(format!("need 1 ≤ m ≤ n, got m={m}, n={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    'draw: loop {
        let mut cols: Vec<f64> = (0..n * m).map(|_| StandardNormal.sample(&mut rng)).collect();
        for k in 0..m {
            for _pass in 0..2 {
                for j in 0..k {
                    let dot: f64 = (0..n).map(|i| cols[j * n + i] * cols[k * n + i]).sum();
                    for i in 0..n {
                        cols[k * n + i] -= dot * cols[j * n + i];
                    }
                }
            }
            let norm = (0..n).map(|i| cols[k * n + i].powi(2)).sum::<f64>().sqrt();
            if norm < RANK_TOL {
                continue 'draw;
            }
            for i in 0..n {
                cols[k * n + i] /= norm;
            }
        }
        return Ok(Frame { n, m, cols });
    }
}

/// Frame coordinates of every atom, before normalization (flat, `m` each).
pub fn project_points(mu: &PointMeasure, f: &Frame) -> Result<Vec<f64>> {
    if mu.dim() != f.n {
        return Err(Error::DimensionMismatch {
            expected: f.n,
            found: mu.dim(),
        });
    }
    Ok(mu.atoms().flat_map(|x| f.apply(x)).collect())
}

/// Push-forward of `μ` under the projection onto the frame's span, placed
/// in `[0,1]^m` by the frame's cube normalization. The recorded similarity
/// carries the combined length scale relative to the source units of `μ`.
pub fn project_measure(mu: &PointMeasure, f: &Frame) -> Result<PointMeasure> {
    let raw = project_points(mu, f)?;
    let norm = f.cube_normalization();
    let coords: Vec<f64> = raw.chunks_exact(f.m).flat_map(|y| norm.apply(y)).collect();
    let mut meta = mu.meta().clone();
    meta.similarity_dim = None;
    meta.affine = Some(AffineMap {
        scale: norm.scale * mu.length_scale(),
        offset: norm.offset.clone(),
    });
    Ok(PointMeasure::from_parts_clamped(f.m, coords, mu.weights().to_vec(), meta))
}

/// One pass/fail line comparing an estimate with a bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub id: String,
    pub statement: String,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    /// False when the hypothesis of the statement does not hold for the
    /// estimated quantities; such verdicts always pass.
    pub applicable: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRow {
    pub index: usize,
    pub seed: u64,
    pub frame_hash: String,
    pub dim_p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionReport {
    pub n: usize,
    pub m: usize,
    pub frames: Vec<FrameRow>,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub packing_profile: f64,
    pub critical_point: f64,
    pub dim_p: f64,
    pub dim_h: f64,
    pub assouad: f64,
    pub falconer_mattila: f64,
    pub verdicts: Vec<Verdict>,
}

/// Estimates `dim_P μ_V` for `num_frames` random `m`-planes and checks the
/// aggregate against the profile-based statements with tolerance `2τ`.
pub fn projection_experiment(mu: &PointMeasure, m: usize, num_frames: usize, cfg: &EstimatorConfig) -> Result<ProjectionReport> {
    let n = mu.dim();
    if !(1 <= m && m <= n) {
        return Err(param(format!("need 1 ≤ m ≤ n, got m={m}, n={n}")));
    }
    if num_frames < 5 {
        return Err(param("a projection experiment needs at least five frames"));
    }
    let seeds = stats::derive_seeds(cfg.seed, 1, num_frames);
    let jobs: Vec<(usize, u64)> = seeds.iter().copied().enumerate().collect();
    let rows = map_items(&jobs, cfg.serial, |(i, sd)| -> Result<FrameRow> {
        let f = sample_grassmann(n, m, *sd)?;
        let mv = project_measure(mu, &f)?;
        let est = dim_p_ball(&mv, cfg)?;
        Ok(FrameRow {
            index: *i,
            seed: *sd,
            frame_hash: f.hash(),
            dim_p: est.value,
        })
    });
    let frames: Vec<FrameRow> = rows.into_iter().collect::<Result<_>>()?;
    let dims: Vec<f64> = frames.iter().map(|r| r.dim_p).collect();
    let median = stats::median(&dims).unwrap_or(0.0);
    let min = dims.iter().copied().fold(f64::INFINITY, f64::min);
    let max = dims.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let profile = packing_profile(mu, m, cfg)?.value;
    let crit = critical_point(mu, &DEFAULT_THETAS, cfg)?.value.value;
    let p = dim_p_ball(mu, cfg)?.value;
    let h = dim_h_ball(mu, cfg)?.value.min(p);
    let assouad = assouad_dim(mu, &default_level_pairs(mu)).map(|e| e.value).unwrap_or(0.0);
    // Finite-scale estimates can leave the domain 0 ≤ h ≤ p ≤ n.
    let pc = p.min(n as f64);
    let fm = falconer_mattila_bound(pc, h.min(pc), n, m)?;

    let tol = 2.0 * cfg.tau;
    let mf = m as f64;
    let full_profile = profile >= mf - tol;
    let full_crit = crit >= mf - tol;
    let preserve = assouad <= mf;
    let verdicts = vec![
        Verdict {
            id: "projection_below_profile".into(),
            statement: "every projected packing dimension is at most the packing profile".into(),
            lhs: max,
            rhs: profile,
            tolerance: tol,
            applicable: true,
            pass: max <= profile + tol,
        },
        Verdict {
            id: "projection_typical_equality".into(),
            statement: "the median projected packing dimension equals the packing profile".into(),
            lhs: median,
            rhs: profile,
            tolerance: tol,
            applicable: true,
            pass: (median - profile).abs() <= tol,
        },
        Verdict {
            id: "falconer_mattila_lower_bound".into(),
            statement: "the median projected packing dimension is at least the bound from dim_P and dim_H".into(),
            lhs: median,
            rhs: fm,
            tolerance: tol,
            applicable: true,
            pass: median >= fm - tol,
        },
        Verdict {
            id: "profile_assouad_lower_bound".into(),
            statement: "the packing profile is at least dim_P minus the excess of dim_A over m".into(),
            lhs: profile,
            rhs: p - (assouad - mf).max(0.0),
            tolerance: tol,
            applicable: true,
            pass: profile >= p - (assouad - mf).max(0.0) - tol,
        },
        Verdict {
            id: "full_profile_iff_critical_point".into(),
            statement: "the packing profile equals m exactly when m is at most the critical point".into(),
            lhs: profile,
            rhs: crit,
            tolerance: tol,
            applicable: true,
            pass: full_profile == full_crit,
        },
        Verdict {
            id: "projection_preserves_packing_dimension".into(),
            statement: "when dim_A is at most m the median projected packing dimension equals dim_P".into(),
            lhs: median,
            rhs: p,
            tolerance: tol,
            applicable: preserve,
            pass: !preserve || (median - p).abs() <= tol,
        },
    ];
    Ok(ProjectionReport {
        n,
        m,
        frames,
        median,
        min,
        max,
        packing_profile: profile,
        critical_point: crit,
        dim_p: p,
        dim_h: h,
        assouad,
        falconer_mattila: fm,
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::dist;

    #[test]
    fn axis_projection() {
        let mu = PointMeasure::new(2, vec![0.2, 0.9, 0.4, 0.1], vec![0.5, 0.5]).unwrap();
        let f = Frame::axes(2, &[0]).unwrap();
        let p = project_measure(&mu, &f).unwrap();
        assert_eq!(p.coords(), &[0.2, 0.4]);
        assert_eq!(p.weights(), &[0.5, 0.5]);
        assert_eq!(p.length_scale(), 1.0);
    }

    #[test]
    fn frames_are_orthonormal_and_deterministic() {
        for seed in 0..50 {
            let f = sample_grassmann(4, 3, seed).unwrap();
            assert!(f.gram_error() < 1e-12);
        }
        assert_eq!(sample_grassmann(3, 2, 9).unwrap(), sample_grassmann(3, 2, 9).unwrap());
        assert_ne!(sample_grassmann(3, 2, 9).unwrap().hash(), sample_grassmann(3, 2, 10).unwrap().hash());
        assert!(sample_grassmann(2, 3, 0).is_err());
    }

    #[test]
    fn full_frame_preserves_distances() {
        let mu = PointMeasure::new(3, vec![0.1, 0.2, 0.3, 0.9, 0.5, 0.05, 0.4, 0.4, 0.8], vec![0.2, 0.3, 0.5]).unwrap();
        let f = sample_grassmann(3, 3, 5).unwrap();
        let y = project_points(&mu, &f).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let d0 = dist(mu.atom(i), mu.atom(j));
                let d1 = dist(&y[3 * i..3 * i + 3], &y[3 * j..3 * j + 3]);
                assert!((d0 - d1).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let mu = PointMeasure::dirac(&[0.5]).unwrap();
        let f = sample_grassmann(2, 1, 0).unwrap();
        assert!(matches!(project_measure(&mu, &f), Err(Error::DimensionMismatch { .. })));
    }
}
