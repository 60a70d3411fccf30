//! Fractional Brownian fields on `[0,1]` and their image measures.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::estimate::{
    assouad_dim, critical_point, default_level_pairs, dim_p_ball, map_items, profile_dim, EstimatorConfig,
};
use crate::measure::{AffineMap, PointMeasure};
use crate::projection::{Verdict, DEFAULT_THETAS};
use crate::stats;

/// Finest grid the experiments will build.
pub const MAX_RESOLUTION: usize = 1 << 20;
const MIN_RESOLUTION: usize = 256;

/// Samples of `d` independent fBm channels at `j/G`, `j = 0..=G`.
#[derive(Clone, Debug, PartialEq)]
pub struct FbmField {
    alpha: f64,
    g: usize,
    d: usize,
    seed: u64,
    /// Row-major, `(G+1) × d`.
    samples: Vec<f64>,
}

impl FbmField {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn resolution(&self) -> usize {
        self.g
    }

    pub fn channels(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Value of the field at grid point `j/G`.
    pub fn at(&self, j: usize) -> &[f64] {
        &self.samples[j * self.d..(j + 1) * self.d]
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("alpha={} G={} d={} seed={}\n", self.alpha, self.g, self.d, self.seed);
        for j in 0..=self.g {
            let row: Vec<String> = self.at(j).iter().map(|v| format!("{v}")).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<FbmField> {
        let text = std::fs::read_to_string(path)?;
        let fail = |line: usize, msg: String| Error::Format {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| fail(1, "empty file".into()))?;
        let (mut alpha, mut g, mut d, mut seed) = (None, None, None, None);
        for tok in header.split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| fail(1, format!("bad header token {tok:?}")))?;
            let bad = |_| fail(1, format!("bad value for {k}"));
            match k {
                "alpha" => alpha = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "G" => g = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "d" => d = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "seed" => seed = Some(v.parse::<u64>().map_err(|e| bad(e.to_string()))?),
                _ => return Err(fail(1, format!("unknown header key {k}"))),
            }
        }
        let (alpha, g, d, seed) = match (alpha, g, d, seed) {
            (Some(a), Some(g), Some(d), Some(s)) => (a, g, d, s),
            _ => return Err(fail(1, "header needs alpha, G, d and seed".into())),
        };
        let mut samples = Vec::with_capacity((g + 1) * d);
        let mut rows = 0;
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| fail(i + 2, e.to_string()))?;
            if vals.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: vals.len(),
                });
            }
            samples.extend(vals);
            rows += 1;
        }
        if rows != g + 1 {
            return Err(fail(rows + 1, format!("expected {} rows, found {rows}", g + 1)));
        }
        Ok(FbmField {
            alpha,
            g,
            d,
            seed,
            samples,
        })
    }
}

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
fn fgn_cov(alpha: f64, k: usize) -> f64 {
    let h2 = 2.0 * alpha;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

/// Exact circulant embedding of fractional Gaussian noise, cumulatively
/// summed. Each complex FFT yields two independent channels.
pub fn sample_fbm(alpha: f64, g: usize, d: usize, seed: u64) -> Result<FbmField> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(param(format!("Hurst index {alpha} outside (0,1)")));
    }
    if g < MIN_RESOLUTION || !g.is_power_of_two() {
        return Err(param(format!("resolution {g} must be a power of two ≥ {MIN_RESOLUTION}")));
    }
    if d == 0 {
        return Err(param("at least one channel is needed"));
    }
    let size = 2 * g;
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(size);
    let mut eig: Vec<Complex<f64>> = (0..size)
        .map(|j| {
            let lag = if j <= g { j } else { size - j };
            Complex::new(fgn_cov(alpha, lag), 0.0)
        })
        .collect();
    fft.process(&mut eig);
    let top = eig.iter().map(|c| c.re.abs()).fold(0.0, f64::max);
    let mut lambda = Vec::with_capacity(size);
    for c in &eig {
        if c.re < -1e-8 * top {
            return Err(Error::Numerical(format!(
                "circulant embedding is not positive semi-definite (eigenvalue {:.3e})",
                c.re
            )));
        }
        lambda.push(c.re.max(0.0));
    }
    // Noise has unit step; rescaling by G^{-α} gives spacing 1/G.
    let step = (g as f64).powf(-alpha);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = vec![0.0; (g + 1) * d];
    let mut ch = 0;
    while ch < d {
        let mut w: Vec<Complex<f64>> = lambda
            .iter()
            .map(|l| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                Complex::new(a, b) * (l / size as f64).sqrt()
            })
            .collect();
        fft.process(&mut w);
        for (part, c) in [(0, ch), (1, ch + 1)] {
            if c >= d {
                break;
            }
            let mut acc = 0.0;
            for j in 0..g {
                acc += step * if part == 0 { w[j].re } else { w[j].im };
                samples[(j + 1) * d + c] = acc;
            }
        }
        ch += 2;
    }
    Ok(FbmField {
        alpha,
        g,
        d,
        seed,
        samples,
    })
}

/// Smallest positive gap between the atoms of a measure on `[0,1]`.
pub fn min_gap(mu: &PointMeasure) -> Option<f64> {
    let mut x: Vec<f64> = mu.coords().to_vec();
    x.sort_by(f64::total_cmp);
    x.windows(2).map(|w| w[1] - w[0]).filter(|g| *g > 0.0).reduce(f64::min)
}

/// Smallest power of two `G ≥ 256` whose half-spacing is below a tenth of
/// the atom gap, capped at `cap`.
pub fn resolution_for(mu: &PointMeasure, cap: usize) -> usize {
    let mut g = MIN_RESOLUTION;
    if let Some(gap) = min_gap(mu) {
        while g < cap && 1.0 / (2.0 * g as f64) >= gap / 10.0 {
            g *= 2;
        }
    }
    g.min(cap).max(MIN_RESOLUTION)
}

#[derive(Clone, Debug)]
pub struct ImageMeasure {
    pub measure: PointMeasure,
    /// Largest distance from an atom to the grid point it was snapped to.
    pub max_snap: f64,
}

/// Push-forward of `μ` under the field, with atoms snapped to the nearest
/// grid point and the image scaled into `[0,1]^d`.
pub fn image_measure(mu: &PointMeasure, field: &FbmField) -> Result<ImageMeasure> {
    if mu.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: mu.dim(),
        });
    }
    let g = field.g as f64;
    let mut max_snap: f64 = 0.0;
    let mut raw = Vec::with_capacity(mu.len() * field.d);
    for y in mu.coords() {
        let j = (y * g).round().clamp(0.0, g) as usize;
        max_snap = max_snap.max((y - j as f64 / g).abs());
        raw.extend_from_slice(field.at(j));
    }
    let d = field.d;
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in raw.chunks_exact(d) {
        for k in 0..d {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let extent = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    let map = AffineMap {
        scale: if extent > 0.0 { 1.0 / extent } else { 1.0 },
        offset: lo,
    };
    let coords: Vec<f64> = raw.chunks_exact(d).flat_map(|p| map.apply(p)).collect();
    let mut meta = mu.meta().clone();
    meta.similarity_dim = None;
    meta.target_dims = None;
    meta.affine = Some(map);
    let measure = PointMeasure::from_parts_clamped(d, coords, mu.weights().to_vec(), meta);
    Ok(ImageMeasure { measure, max_snap })
}

/// Ensemble estimate of `E[(X(t+h) − X(t))²] ∝ h^{2α}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncrementScaling {
    pub lags: Vec<f64>,
    pub variances: Vec<f64>,
    /// Least-squares slope of log variance against log lag.
    pub exponent: f64,
    /// Mean of `X(1)²` per channel.
    pub endpoint_variance: Vec<f64>,
}

/// Pools squared increments over all positions, channels and `fields`
/// independent samples at lags `2^{-k}`.
pub fn increment_scaling(
    alpha: f64,
    g: usize,
    d: usize,
    fields: usize,
    lag_levels: &[u32],
    seed: u64,
    serial: bool,
) -> Result<IncrementScaling> {
    if fields == 0 || lag_levels.len() < 2 {
        return Err(param("need at least one field and two lags"));
    }
    for k in lag_levels {
        if (1usize << k) > g {
            return Err(param(format!("lag 2^-{k} is below the grid spacing 1/{g}")));
        }
    }
    let seeds = stats::derive_seeds(seed, 3, fields);
    let per = map_items(&seeds, serial, |sd| -> Result<(Vec<f64>, Vec<f64>)> {
        let f = sample_fbm(alpha, g, d, *sd)?;
        let sums = lag_levels
            .iter()
            .map(|k| {
                let h = g >> k;
                let mut s = 0.0;
                let mut n = 0usize;
                for j in 0..=(g - h) {
                    for c in 0..d {
                        s += (f.at(j + h)[c] - f.at(j)[c]).powi(2);
                        n += 1;
                    }
                }
                s / n as f64
            })
            .collect();
        let end = f.at(g).iter().map(|v| v * v).collect();
        Ok((sums, end))
    });
    let per: Vec<(Vec<f64>, Vec<f64>)> = per.into_iter().collect::<Result<_>>()?;
    let nf = fields as f64;
    let variances: Vec<f64> = (0..lag_levels.len())
        .map(|i| per.iter().map(|p| p.0[i]).sum::<f64>() / nf)
        .collect();
    let endpoint_variance = (0..d).map(|c| per.iter().map(|p| p.1[c]).sum::<f64>() / nf).collect();
    let lags: Vec<f64> = lag_levels.iter().map(|k| 2f64.powi(-(*k as i32))).collect();
    let lx: Vec<f64> = lags.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = variances.iter().map(|v| v.ln()).collect();
    let exponent = stats::ls_slope(&lx, &ly).ok_or_else(|| Error::Numerical("degenerate lag fit".into()))?;
    Ok(IncrementScaling {
        lags,
        variances,
        exponent,
        endpoint_variance,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub index: usize,
    pub seed: u64,
    pub resolution: usize,
    pub max_snap: f64,
    pub atoms: usize,
    pub dim_p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FbmReport {
    pub alpha: f64,
    pub d: usize,
    pub trials: Vec<TrialRow>,
    pub median: f64,
    /// `(1/α)` times the profile of `μ` at `s = αd`.
    pub profile_prediction: f64,
    pub dim_p: f64,
    pub assouad: f64,
    pub critical_point: f64,
    pub verdicts: Vec<Verdict>,
}

/// Estimates `dim_P μ_X` over independent fields and compares the median
/// with the profile formula and its two consequences at tolerance `2τ/α`.
pub fn fbm_experiment(mu: &PointMeasure, alpha: f64, d: usize, trials: usize, cfg: &EstimatorConfig) -> Result<FbmReport> {
    if mu.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: mu.dim(),
        });
    }
    if trials < 5 {
        return Err(param("an fBm experiment needs at least five trials"));
    }
    if !(alpha > 0.0 && alpha < 1.0) || d == 0 {
        return Err(param(format!("need α in (0,1) and d ≥ 1, got α={alpha}, d={d}")));
    }
    let g = resolution_for(mu, MAX_RESOLUTION);
    let seeds = stats::derive_seeds(cfg.seed, 2, trials);
    let jobs: Vec<(usize, u64)> = seeds.iter().copied().enumerate().collect();
    let rows = map_items(&jobs, cfg.serial, |(i, sd)| -> Result<TrialRow> {
        let field = sample_fbm(alpha, g, d, *sd)?;
        let img = image_measure(mu, &field)?;
        let dim_p = if img.measure.len() < 2 {
            0.0
        } else {
            dim_p_ball(&img.measure, cfg)?.value
        };
        Ok(TrialRow {
            index: *i,
            seed: *sd,
            resolution: g,
            max_snap: img.max_snap,
            atoms: img.measure.len(),
            dim_p,
        })
    });
    let trials: Vec<TrialRow> = rows.into_iter().collect::<Result<_>>()?;
    let dims: Vec<f64> = trials.iter().map(|r| r.dim_p).collect();
    let median = stats::median(&dims).unwrap_or(0.0);

    let (profile_prediction, dim_p, assouad, crit) = if mu.len() < 2 {
        (0.0, 0.0, 0.0, 0.0)
    } else {
        (
            profile_dim(mu, alpha * d as f64, 1.0, cfg)?.value / alpha,
            dim_p_ball(mu, cfg)?.value,
            assouad_dim(mu, &default_level_pairs(mu)).map(|e| e.value).unwrap_or(0.0),
            critical_point(mu, &DEFAULT_THETAS, cfg)?.value.value,
        )
    };
    let tol = 2.0 * cfg.tau / alpha;
    let df = d as f64;
    let ad = alpha * df;
    let scaling_applies = ad >= assouad;
    let full_image = median >= df - tol;
    let full_predicted = ad <= crit + 2.0 * cfg.tau;
    let verdicts = vec![
        Verdict {
            id: "fbm_profile_formula".into(),
            statement: "the median image packing dimension equals the profile at αd divided by α".into(),
            lhs: median,
            rhs: profile_prediction,
            tolerance: tol,
            applicable: true,
            pass: (median - profile_prediction).abs() <= tol,
        },
        Verdict {
            id: "fbm_packing_ratio".into(),
            statement: "when αd is at least dim_A the median image packing dimension equals dim_P / α".into(),
            lhs: median,
            rhs: dim_p / alpha,
            tolerance: tol,
            applicable: scaling_applies,
            pass: !scaling_applies || (median - dim_p / alpha).abs() <= tol,
        },
        Verdict {
            id: "fbm_full_dimension".into(),
            statement: "the image has full packing dimension d exactly when αd is at most the critical point".into(),
            lhs: median,
            rhs: df,
            tolerance: tol,
            applicable: true,
            pass: full_image == full_predicted,
        },
        Verdict {
            id: "fbm_upper_bound".into(),
            statement: "the median image packing dimension is at most min(d, dim_P / α)".into(),
            lhs: median,
            rhs: df.min(dim_p / alpha),
            tolerance: tol,
            applicable: true,
            pass: median <= df.min(dim_p / alpha) + tol,
        },
    ];
    Ok(FbmReport {
        alpha,
        d,
        trials,
        median,
        profile_prediction,
        dim_p,
        assouad,
        critical_point: crit,
        verdicts,
    })
}

/// Tab-free text table of per-trial rows.
pub fn trials_csv(report: &FbmReport) -> String {
    let mut s = String::from("index,seed,resolution,max_snap,atoms,dim_p\n");
    for r in &report.trials {
        let _ = writeln!(s, "{},{},{},{:e},{},{}", r.index, r.seed, r.resolution, r.max_snap, r.atoms, r.dim_p);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn starts_at_zero_and_is_deterministic() {
        let f = sample_fbm(0.7, 256, 3, 11).unwrap();
        assert_eq!(f.at(0), &[0.0, 0.0, 0.0]);
        assert_eq!(f, sample_fbm(0.7, 256, 3, 11).unwrap());
        assert_ne!(f, sample_fbm(0.7, 256, 3, 12).unwrap());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(sample_fbm(1.0, 256, 1, 0).is_err());
        assert!(sample_fbm(0.5, 300, 1, 0).is_err());
        assert!(sample_fbm(0.5, 128, 1, 0).is_err());
        assert!(sample_fbm(0.5, 256, 0, 0).is_err());
    }

    #[test]
    fn brownian_endpoint_variance() {
        let s = increment_scaling(0.5, 256, 2, 500, &[2, 6], 1, false).unwrap();
        for v in &s.endpoint_variance {
            assert!((v - 1.0).abs() < 0.15, "{v}");
        }
    }

    #[test]
    fn increment_variance_matches_covariance() {
        let s = increment_scaling(0.8, 256, 1, 400, &[4, 6], 2, false).unwrap();
        for (h, v) in s.lags.iter().zip(&s.variances) {
            let want = h.powf(1.6);
            assert!((v / want - 1.0).abs() < 0.2, "h={h} {v} vs {want}");
        }
    }

    #[test]
    fn dirac_image_is_one_atom() {
        let mu = PointMeasure::dirac(&[0.5]).unwrap();
        let f = sample_fbm(0.5, 256, 2, 3).unwrap();
        let img = image_measure(&mu, &f).unwrap();
        assert_eq!(img.measure.len(), 1);
        assert_eq!(img.measure.weights(), &[1.0]);
        assert_eq!(img.max_snap, 0.0);
    }

    #[test]
    fn shared_grid_point_merges() {
        let mu = PointMeasure::new(1, vec![0.5, 0.5 + 1e-6], vec![0.5, 0.5]).unwrap();
        let f = sample_fbm(0.5, 256, 2, 3).unwrap();
        let img = image_measure(&mu, &f).unwrap();
        assert_eq!(img.measure.len(), 1);
        assert!((img.measure.weights()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resolution_rule() {
        let mu = PointMeasure::new(1, vec![0.0, 0.25, 1.0], vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(resolution_for(&mu, MAX_RESOLUTION), 256);
        let mu = PointMeasure::new(1, vec![0.0, 1e-4], vec![0.5, 0.5]).unwrap();
        let g = resolution_for(&mu, MAX_RESOLUTION);
        assert!(1.0 / (2.0 * g as f64) < 1e-5 && 1.0 / g as f64 >= 1e-5);
    }

    #[test]
    fn text_round_trip() {
        let f = sample_fbm(0.3, 256, 2, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.txt");
        f.save(&p).unwrap();
        assert_eq!(FbmField::load(&p).unwrap(), f);
    }
}
