use std::collections::{BTreeMap, HashMap, HashSet};

use super::DimensionEstimate;
use crate::error::{param, Error, Result};
use crate::measure::PointMeasure;
use crate::stats;

/// Deepest dyadic level used for quantization.
const MAX_LEVEL: usize = 52;

fn cube_at(x: &[f64], level: usize) -> Vec<u64> {
    let side = (1u64 << level) as f64;
    let top = (1u64 << level) - 1;
    x.iter()
        .map(|v| ((v * side + 1e-9).floor() as u64).min(top))
        .collect()
}

fn occupied(mu: &PointMeasure, level: usize) -> HashSet<Vec<u64>> {
    mu.atoms().map(|x| cube_at(x, level)).collect()
}

/// Smallest dyadic level at which all distinct atoms sit in distinct cubes.
pub fn resolution_level(mu: &PointMeasure) -> usize {
    let distinct = mu.normalize().len();
    let (mut lo, mut hi) = (0, MAX_LEVEL);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if occupied(mu, mid).len() >= distinct {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// Level pairs `(j, k)` with `j ≤ 4`, `k − j ≥ 2` and `k` one level above
/// the resolution level.
pub fn default_level_pairs(mu: &PointMeasure) -> Vec<(usize, usize)> {
    let kmax = resolution_level(mu).saturating_sub(1);
    let mut pairs = Vec::new();
    for j in 0..=4usize {
        for k in (j + 2)..=kmax {
            pairs.push((j, k));
        }
    }
    if pairs.is_empty() && kmax >= 1 {
        pairs.push((0, kmax));
    }
    pairs
}

/// Largest number of occupied level-`k` cubes inside one occupied level-`j`
/// cube.
fn max_children(mu: &PointMeasure, j: usize, k: usize) -> usize {
    let fine = occupied(mu, k);
    let mut counts: HashMap<Vec<u64>, usize> = HashMap::new();
    for c in fine {
        let parent: Vec<u64> = c.iter().map(|v| v >> (k - j)).collect();
        *counts.entry(parent).or_insert(0) += 1;
    }
    counts.values().copied().max().unwrap_or(0)
}

/// Dyadic covering exponent. For each pair the largest local count
/// `M(j, k)` is recorded; with several level gaps the estimate is the
/// least-squares slope of `log2 max M` against the gap, otherwise
/// `log2 M / (k − j)`.
pub fn assouad_dim(mu: &PointMeasure, level_pairs: &[(usize, usize)]) -> Result<DimensionEstimate> {
    if level_pairs.is_empty() {
        return Err(param("no level pairs given"));
    }
    let res = resolution_level(mu);
    for &(j, k) in level_pairs {
        if k <= j {
            return Err(param(format!("level pair ({j}, {k}) needs k > j")));
        }
        if k > res.max(1) {
            return Err(Error::Insufficient(format!(
                "level {k} is finer than the atom resolution (level {res})"
            )));
        }
    }
    let mut by_gap: BTreeMap<usize, usize> = BTreeMap::new();
    for &(j, k) in level_pairs {
        let m = max_children(mu, j, k);
        let e = by_gap.entry(k - j).or_insert(0);
        *e = (*e).max(m);
    }
    let gaps: Vec<f64> = by_gap.keys().map(|g| *g as f64).collect();
    let logs: Vec<f64> = by_gap.values().map(|m| (*m as f64).log2()).collect();
    let value = if gaps.len() >= 2 {
        stats::ls_slope(&gaps, &logs).unwrap_or(0.0)
    } else {
        logs[0] / gaps[0]
    };
    let ratios: Vec<f64> = logs.iter().zip(&gaps).map(|(l, g)| l / g).collect();
    let spread = ratios.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b))
        - ratios.iter().fold(f64::INFINITY, |a, b| a.min(*b));
    let jmin = level_pairs.iter().map(|p| p.0).min().unwrap();
    let kmax = level_pairs.iter().map(|p| p.1).max().unwrap();
    Ok(DimensionEstimate {
        method: "assouad_dyadic".into(),
        value: value.clamp(0.0, mu.dim() as f64),
        half_width: 0.5 * spread,
        window: (2f64.powi(-(kmax as i32)), 2f64.powi(-(jmin as i32))),
        q: 1.0,
        seed: 0,
        n_refs: 0,
        saturated: false,
    })
}
