//! Weighted atomic measures on the unit cube and generators for test measures
//! with known dimensions.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Default bound on the number of atoms a generator may produce.
pub const ATOM_CAP: usize = 1 << 20;

/// Coordinates closer than this after rounding are treated as one atom.
const MERGE_GRID: f64 = 1e12;

const WEIGHT_TOL: f64 = 1e-9;

/// Similarity `y = scale * (x - offset)` that placed a measure in the unit
/// cube. `scale` converts distances in source units into coordinate units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub scale: f64,
    pub offset: Vec<f64>,
}

impl AffineMap {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.offset)
            .map(|(v, o)| self.scale * (v - o))
            .collect()
    }

    /// Composition `self ∘ inner`.
    pub fn compose(&self, inner: &AffineMap) -> AffineMap {
        // self(inner(x)) = s1 * (s0 * (x - o0) - o1) = s1 s0 (x - o0 - o1 / s0)
        let offset = inner
            .offset
            .iter()
            .zip(&self.offset)
            .map(|(o0, o1)| o0 + o1 / inner.scale)
            .collect();
        AffineMap {
            scale: self.scale * inner.scale,
            offset,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasureMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity_dim: Option<f64>,
    /// Designed (lower, upper) local exponents of a sparse-scale measure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_dims: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affine: Option<AffineMap>,
    /// Free-form provenance (tool version, seed, digest) written by the CLI.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

/// A probability measure given by finitely many weighted atoms in `[0,1]^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointMeasure {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
    meta: MeasureMeta,
}

impl PointMeasure {
    /// Builds a measure, checking every invariant. Weights must already sum
    /// to one.
    pub fn new(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        check_shape(dim, &coords, &weights)?;
        check_coords(&coords)?;
        check_weights(&weights)?;
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(PointMeasure {
            dim,
            coords,
            weights,
            meta: MeasureMeta::default(),
        })
    }

    /// Builds a measure from positive but unnormalized weights, merging
    /// duplicate atoms.
    pub fn from_weighted(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        check_shape(dim, &coords, &weights)?;
        check_coords(&coords)?;
        check_weights(&weights)?;
        Ok(merge_and_rescale(dim, &coords, &weights, MeasureMeta::default()))
    }

    pub fn dirac(point: &[f64]) -> Result<Self> {
        Self::new(point.len(), point.to_vec(), vec![1.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn atoms(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn meta(&self) -> &MeasureMeta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut MeasureMeta {
        &mut self.meta
    }

    pub fn with_meta(mut self, meta: MeasureMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.meta.label = Some(label.into());
        self
    }

    /// Coordinate units per source unit of length; 1 unless the measure was
    /// placed in the cube by a recorded similarity.
    pub fn length_scale(&self) -> f64 {
        self.meta.affine.as_ref().map_or(1.0, |a| a.scale)
    }

    /// Merges duplicate atoms and rescales the weights to total one.
    pub fn normalize(&self) -> PointMeasure {
        merge_and_rescale(self.dim, &self.coords, &self.weights, self.meta.clone())
    }

    /// Places a copy of the measure on coordinate axis `axis` of `[0,1]^n`.
    pub fn embed_on_axis(&self, n: usize, axis: usize) -> Result<PointMeasure> {
        if self.dim != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: self.dim,
            });
        }
        if axis >= n {
            return Err(param(format!("axis {axis} outside dimension {n}")));
        }
        let mut coords = vec![0.0; n * self.len()];
        for (i, x) in self.coords.iter().enumerate() {
            coords[i * n + axis] = *x;
        }
        let mut meta = self.meta.clone();
        meta.affine = None;
        Ok(PointMeasure {
            dim: n,
            coords,
            weights: self.weights.clone(),
            meta,
        })
    }

    /// Same atoms scaled by `factor ∈ (0,1]` about the origin, with the
    /// scaling folded into the recorded similarity.
    pub fn rescaled(&self, factor: f64) -> Result<PointMeasure> {
        if !(factor > 0.0 && factor <= 1.0) {
            return Err(param(format!("rescale factor {factor} outside (0,1]")));
        }
        let coords = self.coords.iter().map(|x| x * factor).collect();
        let mut meta = self.meta.clone();
        let outer = AffineMap {
            scale: factor,
            offset: vec![0.0; self.dim],
        };
        meta.affine = Some(match &self.meta.affine {
            Some(inner) => outer.compose(inner),
            None => outer,
        });
        Ok(PointMeasure {
            dim: self.dim,
            coords,
            weights: self.weights.clone(),
            meta,
        })
    }

    /// Internal constructor for callers that guarantee the invariants up to
    /// rounding; coordinates are clamped into the cube.
    pub(crate) fn from_parts_clamped(
        dim: usize,
        mut coords: Vec<f64>,
        weights: Vec<f64>,
        meta: MeasureMeta,
    ) -> PointMeasure {
        for c in coords.iter_mut() {
            *c = c.clamp(0.0, 1.0);
        }
        merge_and_rescale(dim, &coords, &weights, meta)
    }
}

fn check_shape(dim: usize, coords: &[f64], weights: &[f64]) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidMeasure("ambient dimension must be ≥ 1".into()));
    }
    if weights.is_empty() {
        return Err(Error::InvalidMeasure("a measure needs at least one atom".into()));
    }
    if coords.len() != dim * weights.len() {
        return Err(Error::DimensionMismatch {
            expected: dim * weights.len(),
            found: coords.len(),
        });
    }
    Ok(())
}

fn check_coords(coords: &[f64]) -> Result<()> {
    if let Some(x) = coords.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::InvalidMeasure(format!(
            "coordinate {x} outside [0,1]"
        )));
    }
    Ok(())
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::InvalidMeasure(format!(
            "weight {w} is not strictly positive"
        )));
    }
    Ok(())
}

fn merge_and_rescale(dim: usize, coords: &[f64], weights: &[f64], meta: MeasureMeta) -> PointMeasure {
    let mut index: HashMap<Vec<i64>, usize> = HashMap::with_capacity(weights.len());
    let mut out_coords = Vec::with_capacity(coords.len());
    let mut out_weights: Vec<f64> = Vec::with_capacity(weights.len());
    for (atom, w) in coords.chunks_exact(dim).zip(weights) {
        let key: Vec<i64> = atom.iter().map(|x| (x * MERGE_GRID).round() as i64).collect();
        match index.get(&key) {
            Some(&j) => out_weights[j] += w,
            None => {
                index.insert(key, out_weights.len());
                out_coords.extend_from_slice(atom);
                out_weights.push(*w);
            }
        }
    }
    let total: f64 = out_weights.iter().sum();
    for w in out_weights.iter_mut() {
        *w /= total;
    }
    PointMeasure {
        dim,
        coords: out_coords,
        weights: out_weights,
        meta,
    }
}

/// A contracting similarity `x ↦ ratio·x + translation`.
#[derive(Clone, Debug, PartialEq)]
pub struct Similarity {
    pub ratio: f64,
    pub translation: Vec<f64>,
}

/// An iterated function system of similarities with branch probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct IfsSystem {
    dim: usize,
    maps: Vec<Similarity>,
    probabilities: Vec<f64>,
}

impl IfsSystem {
    pub fn new(dim: usize, maps: Vec<Similarity>, probabilities: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(param("ambient dimension must be ≥ 1"));
        }
        if maps.is_empty() {
            return Err(param("an IFS needs at least one map"));
        }
        if probabilities.len() != maps.len() {
            return Err(param(format!(
                "{} probabilities for {} maps",
                probabilities.len(),
                maps.len()
            )));
        }
        for (i, m) in maps.iter().enumerate() {
            if !(m.ratio > 0.0 && m.ratio < 1.0) {
                return Err(param(format!("map {i}: ratio {} outside (0,1)", m.ratio)));
            }
            if m.translation.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: m.translation.len(),
                });
            }
            if m
                .translation
                .iter()
                .any(|t| *t < -1e-12 || t + m.ratio > 1.0 + 1e-12)
            {
                return Err(param(format!("map {i} does not send the unit cube into itself")));
            }
        }
        if probabilities.iter().any(|p| !(*p > 0.0)) {
            return Err(param("probabilities must be positive"));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(param(format!("probabilities sum to {total}")));
        }
        Ok(IfsSystem {
            dim,
            maps,
            probabilities,
        })
    }

    /// Two maps of ratio `r` fixing the ends of `[0,1]`, equal weights.
    pub fn cantor(r: f64) -> Result<Self> {
        if !(r > 0.0 && r <= 0.5) {
            return Err(param(format!("Cantor ratio {r} outside (0, 1/2]")));
        }
        Self::new(
            1,
            vec![
                Similarity { ratio: r, translation: vec![0.0] },
                Similarity { ratio: r, translation: vec![1.0 - r] },
            ],
            vec![0.5, 0.5],
        )
    }

    /// The `base^n` maps of ratio `1/base` tiling `[0,1]^n`; depth `k`
    /// yields the uniform grid of side `base^k`.
    pub fn uniform_grid(n: usize, base: usize) -> Result<Self> {
        if base < 2 {
            return Err(param("grid base must be ≥ 2"));
        }
        let k = base.checked_pow(n as u32).ok_or_else(|| param("grid too large"))?;
        let r = 1.0 / base as f64;
        let maps = (0..k)
            .map(|mut idx| {
                let mut t = vec![0.0; n];
                for c in t.iter_mut() {
                    *c = (idx % base) as f64 * r;
                    idx /= base;
                }
                Similarity { ratio: r, translation: t }
            })
            .collect();
        Self::new(n, maps, vec![1.0 / k as f64; k])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn maps(&self) -> &[Similarity] {
        &self.maps
    }

    /// Solution `s` of `Σ r_i^s = 1`; closed form when all ratios agree.
    pub fn similarity_dimension(&self) -> f64 {
        let k = self.maps.len() as f64;
        if self.maps.len() == 1 {
            return 0.0;
        }
        let r0 = self.maps[0].ratio;
        if self.maps.iter().all(|m| m.ratio == r0) {
            return k.ln() / (1.0 / r0).ln();
        }
        let f = |s: f64| self.maps.iter().map(|m| m.ratio.powf(s)).sum::<f64>() - 1.0;
        let (mut lo, mut hi) = (0.0, 1.0);
        while f(hi) > 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Images of the origin under all compositions of `depth` maps, each weighted
/// by the product of its branch probabilities.
pub fn make_ifs_measure(system: &IfsSystem, depth: usize) -> Result<PointMeasure> {
    make_ifs_measure_capped(system, depth, ATOM_CAP)
}

pub fn make_ifs_measure_capped(system: &IfsSystem, depth: usize, cap: usize) -> Result<PointMeasure> {
    if depth == 0 {
        return Err(param("depth must be ≥ 1"));
    }
    let k = system.maps.len() as u128;
    let requested = k.checked_pow(depth as u32).unwrap_or(u128::MAX);
    if requested > cap as u128 {
        return Err(Error::Capacity { requested, cap });
    }
    let n = system.dim;
    let mut coords = vec![0.0; n];
    let mut weights = vec![1.0];
    for _ in 0..depth {
        let mut next_c = Vec::with_capacity(coords.len() * system.maps.len());
        let mut next_w = Vec::with_capacity(weights.len() * system.maps.len());
        for (map, p) in system.maps.iter().zip(&system.probabilities) {
            for (x, w) in coords.chunks_exact(n).zip(&weights) {
                next_c.extend(x.iter().zip(&map.translation).map(|(xi, ti)| map.ratio * xi + ti));
                next_w.push(w * p);
            }
        }
        coords = next_c;
        weights = next_w;
    }
    for c in coords.iter_mut() {
        *c = c.clamp(0.0, 1.0);
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let mut mu = PointMeasure::new(n, coords, weights)?;
    mu.meta.similarity_dim = Some(system.similarity_dimension());
    Ok(mu)
}

/// Product measure on `[0,1]^{n_a + n_b}`.
pub fn make_product_measure(a: &PointMeasure, b: &PointMeasure) -> Result<PointMeasure> {
    make_product_measure_capped(a, b, ATOM_CAP)
}

pub fn make_product_measure_capped(a: &PointMeasure, b: &PointMeasure, cap: usize) -> Result<PointMeasure> {
    let requested = a.len() as u128 * b.len() as u128;
    if requested > cap as u128 {
        return Err(Error::Capacity { requested, cap });
    }
    let n = a.dim + b.dim;
    let mut coords = Vec::with_capacity(n * a.len() * b.len());
    let mut weights = Vec::with_capacity(a.len() * b.len());
    for (x, wx) in a.atoms().zip(&a.weights) {
        for (y, wy) in b.atoms().zip(&b.weights) {
            coords.extend_from_slice(x);
            coords.extend_from_slice(y);
            weights.push(wx * wy);
        }
    }
    let meta = MeasureMeta {
        similarity_dim: match (a.meta.similarity_dim, b.meta.similarity_dim) {
            (Some(u), Some(v)) => Some(u + v),
            _ => None,
        },
        ..MeasureMeta::default()
    };
    Ok(merge_and_rescale(n, &coords, &weights, meta))
}

/// Octaves of scale spanned by the first block of the sparse-scale schedule;
/// block `k` spans `SPARSE_BLOCK_OCTAVES · 2^k` octaves.
const SPARSE_BLOCK_OCTAVES: f64 = 5.0;

/// Finest admissible contraction of the sparse-scale construction, kept well
/// above the duplicate-merge resolution.
const SPARSE_MIN_SCALE: f64 = 1e-11;

/// Per-level rates of the sparse-scale construction: blocks alternate
/// between rate `p` and rate `h`, starting with `p`, with geometrically
/// growing octave budgets.
pub fn sparse_schedule(h: f64, p: f64, depth: usize) -> Vec<f64> {
    let mut rates = Vec::with_capacity(depth);
    let mut block = 0;
    while rates.len() < depth {
        let rate = if block % 2 == 0 { p } else { h };
        let budget = SPARSE_BLOCK_OCTAVES * 2f64.powi(block);
        let per_level = if rate > 0.0 { 1.0 / rate } else { 3f64.log2() };
        let levels = ((budget / per_level).round() as usize).max(1);
        for _ in 0..levels.min(depth - rates.len()) {
            rates.push(rate);
        }
        block += 1;
    }
    rates
}

/// One-dimensional Moran measure whose levels either split mass between two
/// end intervals of ratio `2^{-1/rate}` (dense levels) or keep a single
/// triadic child at a seeded position (lean levels, rate 0). Blocks of
/// levels at rates `p` and `h` alternate, so the upper local exponent is
/// close to `p` and the lower one close to `h`.
pub fn make_sparse_scale_measure(h: f64, p: f64, depth: usize, seed: u64) -> Result<PointMeasure> {
    if !(0.0..=1.0).contains(&h) || !(0.0..=1.0).contains(&p) || h > p {
        return Err(param(format!(
            "exponents (h, p) = ({h}, {p}) need 0 ≤ h ≤ p ≤ 1"
        )));
    }
    if depth == 0 {
        return Err(param("depth must be ≥ 1"));
    }
    let rates = sparse_schedule(h, p, depth);
    let dense_levels = rates.iter().filter(|r| **r > 0.0).count();
    if dense_levels >= usize::BITS as usize || (1usize << dense_levels) > ATOM_CAP {
        return Err(Error::Capacity {
            requested: 1u128 << dense_levels.min(127),
            cap: ATOM_CAP,
        });
    }
    let mut scale = 1.0;
    for r in &rates {
        scale *= if *r > 0.0 { 2f64.powf(-1.0 / r) } else { 1.0 / 3.0 };
    }
    if scale < SPARSE_MIN_SCALE {
        return Err(param(format!(
            "exponents ({h}, {p}) at depth {depth} contract below the coordinate resolution"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Each atom is the left end of a surviving interval of length `len`.
    let mut lefts = vec![0.0f64];
    let mut len = 1.0f64;
    for r in &rates {
        if *r > 0.0 {
            let child = 2f64.powf(-1.0 / r);
            let mut next = Vec::with_capacity(lefts.len() * 2);
            for a in &lefts {
                next.push(*a);
                next.push(a + len * (1.0 - child));
            }
            lefts = next;
            len *= child;
        } else {
            let child = len / 3.0;
            let slot: u32 = rng.random_range(0..3);
            for a in lefts.iter_mut() {
                *a += slot as f64 * child;
            }
            len = child;
        }
    }
    let w = 1.0 / lefts.len() as f64;
    let weights = vec![w; lefts.len()];
    let meta = MeasureMeta {
        target_dims: Some((h, p)),
        ..MeasureMeta::default()
    };
    Ok(PointMeasure::from_parts_clamped(1, lefts, weights, meta))
}

/// Path of the metadata sidecar that accompanies a measure file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes the atom file and its metadata sidecar.
pub fn save_measure(mu: &PointMeasure, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "n={} N={}", mu.dim, mu.len())?;
    for (x, w) in mu.atoms().zip(&mu.weights) {
        let mut line = String::new();
        for c in x {
            line.push_str(&format!("{c} "));
        }
        line.push_str(&format!("{w}"));
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    let meta = serde_json::to_string_pretty(&mu.meta)?;
    fs::write(sidecar_path(path), meta + "\n")?;
    Ok(())
}

/// Reads a measure file; a sidecar, when present, restores the metadata.
pub fn load_measure(path: &Path) -> Result<PointMeasure> {
    let file = fs::File::open(path)?;
    let fmt = |line: usize, msg: String| Error::Format {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| fmt(1, "empty file".into()))??;
    let (n, count) = parse_header(&header).ok_or_else(|| {
        fmt(1, format!("expected header `n=<int> N=<int>`, found `{header}`"))
    })?;
    if n == 0 {
        return Err(fmt(1, "ambient dimension must be ≥ 1".into()));
    }
    let mut coords = Vec::with_capacity(n * count);
    let mut weights = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != n + 1 {
            return Err(Error::DimensionMismatch {
                expected: n + 1,
                found: fields.len(),
            });
        }
        let mut vals = Vec::with_capacity(n + 1);
        for f in fields {
            vals.push(
                f.parse::<f64>()
                    .map_err(|e| fmt(lineno, format!("`{f}`: {e}")))?,
            );
        }
        let w = vals.pop().unwrap();
        if let Some(x) = vals.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(fmt(lineno, format!("coordinate {x} outside [0,1]")));
        }
        if !(w.is_finite() && w > 0.0) {
            return Err(fmt(lineno, format!("weight {w} is not strictly positive")));
        }
        coords.extend(vals);
        weights.push(w);
    }
    if weights.len() != count {
        return Err(fmt(1, format!("header announces {count} atoms, found {}", weights.len())));
    }
    let mut mu = PointMeasure::new(n, coords, weights).map_err(|e| fmt(1, e.to_string()))?;
    let side = sidecar_path(path);
    if side.exists() {
        let text = fs::read_to_string(&side)?;
        mu.meta = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: side.clone(),
            line: e.line(),
            msg: e.to_string(),
        })?;
    }
    Ok(mu)
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut n = None;
    let mut count = None;
    for tok in line.split_whitespace() {
        let (k, v) = tok.split_once('=')?;
        match k {
            "n" => n = v.parse().ok(),
            "N" => count = v.parse().ok(),
            _ => return None,
        }
    }
    Some((n?, count?))
}

/// Euclidean distance.
#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
