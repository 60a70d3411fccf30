//! Regular envelopes of finite point sets: nested b-adic cubes in which every
//! selected cube keeps exactly `M` selected children, carrying the measure
//! that gives each level-`m` cube mass `M^{−m}`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::estimate::{map_items, prepare, EstimatorConfig};
use crate::kernel::RefDistances;
use crate::measure::PointMeasure;
use crate::stats;

type Cube = Vec<u64>;

/// Anchors sit exactly on cube boundaries; rounding must not push them into
/// the neighbour below.
const BOUNDARY_NUDGE: f64 = 1e-9;

/// Largest number of children per cube the construction enumerates.
const MAX_CHILDREN: u64 = 1 << 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DyadicTree {
    dim: usize,
    base: u64,
    depth: usize,
    branching: u64,
    /// Sorted selected cubes per level, level 0 being the unit cube.
    levels: Vec<Vec<Cube>>,
}

/// Branching number `⌈C·b^t⌉`, tolerant to rounding just above an integer.
pub fn branching_number(c: f64, t: f64, base: u64) -> u64 {
    (c * (base as f64).powf(t) - 1e-9).ceil().max(1.0) as u64
}

fn cube_of(x: &[f64], level: usize, base: u64) -> Cube {
    let side = base.pow(level as u32);
    x.iter()
        .map(|v| ((v * side as f64 + BOUNDARY_NUDGE).floor() as u64).min(side - 1))
        .collect()
}

/// Offsets of the `b^n` children of a cube in lexicographic order.
fn child_offsets(dim: usize, base: u64) -> Vec<Vec<u64>> {
    let total = base.pow(dim as u32);
    (0..total)
        .map(|mut idx| {
            let mut off = vec![0; dim];
            for o in off.iter_mut().rev() {
                *o = idx % base;
                idx /= base;
            }
            off
        })
        .collect()
}

/// Builds the envelope of `points` (flat, `dim` coordinates each) with
/// branching `M = ⌈C·b^t⌉` down to `depth`. Occupied children are always
/// kept; the rest of the `M` slots are filled with unoccupied children
/// nearest to an occupied sibling, ties broken lexicographically.
pub fn build_envelope(points: &[f64], dim: usize, c: f64, t: f64, base: u64, depth: usize) -> Result<DyadicTree> {
    if dim == 0 || points.is_empty() || points.len() % dim != 0 {
        return Err(param("envelope needs a nonempty point set"));
    }
    if points.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(param("envelope points must lie in the unit cube"));
    }
    if base < 2 || !(c > 0.0) || !(t >= 0.0) {
        return Err(param(format!("need b ≥ 2, C > 0, t ≥ 0; got b={base}, C={c}, t={t}")));
    }
    if (base as f64).powi(depth as i32) > 2f64.powi(52) {
        return Err(param(format!("base {base} at depth {depth} exceeds coordinate resolution")));
    }
    let capacity = base
        .checked_pow(dim as u32)
        .filter(|v| *v <= MAX_CHILDREN)
        .ok_or_else(|| param(format!("base {base} in dimension {dim} has too many children")))?;
    let m = branching_number(c, t, base);
    if m > capacity {
        let min_base = (2..=MAX_CHILDREN).find(|b| {
            b.checked_pow(dim as u32)
                .is_some_and(|cap| branching_number(c, t, *b) <= cap)
        });
        return Err(Error::InfeasibleBranching { m, capacity, min_base });
    }
    let offsets = child_offsets(dim, base);
    let mut levels: Vec<Vec<Cube>> = vec![vec![vec![0; dim]]];
    for level in 0..depth {
        // Occupied children of each occupied cube.
        let mut occ: BTreeMap<Cube, BTreeSet<Vec<u64>>> = BTreeMap::new();
        for x in points.chunks_exact(dim) {
            let child = cube_of(x, level + 1, base);
            let parent: Cube = child.iter().map(|v| v / base).collect();
            let off: Vec<u64> = child.iter().map(|v| v % base).collect();
            occ.entry(parent).or_default().insert(off);
        }
        let mut next = Vec::with_capacity(levels[level].len() * m as usize);
        for q in &levels[level] {
            let empty = BTreeSet::new();
            let taken = occ.get(q).unwrap_or(&empty);
            if taken.len() as u64 > m {
                return Err(Error::CoveringConstant {
                    level: level + 1,
                    occupied: taken.len(),
                    m,
                });
            }
            let mut chosen: Vec<Vec<u64>> = taken.iter().cloned().collect();
            let mut free: Vec<(u64, &Vec<u64>)> = offsets
                .iter()
                .filter(|o| !taken.contains(*o))
                .map(|o| {
                    let gap = taken
                        .iter()
                        .map(|t| {
                            o.iter()
                                .zip(t)
                                .map(|(a, b)| a.abs_diff(*b).pow(2))
                                .sum::<u64>()
                        })
                        .min()
                        .unwrap_or(0);
                    (gap, o)
                })
                .collect();
            free.sort();
            chosen.extend(free.iter().take((m as usize) - taken.len()).map(|(_, o)| (*o).clone()));
            for off in chosen {
                next.push(q.iter().zip(&off).map(|(p, o)| p * base + o).collect());
            }
        }
        next.sort();
        levels.push(next);
    }
    Ok(DyadicTree {
        dim,
        base,
        depth,
        branching: m,
        levels,
    })
}

impl DyadicTree {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn base(&self) -> u64 {
        self.base
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn branching(&self) -> u64 {
        self.branching
    }

    pub fn level(&self, m: usize) -> &[Cube] {
        &self.levels[m]
    }

    pub fn contains_cube(&self, level: usize, cube: &[u64]) -> bool {
        self.levels[level].binary_search_by(|c| c.as_slice().cmp(cube)).is_ok()
    }

    /// Removes a selected cube; used to exercise the checks.
    pub fn remove_cube(&mut self, level: usize, cube: &[u64]) -> bool {
        match self.levels[level].binary_search_by(|c| c.as_slice().cmp(cube)) {
            Ok(i) => {
                self.levels[level].remove(i);
                true
            }
            Err(_) => false,
        }
    }

    /// Exponent `log M / log b` of the uniform branching measure.
    pub fn regularity_exponent(&self) -> f64 {
        (self.branching as f64).ln() / (self.base as f64).ln()
    }

    /// Full traversal: every cube's parent is selected and every selected
    /// cube above the last level has exactly `M` selected children.
    pub fn check_structure(&self) -> std::result::Result<(), String> {
        if self.levels.first().map(|l| l.len()) != Some(1) {
            return Err("level 0 must hold the unit cube".into());
        }
        for m in 1..=self.depth {
            let mut counts: BTreeMap<Cube, u64> = BTreeMap::new();
            for c in &self.levels[m] {
                let parent: Cube = c.iter().map(|v| v / self.base).collect();
                if !self.contains_cube(m - 1, &parent) {
                    return Err(format!("level {m} cube {c:?} has no selected parent"));
                }
                *counts.entry(parent).or_insert(0) += 1;
            }
            for q in &self.levels[m - 1] {
                let k = counts.get(q).copied().unwrap_or(0);
                if k != self.branching {
                    return Err(format!(
                        "level {} cube {q:?} has {k} children instead of {}",
                        m - 1,
                        self.branching
                    ));
                }
            }
        }
        Ok(())
    }

    /// Number of selected cubes per level holding a point but not chosen as
    /// padding, and the padding count.
    pub fn padding(&self, points: &[f64]) -> usize {
        let mut padded = 0;
        for m in 1..=self.depth {
            let occ: BTreeSet<Cube> = points
                .chunks_exact(self.dim)
                .map(|x| cube_of(x, m, self.base))
                .collect();
            padded += self.levels[m].iter().filter(|c| !occ.contains(*c)).count();
        }
        padded
    }

    pub fn measure(&self) -> EnvelopeMeasure<'_> {
        EnvelopeMeasure { tree: self }
    }

    /// Text form: a header line, then per level a `level <m> <count>` line
    /// followed by one cube per line.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "n={} base={} depth={} M={}\n",
            self.dim, self.base, self.depth, self.branching
        );
        for (m, cubes) in self.levels.iter().enumerate() {
            let _ = writeln!(s, "level {m} {}", cubes.len());
            for c in cubes {
                let row: Vec<String> = c.iter().map(|v| v.to_string()).collect();
                let _ = writeln!(s, "{}", row.join(" "));
            }
        }
        s
    }

    pub fn from_text(text: &str) -> std::result::Result<DyadicTree, String> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or("empty tree file")?;
        let mut kv = BTreeMap::new();
        for tok in header.split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or(format!("bad header token `{tok}`"))?;
            kv.insert(k, v.parse::<u64>().map_err(|e| format!("`{tok}`: {e}"))?);
        }
        let get = |k: &str| kv.get(k).copied().ok_or(format!("header misses `{k}`"));
        let dim = get("n")? as usize;
        let base = get("base")?;
        let depth = get("depth")? as usize;
        let branching = get("M")?;
        let mut levels = Vec::new();
        while let Some((ln, line)) = lines.next() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 || parts[0] != "level" {
                return Err(format!("line {}: expected `level <m> <count>`", ln + 1));
            }
            let count: usize = parts[2].parse().map_err(|e| format!("line {}: {e}", ln + 1))?;
            let mut cubes = Vec::with_capacity(count);
            for _ in 0..count {
                let (ln, line) = lines.next().ok_or("truncated tree file")?;
                let c: std::result::Result<Vec<u64>, _> = line.split_whitespace().map(str::parse).collect();
                let c = c.map_err(|e| format!("line {}: {e}", ln + 1))?;
                if c.len() != dim {
                    return Err(format!("line {}: expected {dim} coordinates", ln + 1));
                }
                cubes.push(c);
            }
            levels.push(cubes);
        }
        if levels.len() != depth + 1 {
            return Err(format!("expected {} levels, found {}", depth + 1, levels.len()));
        }
        Ok(DyadicTree { dim, base, depth, branching, levels })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<DyadicTree> {
        let text = fs::read_to_string(path)?;
        DyadicTree::from_text(&text).map_err(|msg| Error::Format {
            path: path.to_path_buf(),
            line: 0,
            msg,
        })
    }
}

/// True iff every point lies in a selected cube at every level.
pub fn envelope_contains(tree: &DyadicTree, points: &[f64]) -> bool {
    points.chunks_exact(tree.dim).all(|x| {
        (0..=tree.depth).all(|m| tree.contains_cube(m, &cube_of(x, m, tree.base)))
    })
}

/// Uniform branching measure on a tree.
#[derive(Clone, Copy, Debug)]
pub struct EnvelopeMeasure<'a> {
    tree: &'a DyadicTree,
}

impl EnvelopeMeasure<'_> {
    pub fn cube_mass(&self, level: usize) -> f64 {
        (self.tree.branching as f64).powi(-(level as i32))
    }

    pub fn level_total(&self, level: usize) -> f64 {
        self.tree.levels[level].len() as f64 * self.cube_mass(level)
    }

    /// Largest deviation between a cube's mass and the summed masses of its
    /// selected children.
    pub fn additivity_error(&self) -> f64 {
        let t = self.tree;
        let mut worst: f64 = 0.0;
        for m in 0..t.depth {
            let mut sums: BTreeMap<&[u64], f64> = BTreeMap::new();
            let child_mass = self.cube_mass(m + 1);
            let parents: Vec<Cube> = t.levels[m + 1]
                .iter()
                .map(|c| c.iter().map(|v| v / t.base).collect())
                .collect();
            for p in &parents {
                *sums.entry(p.as_slice()).or_insert(0.0) += child_mass;
            }
            for q in &t.levels[m] {
                let s = sums.get(q.as_slice()).copied().unwrap_or(0.0);
                worst = worst.max((s - self.cube_mass(m)).abs());
            }
        }
        worst
    }

    /// The finest-level cube centres as an atomic measure.
    pub fn to_point_measure(&self) -> PointMeasure {
        let t = self.tree;
        let side = t.base.pow(t.depth as u32) as f64;
        let cubes = &t.levels[t.depth];
        let coords: Vec<f64> = cubes
            .iter()
            .flat_map(|c| c.iter().map(|v| (*v as f64 + 0.5) / side))
            .collect();
        let w = vec![1.0 / cubes.len() as f64; cubes.len()];
        PointMeasure::new(t.dim, coords, w).expect("cube centres lie in the unit cube")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub branching: u64,
    pub base: u64,
    /// `log M / log b`.
    pub target_exponent: f64,
    /// Pooled least-squares exponent of ball masses.
    pub achieved_exponent: f64,
    /// Ratio between the largest and smallest `μ(B(x,r)) / r^{t*}`.
    pub constant_spread: f64,
    pub levels: (usize, usize),
    pub samples: usize,
}

/// Ball masses of the envelope measure at sampled finest-level cube centres,
/// for radii `b^{−k}` with `k` from `levels.0` to `levels.1` in quarter-level
/// steps. Masses are sums of finest-cube masses whose centres lie in the
/// ball.
pub fn verify_regularity(
    measure: &EnvelopeMeasure<'_>,
    samples: usize,
    levels: (usize, usize),
    seed: u64,
) -> Result<RegularityReport> {
    let t = measure.tree;
    if samples == 0 {
        return Err(param("regularity check needs at least one sample point"));
    }
    if !(levels.0 < levels.1 && levels.1 <= t.depth) {
        return Err(param(format!("level window {levels:?} invalid for depth {}", t.depth)));
    }
    let mu = measure.to_point_measure();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = t.base as f64;
    let steps = 4 * (levels.1 - levels.0);
    let radii: Vec<f64> = (0..=steps)
        .map(|i| b.powf(-(levels.0 as f64 + i as f64 / 4.0)))
        .collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut per_sample = Vec::new();
    for _ in 0..samples {
        let i = rng.random_range(0..mu.len());
        let rd = RefDistances::new(&mu, mu.atom(i));
        let masses: Vec<f64> = radii.iter().map(|r| rd.mass_within(*r)).collect();
        for (r, m) in radii.iter().zip(&masses) {
            xs.push(r.ln());
            ys.push(m.ln());
        }
        per_sample.push(masses);
    }
    let achieved = stats::ls_slope(&xs, &ys).unwrap_or(0.0);
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for masses in &per_sample {
        for (r, m) in radii.iter().zip(masses) {
            let c = m / r.powf(achieved);
            lo = lo.min(c);
            hi = hi.max(c);
        }
    }
    Ok(RegularityReport {
        branching: t.branching,
        base: t.base,
        target_exponent: t.regularity_exponent(),
        achieved_exponent: achieved,
        constant_spread: hi / lo,
        levels,
        samples,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub s: f64,
    pub epsilon: f64,
    pub a: f64,
    pub rho_max: f64,
    pub triples: usize,
    pub violations: usize,
    pub violation_fraction: f64,
}

/// Tests `μ(B(x,r)) ≤ (4r/ρ)^{s(1+ε)} μ(B(x,ρ))` at atoms `x` drawn from
/// the measure, `ρ` log-uniform between the resolved window floor and
/// `rho_max`, and `r` log-uniform in `[ρ^a, 1]`. Radii are in source units.
pub fn growth_check(
    mu: &PointMeasure,
    s: f64,
    epsilon: f64,
    a: f64,
    rho_max: f64,
    triples: usize,
    cfg: &EstimatorConfig,
) -> Result<GrowthReport> {
    if !(a > 0.0 && a < 1.0) {
        return Err(param(format!("a = {a} outside (0,1)")));
    }
    if !(s >= 0.0 && epsilon >= 0.0) {
        return Err(param("s and ε must be non-negative"));
    }
    let sample = prepare(mu, cfg)?;
    let rho_lo = sample.window.0;
    if !(rho_max > rho_lo && rho_max < 1.0) {
        return Err(param(format!("ρ threshold {rho_max} must lie in ({rho_lo}, 1)")));
    }
    let sigma = mu.length_scale();
    let refs = sample.points.len() / mu.dim();
    let per_ref = triples.div_ceil(refs);
    let seeds: Vec<u64> = {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6772_6f77);
        (0..refs).map(|_| rng.random()).collect()
    };
    let dim = mu.dim();
    let jobs: Vec<(usize, u64)> = seeds.into_iter().enumerate().collect();
    let counts = map_items(&jobs, cfg.serial, |(i, sd)| {
        let x = &sample.points[i * dim..(i + 1) * dim];
        let mut rng = ChaCha8Rng::seed_from_u64(*sd);
        let rd = RefDistances::new(mu, x);
        let ball = |r: f64| rd.mass_within((r * sigma).min(1.0));
        let mut bad = 0usize;
        for _ in 0..per_ref {
            let u: f64 = rng.random();
            let rho = rho_lo * (rho_max / rho_lo).powf(u);
            let lo = rho.powf(a);
            let v: f64 = rng.random();
            let r = lo * (1.0 / lo).powf(v);
            let rhs = (4.0 * r / rho).powf(s * (1.0 + epsilon)) * ball(rho);
            if ball(r) > rhs * (1.0 + 1e-12) {
                bad += 1;
            }
        }
        bad
    });
    let total = per_ref * refs;
    let violations: usize = counts.iter().sum();
    Ok(GrowthReport {
        s,
        epsilon,
        a,
        rho_max,
        triples: total,
        violations,
        violation_fraction: violations as f64 / total as f64,
    })
}
