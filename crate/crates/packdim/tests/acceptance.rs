//! Desk-scale acceptance suite. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any criterion fails.

use std::path::Path;
use std::time::{Duration, Instant};

use packdim::envelope::{build_envelope, envelope_contains, growth_check, verify_regularity};
use packdim::estimate::{
    assouad_dim, assouad_profile_bound, critical_point, default_level_pairs, dim_h_ball, dim_p_ball,
    packing_profile, profile_curve, profile_dim, window_decay_check, EstimatorConfig,
};
use packdim::fbm::{fbm_experiment, increment_scaling};
use packdim::harness::{generate_measure, run, Command, MeasureSource, RunConfig};
use packdim::kernel::{brute_potential, classic_potential, potential_table, KernelParams, ScaleGrid};
use packdim::projection::projection_experiment;
use packdim::PointMeasure;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CANTOR_DIM: f64 = 0.630_929_753_571_457_4;

const CANTOR: &str = "cantor:ratio=1/3,depth=11";
const CANTOR_PLANE: &str = "cantor:ratio=1/3,depth=11,embed=2";
const GRID_PLANE: &str = "grid:dim=2,base=2,depth=6";
const GRID_LINE: &str = "grid:dim=1,base=2,depth=16";
const PRODUCT_CANTOR: &str = "cantor:ratio=1/3,depth=6*cantor:ratio=1/3,depth=6";
const PRODUCT_08: &str = "cantor:ratio=2^-2.5,depth=8*cantor:ratio=2^-2.5,depth=8";

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn measure(spec: &str) -> PointMeasure {
    generate_measure(spec).expect("generator spec is valid")
}

fn cfg() -> EstimatorConfig {
    EstimatorConfig::default()
}

fn random_measure(rng: &mut ChaCha8Rng, n: usize, atoms: usize) -> PointMeasure {
    let coords: Vec<f64> = (0..n * atoms).map(|_| rng.random::<f64>()).collect();
    let weights: Vec<f64> = (0..atoms).map(|_| rng.random::<f64>() + 0.01).collect();
    PointMeasure::from_weighted(n, coords, weights).unwrap()
}

fn kernel_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0f64;
    for k in 0..20 {
        let n = 1 + k % 3;
        let mu = random_measure(&mut rng, n, 200);
        let t = rng.random_range(0.0..n as f64);
        let s = rng.random_range(t..=n as f64);
        let theta = rng.random_range(0.05..=1.0);
        let p = KernelParams::new(t, s, theta).unwrap();
        let refs: Vec<f64> = (0..50 * n).map(|_| rng.random::<f64>()).collect();
        let grid = ScaleGrid::new(1.0, 0.7, 30).unwrap();
        let table = potential_table(&mu, &refs, &p, &grid, false).unwrap();
        for (i, x) in refs.chunks(n).enumerate() {
            for (j, r) in grid.radii().iter().enumerate() {
                let exact = brute_potential(&mu, x, &p, *r);
                worst = worst.max((table.get(i, j) - exact).abs() / exact.abs().max(f64::MIN_POSITIVE));
            }
        }
    }
    let took = start.elapsed();
    outcome(
        worst <= 1e-12 && took < Duration::from_secs(5),
        format!("max relative error {worst:.2e}, {took:.2?}"),
    )
}

fn kernel_chain() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100_000 {
        let n = rng.random_range(1..=3usize);
        let mu = random_measure(&mut rng, n, 12);
        let m = rng.random_range(1..=n) as f64;
        let t = rng.random_range(0.0..=m);
        let theta = rng.random_range(0.01..=1.0);
        let r = rng.random_range(1e-6..1.0f64);
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let fm = classic_potential(&mu, &x, m, r);
        let ftm = brute_potential(&mu, &x, &KernelParams::new(t, m, theta).unwrap(), r);
        let ftn = brute_potential(&mu, &x, &KernelParams::new(t, n as f64, theta).unwrap(), r);
        let gap = (fm - ftm).max(ftm - ftn - r.powf(t * (1.0 - theta)));
        worst = worst.max(gap);
        if gap > 1e-12 {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("{violations} violations in 10^5 tuples, worst gap {worst:.2e}"))
}

fn known_dimensions() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (spec, target, m, tol) in [(CANTOR, CANTOR_DIM, 1, 0.07), (GRID_PLANE, 2.0, 1, 0.1)] {
        let start = Instant::now();
        let mu = measure(spec);
        let p = dim_p_ball(&mu, &cfg()).unwrap().value;
        let h = dim_h_ball(&mu, &cfg()).unwrap().value;
        let a = assouad_dim(&mu, &default_level_pairs(&mu)).unwrap().value;
        let prof = packing_profile(&mu, m, &cfg()).unwrap().value;
        let took = start.elapsed();
        // The profile never exceeds its index m.
        let prof_target = target.min(m as f64);
        let ok = [p, h, a].iter().all(|v| (v - target).abs() <= tol)
            && (prof - prof_target).abs() <= tol
            && took < Duration::from_secs(30);
        pass &= ok;
        parts.push(format!("{spec}: P {p:.3} H {h:.3} A {a:.3} profile {prof:.3} ({took:.1?})"));
    }
    outcome(pass, parts.join("; "))
}

fn sandwich() -> Outcome {
    let pc = measure(PRODUCT_CANTOR);
    let prof = packing_profile(&pc, 1, &cfg()).unwrap().value;
    let p08 = measure(PRODUCT_08);
    let prof08 = packing_profile(&p08, 1, &cfg()).unwrap().value;
    let ball08 = dim_p_ball(&p08, &cfg()).unwrap().value;
    outcome(
        (1.0 - 0.07..=1.0).contains(&prof) && (prof08 - ball08).abs() <= 0.1,
        format!("dim 1.26 product: profile {prof:.3}; dim 0.8 product: profile {prof08:.3} vs P {ball08:.3}"),
    )
}

fn projections() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for spec in [PRODUCT_CANTOR, PRODUCT_08, CANTOR_PLANE, GRID_PLANE] {
        let mu = measure(spec);
        let rep = projection_experiment(&mu, 1, 20, &cfg()).unwrap();
        let fm = rep.falconer_mattila;
        let below = rep.max <= rep.packing_profile + 0.1;
        let typical = (rep.median - rep.packing_profile).abs() <= 0.1;
        let lower = rep.median >= fm - 0.1;
        let mut ok = below && typical && lower;
        let mut line = format!(
            "{spec}: max {:.3} median {:.3} profile {:.3} FM {fm:.3}",
            rep.max, rep.median, rep.packing_profile
        );
        if spec == PRODUCT_08 {
            ok &= (rep.median - rep.dim_p).abs() <= 0.1;
            line += &format!(" P {:.3}", rep.dim_p);
        }
        pass &= ok;
        parts.push(line);
    }
    let took = start.elapsed();
    pass &= took < Duration::from_secs(120);
    outcome(pass, format!("{} ({took:.1?})", parts.join("; ")))
}

fn critical_points() -> Outcome {
    let thetas = [1.0, 0.5, 0.25, 0.125, 0.0625];
    let pc = measure(PRODUCT_CANTOR);
    let crit_pc = critical_point(&pc, &thetas, &cfg()).unwrap();
    let prof_pc = packing_profile(&pc, 1, &cfg()).unwrap().value;
    let cp = measure(CANTOR_PLANE);
    let crit_cp = critical_point(&cp, &thetas, &cfg()).unwrap();
    let prof_cp = packing_profile(&cp, 1, &cfg()).unwrap().value;
    let pass = crit_pc.value.value >= 0.9
        && prof_pc >= 1.0 - 0.07
        && crit_cp.value.value <= CANTOR_DIM + 0.1
        && prof_cp <= CANTOR_DIM + 0.07
        && crit_pc.max_increase <= 0.05
        && crit_cp.max_increase <= 0.05;
    outcome(
        pass,
        format!(
            "product: D {:.3} profile {prof_pc:.3} rise {:.3}; planar Cantor: D {:.3} profile {prof_cp:.3} rise {:.3}",
            crit_pc.value.value, crit_pc.max_increase, crit_cp.value.value, crit_cp.max_increase
        ),
    )
}

fn assouad_bound() -> Outcome {
    let thetas = [1.0, 0.5, 0.25];
    let mut pass = true;
    let mut parts = Vec::new();
    for spec in [CANTOR, PRODUCT_CANTOR, GRID_LINE] {
        let mu = measure(spec);
        let a = assouad_dim(&mu, &default_level_pairs(&mu)).unwrap().value;
        let p = dim_p_ball(&mu, &cfg()).unwrap().value;
        let n = mu.dim() as f64;
        let mut slack = f64::INFINITY;
        for th in thetas {
            let est = profile_dim(&mu, n, th, &cfg()).unwrap().value;
            slack = slack.min(est - assouad_profile_bound(a, p, th));
        }
        pass &= slack >= -0.1;
        parts.push(format!("{spec}: min slack {slack:.3}"));
    }
    outcome(pass, parts.join("; "))
}

fn profile_regularity() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for spec in [CANTOR, CANTOR_PLANE, GRID_PLANE, GRID_LINE, PRODUCT_CANTOR, PRODUCT_08] {
        let mu = measure(spec);
        let n = mu.dim();
        let grid: Vec<f64> = (1..=10 * n).map(|k| k as f64 / 10.0).collect();
        let curve = profile_curve(&mu, 1.0, &grid, &cfg()).unwrap();
        pass &= curve.max_slope <= 1.2 && curve.self_improving_excess <= 0.05;
        parts.push(format!(
            "{spec}: slope {:.2} excess {:.3}",
            curve.max_slope, curve.self_improving_excess
        ));
    }
    outcome(pass, parts.join("; "))
}

fn envelopes() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let cantor = measure("cantor:ratio=1/3,depth=8");
    let product = measure("cantor:ratio=1/3,depth=5*cantor:ratio=1/3,depth=5");
    let quarter = measure("cantor:ratio=1/4,depth=7");
    let cases: [(&str, &[f64], usize, f64, f64, u64, usize); 3] = [
        ("triadic Cantor", cantor.coords(), 1, 1.0, CANTOR_DIM, 3, 8),
        ("product Cantor", product.coords(), 2, 1.0, 2.0 * CANTOR_DIM, 3, 5),
        ("quarter Cantor", quarter.coords(), 1, 1.0, 0.5, 4, 7),
    ];
    for (name, pts, dim, c, t, base, depth) in cases {
        let tree = build_envelope(pts, dim, c, t, base, depth).unwrap();
        let contains = envelope_contains(&tree, pts);
        let structure = tree.check_structure().is_ok();
        let reg = verify_regularity(&tree.measure(), 200, (depth - 4, depth), 3).unwrap();
        let target = (tree.branching() as f64).ln() / (base as f64).ln();
        let padding = tree.padding(pts);
        let mut ok = contains && structure && (reg.achieved_exponent - target).abs() <= 0.1;
        if name == "triadic Cantor" {
            ok &= padding == 0;
        }
        pass &= ok;
        parts.push(format!(
            "{name}: M {} exponent {:.3} target {target:.3} padding {padding}",
            tree.branching(),
            reg.achieved_exponent
        ));
    }
    outcome(pass, parts.join("; "))
}

fn growth() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for spec in [CANTOR, GRID_LINE, GRID_PLANE] {
        let mu = measure(spec);
        let a = assouad_dim(&mu, &default_level_pairs(&mu)).unwrap().value;
        let rep = growth_check(&mu, a, 0.1, 0.5, 0.1, 10_000, &cfg()).unwrap();
        let control = growth_check(&mu, 0.5 * a, 0.1, 0.5, 0.1, 10_000, &cfg()).unwrap();
        pass &= rep.violation_fraction <= 0.05 && control.violations > 0;
        parts.push(format!(
            "{spec}: violations {:.2}%, understated s {:.2}%",
            100.0 * rep.violation_fraction,
            100.0 * control.violation_fraction
        ));
    }
    outcome(pass, parts.join("; "))
}

fn window_decay() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for spec in [CANTOR, GRID_LINE] {
        let mu = measure(spec);
        let a = assouad_dim(&mu, &default_level_pairs(&mu)).unwrap().value;
        let p = 0.9 * dim_p_ball(&mu, &cfg()).unwrap().value;
        let rep = window_decay_check(&mu, 0.5, 0.5, 0.1, p, a, 1.0, &cfg()).unwrap();
        pass &= rep.failure_fraction <= 0.05;
        parts.push(format!("{spec}: failures {:.2}%", 100.0 * rep.failure_fraction));
    }
    outcome(pass, parts.join("; "))
}

fn fbm_images() -> Outcome {
    let start = Instant::now();
    let mu = measure("cantor:ratio=1/3,depth=13");
    let rep = fbm_experiment(&mu, 0.5, 2, 8, &cfg()).unwrap();
    let inc = increment_scaling(0.5, 1024, 2, 500, &[2, 4, 6, 8], 5, false).unwrap();
    let took = start.elapsed();
    let pass = (rep.median - rep.profile_prediction).abs() <= 0.2
        && (rep.median - CANTOR_DIM / 0.5).abs() <= 0.2
        && (inc.exponent - 1.0).abs() <= 0.1
        && took < Duration::from_secs(180);
    outcome(
        pass,
        format!(
            "median {:.3}, profile prediction {:.3}, dim/α {:.3}, increment exponent {:.3} ({took:.1?})",
            rep.median,
            rep.profile_prediction,
            CANTOR_DIM / 0.5,
            inc.exponent
        ),
    )
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

/// Every numeric token in the two texts, paired up; `None` if the texts
/// differ anywhere else.
fn numeric_gap(a: &str, b: &str) -> Option<f64> {
    let split = |s: &str| -> Vec<String> {
        s.split(|c: char| c.is_whitespace() || ",[]{}:\"".contains(c))
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect()
    };
    let (ta, tb) = (split(a), split(b));
    if ta.len() != tb.len() {
        return None;
    }
    let mut worst = 0f64;
    for (x, y) in ta.iter().zip(&tb) {
        if x == y {
            continue;
        }
        match (x.parse::<f64>(), y.parse::<f64>()) {
            (Ok(u), Ok(v)) => worst = worst.max((u - v).abs() / u.abs().max(v.abs()).max(1.0)),
            _ => return None,
        }
    }
    Some(worst)
}

fn reproducibility() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let base = |cmd: Command, spec: &str, serial: bool, dir: &str| {
        let mut c = RunConfig::new(cmd);
        c.source = Some(MeasureSource::Generator(spec.into()));
        c.seed = 17;
        c.frames = 5;
        c.trials = 5;
        c.estimator.serial = serial;
        c.out_dir = root.path().join(dir);
        c
    };
    let mut identical = true;
    let mut gap = 0f64;
    for (cmd, spec) in [
        (Command::Estimate, "cantor:ratio=1/3,depth=9"),
        (Command::Verify, "cantor:ratio=1/3,depth=5*cantor:ratio=1/3,depth=5"),
        (Command::Fbm, "cantor:ratio=1/3,depth=8"),
    ] {
        let name = cmd.name();
        let s1 = base(cmd, spec, true, &format!("{name}-s1"));
        let s2 = base(cmd, spec, true, &format!("{name}-s2"));
        let par = base(cmd, spec, false, &format!("{name}-p"));
        for c in [&s1, &s2, &par] {
            run(c).unwrap();
        }
        let (a, b, p) = (read_tree(&s1.out_dir), read_tree(&s2.out_dir), read_tree(&par.out_dir));
        identical &= a == b;
        for ((na, fa), (np, fp)) in a.iter().zip(&p) {
            // Serial and parallel configs differ, so only the digest line may differ textually.
            let strip = |v: &[u8]| {
                String::from_utf8_lossy(v)
                    .lines()
                    .filter(|l| !l.contains("config_digest"))
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            match (na == np).then(|| numeric_gap(&strip(fa), &strip(fp))).flatten() {
                Some(g) => gap = gap.max(g),
                None => gap = f64::INFINITY,
            }
        }
        identical &= a.len() == p.len();
    }
    outcome(
        identical && gap <= 1e-12,
        format!("serial runs byte-identical: {identical}; parallel vs serial max gap {gap:.1e}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("kernel oracle equivalence", kernel_oracle),
        ("kernel chain inequality", kernel_chain),
        ("known-dimension recovery", known_dimensions),
        ("profile sandwich for products", sandwich),
        ("projection experiments", projections),
        ("critical point consistency", critical_points),
        ("Assouad profile bound", assouad_bound),
        ("profile regularity", profile_regularity),
        ("regular envelope", envelopes),
        ("growth lemma", growth),
        ("window decay", window_decay),
        ("fBm images", fbm_images),
        ("reproducibility", reproducibility),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} {:>2} {name}: {}", i + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
