//! Run configuration, experiment orchestration and report emission.
//!
//! A run is described by a [`RunConfig`], filled from defaults, then a
//! key-value config file, then command-line flags, and finally the
//! `PACKDIM_SEED` environment variable. Every file written by a run carries
//! the tool version, the master seed and a digest of the configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::envelope::{build_envelope, envelope_contains, verify_regularity, DyadicTree, RegularityReport};
use crate::error::{param, Error, Result};
use crate::estimate::{
    assouad_dim, assouad_profile_bound, critical_point, default_level_pairs, dim_h_ball, dim_p_ball,
    exceptional_dim_bound, packing_profile, profile_curve, CriticalPoint, DimensionEstimate, EstimatorConfig,
    ExceptionalTarget, ProfileCurve,
};
use crate::fbm::{fbm_experiment, increment_scaling, sample_fbm, trials_csv, FbmReport, IncrementScaling};
use crate::measure::{
    load_measure, make_ifs_measure, make_product_measure, make_sparse_scale_measure, save_measure, IfsSystem,
    PointMeasure,
};
use crate::projection::{projection_experiment, ProjectionReport, Verdict, DEFAULT_THETAS};

pub const TOOL: &str = "packdim";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Environment variable overriding the master seed.
pub const SEED_ENV: &str = "PACKDIM_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Generate,
    Estimate,
    Verify,
    Envelope,
    Fbm,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Estimate => "estimate",
            Command::Verify => "verify",
            Command::Envelope => "envelope",
            Command::Fbm => "fbm",
        }
    }
}

/// Where the measure of a run comes from.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureSource {
    /// A generator spec such as `cantor:ratio=1/3,depth=11`.
    Generator(String),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnvelopeParams {
    pub c: f64,
    pub t: f64,
    pub base: u64,
    pub depth: usize,
    pub samples: usize,
    /// Level window of the regularity check; defaults to the deepest
    /// levels that fit.
    pub levels: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub source: Option<MeasureSource>,
    pub estimator: EstimatorConfig,
    pub m: Vec<usize>,
    pub thetas: Vec<f64>,
    /// Profile indices of the exported curve; empty means `0.1, 0.2, …, n`.
    pub s_grid: Vec<f64>,
    pub curve_theta: f64,
    pub alpha: f64,
    pub d: usize,
    pub frames: usize,
    pub trials: usize,
    /// Fields in the increment-variance ensemble of `fbm`; 0 skips it.
    pub ensemble: usize,
    /// Experiments run by `verify`: `projection`, `fbm`.
    pub experiments: Vec<String>,
    pub envelope: EnvelopeParams,
    pub seed: u64,
    /// Output directory; not part of the digest.
    #[serde(skip)]
    pub out_dir: PathBuf,
    /// Measure file written by `generate`; not part of the digest.
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(command: Command) -> RunConfig {
        RunConfig {
            command,
            source: None,
            estimator: EstimatorConfig::default(),
            m: vec![1],
            thetas: DEFAULT_THETAS.to_vec(),
            s_grid: Vec::new(),
            curve_theta: 1.0,
            alpha: 0.5,
            d: 2,
            frames: 20,
            trials: 8,
            ensemble: 0,
            experiments: vec!["projection".into()],
            envelope: EnvelopeParams {
                c: 1.0,
                t: 0.6309297535714574,
                base: 3,
                depth: 7,
                samples: 200,
                levels: None,
            },
            seed: 0,
            out_dir: PathBuf::from("."),
            output: None,
        }
    }

    /// Sets one field from its config-file key.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let e = &mut self.estimator;
        match key {
            "measure" => self.source = Some(MeasureSource::Generator(v.to_string())),
            "input" => self.source = Some(MeasureSource::File(PathBuf::from(v))),
            "out" => self.out_dir = PathBuf::from(v),
            "output" => self.output = Some(PathBuf::from(v)),
            "seed" => self.seed = parse_int(key, v)?,
            "r_lo" => e.r_lo = parse_num(key, v)?,
            "r_hi" => e.r_hi = parse_num(key, v)?,
            "ratio" => e.ratio = parse_num(key, v)?,
            "q" => e.q = parse_num(key, v)?,
            "dt" => e.dt = parse_num(key, v)?,
            "tau" => e.tau = parse_num(key, v)?,
            "n_refs" => e.n_refs = parse_int(key, v)?,
            "upper_span" => e.upper_span = parse_num(key, v)?,
            "lower_span" => e.lower_span = parse_num(key, v)?,
            "kernel_span" => e.kernel_span = parse_num(key, v)?,
            "resolution_factor" => e.resolution_factor = parse_num(key, v)?,
            "min_octaves" => e.min_octaves = parse_num(key, v)?,
            "serial" => e.serial = parse_bool(key, v)?,
            "m" => self.m = parse_list(key, v, |s| parse_int(key, s))?,
            "thetas" => self.thetas = parse_list(key, v, |s| parse_num(key, s))?,
            "s_grid" => self.s_grid = parse_list(key, v, |s| parse_num(key, s))?,
            "curve_theta" => self.curve_theta = parse_num(key, v)?,
            "alpha" => self.alpha = parse_num(key, v)?,
            "d" => self.d = parse_int(key, v)?,
            "frames" => self.frames = parse_int(key, v)?,
            "trials" => self.trials = parse_int(key, v)?,
            "ensemble" => self.ensemble = parse_int(key, v)?,
            "experiments" => self.experiments = parse_list(key, v, |s| Ok(s.to_string()))?,
            "c" => self.envelope.c = parse_num(key, v)?,
            "t" => self.envelope.t = parse_num(key, v)?,
            "base" => self.envelope.base = parse_int(key, v)?,
            "depth" => self.envelope.depth = parse_int(key, v)?,
            "envelope_samples" => self.envelope.samples = parse_int(key, v)?,
            "envelope_levels" => {
                let l: Vec<usize> = parse_list(key, v, |s| parse_int(key, s))?;
                if l.len() != 2 {
                    return Err(param("envelope_levels takes two levels, `lo,hi`"));
                }
                self.envelope.levels = Some((l[0], l[1]));
            }
            _ => return Err(param(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a key-value config file: one `key = value` per line, `#`
    /// starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("expected `key = value`, found `{line}`"),
            })?;
            self.apply(k.trim(), v).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Replaces the master seed with `PACKDIM_SEED` when it is set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = parse_int(SEED_ENV, &v)?;
        }
        Ok(())
    }

    /// Checks parameters against module preconditions.
    pub fn validate(&self) -> Result<()> {
        self.estimator.validate()?;
        if self.source.is_none() {
            return Err(param("no measure given: set `measure` or `input`"));
        }
        if self.command == Command::Generate && self.output.is_none() {
            return Err(param("generate needs an output file"));
        }
        if self.m.is_empty() || self.m.contains(&0) {
            return Err(param("m must list positive integers"));
        }
        if self.thetas.is_empty() || self.thetas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(param("thetas must be a strictly decreasing list"));
        }
        if self.thetas.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) || !(self.curve_theta > 0.0 && self.curve_theta <= 1.0) {
            return Err(param("θ values must lie in (0,1]"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) || self.d == 0 {
            return Err(param("fBm needs α in (0,1) and d ≥ 1"));
        }
        if self.frames < 5 || self.trials < 5 {
            return Err(param("frames and trials must be at least 5"));
        }
        for x in &self.experiments {
            if x != "projection" && x != "fbm" {
                return Err(param(format!("unknown experiment `{x}`")));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form of the configuration.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("configuration serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// The estimator settings with the master seed installed.
    pub fn estimator(&self) -> EstimatorConfig {
        EstimatorConfig {
            seed: self.seed,
            ..self.estimator.clone()
        }
    }
}

fn parse_num(key: &str, v: &str) -> Result<f64> {
    let bad = || param(format!("`{key}`: cannot read `{v}` as a number"));
    let x = if let Some((a, b)) = v.split_once('/') {
        let (a, b): (f64, f64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        a / b
    } else if let Some((a, b)) = v.split_once('^') {
        let (a, b): (f64, f64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        a.powf(b)
    } else {
        v.parse().map_err(|_| bad())?
    };
    if x.is_finite() {
        Ok(x)
    } else {
        Err(bad())
    }
}

fn parse_int<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| param(format!("`{key}`: cannot read `{v}` as a non-negative integer")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(param(format!("`{key}`: expected true or false, found `{v}`"))),
    }
}

fn parse_list<T>(key: &str, v: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let items: Vec<&str> = v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(param(format!("`{key}` needs at least one value")));
    }
    items.into_iter().map(f).collect()
}

/// Builds a measure from a generator spec.
///
/// Grammar: `kind:key=value,…`, or `A*B` for the product of two specs.
/// Kinds: `cantor` (ratio, depth), `grid` (dim, base, depth), `sparse`
/// (h, p, depth, seed), `dirac` (at, coordinates separated by `/`). One-
/// dimensional kinds accept `embed=n` and `axis=k` to place the measure on
/// a coordinate axis of `[0,1]^n`.
pub fn generate_measure(spec: &str) -> Result<PointMeasure> {
    if let Some((a, b)) = spec.split_once('*') {
        let (ma, mb) = (generate_measure(a)?, generate_measure(b)?);
        return make_product_measure(&ma, &mb).map(|m| m.with_label(spec.to_string()));
    }
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
    for item in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| param(format!("generator parameter `{item}` is not `key=value`")))?;
        kv.insert(k.trim(), v.trim());
    }
    let mut take = |k: &str| kv.remove(k);
    fn need<'a>(kind: &str, k: &str, v: Option<&'a str>) -> Result<&'a str> {
        v.ok_or_else(|| param(format!("generator `{kind}` needs `{k}`")))
    }
    let mu = match kind.trim() {
        "cantor" => {
            let ratio = parse_num("ratio", need(kind, "ratio", take("ratio"))?)?;
            let depth = parse_int("depth", need(kind, "depth", take("depth"))?)?;
            make_ifs_measure(&IfsSystem::cantor(ratio)?, depth)?
        }
        "grid" => {
            let dim = parse_int("dim", take("dim").unwrap_or("1"))?;
            let base = parse_int("base", take("base").unwrap_or("2"))?;
            let depth = parse_int("depth", need(kind, "depth", take("depth"))?)?;
            make_ifs_measure(&IfsSystem::uniform_grid(dim, base)?, depth)?
        }
        "sparse" => {
            let h = parse_num("h", need(kind, "h", take("h"))?)?;
            let p = parse_num("p", need(kind, "p", take("p"))?)?;
            let depth = parse_int("depth", need(kind, "depth", take("depth"))?)?;
            let seed = parse_int("seed", take("seed").unwrap_or("0"))?;
            make_sparse_scale_measure(h, p, depth, seed)?
        }
        "dirac" => {
            let at = need(kind, "at", take("at"))?;
            let x: Vec<f64> = at.split('/').map(|c| parse_num("at", c)).collect::<Result<_>>()?;
            PointMeasure::dirac(&x)?
        }
        other => return Err(param(format!("unknown generator `{other}`"))),
    };
    let embed = take("embed");
    let axis = take("axis");
    let mu = match embed {
        Some(n) => mu.embed_on_axis(parse_int("embed", n)?, parse_int("axis", axis.unwrap_or("0"))?)?,
        None if axis.is_some() => return Err(param("`axis` needs `embed`")),
        None => mu,
    };
    if let Some(k) = kv.keys().next() {
        return Err(param(format!("generator `{kind}` does not take `{k}`")));
    }
    Ok(mu.with_label(spec.to_string()))
}

/// A failed run, split by the exit code it maps to.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    /// Bad usage, configuration or input (exit code 2).
    #[error("{0}")]
    Config(Error),
    /// The computation itself failed (exit code 3).
    #[error("{0}")]
    Compute(Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Compute(_) => 3,
        }
    }
}

/// Files written by a run and the main report.
#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub report: serde_json::Value,
}

#[derive(Serialize)]
struct Provenance<'a> {
    tool: &'a str,
    version: &'a str,
    seed: u64,
    config_digest: String,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    #[serde(flatten)]
    provenance: Provenance<'a>,
    command: &'a str,
    measure: MeasureSummary,
    results: T,
}

#[derive(Serialize)]
struct MeasureSummary {
    label: Option<String>,
    dim: usize,
    atoms: usize,
}

impl MeasureSummary {
    fn of(mu: &PointMeasure) -> MeasureSummary {
        MeasureSummary {
            label: mu.meta().label.clone(),
            dim: mu.dim(),
            atoms: mu.len(),
        }
    }
}

struct Writer<'a> {
    cfg: &'a RunConfig,
    digest: String,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn provenance(&self) -> Provenance<'static> {
        Provenance {
            tool: TOOL,
            version: VERSION,
            seed: self.cfg.seed,
            config_digest: self.digest.clone(),
        }
    }

    fn header_line(&self) -> String {
        format!("# {TOOL} {VERSION} seed={} config_digest={}\n", self.cfg.seed, self.digest)
    }

    fn write(&mut self, name: &str, body: &str) -> std::result::Result<(), RunError> {
        let path = self.cfg.out_dir.join(name);
        fs::write(&path, body).map_err(|e| RunError::Config(e.into()))?;
        self.files.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, mu: &PointMeasure, results: T) -> std::result::Result<serde_json::Value, RunError> {
        let doc = Envelope {
            provenance: self.provenance(),
            command: self.cfg.command.name(),
            measure: MeasureSummary::of(mu),
            results,
        };
        let value = serde_json::to_value(&doc).map_err(|e| RunError::Compute(e.into()))?;
        let text = serde_json::to_string_pretty(&value).map_err(|e| RunError::Compute(e.into()))?;
        self.write(name, &(text + "\n"))?;
        Ok(value)
    }

    fn csv(&mut self, name: &str, table: &str) -> std::result::Result<(), RunError> {
        let body = self.header_line() + table;
        self.write(name, &body)
    }
}

fn compute<T>(r: Result<T>) -> std::result::Result<T, RunError> {
    r.map_err(RunError::Compute)
}

fn config<T>(r: Result<T>) -> std::result::Result<T, RunError> {
    r.map_err(RunError::Config)
}

/// Loads or generates the run's measure; failures are configuration errors.
pub fn load_source(cfg: &RunConfig) -> std::result::Result<PointMeasure, RunError> {
    match &cfg.source {
        Some(MeasureSource::Generator(spec)) => config(generate_measure(spec)),
        Some(MeasureSource::File(path)) => config(load_measure(path)),
        None => Err(RunError::Config(param("no measure given"))),
    }
}

/// Executes a validated configuration.
pub fn run(cfg: &RunConfig) -> std::result::Result<Outcome, RunError> {
    config(cfg.validate())?;
    if cfg.command != Command::Generate {
        fs::create_dir_all(&cfg.out_dir).map_err(|e| RunError::Config(e.into()))?;
    }
    let mu = load_source(cfg)?;
    let mut w = Writer {
        cfg,
        digest: cfg.digest(),
        files: Vec::new(),
    };
    let report = match cfg.command {
        Command::Generate => cmd_generate(cfg, mu, &mut w)?,
        Command::Estimate => cmd_estimate(cfg, &mu, &mut w)?,
        Command::Verify => cmd_verify(cfg, &mu, &mut w)?,
        Command::Envelope => cmd_envelope(cfg, &mu, &mut w)?,
        Command::Fbm => cmd_fbm(cfg, &mu, &mut w)?,
    };
    Ok(Outcome { files: w.files, report })
}

fn cmd_generate(cfg: &RunConfig, mut mu: PointMeasure, w: &mut Writer) -> std::result::Result<serde_json::Value, RunError> {
    let path = cfg.output.clone().expect("validated");
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| RunError::Config(e.into()))?;
    }
    let prov = serde_json::json!({
        "tool": TOOL,
        "version": VERSION,
        "seed": cfg.seed,
        "config_digest": w.digest,
        "source": cfg.source,
    });
    mu.meta_mut().provenance = Some(prov.clone());
    save_measure(&mu, &path).map_err(RunError::Config)?;
    w.files.push(path.clone());
    w.files.push(crate::measure::sidecar_path(&path));
    Ok(serde_json::json!({
        "provenance": prov,
        "measure": { "label": mu.meta().label, "dim": mu.dim(), "atoms": mu.len() },
    }))
}

/// Assouad estimate with the default level pairs; a single atom has none
/// and gets 0.
fn assouad_default(mu: &PointMeasure) -> Result<DimensionEstimate> {
    let pairs = default_level_pairs(mu);
    if pairs.is_empty() {
        return Ok(DimensionEstimate {
            method: "assouad_dyadic".into(),
            value: 0.0,
            half_width: 0.0,
            window: (1.0, 1.0),
            q: 1.0,
            seed: 0,
            n_refs: 0,
            saturated: false,
        });
    }
    assouad_dim(mu, &pairs)
}

#[derive(Serialize)]
struct EstimateResults {
    dim_h: DimensionEstimate,
    dim_p: DimensionEstimate,
    dim_a: DimensionEstimate,
    packing_profiles: Vec<(usize, DimensionEstimate)>,
    profile_curve: ProfileCurve,
    critical_point: CriticalPoint,
}

fn default_s_grid(n: usize) -> Vec<f64> {
    (1..=(10 * n)).map(|k| k as f64 / 10.0).collect()
}

fn cmd_estimate(cfg: &RunConfig, mu: &PointMeasure, w: &mut Writer) -> std::result::Result<serde_json::Value, RunError> {
    let ec = cfg.estimator();
    let s_grid = if cfg.s_grid.is_empty() { default_s_grid(mu.dim()) } else { cfg.s_grid.clone() };
    let mut profiles = Vec::new();
    for &m in &cfg.m {
        profiles.push((m, compute(packing_profile(mu, m, &ec))?));
    }
    let res = EstimateResults {
        dim_h: compute(dim_h_ball(mu, &ec))?,
        dim_p: compute(dim_p_ball(mu, &ec))?,
        dim_a: compute(assouad_default(mu))?,
        packing_profiles: profiles,
        profile_curve: compute(profile_curve(mu, cfg.curve_theta, &s_grid, &ec))?,
        critical_point: compute(critical_point(mu, &cfg.thetas, &ec))?,
    };
    let mut curve = String::from("s,profile\n");
    for (s, f) in &res.profile_curve.points {
        let _ = writeln!(curve, "{s},{f}");
    }
    w.csv("profile_curve.csv", &curve)?;
    let mut crit = String::from("theta,profile\n");
    for (th, e) in &res.critical_point.per_theta {
        let _ = writeln!(crit, "{th},{}", e.value);
    }
    w.csv("critical_point.csv", &crit)?;
    w.json("estimate.json", mu, res)
}

#[derive(Serialize)]
struct BoundRow {
    theta: f64,
    profile: f64,
    bound: f64,
}

#[derive(Serialize)]
struct VerifyResults {
    verdicts: Vec<Verdict>,
    projections: Vec<ProjectionReport>,
    fbm: Option<FbmReport>,
    assouad_bounds: Vec<BoundRow>,
    exceptional_full: Vec<(usize, f64)>,
    exceptional_preserve: Vec<(usize, f64)>,
}

fn cmd_verify(cfg: &RunConfig, mu: &PointMeasure, w: &mut Writer) -> std::result::Result<serde_json::Value, RunError> {
    let n = mu.dim();
    if let Some(m) = cfg.m.iter().find(|m| **m > n) {
        return Err(RunError::Config(param(format!("m = {m} exceeds the ambient dimension {n}"))));
    }
    let want_fbm = cfg.experiments.iter().any(|x| x == "fbm");
    if want_fbm && n != 1 {
        return Err(RunError::Config(Error::DimensionMismatch { expected: 1, found: n }));
    }
    let ec = cfg.estimator();
    let mut verdicts = Vec::new();
    let mut projections = Vec::new();
    if cfg.experiments.iter().any(|x| x == "projection") {
        for &m in &cfg.m {
            let rep = compute(projection_experiment(mu, m, cfg.frames, &ec))?;
            verdicts.extend(rep.verdicts.iter().cloned().map(|mut v| {
                v.id = format!("{}[m={m}]", v.id);
                v
            }));
            let mut table = String::from("index,seed,frame_hash,dim_p\n");
            for r in &rep.frames {
                let _ = writeln!(table, "{},{},{},{}", r.index, r.seed, r.frame_hash, r.dim_p);
            }
            w.csv(&format!("frames_m{m}.csv"), &table)?;
            projections.push(rep);
        }
    }
    let fbm = if want_fbm {
        let rep = compute(fbm_experiment(mu, cfg.alpha, cfg.d, cfg.trials, &ec))?;
        verdicts.extend(rep.verdicts.iter().cloned());
        w.csv("fbm_trials.csv", &trials_csv(&rep))?;
        Some(rep)
    } else {
        None
    };

    // Profile lower bounds from the Assouad estimate along the θ list.
    let p = compute(dim_p_ball(mu, &ec))?.value;
    let a = compute(assouad_default(mu))?.value;
    let crit = compute(critical_point(mu, &cfg.thetas, &ec))?;
    let tol = 2.0 * ec.tau;
    let mut assouad_bounds = Vec::new();
    for (th, e) in &crit.per_theta {
        let bound = assouad_profile_bound(a, p, *th);
        verdicts.push(Verdict {
            id: format!("assouad_profile_bound[theta={th}]"),
            statement: "the ambient profile at θ is at least dim_A − (dim_A − dim_P)/θ".into(),
            lhs: e.value,
            rhs: bound,
            tolerance: tol,
            applicable: true,
            pass: e.value >= bound - tol,
        });
        assouad_bounds.push(BoundRow {
            theta: *th,
            profile: e.value,
            bound,
        });
    }
    let exceptional_full = cfg
        .m
        .iter()
        .map(|&m| (m, exceptional_dim_bound(n, m, crit.value.value, ExceptionalTarget::Full)))
        .collect();
    let exceptional_preserve = cfg
        .m
        .iter()
        .map(|&m| (m, exceptional_dim_bound(n, m, a, ExceptionalTarget::Preserve)))
        .collect();

    let mut table = String::from("id,lhs,rhs,tolerance,applicable,pass\n");
    for v in &verdicts {
        let _ = writeln!(table, "{},{},{},{},{},{}", v.id, v.lhs, v.rhs, v.tolerance, v.applicable, v.pass);
    }
    w.csv("verdicts.csv", &table)?;
    let res = VerifyResults {
        verdicts,
        projections,
        fbm,
        assouad_bounds,
        exceptional_full,
        exceptional_preserve,
    };
    w.json("verify.json", mu, res)
}

#[derive(Serialize)]
struct EnvelopeResults {
    branching: u64,
    base: u64,
    depth: usize,
    padding: usize,
    contains_input: bool,
    structure: std::result::Result<(), String>,
    additivity_error: f64,
    regularity: RegularityReport,
}

fn cmd_envelope(cfg: &RunConfig, mu: &PointMeasure, w: &mut Writer) -> std::result::Result<serde_json::Value, RunError> {
    let ep = &cfg.envelope;
    let tree: DyadicTree = build_envelope(mu.coords(), mu.dim(), ep.c, ep.t, ep.base, ep.depth).map_err(|e| match e {
        Error::Parameter(_) | Error::InfeasibleBranching { .. } => RunError::Config(e),
        other => RunError::Compute(other),
    })?;
    let levels = ep.levels.unwrap_or((ep.depth.saturating_sub(4).max(1).min(ep.depth.saturating_sub(1)), ep.depth));
    let regularity = compute(verify_regularity(&tree.measure(), ep.samples, levels, cfg.seed))?;
    let res = EnvelopeResults {
        branching: tree.branching(),
        base: tree.base(),
        depth: tree.depth(),
        padding: tree.padding(mu.coords()),
        contains_input: envelope_contains(&tree, mu.coords()),
        structure: tree.check_structure(),
        additivity_error: tree.measure().additivity_error(),
        regularity,
    };
    w.write("envelope_tree.txt", &(w.header_line() + &tree.to_text()))?;
    w.json("envelope.json", mu, res)
}

#[derive(Serialize)]
struct FbmResults {
    experiment: FbmReport,
    increments: Option<IncrementScaling>,
}

fn cmd_fbm(cfg: &RunConfig, mu: &PointMeasure, w: &mut Writer) -> std::result::Result<serde_json::Value, RunError> {
    if mu.dim() != 1 {
        return Err(RunError::Config(Error::DimensionMismatch {
            expected: 1,
            found: mu.dim(),
        }));
    }
    let ec = cfg.estimator();
    let experiment = compute(fbm_experiment(mu, cfg.alpha, cfg.d, cfg.trials, &ec))?;
    let increments = if cfg.ensemble > 0 {
        Some(compute(increment_scaling(cfg.alpha, 1024, cfg.d, cfg.ensemble, &[2, 4, 6, 8], cfg.seed, ec.serial))?)
    } else {
        None
    };
    w.csv("fbm_trials.csv", &trials_csv(&experiment))?;
    let sample = compute(sample_fbm(cfg.alpha, 256, cfg.d, cfg.seed))?;
    w.write("fbm_field_sample.txt", &(w.header_line() + &sample.to_text()))?;
    w.json("fbm.json", mu, FbmResults { experiment, increments })
}
