use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use packdim::harness::{run, Command, RunConfig};

/// Packing dimension profiles, projections and fBm images of atomic measures.
#[derive(Parser)]
#[command(name = "packdim", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a measure from a generator spec and save it.
    Generate {
        /// Generator spec, e.g. `cantor:ratio=1/3,depth=11` or `A*B` for a product.
        spec: Option<String>,
        #[command(flatten)]
        opts: Opts,
    },
    /// Estimate dimensions, packing profiles and the critical point.
    Estimate(Opts),
    /// Run projection and fBm experiments and check the dimension relations.
    Verify(Opts),
    /// Build the regular envelope of a measure's support.
    Envelope(Opts),
    /// Sample fBm images of a measure on [0,1].
    Fbm(Opts),
}

/// Every flag mirrors the config-file key of the same name (dashes become
/// underscores). Flags override the config file; PACKDIM_SEED overrides both.
#[derive(Args)]
struct Opts {
    /// Key-value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Generator spec for the measure.
    #[arg(long)]
    measure: Option<String>,
    /// Measure file.
    #[arg(long)]
    input: Option<String>,
    /// Output directory for reports.
    #[arg(long)]
    out: Option<String>,
    /// Measure file written by `generate`.
    #[arg(long, short = 'o')]
    output: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Run every parallel loop serially.
    #[arg(long)]
    serial: bool,
    #[arg(long)]
    r_lo: Option<String>,
    #[arg(long)]
    r_hi: Option<String>,
    #[arg(long)]
    ratio: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    n_refs: Option<String>,
    #[arg(long)]
    upper_span: Option<String>,
    #[arg(long)]
    lower_span: Option<String>,
    #[arg(long)]
    kernel_span: Option<String>,
    #[arg(long)]
    resolution_factor: Option<String>,
    #[arg(long)]
    min_octaves: Option<String>,
    /// Comma-separated target dimensions.
    #[arg(long)]
    m: Option<String>,
    /// Comma-separated, strictly decreasing θ values in (0,1].
    #[arg(long)]
    thetas: Option<String>,
    #[arg(long)]
    s_grid: Option<String>,
    #[arg(long)]
    curve_theta: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    frames: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    ensemble: Option<String>,
    /// Comma-separated subset of `projection,fbm`.
    #[arg(long)]
    experiments: Option<String>,
    #[arg(long)]
    c: Option<String>,
    #[arg(long)]
    t: Option<String>,
    #[arg(long)]
    base: Option<String>,
    #[arg(long)]
    depth: Option<String>,
    #[arg(long)]
    envelope_samples: Option<String>,
    #[arg(long)]
    envelope_levels: Option<String>,
}

impl Opts {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("measure", &self.measure),
            ("input", &self.input),
            ("out", &self.out),
            ("output", &self.output),
            ("seed", &self.seed),
            ("r_lo", &self.r_lo),
            ("r_hi", &self.r_hi),
            ("ratio", &self.ratio),
            ("q", &self.q),
            ("dt", &self.dt),
            ("tau", &self.tau),
            ("n_refs", &self.n_refs),
            ("upper_span", &self.upper_span),
            ("lower_span", &self.lower_span),
            ("kernel_span", &self.kernel_span),
            ("resolution_factor", &self.resolution_factor),
            ("min_octaves", &self.min_octaves),
            ("m", &self.m),
            ("thetas", &self.thetas),
            ("s_grid", &self.s_grid),
            ("curve_theta", &self.curve_theta),
            ("alpha", &self.alpha),
            ("d", &self.d),
            ("frames", &self.frames),
            ("trials", &self.trials),
            ("ensemble", &self.ensemble),
            ("experiments", &self.experiments),
            ("c", &self.c),
            ("t", &self.t),
            ("base", &self.base),
            ("depth", &self.depth),
            ("envelope_samples", &self.envelope_samples),
            ("envelope_levels", &self.envelope_levels),
        ]
    }
}

fn build(command: Command, spec: Option<String>, opts: &Opts) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::new(command);
    if let Some(path) = &opts.config {
        cfg.apply_file(path)
            .with_context(|| format!("reading config {}", path.display()))?;
    }
    if let Some(spec) = spec {
        cfg.apply("measure", &spec)?;
    }
    for (key, value) in opts.pairs() {
        if let Some(v) = value {
            cfg.apply(key, v).with_context(|| format!("--{}", key.replace('_', "-")))?;
        }
    }
    if opts.serial {
        cfg.estimator.serial = true;
    }
    cfg.apply_env()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, spec, opts) = match cli.command {
        Cmd::Generate { spec, opts } => (Command::Generate, spec, opts),
        Cmd::Estimate(o) => (Command::Estimate, None, o),
        Cmd::Verify(o) => (Command::Verify, None, o),
        Cmd::Envelope(o) => (Command::Envelope, None, o),
        Cmd::Fbm(o) => (Command::Fbm, None, o),
    };
    let cfg = match build(command, spec, &opts) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
