mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ppmt_core::estimators::Method;
use ppmt_core::simgen::Case;
use ppmt_core::Error;

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "ppmt", version, about = "Evolutionary spectra of latent processes behind spike trains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a scenario and write the raster, latent path and true ESD.
    Simulate(SimulateArgs),
    /// Estimate the ESD of a raster with one method.
    Estimate(EstimateArgs),
    /// Tabulate relative MSE of estimates against the truth over several runs.
    Compare(CompareArgs),
    /// Write a dpss taper set as a text table.
    Dpss(DpssArgs),
    /// Run a verification experiment and write its report.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    time_bandwidth: Option<f64>,
    #[arg(long)]
    tapers: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    /// 500 s at 32 Hz, five windows.
    Desk,
    /// 2000 s at 32 Hz, twenty windows.
    Full,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long, value_parser = parse_case)]
    case: Option<Case>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    #[arg(long)]
    raster: Option<PathBuf>,
    /// Latent series, needed by the oracle.
    #[arg(long)]
    latent: Option<PathBuf>,
    /// Directly observed channels.
    #[arg(long)]
    continuous: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    continuous_channels: Option<Vec<usize>>,
    #[arg(long)]
    noise_variance: Option<f64>,
    #[arg(long)]
    window_length: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Run directories, each holding `truth.esd` and `<method>.esd` files.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Methods to tabulate; defaults to every method found in the first run.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Option<Vec<Method>>,
    /// Where to write the table; printed to stdout as well.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DpssArgs {
    #[arg(long)]
    length: usize,
    #[arg(long, default_value_t = 2.0)]
    time_bandwidth: f64,
    #[arg(long, default_value_t = 3)]
    count: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Experiment {
    /// Bias and spread of the clipped-logit multitaper estimate against L.
    Scaling,
    /// Direct multitaper on unit white noise.
    Calibration,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(value_enum)]
    experiment: Experiment,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Report file (TOML).
    #[arg(long)]
    out: PathBuf,
}

fn parse_case(s: &str) -> Result<Case, String> {
    match s.to_ascii_lowercase().as_str() {
        "case1" | "1" => Ok(Case::Case1),
        "case2" | "2" => Ok(Case::Case2),
        other => Err(format!("unknown case '{other}' (expected case1 or case2)")),
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn base_config(common: &Common) -> ppmt_core::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    if let Some(n) = common.n {
        cfg.layout.n = n;
    }
    if let Some(n_max) = common.n_max {
        cfg.layout.n_max = n_max;
    }
    if let Some(xi) = common.time_bandwidth {
        cfg.tapers.time_bandwidth = xi;
    }
    if let Some(p) = common.tapers {
        cfg.tapers.count = p;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> ppmt_core::Result<()> {
    match cli.command {
        Command::Simulate(a) => {
            let mut cfg = base_config(&a.common)?;
            match a.preset {
                Some(Preset::Desk) => cfg.scenario.samples = 16_000,
                Some(Preset::Full) => cfg.scenario.samples = 64_000,
                None => {}
            }
            if let Some(case) = a.case {
                cfg.scenario.case = case;
            }
            if let Some(l) = a.trials {
                cfg.scenario.trials = l;
            }
            if a.out.is_some() {
                cfg.paths.out = a.out;
            }
            commands::simulate(cfg)
        }
        Command::Estimate(a) => {
            let mut cfg = base_config(&a.common)?;
            if let Some(m) = a.method {
                cfg.estimate.method = m;
            }
            if let Some(c) = a.continuous_channels {
                cfg.estimate.continuous_channels = c;
            }
            if a.noise_variance.is_some() {
                cfg.estimate.noise_variance = a.noise_variance;
            }
            if let Some(w) = a.window_length {
                cfg.scenario.window_length = w;
            }
            for (slot, flag) in [
                (&mut cfg.paths.raster, a.raster),
                (&mut cfg.paths.latent, a.latent),
                (&mut cfg.paths.continuous, a.continuous),
                (&mut cfg.paths.out, a.out),
            ] {
                if flag.is_some() {
                    *slot = flag;
                }
            }
            commands::estimate(cfg)
        }
        Command::Compare(a) => commands::compare(&a.runs, a.methods.as_deref(), a.out.as_deref()),
        Command::Dpss(a) => commands::dpss(a.length, a.time_bandwidth, a.count, &a.out),
        Command::Verify(a) => {
            let mut cfg = match &a.config {
                Some(path) => RunConfig::load(path)?,
                None => RunConfig::default(),
            };
            if let Some(seed) = a.seed {
                cfg.scaling.seed = seed;
                cfg.calibration.seed = seed;
            }
            if let Some(r) = a.replicates {
                cfg.scaling.replicates = r;
                cfg.calibration.replicates = r;
            }
            match a.experiment {
                Experiment::Scaling => commands::verify_scaling(&cfg.scaling, &a.out),
                Experiment::Calibration => commands::verify_calibration(&cfg.calibration, &a.out),
            }
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    if err.is_validation() || matches!(err, Error::Io(_)) {
        2
    } else {
        3
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
