use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nngp_cert::harness::{run_config, HarnessError, Overrides, Pipeline, RunConfig};

/// Infinite-width kernels, robustness certificates and their empirical checks.
#[derive(Parser)]
#[command(name = "nngp-cert", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certified radii for a start point.
    Certify(Common),
    /// Covering bounds, lattice enumeration and the entropy integral.
    Covering(Common),
    /// Monte-Carlo boundary-crossing probability of the limiting process.
    GpCrossing(Common),
    /// Zero counts along segments against Rice's formula.
    GpRice(Common),
    /// Supremum tails and expected suprema.
    GpTails(Common),
    /// Empirical covariance of finite networks against the kernel.
    VerifyKernel(Common),
    /// Attack distances across input dimensions.
    AttackScaling(Common),
    /// Percentile profile of attack distances.
    Profile(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run config; without it every field takes its default.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Architecture JSON document.
    #[arg(long)]
    arch: Option<PathBuf>,
}

impl Command {
    fn split(self) -> (Pipeline, Common) {
        match self {
            Command::Certify(c) => (Pipeline::Certify, c),
            Command::Covering(c) => (Pipeline::Covering, c),
            Command::GpCrossing(c) => (Pipeline::GpCrossing, c),
            Command::GpRice(c) => (Pipeline::GpRice, c),
            Command::GpTails(c) => (Pipeline::GpTails, c),
            Command::VerifyKernel(c) => (Pipeline::VerifyKernel, c),
            Command::AttackScaling(c) => (Pipeline::AttackScaling, c),
            Command::Profile(c) => (Pipeline::Profile, c),
        }
    }
}

fn load(pipeline: Pipeline, common: &Common) -> Result<RunConfig, HarnessError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load_as(path, Some(pipeline))?,
        None => {
            let mut cfg = RunConfig::new(pipeline, 0);
            cfg.seed = None;
            cfg
        }
    };
    cfg.apply(&Overrides { seed: common.seed, out: common.out.clone(), arch: common.arch.clone() });
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (pipeline, common) = Cli::parse().command.split();
    let result = load(pipeline, &common).and_then(|cfg| run_config(&cfg).map(|o| (cfg, o)));
    match result {
        Ok((cfg, outcome)) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            let verdict = if outcome.passed() { "PASS" } else { "FAIL" };
            println!("{pipeline}: {verdict} ({} of {} checks failed, config {})", outcome.failures, outcome.checks, cfg.hash());
            ExitCode::from(u8::from(!outcome.passed()))
        }
        Err(e) => {
            let code = e.exit_code();
            let err = anyhow::Error::new(e).context(format!("{pipeline} failed"));
            eprintln!("error: {err:#}");
            ExitCode::from(code as u8)
        }
    }
}
