//! `mfeit`: simulate multi-frequency EIT boundary data on disk phantoms,
//! reconstruct spectroscopic admittivity images, detect inclusions from
//! meromorphic boundary functionals, fuse image stacks and run the
//! interface-condition convergence study.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use error::CliError;
use mfeit_core::asymptotics::SignConvention;

#[derive(Parser)]
#[command(name = "mfeit", version, about = "multi-frequency EIT toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SignFlag {
    Plus,
    Minus,
}

impl From<SignFlag> for SignConvention {
    fn from(v: SignFlag) -> Self {
        match v {
            SignFlag::Plus => SignConvention::PlusHalf,
            SignFlag::Minus => SignConvention::MinusHalf,
        }
    }
}

#[derive(clap::Args)]
struct CommonArgs {
    /// run configuration JSON
    #[arg(long)]
    config: PathBuf,
    /// output directory (defaults to the config's out_dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// override the config's RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// half-identity convention for the trace functional
    #[arg(long, value_enum)]
    sign_flag: Option<SignFlag>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate boundary datasets and homogeneous references
    Simulate(CommonArgs),
    /// Reconstruct per-frequency admittivity images from datasets
    Reconstruct(CommonArgs),
    /// Recover inclusion geometry from high-frequency data
    Detect {
        #[command(flatten)]
        common: CommonArgs,
        /// bypass the data pipeline: JSON with contour samples of dG/dx
        #[arg(long)]
        bypass: Option<PathBuf>,
    },
    /// Fuse the reconstructed image stack by PCA
    Fuse(CommonArgs),
    /// Run the interface-condition convergence study
    ValidateJump(CommonArgs),
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    let (common, bypass) = match &cli.command {
        Command::Simulate(c)
        | Command::Reconstruct(c)
        | Command::Fuse(c)
        | Command::ValidateJump(c) => (c, None),
        Command::Detect { common, bypass } => (common, bypass.as_deref()),
    };
    let mut loaded =
        config::load_config(&common.config).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(seed) = common.seed {
        loaded.run.seed = seed;
    }
    if let Some(flag) = common.sign_flag {
        loaded.run.sign_flag = flag.into();
    }
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| loaded.base_dir.join(&loaded.run.out_dir));
    std::fs::create_dir_all(&out).map_err(|e| CliError::Io(e.to_string()))?;
    match &cli.command {
        Command::Simulate(_) => commands::cmd_simulate(&loaded, &common.config, &out),
        Command::Reconstruct(_) => commands::cmd_reconstruct(&loaded, &common.config, &out),
        Command::Fuse(_) => commands::cmd_fuse(&loaded, &common.config, &out),
        Command::ValidateJump(_) => commands::cmd_validate_jump(&loaded, &common.config, &out),
        Command::Detect { .. } => commands::cmd_detect(
            &loaded,
            &common.config,
            &out,
            bypass,
            common.sign_flag.map(Into::into),
        ),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mfeit: error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
