mod args;
mod beamform;
mod evaluate;
mod simulate;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;

use args::{Cli, Command, FileConfig};

/// Settings shared by every subcommand after merging flags, environment
/// and config file.
pub struct Layout {
    pub out: PathBuf,
}

impl Layout {
    pub fn scenes_dir(&self, explicit: Option<PathBuf>) -> PathBuf {
        explicit.unwrap_or_else(|| self.out.join("scenes"))
    }

    pub fn systems_dir(&self) -> PathBuf {
        self.out.join("systems")
    }
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => "error",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.global.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let jobs = cli.global.jobs.or(file.jobs);
    if let Some(n) = jobs {
        anyhow::ensure!(n >= 1, "--jobs must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("starting the worker pool")?;
    }
    let ctx = Layout {
        out: cli.global.out.or(file.out).unwrap_or_else(|| PathBuf::from("mtmvdr-out")),
    };
    match cli.command {
        Command::Simulate(mut a) => {
            a.fill_from(file.simulate);
            simulate::run(&ctx, a)
        }
        Command::Beamform(mut a) => {
            a.fill_from(file.beamform);
            beamform::run(&ctx, a)
        }
        Command::Evaluate(mut a) => {
            a.fill_from(file.evaluate);
            evaluate::run(&ctx, a)
        }
    }
}

pub fn create_dir(path: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.global.verbose, cli.global.quiet);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
