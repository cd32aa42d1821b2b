use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use monofem::cli::{exit_code, run, Experiment, ExperimentConfig, EXIT_INVALID_CONFIG};

/// Adaptive finite element experiments for quasilinear elliptic problems.
#[derive(Parser, Debug)]
#[command(name = "monofem", version)]
struct Args {
    /// apriori-p, apriori-h or adaptive
    experiment: String,
    /// Config file with `key = value` lines
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Use the sizes of the original study instead of desk-scale ones
    #[arg(long)]
    full_scale: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let result = args.experiment.parse::<Experiment>().and_then(|experiment| {
        let mut config = ExperimentConfig::load(&args.config)?;
        if args.full_scale {
            config.full_scale(experiment);
        }
        run(experiment, &config, &args.out)
    });
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", args.out.join(f).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
