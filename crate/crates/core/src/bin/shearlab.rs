use clap::Parser;
use shearlab::experiment::{run, Experiment, ExperimentConfig, RunError, DEFAULT_OUT};
use std::path::PathBuf;
use std::process::ExitCode;

/// Run one numerical experiment and write its CSV and plot artifacts.
#[derive(Parser, Debug)]
#[command(name = "shearlab", version, after_help = "Parameter overrides are given as trailing `--key value` or `key=value` pairs.\nUse `shearlab <experiment> --list` to see the accepted keys and defaults.")]
struct Cli {
    /// Experiment name, e.g. robin-rates, dispersion, plan, acceptance.
    experiment: String,
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root; defaults to $SHEARLAB_OUT, then ./shearlab-out.
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed for randomized initial data.
    #[arg(long)]
    seed: Option<u64>,
    /// Print the parameter schema and exit.
    #[arg(long)]
    list: bool,
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, hide = true)]
    overrides: Vec<String>,
}

fn configure(cli: &Cli) -> Result<ExperimentConfig, RunError> {
    let experiment: Experiment = cli.experiment.parse()?;
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os("SHEARLAB_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let mut config = ExperimentConfig::new(experiment, out);
    if let Some(path) = &cli.config {
        config.apply_file(path)?;
    }
    let mut rest = cli.overrides.iter();
    while let Some(flag) = rest.next() {
        let (key, value) = match flag.strip_prefix("--").unwrap_or(flag).split_once('=') {
            Some((k, v)) => (k, v.to_string()),
            None if !flag.starts_with("--") => {
                return Err(RunError::Config { key: flag.clone(), message: "expected --key value or key=value".into() });
            }
            None => {
                let key = &flag[2..];
                let v = rest.next().ok_or_else(|| RunError::Config { key: key.to_string(), message: "missing value".into() })?;
                (key, v.clone())
            }
        };
        config.set(key, &value)?;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match configure(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("shearlab: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if cli.list {
        for (key, default, doc) in config.experiment.schema() {
            println!("{key:<16} {default:<24} {doc}");
        }
        return ExitCode::SUCCESS;
    }
    match run(&config) {
        Ok(report) => {
            print!("{}", report.summary());
            if report.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("shearlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
