use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use survsl::app::{cmd_evaluate, cmd_fit, cmd_predict, cmd_simulate, RunConfig, BUNDLE_FILE, REPORT_FILE};
use survsl::data::{ColumnSchema, Scenario, SyntheticConfig};
use survsl::Error;

#[derive(Parser)]
#[command(name = "survsl", version, about = "Super learners for right-censored survival prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Ph,
    Interaction,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset and write data.csv plus truth.json.
    Simulate {
        /// TOML file with generator settings; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, value_enum)]
        scenario: Option<ScenarioArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the configured super learner; writes report.json and model.bundle.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Training CSV (overrides data.path).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Held-out CSV scored after fitting (overrides data.test_path).
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict survival curves for new covariate rows.
    Predict {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        covariates: PathBuf,
        /// Comma-separated prediction times.
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,
        /// Column holding row identifiers; row numbers are used otherwise.
        #[arg(long)]
        id_column: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a bundle on a labelled test file and print the metric report.
    Evaluate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Defaults to the horizon stored in the bundle.
        #[arg(long)]
        horizon: Option<f64>,
        /// TOML file whose [data.columns] section describes the test file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_toml<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate { config, n, scenario, seed, out } => {
            let mut cfg: SyntheticConfig = match &config {
                Some(p) => load_toml(p)?,
                None => SyntheticConfig::default(),
            };
            if let Some(n) = n {
                cfg.n = n;
            }
            if let Some(s) = scenario {
                cfg.scenario = match s {
                    ScenarioArg::Ph => Scenario::Ph,
                    ScenarioArg::Interaction => Scenario::Interaction,
                };
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cmd_simulate(&cfg, &out)?;
            info!("wrote {} records to {}", cfg.n, out.display());
        }
        Command::Fit { config, data, test, seed, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if data.is_some() {
                cfg.data.path = data;
            }
            if test.is_some() {
                cfg.data.test_path = test;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let report = cmd_fit(&cfg, &out)?;
            for w in &report.warnings {
                log::warn!("{w}");
            }
            info!("wrote {} and {} to {}", REPORT_FILE, BUNDLE_FILE, out.display());
        }
        Command::Predict { bundle, covariates, times, id_column, out } => {
            let n = cmd_predict(&bundle, &covariates, &times, id_column.as_deref(), &out)?;
            info!("wrote predictions for {n} individuals to {}", out.display());
        }
        Command::Evaluate { bundle, test, horizon, config, out } => {
            let columns = match &config {
                Some(p) => RunConfig::load(p)?.data.columns,
                None => ColumnSchema::default(),
            };
            let tau = match horizon {
                Some(t) => t,
                None => survsl::app::Bundle::read(&bundle)?.horizon,
            };
            let report = cmd_evaluate(&bundle, &test, &columns, tau)?;
            let mut json = serde_json::to_string_pretty(&report)?;
            json.push('\n');
            match out {
                Some(p) => std::fs::write(&p, json).map_err(|e| Error::from(e).context(format!("writing {}", p.display())))?,
                None => print!("{json}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
