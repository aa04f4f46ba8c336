use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scramble::analysis::FitModel;
use scramble_lab::config::{ExperimentConfig, ExperimentKind};
use scramble_lab::error::{LabError, LabResult};
use scramble_lab::runner::{refit, run_experiment, sweep, RunOptions};
use scramble_lab::{DEFAULT_OUT_DIR, OUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "scramble", version, about = "OTOC and Loschmidt-echo experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its curves and manifest.
    Run(RunArgs),
    /// Run one experiment per value of a parameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// One of delta, beta, g, d_b, n_fermions.
        #[arg(long)]
        parameter: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Fit a stored curve file and print the result as JSON.
    Fit {
        csv: PathBuf,
        /// exponential, gaussian or early_growth; model selection when omitted.
        #[arg(long)]
        model: Option<String>,
        /// Time window as `lo,hi`.
        #[arg(long, value_delimiter = ',')]
        window: Option<Vec<f64>>,
        /// Fit `1 - values` (for curves stored as `1 - F`).
        #[arg(long)]
        complement: bool,
    },
    /// Check Monte Carlo Haar averages against the exact formula.
    HaarCheck(RunArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Experiment kind when no config file is given.
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long = "d-b")]
    d_b: Option<usize>,
    #[arg(long)]
    n_fermions: Option<usize>,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    n_points: Option<usize>,
    #[arg(long)]
    realizations: Option<usize>,
}

impl RunArgs {
    fn config(&self, fallback: Option<ExperimentKind>) -> LabResult<ExperimentConfig> {
        let mut c = match (&self.config, &self.experiment, fallback) {
            (Some(path), _, _) => ExperimentConfig::load(path)?,
            (None, Some(name), _) => ExperimentConfig::new(name.parse()?),
            (None, None, Some(kind)) => ExperimentConfig::new(kind),
            (None, None, None) => return Err(LabError::Config("give --config or --experiment".into())),
        };
        if let (Some(name), Some(_)) = (&self.experiment, &self.config) {
            if name.parse::<ExperimentKind>()? != c.experiment {
                return Err(LabError::Config("--experiment disagrees with the config file".into()));
            }
        }
        if let Some(kind) = fallback {
            if c.experiment != kind {
                return Err(LabError::Config(format!("this subcommand runs {} experiments", kind.name())));
            }
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(v) = self.delta {
            c.set_parameter("delta", v)?;
        }
        if let Some(v) = self.beta {
            c.model.beta = Some(v);
        }
        if let Some(v) = self.d_b {
            c.model.d_b = Some(v);
        }
        if let Some(v) = self.n_fermions {
            c.model.n_fermions = Some(v);
        }
        if let Some(v) = self.g {
            c.model.g = Some(v);
        }
        if let Some(v) = self.t_max {
            c.grid.t_max = Some(v);
        }
        if let Some(v) = self.n_points {
            c.grid.n_points = Some(v);
        }
        if let Some(v) = self.realizations {
            c.n_realizations = Some(v);
        }
        Ok(c)
    }

    fn options(&self, c: &ExperimentConfig) -> RunOptions {
        let out_dir = self
            .out
            .clone()
            .or_else(|| c.output_path.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        RunOptions { threads: self.threads, out_dir }
    }
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn parse_model(name: &str) -> LabResult<FitModel> {
    match name {
        "exponential" => Ok(FitModel::Exponential),
        "gaussian" => Ok(FitModel::Gaussian),
        "early_growth" => Ok(FitModel::EarlyGrowth),
        other => Err(LabError::Config(format!("unknown fit model '{other}'"))),
    }
}

fn execute(cli: Cli) -> LabResult<()> {
    match cli.command {
        Command::Run(args) => {
            let c = args.config(None)?;
            let report = run_experiment(&c.resolve()?, &args.options(&c))?;
            println!("{}", report.manifest_path.display());
        }
        Command::HaarCheck(args) => {
            let c = args.config(Some(ExperimentKind::HaarCheck))?;
            let report = run_experiment(&c.resolve()?, &args.options(&c))?;
            for (k, v) in &report.manifest.extras {
                println!("{k} = {v:.6e}");
            }
            println!("{}", report.manifest_path.display());
        }
        Command::Sweep { run, parameter, values } => {
            let c = run.config(None)?;
            let (_, path) = sweep(&c, &parameter, &values, &run.options(&c))?;
            println!("{}", path.display());
        }
        Command::Fit { csv, model, window, complement } => {
            let model = model.as_deref().map(parse_model).transpose()?;
            let window = match window.as_deref() {
                None => None,
                Some(&[lo, hi]) => Some((lo, hi)),
                Some(_) => return Err(LabError::Config("--window takes two values, lo,hi".into())),
            };
            print_json(&refit(&csv, model, window, complement)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
