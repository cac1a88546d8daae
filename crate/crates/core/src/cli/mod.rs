//! Command-line front end: `estimate`, `mc` and `simulate`.

pub mod input;
pub mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use input::{load_csv, read_dataset, write_panel_csv, Columns};
pub use report::{
    run_estimation, summary_csv, to_csv, to_json, EstimationReport, OutputFormat, RunConfig,
    REPORT_SCHEMA,
};

use crate::data::Mode;
use crate::error::{Error, Result};
use crate::estimators::{Estimator, TauGrid};
use crate::inference::{substream, BootstrapConfig, BootstrapScheme};
use crate::simulation::{run_mc, simulate_dgp, table1_csv, table2_csv, DgpSpec, McConfig, McResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "qdid", version, about = "Quantile treatment effects on the treated in difference-in-differences designs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate effects per covariate cell from a long-format CSV.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo study and write a results table.
    Mc(McArgs),
    /// Write one draw of a simulation design as a long-format CSV.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Panel,
    Rcs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeArg {
    Multinomial,
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Ddid,
    Cic,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Ddid => Estimator::Ddid,
            EstimatorArg::Cic => Estimator::Cic,
        }
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "panel")]
    pub mode: ModeArg,
    #[arg(long, default_value = "unit_id")]
    pub unit_col: String,
    #[arg(long, default_value = "period")]
    pub period_col: String,
    #[arg(long, default_value = "y")]
    pub outcome_col: String,
    #[arg(long, default_value = "treated")]
    pub treatment_col: String,
    /// Comma-separated covariate column names.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    pub tau_start: f64,
    #[arg(long, default_value_t = 0.95)]
    pub tau_end: f64,
    #[arg(long, default_value_t = 0.01)]
    pub tau_step: f64,
    /// Explicit comma-separated levels; overrides the range flags.
    #[arg(long, value_delimiter = ',')]
    pub taus: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "multinomial")]
    pub scheme: SchemeArg,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "ddid")]
    pub estimators: Vec<EstimatorArg>,
    /// Also report the effect pooled over cells.
    #[arg(long)]
    pub unconditional: bool,
    #[arg(long, value_enum, default_value = "json")]
    pub format: FormatArg,
    #[arg(long, default_value_t = 2)]
    pub min_cell_size: usize,
    /// Report destination; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Optional per-cell summary CSV (KS decision, estimates and SEs).
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,0.9")]
    pub summary_levels: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub dgp: u8,
    /// Units per arm; comma-separated. Defaults to 100,200,500 for design 1
    /// and 200 for design 2.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', default_value = "0,1")]
    pub te: Vec<f64>,
    /// Copula violation levels for design 2.
    #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.5")]
    pub rho: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    /// Bootstrap iterations per replication; 0 skips rejection rates.
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,0.9")]
    pub taus: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub estimators: Option<Vec<EstimatorArg>>,
    /// Table destination; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Optional JSON dump of every result with its configuration.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub dgp: u8,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 0.0)]
    pub te: f64,
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

impl EstimateArgs {
    pub fn run_config(&self) -> Result<RunConfig> {
        let grid = match &self.taus {
            Some(t) => TauGrid::new(t.clone())?,
            None => TauGrid::range(self.tau_start, self.tau_end, self.tau_step)?,
        };
        let mut estimators: Vec<Estimator> = Vec::new();
        for e in &self.estimators {
            let e = Estimator::from(*e);
            if !estimators.contains(&e) {
                estimators.push(e);
            }
        }
        let config = RunConfig {
            mode: match self.mode {
                ModeArg::Panel => Mode::Panel,
                ModeArg::Rcs => Mode::Rcs,
            },
            input: Some(self.input.clone()),
            columns: Columns {
                unit: self.unit_col.clone(),
                period: self.period_col.clone(),
                outcome: self.outcome_col.clone(),
                treatment: self.treatment_col.clone(),
                covariates: self.covariates.clone(),
            },
            grid,
            bootstrap: BootstrapConfig {
                scheme: match self.scheme {
                    SchemeArg::Multinomial => BootstrapScheme::Multinomial,
                    SchemeArg::Dirichlet => BootstrapScheme::Dirichlet,
                },
                iterations: self.bootstrap,
                alpha: self.alpha,
                seed: self.seed,
            },
            estimators,
            unconditional: self.unconditional,
            format: match self.format {
                FormatArg::Json => OutputFormat::Json,
                FormatArg::Csv => OutputFormat::Csv,
            },
            min_cell_size: self.min_cell_size,
        };
        config.bootstrap.validate()?;
        Ok(config)
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run_estimate(args: &EstimateArgs) -> Result<()> {
    let config = args.run_config()?;
    let dataset = load_csv(&args.input, &config.columns, config.mode)?;
    let report = run_estimation(&config, &dataset)?;
    let text = match config.format {
        OutputFormat::Json => to_json(&report)? + "\n",
        OutputFormat::Csv => to_csv(&report),
    };
    emit(args.output.as_deref(), &text)?;
    if let Some(path) = &args.summary {
        fs::write(path, summary_csv(&report, &args.summary_levels))?;
    }
    Ok(())
}

/// Runs the Monte Carlo grid described by `args` and renders its table.
pub fn run_mc_command(args: &McArgs) -> Result<(String, Vec<McResult>)> {
    let estimators: Vec<Estimator> = match &args.estimators {
        Some(list) => list.iter().map(|&e| e.into()).collect(),
        None if args.dgp == 1 => vec![Estimator::Ddid, Estimator::Cic],
        None => vec![Estimator::Ddid],
    };
    let mut config = McConfig::new(args.reps, args.seed).with_estimators(&estimators);
    config.taus = args.taus.clone();
    if args.bootstrap > 0 {
        config = config.with_bootstrap(args.bootstrap, args.alpha);
    }
    let sizes = args
        .n
        .clone()
        .unwrap_or_else(|| if args.dgp == 1 { vec![100, 200, 500] } else { vec![200] });
    let mut specs = Vec::new();
    for &te in &args.te {
        if args.dgp == 1 {
            specs.extend(sizes.iter().map(|&n| DgpSpec::dgp1(n, te)));
        } else {
            for &rho in &args.rho {
                specs.extend(sizes.iter().map(|&n| DgpSpec::dgp2(n, te, rho)));
            }
        }
    }
    let results = specs
        .iter()
        .map(|spec| run_mc(spec, &config))
        .collect::<Result<Vec<_>>>()?;
    let table = if args.dgp == 1 {
        table1_csv(&results)
    } else {
        table2_csv(&results)
    };
    Ok((table, results))
}

fn run_simulate(args: &SimulateArgs) -> Result<()> {
    let spec = if args.dgp == 1 {
        DgpSpec::dgp1(args.n, args.te)
    } else {
        DgpSpec::dgp2(args.n, args.te, args.rho)
    };
    let dataset = simulate_dgp(&spec, &mut substream(args.seed, 0, 0))?;
    let mut buf = Vec::new();
    write_panel_csv(&dataset, &mut buf)?;
    emit(args.output.as_deref(), &String::from_utf8_lossy(&buf))
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Validation(_) | Error::Input { .. } | Error::Csv(_) | Error::InvalidGrid(_) => {
            EXIT_VALIDATION
        }
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        _ => EXIT_FAILURE,
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let outcome = match &cli.command {
        Command::Estimate(args) => run_estimate(args),
        Command::Mc(args) => run_mc_command(args).and_then(|(table, results)| {
            emit(args.output.as_deref(), &table)?;
            if let Some(path) = &args.json {
                fs::write(path, serde_json::to_string_pretty(&results)? + "\n")?;
            }
            Ok(())
        }),
        Command::Simulate(args) => run_simulate(args),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("qdid: {err}");
            exit_code(&err)
        }
    }
}
