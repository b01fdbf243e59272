use std::path::PathBuf;
use std::str::FromStr;

use cascade_lab::cascade::{CascadeConfig, Mode};
use cascade_lab::walk::TestFunction;
use cascade_lab::{Error, ModelParams};
use clap::{Parser, ValueEnum};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Criticality,
    Mean,
    TailSup,
    FourthMoment,
    Barrier,
    Modulus,
    Variation,
    ManyToOne,
    Ballot,
    ExpSum,
    Identities,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Criticality => "criticality",
            Experiment::Mean => "mean",
            Experiment::TailSup => "tail_sup",
            Experiment::FourthMoment => "fourth_moment",
            Experiment::Barrier => "barrier",
            Experiment::Modulus => "modulus",
            Experiment::Variation => "variation",
            Experiment::ManyToOne => "many_to_one",
            Experiment::Ballot => "ballot",
            Experiment::ExpSum => "exp_sum",
            Experiment::Identities => "identities",
        }
    }

    /// Experiments whose statements concern the boundary `gamma + beta = 1`.
    pub fn expects_boundary(self) -> bool {
        matches!(self, Experiment::TailSup | Experiment::FourthMoment | Experiment::Modulus | Experiment::Variation)
    }

    fn default_trials(self) -> u64 {
        match self {
            Experiment::Identities => 32,
            Experiment::Modulus | Experiment::Variation => 1_000,
            _ => 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Breadth,
    Stream,
}

/// Test function spec: `one`, `identity`, `indicator[:threshold]`,
/// `exp_decay[:rate]` or `poly:c0,c1,...`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionArg(pub TestFunction);

impl FromStr for FunctionArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let num = |a: Option<&str>, default: f64| -> Result<f64, String> {
            a.map_or(Ok(default), |a| a.parse().map_err(|e| format!("bad number {a:?}: {e}")))
        };
        let f = match head {
            "one" => TestFunction::constant(1.0),
            "identity" => TestFunction::Identity,
            "indicator" => TestFunction::IndicatorAbove(num(arg, 0.0)?),
            "exp_decay" => TestFunction::ExpDecay(num(arg, 1.0)?),
            "poly" => TestFunction::Polynomial(
                arg.ok_or("poly needs coefficients")?
                    .split(',')
                    .map(|c| c.trim().parse().map_err(|e| format!("bad coefficient {c:?}: {e}")))
                    .collect::<Result<_, _>>()?,
            ),
            other => return Err(format!("unknown test function {other:?}")),
        };
        Ok(FunctionArg(f))
    }
}

#[derive(Debug, Parser)]
#[command(name = "cascade-lab", version, about = "Simulate complex branching random walks and check their estimates")]
pub struct Cli {
    #[arg(long, value_enum)]
    pub experiment: Experiment,
    #[arg(long, default_value_t = 0.7, allow_negative_numbers = true)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
    pub beta: f64,
    /// Tree depth `n` (the maximal depth for `barrier`).
    #[arg(long, default_value_t = 12)]
    pub depth: u32,
    /// Monte Carlo trials; trees for `identities`.
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = cascade_lab::cascade::DEFAULT_EPSILON0)]
    pub epsilon0: f64,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub l_grid: Option<Vec<u32>>,
    /// Depths to repeat the experiment at, instead of `--depth`.
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<u32>>,
    #[arg(long, value_enum, default_value = "breadth")]
    pub mode: ModeArg,
    #[arg(long, env = "CASCADE_LAB_THREADS")]
    pub threads: Option<usize>,
    /// Report destination; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Test function for `many_to_one`.
    #[arg(long, default_value = "identity")]
    pub function: FunctionArg,
    /// Lower end of the ballot window.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub a: f64,
    /// Upper end of the ballot window; unbounded when absent.
    #[arg(long, allow_negative_numbers = true)]
    pub b: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    /// Initial horizon of `exp_sum`.
    #[arg(long, default_value_t = 64)]
    pub horizon: u64,
    /// Also writes the partial-sum process of the first tree as CSV, with a
    /// JSON summary next to it.
    #[arg(long)]
    pub export_process: Option<PathBuf>,
}

/// Everything that determines a report body.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub gamma: f64,
    pub beta: f64,
    pub depth: u32,
    pub trials: u64,
    pub seed: u64,
    pub epsilon0: f64,
    pub mode: Mode,
    pub x_grid: Vec<f64>,
    pub l_grid: Vec<u32>,
    pub n_grid: Vec<u32>,
    pub function: TestFunction,
    pub a: f64,
    /// `None` is `+inf`.
    pub b: Option<f64>,
    pub kappa: f64,
    pub horizon: u64,
    pub format: Format,
    #[serde(skip)]
    pub output: Option<PathBuf>,
    #[serde(skip)]
    pub threads: Option<usize>,
    #[serde(skip)]
    pub export_process: Option<PathBuf>,
    #[serde(skip)]
    pub params: ModelParams,
    #[serde(skip)]
    pub cascade: CascadeConfig,
}

fn default_x_grid(e: Experiment) -> Vec<f64> {
    match e {
        Experiment::TailSup => vec![0.5, 1.0, 2.0, 3.0, 4.0],
        Experiment::FourthMoment => vec![2.0],
        Experiment::Barrier => vec![2.0, 4.0, 6.0],
        Experiment::ManyToOne => vec![0.0, 1.0, 3.0],
        Experiment::Ballot => vec![1.0],
        Experiment::ExpSum => vec![0.0, 1.0, 2.0, 4.0],
        _ => Vec::new(),
    }
}

fn default_l_grid(n: u32) -> Vec<u32> {
    if n >= 8 {
        (4..=n - 4).collect()
    } else {
        (2..=n.saturating_sub(2)).collect()
    }
}

impl RunConfig {
    pub fn from_cli(cli: Cli) -> Result<Self, Error> {
        let params = ModelParams::new(cli.gamma, cli.beta)?;
        let cascade = CascadeConfig::new(cli.epsilon0, cascade_lab::cascade::DEFAULT_BREADTH_CAP)?;
        let trials = cli.trials.unwrap_or_else(|| cli.experiment.default_trials());
        if trials == 0 {
            return Err(Error::InvalidParameter("trials must be positive".into()));
        }
        if cli.threads == Some(0) {
            return Err(Error::InvalidParameter("threads must be positive".into()));
        }
        let x_grid = cli.x_grid.unwrap_or_else(|| default_x_grid(cli.experiment));
        if x_grid.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("x grid must be finite".into()));
        }
        Ok(Self {
            experiment: cli.experiment,
            gamma: cli.gamma,
            beta: cli.beta,
            depth: cli.depth,
            trials,
            seed: cli.seed,
            epsilon0: cli.epsilon0,
            mode: match cli.mode {
                ModeArg::Breadth => Mode::Breadth,
                ModeArg::Stream => Mode::Stream,
            },
            x_grid,
            l_grid: cli.l_grid.unwrap_or_else(|| default_l_grid(cli.depth)),
            n_grid: cli.n_grid.unwrap_or_else(|| vec![cli.depth]),
            function: cli.function.0,
            a: cli.a,
            b: cli.b,
            kappa: cli.kappa,
            horizon: cli.horizon,
            format: cli.format,
            output: cli.output,
            threads: cli.threads,
            export_process: cli.export_process,
            params,
            cascade,
        })
    }
}
