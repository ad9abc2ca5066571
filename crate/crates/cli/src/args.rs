use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "moeppi",
    version,
    about = "Prediction-powered inference with mixtures of experts",
    long_about = None,
    after_help = "\
Examples:
  moeppi estimate --task mean --labeled lab.csv --unlabeled unlab.csv --variant plus
  moeppi compare --task linreg --labeled lab.csv --unlabeled unlab.csv --covariate-cols x1,x2 --intercept
  moeppi simulate --task mean --mode linear --n 500 --ratio 10 --reps 500 --seed 7
  moeppi power --n-grid 100,200,400,800 --reps 200 --seed 7

Environment:
  MOEPPI_THREADS  maximum number of worker threads (default: all cores)"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mixture-weighted estimate and confidence set from labeled/unlabeled CSVs
    Estimate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        task: TaskArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run every method (conventional, single-expert PPI, averaged PPI, mixture) on the same CSVs
    Compare {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        task: TaskArgs,
        /// Coordinate used to rank single experts (regression tasks; default 1 when there are two or more)
        #[arg(long)]
        coef: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Monte-Carlo coverage and width comparison on a synthetic design
    Simulate {
        /// mean, quantile, linreg or logreg
        #[arg(long, value_parser = parse_sim_task)]
        task: SimTask,
        /// Quantile level for the quantile task [default: 0.5]
        #[arg(long)]
        q: Option<f64>,
        /// Grid points for grid-scanned confidence sets
        #[arg(long)]
        grid_steps: Option<usize>,
        /// Labeled sample size
        #[arg(long, default_value_t = 500)]
        n: usize,
        /// Bootstrap replicates on the first replication (0 disables)
        #[arg(long, default_value_t = 1000)]
        bootstrap_b: usize,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Smallest labeled sample size reaching a target power for H0: mean = 0
    Power {
        /// Increasing labeled sample sizes, comma separated
        #[arg(long, value_delimiter = ',', default_value = "50,100,200,400,800,1600,3200")]
        n_grid: Vec<usize>,
        /// Required rejection rate
        #[arg(long, default_value_t = 0.8)]
        target_power: f64,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Labeled CSV with the response, covariates and expert predictions
    #[arg(long)]
    pub labeled: PathBuf,
    /// Unlabeled CSV with covariates and expert predictions
    #[arg(long)]
    pub unlabeled: PathBuf,
    /// Response column in the labeled file
    #[arg(long, default_value = "y")]
    pub response_col: String,
    /// Covariate columns, comma separated (regression tasks)
    #[arg(long, value_delimiter = ',')]
    pub covariate_cols: Vec<String>,
    /// Expert prediction columns, comma separated [default: every other labeled column]
    #[arg(long, value_delimiter = ',')]
    pub expert_cols: Vec<String>,
    /// Prepend a column of ones to the covariates
    #[arg(long)]
    pub intercept: bool,
}

#[derive(Debug, Args)]
pub struct TaskArgs {
    /// mean, quantile, linreg, logreg or mest:<mean|quantile|linear|logistic>
    #[arg(long, value_parser = parse_task)]
    pub task: TaskKind,
    /// Quantile level (quantile tasks) [default: 0.5]
    #[arg(long)]
    pub q: Option<f64>,
    /// Smoothing bandwidth (quantile tasks) [default: n^(-1/3)]
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Lower end of the parameter grid
    #[arg(long, requires = "grid_hi")]
    pub grid_lo: Option<f64>,
    /// Upper end of the parameter grid
    #[arg(long, requires = "grid_lo")]
    pub grid_hi: Option<f64>,
    /// Number of grid points per coordinate
    #[arg(long)]
    pub grid_steps: Option<usize>,
    /// Weight objective for mest tasks
    #[arg(long, value_enum)]
    pub weight_mode: Option<WeightModeArg>,
    /// Joint (Bonferroni) intervals for linreg
    #[arg(long)]
    pub bonferroni: bool,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Synthetic design: linear, nonlinear or gaussian (logreg always uses the logistic design)
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Strength of the nonlinear term
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Unlabeled-to-labeled size ratio N/n
    #[arg(long, default_value_t = 10.0)]
    pub ratio: f64,
    /// Monte-Carlo replications
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    /// Master seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Expert pool, comma separated kind:params with sds in units of the response sd
    /// (oracle_noise:SD, biased:OFFSET:SD, linear_proj:SD, pure_noise:SD, constant:C)
    /// [default: oracle_noise:0.2,biased:0.5:0.5,pure_noise:1]
    #[arg(long, value_delimiter = ',')]
    pub experts: Vec<String>,
    /// Methods to report, comma separated [default: all]
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Significance level
    #[arg(long, default_value_t = 0.05, value_parser = parse_alpha)]
    pub alpha: f64,
    /// Confidence construction; plus adds the unlabeled-sample variance, advisable unless N is far above n
    #[arg(long, value_enum, default_value_t = VariantArg::Basic)]
    pub variant: VariantArg,
    /// Write the report here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report format [default: json for estimate/compare, csv for simulate/power]
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Include per-grid-point diagnostics
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Basic,
    Plus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightModeArg {
    Standard,
    Refined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Linear,
    Nonlinear,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskKind {
    Mean,
    Quantile,
    Linreg,
    Logreg,
    Mest(String),
}

impl TaskKind {
    pub fn is_quantile(&self) -> bool {
        matches!(self, TaskKind::Quantile) || matches!(self, TaskKind::Mest(g) if g == "quantile")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimTask {
    Mean,
    Quantile,
    Linreg,
    Logreg,
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    match s {
        "mean" => Ok(TaskKind::Mean),
        "quantile" => Ok(TaskKind::Quantile),
        "linreg" => Ok(TaskKind::Linreg),
        "logreg" => Ok(TaskKind::Logreg),
        _ => match s.strip_prefix("mest:") {
            Some(g) if moeppi::mest::BUILTIN_GRADIENTS.contains(&g) => Ok(TaskKind::Mest(g.to_string())),
            Some(g) => Err(format!(
                "unknown gradient '{g}' (built-ins: {})",
                moeppi::mest::BUILTIN_GRADIENTS.join(", ")
            )),
            None => Err("expected mean, quantile, linreg, logreg or mest:<name>".into()),
        },
    }
}

fn parse_sim_task(s: &str) -> Result<SimTask, String> {
    match s {
        "mean" => Ok(SimTask::Mean),
        "quantile" => Ok(SimTask::Quantile),
        "linreg" => Ok(SimTask::Linreg),
        "logreg" => Ok(SimTask::Logreg),
        _ => Err("expected mean, quantile, linreg or logreg".into()),
    }
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let a: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err(format!("alpha must lie in (0, 1), got {a}"))
    }
}
