//! Monte-Carlo coverage and width comparison across methods.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::data::{Alpha, GridSpec, LabeledDataset, ThetaGrid, UnlabeledDataset, Variant, WeightVector};
use crate::error::{Error, Result};
use crate::linreg::{conventional_linreg, moe_linreg, LinRegOptions};
use crate::logreg::{
    conventional_logreg_set, mle_logistic, moe_logreg_set, ConventionalLogRegTest, LogRegConfig, LogRegTest,
    DEFAULT_AXIS_STEPS, DEFAULT_SE_SPAN,
};
use crate::mean::{conventional_mean, moe_mean, ppi_mean};
use crate::quantile::{
    conventional_quantile_set, conventional_quantile_test_at, default_grid, quantile_point_estimate, quantile_set,
    quantile_test_at, QuantileConfig, QuantileWeights,
};

use super::bootstrap::bootstrap_variance;
use super::experts::{apply_experts, ExpertPool};
use super::generator::{DataMode, Design, GeneratorConfig};
use super::rng;

/// Regression coefficient whose interval width and coverage are reported
/// (the first slope; index 0 is the intercept).
pub const TARGET_COEF: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Task {
    Mean,
    Quantile { q: f64 },
    Linreg,
    Logreg,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Mean => "mean",
            Task::Quantile { .. } => "quantile",
            Task::Linreg => "linreg",
            Task::Logreg => "logreg",
        }
    }

    fn check_mode(&self, mode: DataMode) -> Result<()> {
        let ok = match self {
            Task::Logreg => mode == DataMode::Logistic,
            _ => mode != DataMode::Logistic,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("task {} cannot run on the {mode} design", self.name())))
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Task {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Conventional,
    /// Single-expert PPI with the widest realized interval.
    PpiWorst,
    /// PPI on the equal-weight average of the experts.
    PpiMean,
    /// Single-expert PPI with the narrowest realized interval.
    PpiBest,
    PpiMoe,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Conventional, Method::PpiWorst, Method::PpiMean, Method::PpiBest, Method::PpiMoe];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Conventional => "conventional",
            Method::PpiWorst => "ppi-worst",
            Method::PpiMean => "ppi-mean",
            Method::PpiBest => "ppi-best",
            Method::PpiMoe => "ppi-moe",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

/// Unlabeled sample size rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NRule {
    Fixed(usize),
    /// `N = round(ratio * n)`.
    Ratio(f64),
}

impl NRule {
    pub fn resolve(self, n: usize) -> Result<usize> {
        let big_n = match self {
            NRule::Fixed(m) => m,
            NRule::Ratio(r) if r > 0.0 && r.is_finite() => ((r * n as f64).round() as usize).max(1),
            NRule::Ratio(r) => return Err(Error::InvalidConfig(format!("ratio N/n must be positive, got {r}"))),
        };
        if big_n < 1 {
            return Err(Error::InvalidConfig("unlabeled sample size must be at least 1".into()));
        }
        Ok(big_n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageConfig {
    pub task: Task,
    pub methods: Vec<Method>,
    pub generator: GeneratorConfig,
    pub pool: ExpertPool,
    pub n: usize,
    pub big_n: NRule,
    pub reps: usize,
    pub alpha: Alpha,
    pub variant: Variant,
    /// Bootstrap replicates on the first replication; 0 skips the bootstrap.
    pub bootstrap_b: usize,
    /// Overrides the number of grid points of grid-scan tasks.
    pub grid_steps: Option<usize>,
    /// Build full confidence sets for grid-scan tasks; when off only the
    /// truth itself is tested and widths are not reported.
    pub measure_width: bool,
    pub seed: u64,
}

impl CoverageConfig {
    pub fn new(task: Task, generator: GeneratorConfig, pool: ExpertPool, n: usize) -> Self {
        let seed = generator.seed;
        Self {
            task,
            methods: Method::ALL.to_vec(),
            generator,
            pool,
            n,
            big_n: NRule::Ratio(10.0),
            reps: 500,
            alpha: Alpha::default(),
            variant: Variant::Basic,
            bootstrap_b: 0,
            grid_steps: None,
            measure_width: true,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub coverage: f64,
    /// `sqrt(c (1 - c) / R)`.
    pub coverage_se: f64,
    pub mean_width: Option<f64>,
    pub width_ratio_vs_conventional: Option<f64>,
    pub bootstrap_var: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationResult {
    pub task: Task,
    pub data_mode: DataMode,
    pub n: usize,
    pub big_n: usize,
    pub reps: usize,
    pub alpha: Alpha,
    pub variant: Variant,
    pub seed: u64,
    pub truth: Vec<f64>,
    pub methods: Vec<MethodSummary>,
}

impl SimulationResult {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Outcome {
    pub covered: bool,
    pub width: f64,
}

/// Which estimators a replication must run.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Needs {
    singles: bool,
    average: bool,
    moe: bool,
}

impl Needs {
    pub(crate) fn for_methods(methods: &[Method]) -> Self {
        Self {
            singles: methods.iter().any(|m| matches!(m, Method::PpiBest | Method::PpiWorst)),
            average: methods.contains(&Method::PpiMean),
            moe: methods.contains(&Method::PpiMoe),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Evaluated {
    pub conventional: Outcome,
    pub singles: Vec<Outcome>,
    pub average: Option<Outcome>,
    pub moe: Option<Outcome>,
}

impl Evaluated {
    /// Outcome of `method` and, for hindsight selections, the chosen expert.
    pub(crate) fn select(&self, method: Method) -> (Outcome, Option<usize>) {
        let pick = |better: fn(f64, f64) -> bool| {
            let mut idx = 0;
            for (k, o) in self.singles.iter().enumerate() {
                if better(o.width, self.singles[idx].width) {
                    idx = k;
                }
            }
            (self.singles[idx], Some(idx))
        };
        match method {
            Method::Conventional => (self.conventional, None),
            Method::PpiBest => pick(|a, b| a < b),
            Method::PpiWorst => pick(|a, b| a > b),
            Method::PpiMean => (self.average.expect("average estimator was run"), None),
            Method::PpiMoe => (self.moe.expect("mixture estimator was run"), None),
        }
    }
}

/// Estimator variants a replication compares.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Choice {
    Conventional,
    Single(usize),
    Average,
    Moe,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct EvalOptions {
    pub alpha: Alpha,
    pub variant: Variant,
    pub grid_steps: Option<usize>,
    pub measure_width: bool,
}

fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().insert_column(0, 1.0)
}

/// One labeled/unlabeled pair with expert predictions, drawn from `rng`.
pub fn draw_pair<R: rand::Rng>(
    task: Task,
    design: &Design,
    pool: &ExpertPool,
    n: usize,
    big_n: usize,
    rng: &mut R,
) -> Result<(LabeledDataset, UnlabeledDataset)> {
    let (ls, us) = design.generate(n, big_n, rng)?;
    let fl = apply_experts(pool, &ls, rng);
    let fu = apply_experts(pool, &us, rng);
    let (xl, xu) = match task {
        Task::Mean | Task::Quantile { .. } => (None, None),
        Task::Linreg => (Some(with_intercept(&ls.x)), Some(with_intercept(&us.x))),
        Task::Logreg => (Some(ls.x), Some(us.x)),
    };
    Ok((LabeledDataset::new(ls.y.as_slice().to_vec(), xl, fl)?, UnlabeledDataset::new(xu, fu)?))
}

fn average_weights(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

fn resized(spec: GridSpec, steps: Option<usize>) -> GridSpec {
    match (spec, steps) {
        (GridSpec::Uniform { lo, hi, .. }, Some(s)) => GridSpec::uniform(lo, hi, s),
        (spec, _) => spec,
    }
}

/// Axis grid around the labeled logistic MLE.
fn logreg_grid(labeled: &LabeledDataset, steps: Option<usize>) -> Result<ThetaGrid> {
    let x = labeled.require_x()?;
    let mle = mle_logistic(x, labeled.y())?;
    let steps = steps.unwrap_or(DEFAULT_AXIS_STEPS);
    let axes = (0..x.ncols())
        .map(|s| {
            let half = DEFAULT_SE_SPAN * mle.se[s].max(1e-8);
            GridSpec::uniform(mle.theta[s] - half, mle.theta[s] + half, steps)
        })
        .collect();
    Ok(ThetaGrid::Axis { axes, center: mle.theta.as_slice().to_vec() })
}

fn quantile_config(q: f64, labeled: &LabeledDataset, opts: &EvalOptions) -> Result<QuantileConfig> {
    let mut cfg = QuantileConfig::new(q)?;
    cfg.alpha = opts.alpha;
    cfg.variant = opts.variant;
    cfg.grid = Some(resized(default_grid(labeled.y().as_slice(), q), opts.grid_steps));
    Ok(cfg)
}

/// Dataset pair and fixed weights for a choice; `None` weights mean "fit".
fn configure(
    choice: Choice,
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
) -> Result<(LabeledDataset, UnlabeledDataset, Option<Vec<f64>>)> {
    Ok(match choice {
        Choice::Single(k) => (labeled.select_experts(&[k])?, unlabeled.select_experts(&[k])?, Some(vec![1.0])),
        Choice::Average => (labeled.clone(), unlabeled.clone(), Some(average_weights(labeled.k()))),
        Choice::Moe | Choice::Conventional => (labeled.clone(), unlabeled.clone(), None),
    })
}

fn evaluate_choice(
    task: Task,
    choice: Choice,
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    target: &[f64],
    opts: &EvalOptions,
) -> Result<Outcome> {
    let y = labeled.y().as_slice();
    match task {
        Task::Mean => {
            let t = target[0];
            let est = match choice {
                Choice::Conventional => conventional_mean(y, opts.alpha)?,
                Choice::Moe => moe_mean(labeled, unlabeled, opts.alpha, opts.variant)?,
                Choice::Single(_) | Choice::Average => {
                    let w = DVector::from_vec(match choice {
                        Choice::Single(k) => {
                            let mut e = vec![0.0; labeled.k()];
                            e[k] = 1.0;
                            e
                        }
                        _ => average_weights(labeled.k()),
                    });
                    let fl = labeled.f() * &w;
                    let fu = unlabeled.f() * &w;
                    ppi_mean(y, fl.as_slice(), fu.as_slice(), opts.alpha, opts.variant)?
                }
            };
            Ok(Outcome { covered: est.contains(t), width: est.width() })
        }
        Task::Quantile { q } => {
            let t = target[0];
            let cfg = quantile_config(q, labeled, opts)?;
            if choice == Choice::Conventional {
                let covered = conventional_quantile_test_at(t, y, &cfg)?.accepted;
                let width = if opts.measure_width { conventional_quantile_set(y, &cfg)?.width() } else { f64::NAN };
                return Ok(Outcome { covered, width });
            }
            let (lab, unlab, fixed) = configure(choice, labeled, unlabeled)?;
            let weights = fixed.map_or(QuantileWeights::Fit, QuantileWeights::Fixed);
            let covered = quantile_test_at(t, &lab, &unlab, &cfg, &weights)?.accepted;
            let width =
                if opts.measure_width { quantile_set(&lab, &unlab, &cfg, &weights)?.width() } else { f64::NAN };
            Ok(Outcome { covered, width })
        }
        Task::Linreg => {
            let t = target[TARGET_COEF];
            let est = if choice == Choice::Conventional {
                conventional_linreg(labeled, opts.alpha, false)?
            } else {
                let (lab, unlab, fixed) = configure(choice, labeled, unlabeled)?;
                let lopts = LinRegOptions { variant: opts.variant, bonferroni: false, weights: fixed.map(WeightVector::fixed) };
                moe_linreg(&lab, &unlab, opts.alpha, &lopts)?
            };
            let (lo, hi) = est.cis[TARGET_COEF];
            Ok(Outcome { covered: lo <= t && t <= hi, width: est.width(TARGET_COEF) })
        }
        Task::Logreg => {
            let mut cfg = LogRegConfig { alpha: opts.alpha, variant: opts.variant, ..LogRegConfig::default() };
            if opts.measure_width {
                cfg.grid = Some(logreg_grid(labeled, opts.grid_steps)?);
            }
            if choice == Choice::Conventional {
                let covered = ConventionalLogRegTest::new(labeled, opts.alpha)?.accepts(target);
                let width =
                    if opts.measure_width { conventional_logreg_set(labeled, &cfg)?.width(TARGET_COEF) } else { f64::NAN };
                return Ok(Outcome { covered, width });
            }
            let (lab, unlab, fixed) = configure(choice, labeled, unlabeled)?;
            cfg.weights = fixed.map(WeightVector::fixed);
            let covered = LogRegTest::new(&lab, &unlab, &cfg)?.accepts(target);
            let width =
                if opts.measure_width { moe_logreg_set(&lab, &unlab, &cfg)?.width(TARGET_COEF) } else { f64::NAN };
            Ok(Outcome { covered, width })
        }
    }
}

pub(crate) fn evaluate(
    task: Task,
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    target: &[f64],
    opts: &EvalOptions,
    needs: Needs,
) -> Result<Evaluated> {
    let run = |c: Choice| evaluate_choice(task, c, labeled, unlabeled, target, opts);
    Ok(Evaluated {
        conventional: run(Choice::Conventional)?,
        singles: if needs.singles { (0..labeled.k()).map(|k| run(Choice::Single(k))).collect::<Result<_>>()? } else { Vec::new() },
        average: if needs.average { Some(run(Choice::Average)?) } else { None },
        moe: if needs.moe { Some(run(Choice::Moe)?) } else { None },
    })
}

/// Point estimate of the reported target, used by the bootstrap.
fn point_estimate(task: Task, choice: Choice, labeled: &LabeledDataset, unlabeled: &UnlabeledDataset, opts: &EvalOptions) -> Result<f64> {
    let y = labeled.y().as_slice();
    match task {
        Task::Mean => Ok(evaluate_mean_theta(choice, labeled, unlabeled, opts)?),
        Task::Quantile { q } => {
            let mut cfg = QuantileConfig::new(q)?;
            cfg.variant = opts.variant;
            let (lo, hi) = match default_grid(y, q) {
                GridSpec::Uniform { lo, hi, .. } => (lo, hi),
                GridSpec::Points(p) => (p[0], p[p.len() - 1]),
            };
            if choice == Choice::Conventional {
                let lab = LabeledDataset::new(y.to_vec(), None, DMatrix::zeros(y.len(), 1))?;
                let unlab = UnlabeledDataset::new(None, DMatrix::zeros(1, 1))?;
                return quantile_point_estimate(&lab, &unlab, &cfg, &QuantileWeights::Fixed(vec![0.0]), lo, hi);
            }
            let (lab, unlab, fixed) = configure(choice, labeled, unlabeled)?;
            let weights = fixed.map_or(QuantileWeights::Fit, QuantileWeights::Fixed);
            quantile_point_estimate(&lab, &unlab, &cfg, &weights, lo, hi)
        }
        Task::Linreg => {
            let est = if choice == Choice::Conventional {
                conventional_linreg(labeled, opts.alpha, false)?
            } else {
                let (lab, unlab, fixed) = configure(choice, labeled, unlabeled)?;
                let lopts = LinRegOptions { variant: opts.variant, bonferroni: false, weights: fixed.map(WeightVector::fixed) };
                moe_linreg(&lab, &unlab, opts.alpha, &lopts)?
            };
            Ok(est.theta[TARGET_COEF])
        }
        Task::Logreg => {
            let mle = mle_logistic(labeled.require_x()?, labeled.y())?;
            if choice == Choice::Conventional {
                return Ok(mle.theta[TARGET_COEF]);
            }
            let (lab, unlab, fixed) = configure(choice, labeled, unlabeled)?;
            let cfg = LogRegConfig { alpha: opts.alpha, variant: opts.variant, weights: fixed.map(WeightVector::fixed), ..LogRegConfig::default() };
            Ok(LogRegTest::new(&lab, &unlab, &cfg)?.point_estimate(mle.theta.as_slice())[TARGET_COEF])
        }
    }
}

fn evaluate_mean_theta(choice: Choice, labeled: &LabeledDataset, unlabeled: &UnlabeledDataset, opts: &EvalOptions) -> Result<f64> {
    let y = labeled.y().as_slice();
    Ok(match choice {
        Choice::Conventional => conventional_mean(y, opts.alpha)?.theta,
        Choice::Moe => moe_mean(labeled, unlabeled, opts.alpha, opts.variant)?.theta,
        Choice::Single(_) | Choice::Average => {
            let (lab, unlab, fixed) = configure(choice, labeled, unlabeled)?;
            let w = DVector::from_vec(fixed.expect("fixed weights"));
            let fl = lab.f() * &w;
            let fu = unlab.f() * &w;
            ppi_mean(y, fl.as_slice(), fu.as_slice(), opts.alpha, opts.variant)?.theta
        }
    })
}

/// Target vector of a task under a design.
pub fn task_target(task: Task, design: &Design) -> Result<Vec<f64>> {
    Ok(match task {
        Task::Mean => vec![design.truth()?.mean],
        Task::Quantile { q } => vec![design.quantile(q)?],
        Task::Linreg | Task::Logreg => design.truth()?.regression,
    })
}

pub fn run_coverage(cfg: &CoverageConfig) -> Result<SimulationResult> {
    if cfg.reps < 1 {
        return Err(Error::InvalidConfig("need at least one replication".into()));
    }
    if cfg.methods.is_empty() {
        return Err(Error::InvalidConfig("no methods selected".into()));
    }
    if cfg.bootstrap_b == 1 {
        return Err(Error::InvalidConfig("bootstrap needs at least 2 replicates".into()));
    }
    let needs_width = cfg.methods.iter().any(|m| matches!(m, Method::PpiBest | Method::PpiWorst));
    if needs_width && !cfg.measure_width && matches!(cfg.task, Task::Quantile { .. } | Task::Logreg) {
        return Err(Error::InvalidConfig("hindsight best/worst selection needs interval widths".into()));
    }
    cfg.task.check_mode(cfg.generator.mode)?;
    let design = Design::new(cfg.generator.clone())?;
    let target = task_target(cfg.task, &design)?;
    let big_n = cfg.big_n.resolve(cfg.n)?;
    let opts = EvalOptions { alpha: cfg.alpha, variant: cfg.variant, grid_steps: cfg.grid_steps, measure_width: cfg.measure_width };
    let needs = Needs::for_methods(&cfg.methods);

    let reps: Vec<Evaluated> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::replication(cfg.seed, r);
            let (lab, unlab) = draw_pair(cfg.task, &design, &cfg.pool, cfg.n, big_n, &mut rng)?;
            evaluate(cfg.task, &lab, &unlab, &target, &opts, needs)
        })
        .collect::<Result<_>>()?;

    let reported_width = cfg.measure_width || matches!(cfg.task, Task::Mean | Task::Linreg);
    let mean_width = |m: Method| reps.iter().map(|e| e.select(m).0.width).sum::<f64>() / cfg.reps as f64;
    let conv_width = mean_width(Method::Conventional);

    // Bootstrap on the first replication's data, with the hindsight choice
    // made there.
    let boot_data = if cfg.bootstrap_b >= 2 {
        let mut rng = rng::replication(cfg.seed, 0);
        Some(draw_pair(cfg.task, &design, &cfg.pool, cfg.n, big_n, &mut rng)?)
    } else {
        None
    };

    let mut methods = Vec::with_capacity(cfg.methods.len());
    for &m in &cfg.methods {
        let covered = reps.iter().filter(|e| e.select(m).0.covered).count() as f64;
        let coverage = covered / cfg.reps as f64;
        let width = mean_width(m);
        let bootstrap_var = match &boot_data {
            Some((lab, unlab)) => {
                let choice = match m {
                    Method::Conventional => Choice::Conventional,
                    Method::PpiMean => Choice::Average,
                    Method::PpiMoe => Choice::Moe,
                    Method::PpiBest | Method::PpiWorst => Choice::Single(reps[0].select(m).1.unwrap_or(0)),
                };
                let task = cfg.task;
                let est = |l: &LabeledDataset, u: &UnlabeledDataset| point_estimate(task, choice, l, u, &opts);
                Some(bootstrap_variance(est, lab, unlab, cfg.bootstrap_b, cfg.seed ^ rng::BOOTSTRAP_SALT)?)
            }
            None => None,
        };
        methods.push(MethodSummary {
            method: m,
            coverage,
            coverage_se: (coverage * (1.0 - coverage) / cfg.reps as f64).sqrt(),
            mean_width: reported_width.then_some(width),
            width_ratio_vs_conventional: (reported_width && conv_width > 0.0).then(|| width / conv_width),
            bootstrap_var,
        });
    }
    Ok(SimulationResult {
        task: cfg.task,
        data_mode: cfg.generator.mode,
        n: cfg.n,
        big_n,
        reps: cfg.reps,
        alpha: cfg.alpha,
        variant: cfg.variant,
        seed: cfg.seed,
        truth: target,
        methods,
    })
}
