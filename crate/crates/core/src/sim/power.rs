//! Labeled sample size needed to reject `H0: mu = mu0` for the mean task.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Alpha, Variant};
use crate::error::{Error, Result};

use super::coverage::{draw_pair, evaluate, EvalOptions, Evaluated, Method, NRule, Needs, Task};
use super::experts::ExpertPool;
use super::generator::{Design, GeneratorConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct PowerConfig {
    pub methods: Vec<Method>,
    pub generator: GeneratorConfig,
    pub pool: ExpertPool,
    pub alpha: Alpha,
    pub variant: Variant,
    pub null_value: f64,
    pub target_power: f64,
    pub n_grid: Vec<usize>,
    pub big_n: NRule,
    pub reps: usize,
    pub seed: u64,
}

impl PowerConfig {
    pub fn new(generator: GeneratorConfig, pool: ExpertPool, n_grid: Vec<usize>) -> Self {
        let seed = generator.seed;
        Self {
            methods: Method::ALL.to_vec(),
            generator,
            pool,
            alpha: Alpha::default(),
            variant: Variant::Basic,
            null_value: 0.0,
            target_power: 0.8,
            n_grid,
            big_n: NRule::Ratio(10.0),
            reps: 200,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerOutcome {
    Reached(usize),
    NotReached,
}

impl PowerOutcome {
    pub fn n(self) -> Option<usize> {
        match self {
            PowerOutcome::Reached(n) => Some(n),
            PowerOutcome::NotReached => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerPoint {
    pub n: usize,
    pub big_n: usize,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerCurve {
    pub method: Method,
    pub points: Vec<PowerPoint>,
    /// Smallest grid `n` whose power reaches the target; `None` if none does.
    pub minimal_n: Option<usize>,
}

impl PowerCurve {
    pub fn outcome(&self) -> PowerOutcome {
        self.minimal_n.map_or(PowerOutcome::NotReached, PowerOutcome::Reached)
    }
}

fn validate(cfg: &PowerConfig) -> Result<()> {
    if cfg.n_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if cfg.n_grid.windows(2).any(|w| w[0] >= w[1]) || cfg.n_grid[0] < 2 {
        return Err(Error::InvalidGrid("sample-size grid must be increasing and start at 2 or more".into()));
    }
    if !(0.0..=1.0).contains(&cfg.target_power) {
        return Err(Error::InvalidConfig(format!("target power must lie in [0, 1], got {}", cfg.target_power)));
    }
    if cfg.reps < 1 || cfg.methods.is_empty() {
        return Err(Error::InvalidConfig("need at least one replication and one method".into()));
    }
    Ok(())
}

/// Empirical power curves for every configured method.  All methods see the
/// same simulated datasets at each grid point (common random numbers);
/// replication `r` at grid index `g` uses stream `1 + g * reps + r`.
pub fn power_curves(cfg: &PowerConfig) -> Result<Vec<PowerCurve>> {
    validate(cfg)?;
    let design = Design::new(cfg.generator.clone())?;
    let opts = EvalOptions { alpha: cfg.alpha, variant: cfg.variant, grid_steps: None, measure_width: true };
    let needs = Needs::for_methods(&cfg.methods);
    let target = [cfg.null_value];

    let mut per_n: Vec<(usize, usize, Vec<Evaluated>)> = Vec::with_capacity(cfg.n_grid.len());
    for (g, &n) in cfg.n_grid.iter().enumerate() {
        let big_n = cfg.big_n.resolve(n)?;
        let evals = (0..cfg.reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = super::rng::stream(cfg.seed, 1 + (g * cfg.reps + r) as u64);
                let (lab, unlab) = draw_pair(Task::Mean, &design, &cfg.pool, n, big_n, &mut rng)?;
                evaluate(Task::Mean, &lab, &unlab, &target, &opts, needs)
            })
            .collect::<Result<Vec<_>>>()?;
        per_n.push((n, big_n, evals));
    }

    Ok(cfg
        .methods
        .iter()
        .map(|&m| {
            let points: Vec<PowerPoint> = per_n
                .iter()
                .map(|(n, big_n, evals)| {
                    let rejections = evals.iter().filter(|e| !e.select(m).0.covered).count();
                    PowerPoint { n: *n, big_n: *big_n, power: rejections as f64 / cfg.reps as f64 }
                })
                .collect();
            let minimal_n = points.iter().find(|p| p.power >= cfg.target_power).map(|p| p.n);
            PowerCurve { method: m, points, minimal_n }
        })
        .collect())
}

/// Minimal grid `n` reaching the target power for one method.
pub fn power_search(cfg: &PowerConfig, method: Method) -> Result<PowerOutcome> {
    let single = PowerConfig { methods: vec![method], ..cfg.clone() };
    Ok(power_curves(&single)?[0].outcome())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::experts::ExpertSpec;
    use crate::sim::generator::DataMode;

    #[test]
    fn underpowered_design_never_reaches_target() {
        let mut gen = GeneratorConfig::new(DataMode::Linear, 1);
        gen.sigma = 1e4;
        gen.coef_hi = 1.0;
        let pool = ExpertPool::new(vec![ExpertSpec::PureNoise { sd: 1e4 }]).unwrap();
        let mut cfg = PowerConfig::new(gen, pool, vec![20, 50, 100]);
        cfg.reps = 50;
        assert_eq!(power_search(&cfg, Method::Conventional).unwrap(), PowerOutcome::NotReached);
    }

    #[test]
    fn zero_target_returns_first_grid_point() {
        let gen = GeneratorConfig::new(DataMode::Linear, 1);
        let mut cfg = PowerConfig::new(gen, ExpertPool::standard(100.0), vec![10, 20]);
        cfg.reps = 5;
        cfg.target_power = 0.0;
        assert_eq!(power_search(&cfg, Method::PpiMoe).unwrap(), PowerOutcome::Reached(10));
    }

    #[test]
    fn grid_validation() {
        let gen = GeneratorConfig::new(DataMode::Linear, 1);
        let cfg = PowerConfig::new(gen.clone(), ExpertPool::standard(1.0), Vec::new());
        assert!(matches!(power_curves(&cfg), Err(Error::EmptyGrid)));
        let cfg = PowerConfig::new(gen, ExpertPool::standard(1.0), vec![30, 20]);
        assert!(matches!(power_curves(&cfg), Err(Error::InvalidGrid(_))));
    }
}
