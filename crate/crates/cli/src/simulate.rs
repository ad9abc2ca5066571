//! `simulate` and `power` on synthetic designs.

use moeppi::report;
use moeppi::sim::{
    power_curves, run_coverage, CoverageConfig, DataMode, Design, ExpertPool, ExpertSpec, GeneratorConfig, Method, NRule,
    PowerConfig, Task,
};

use crate::args::{FormatArg, ModeArg, OutputArgs, SimArgs, SimTask};
use crate::{alpha, resolve_format, usage, variant, CliError, CliResult, Report};

pub(crate) struct SimulateOptions {
    pub task: SimTask,
    pub q: Option<f64>,
    pub grid_steps: Option<usize>,
    pub n: usize,
    pub bootstrap_b: usize,
}

fn numbers(kind: &str, parts: &[&str], expected: usize) -> CliResult<Vec<f64>> {
    if parts.len() != expected {
        return usage(format!("expert '{kind}' takes {expected} parameter(s)"));
    }
    parts
        .iter()
        .map(|p| p.parse::<f64>().map_err(|_| CliError::Usage(format!("bad number '{p}' in expert '{kind}'"))))
        .collect()
}

/// Parses `kind:params` expert specs; sds and offsets are in units of `sd`.
fn parse_pool(specs: &[String], sd: f64) -> CliResult<ExpertPool> {
    if specs.is_empty() {
        return Ok(ExpertPool::standard(sd));
    }
    let mut experts = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut parts = spec.split(':');
        let kind = parts.next().unwrap_or_default();
        let rest: Vec<&str> = parts.collect();
        experts.push(match kind {
            "oracle_noise" => ExpertSpec::OracleNoise { sd: numbers(kind, &rest, 1)?[0] * sd },
            "biased" => {
                let v = numbers(kind, &rest, 2)?;
                ExpertSpec::Biased { offset: v[0] * sd, sd: v[1] * sd }
            }
            "linear_proj" => ExpertSpec::LinearProj { noise_sd: numbers(kind, &rest, 1)?[0] * sd },
            "pure_noise" => ExpertSpec::PureNoise { sd: numbers(kind, &rest, 1)?[0] * sd },
            "constant" => ExpertSpec::Constant { c: numbers(kind, &rest, 1)?[0] },
            other => return usage(format!("unknown expert kind '{other}'")),
        });
    }
    ExpertPool::new(experts).map_err(|e| CliError::Usage(e.to_string()))
}

fn parse_methods(names: &[String]) -> CliResult<Vec<Method>> {
    if names.is_empty() {
        return Ok(Method::ALL.to_vec());
    }
    let mut out: Vec<Method> = Vec::new();
    for name in names {
        let m: Method = name.parse().map_err(|e: moeppi::Error| CliError::Usage(e.to_string()))?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

fn data_mode(mode: ModeArg) -> DataMode {
    match mode {
        ModeArg::Linear => DataMode::Linear,
        ModeArg::Nonlinear => DataMode::Nonlinear,
        ModeArg::Gaussian => DataMode::Gaussian,
    }
}

fn generator(mode: DataMode, sim: &SimArgs) -> CliResult<(GeneratorConfig, ExpertPool)> {
    let mut gen = GeneratorConfig::new(mode, sim.seed);
    gen.gamma = sim.gamma;
    let design = Design::new(gen.clone())?;
    let pool = parse_pool(&sim.experts, design.response_sd())?;
    Ok((gen, pool))
}

fn check_ratio(ratio: f64) -> CliResult<()> {
    if ratio > 0.0 && ratio.is_finite() {
        Ok(())
    } else {
        usage(format!("--ratio must be positive, got {ratio}"))
    }
}

pub(crate) fn simulate(opts: &SimulateOptions, sim: &SimArgs, output: &OutputArgs) -> CliResult<Report> {
    if opts.q.is_some() && opts.task != SimTask::Quantile {
        return usage("--q applies only to the quantile task");
    }
    if opts.n < 2 {
        return usage("--n must be at least 2");
    }
    if sim.reps < 1 {
        return usage("--reps must be at least 1");
    }
    if opts.bootstrap_b == 1 {
        return usage("--bootstrap-b must be 0 (off) or at least 2");
    }
    check_ratio(sim.ratio)?;
    let task = match opts.task {
        SimTask::Mean => Task::Mean,
        SimTask::Quantile => Task::Quantile { q: opts.q.unwrap_or(0.5) },
        SimTask::Linreg => Task::Linreg,
        SimTask::Logreg => Task::Logreg,
    };
    let mode = match (opts.task, sim.mode) {
        (SimTask::Logreg, None) => DataMode::Logistic,
        (SimTask::Logreg, Some(_)) => return usage("--mode does not apply to logreg, which uses the logistic design"),
        (_, Some(m)) => data_mode(m),
        (_, None) => DataMode::Linear,
    };
    let (gen, pool) = generator(mode, sim)?;
    let mut cfg = CoverageConfig::new(task, gen, pool, opts.n);
    cfg.methods = parse_methods(&sim.methods)?;
    cfg.big_n = NRule::Ratio(sim.ratio);
    cfg.reps = sim.reps;
    cfg.alpha = alpha(output)?;
    cfg.variant = variant(output.variant);
    cfg.bootstrap_b = opts.bootstrap_b;
    cfg.grid_steps = opts.grid_steps;
    cfg.seed = sim.seed;
    let res = run_coverage(&cfg)?;
    let body = match resolve_format(output, FormatArg::Csv) {
        FormatArg::Json => report::simulation_json(&res)?,
        FormatArg::Csv => {
            let mut buf = Vec::new();
            report::write_simulation_csv(&res, &mut buf)?;
            String::from_utf8(buf).expect("csv output is utf-8")
        }
    };
    Ok(Report { body })
}

pub(crate) fn power(n_grid: &[usize], target_power: f64, sim: &SimArgs, output: &OutputArgs) -> CliResult<Report> {
    if !(0.0..=1.0).contains(&target_power) {
        return usage(format!("--target-power must lie in [0, 1], got {target_power}"));
    }
    if sim.reps < 1 {
        return usage("--reps must be at least 1");
    }
    check_ratio(sim.ratio)?;
    let mode = sim.mode.map_or(DataMode::Linear, data_mode);
    let (gen, pool) = generator(mode, sim)?;
    let mut cfg = PowerConfig::new(gen, pool, n_grid.to_vec());
    cfg.methods = parse_methods(&sim.methods)?;
    cfg.alpha = alpha(output)?;
    cfg.variant = variant(output.variant);
    cfg.target_power = target_power;
    cfg.big_n = NRule::Ratio(sim.ratio);
    cfg.reps = sim.reps;
    cfg.seed = sim.seed;
    let curves = power_curves(&cfg)?;
    let body = match resolve_format(output, FormatArg::Csv) {
        FormatArg::Json => report::power_json(&curves)?,
        FormatArg::Csv => {
            let mut buf = Vec::new();
            report::write_power_csv(&curves, &mut buf)?;
            String::from_utf8(buf).expect("csv output is utf-8")
        }
    };
    Ok(Report { body })
}
