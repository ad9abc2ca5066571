//! `estimate` and `compare` on user-supplied CSVs.

use moeppi::data::{csv_header, ColumnNames};
use moeppi::linreg::{conventional_linreg, moe_linreg, ols, LinRegOptions};
use moeppi::logreg::{self, conventional_logreg_set, moe_logreg_set, LogRegConfig, DEFAULT_AXIS_STEPS, DEFAULT_SE_SPAN};
use moeppi::mean::{conventional_mean, moe_mean, moe_mean_with_weights};
use moeppi::mest::{builtin_gradient, moe_mest_set, BuiltinParams, MEstConfig, WeightMode};
use moeppi::quantile::{
    conventional_quantile_set, default_bandwidth, default_grid, moe_quantile_set, quantile_set, QuantileConfig,
    QuantileWeights, DEFAULT_GRID_STEPS,
};
use moeppi::{report, Alpha, GridSpec, LabeledDataset, ThetaGrid, UnlabeledDataset, Variant, WeightVector};
use serde_json::json;

use crate::args::{DataArgs, FormatArg, OutputArgs, TaskArgs, TaskKind, WeightModeArg};
use crate::{alpha, resolve_format, usage, variant, CliResult, Report};

const INTERCEPT_NAME: &str = "intercept";

fn load(data: &DataArgs) -> CliResult<(LabeledDataset, UnlabeledDataset)> {
    let experts = if data.expert_cols.is_empty() {
        csv_header(&data.labeled)?
            .into_iter()
            .filter(|h| *h != data.response_col && !data.covariate_cols.contains(h))
            .collect()
    } else {
        data.expert_cols.clone()
    };
    let lab = moeppi::load_labeled_csv(&data.labeled, &data.response_col, &data.covariate_cols, &experts)?;
    let unlab = moeppi::load_unlabeled_csv(&data.unlabeled, &data.covariate_cols, &experts)?;
    if !data.intercept {
        return Ok((lab, unlab));
    }
    let mut names = lab.names().clone();
    names.covariates.insert(0, INTERCEPT_NAME.to_string());
    let with_ones = |x: Option<&nalgebra::DMatrix<f64>>, rows: usize| match x {
        Some(m) => m.clone().insert_column(0, 1.0),
        None => nalgebra::DMatrix::from_element(rows, 1, 1.0),
    };
    let lab_x = with_ones(lab.x(), lab.n());
    let unlab_x = with_ones(unlab.x(), unlab.n());
    let unlab_names = ColumnNames { response: String::new(), ..names.clone() };
    Ok((
        LabeledDataset::with_names(lab.y().as_slice().to_vec(), Some(lab_x), lab.f().clone(), names)?,
        UnlabeledDataset::with_names(Some(unlab_x), unlab.f().clone(), unlab_names)?,
    ))
}

/// Rejects flags that do not apply to the selected task.
fn check_flags(task: &TaskArgs) -> CliResult<()> {
    if !task.task.is_quantile() {
        if task.q.is_some() {
            return usage("--q applies only to quantile tasks");
        }
        if task.bandwidth.is_some() {
            return usage("--bandwidth applies only to quantile tasks");
        }
    }
    if task.weight_mode.is_some() && !matches!(task.task, TaskKind::Mest(_)) {
        return usage("--weight-mode applies only to mest tasks");
    }
    if task.bonferroni && task.task != TaskKind::Linreg {
        return usage("--bonferroni applies only to linreg");
    }
    if task.grid_steps == Some(0) || task.grid_steps == Some(1) {
        return usage("--grid-steps must be at least 2");
    }
    Ok(())
}

fn user_grid(task: &TaskArgs, default_steps: usize) -> Option<GridSpec> {
    match (task.grid_lo, task.grid_hi) {
        (Some(lo), Some(hi)) => Some(GridSpec::uniform(lo, hi, task.grid_steps.unwrap_or(default_steps))),
        _ => None,
    }
}

fn resized(spec: GridSpec, steps: Option<usize>) -> GridSpec {
    match (spec, steps) {
        (GridSpec::Uniform { lo, hi, .. }, Some(s)) => GridSpec::uniform(lo, hi, s),
        (spec, _) => spec,
    }
}

/// User grid, or `fallback` resized by `--grid-steps`.
fn scalar_grid(task: &TaskArgs, fallback: GridSpec) -> GridSpec {
    user_grid(task, DEFAULT_GRID_STEPS).unwrap_or_else(|| resized(fallback, task.grid_steps))
}

/// Cartesian user grid over `d` coordinates, or the axis grid `fallback`.
fn vector_grid(task: &TaskArgs, d: usize, fallback: ThetaGrid) -> ThetaGrid {
    if let Some(spec) = user_grid(task, DEFAULT_AXIS_STEPS) {
        return ThetaGrid::Cartesian(vec![spec; d]);
    }
    match fallback {
        ThetaGrid::Axis { axes, center } => {
            ThetaGrid::Axis { axes: axes.into_iter().map(|a| resized(a, task.grid_steps)).collect(), center }
        }
        other => other,
    }
}

fn quantile_config(task: &TaskArgs, lab: &LabeledDataset, alpha: Alpha, variant: Variant) -> CliResult<QuantileConfig> {
    let q = task.q.unwrap_or(0.5);
    let mut cfg = QuantileConfig::new(q)?;
    cfg.bandwidth = task.bandwidth;
    cfg.alpha = alpha;
    cfg.variant = variant;
    cfg.parallel = true;
    cfg.grid = Some(scalar_grid(task, default_grid(lab.y().as_slice(), q)));
    Ok(cfg)
}

fn logreg_config(task: &TaskArgs, lab: &LabeledDataset, alpha: Alpha, variant: Variant) -> CliResult<LogRegConfig> {
    let grid = vector_grid(task, lab.require_x()?.ncols(), logreg::default_grid(lab)?);
    Ok(LogRegConfig { grid: Some(grid), alpha, variant, parallel: true, weights: None })
}

/// Default grid for a generic estimating function: a scalar window around
/// the labeled estimate, or an axis grid of eight standard errors.
fn mest_default_grid(name: &str, lab: &LabeledDataset, q: f64) -> CliResult<ThetaGrid> {
    let y = lab.y().as_slice();
    Ok(match name {
        "mean" => {
            let m = moeppi::linalg::mean(y);
            let half = 6.0 * moeppi::linalg::pop_variance(y).sqrt().max(1e-8) / (y.len() as f64).sqrt();
            ThetaGrid::Scalar(GridSpec::uniform(m - half, m + half, DEFAULT_GRID_STEPS))
        }
        "quantile" => ThetaGrid::Scalar(default_grid(y, q)),
        "linear" => {
            let fit = ols(lab.require_x()?, lab.y())?;
            let n = lab.n() as f64;
            let axes = (0..fit.theta.len())
                .map(|s| {
                    let half = DEFAULT_SE_SPAN * (fit.w[(s, s)] / n).max(0.0).sqrt().max(1e-8);
                    GridSpec::uniform(fit.theta[s] - half, fit.theta[s] + half, DEFAULT_AXIS_STEPS)
                })
                .collect();
            ThetaGrid::Axis { axes, center: fit.theta.as_slice().to_vec() }
        }
        _ => logreg::default_grid(lab)?,
    })
}

pub(crate) fn estimate(data: &DataArgs, task: &TaskArgs, output: &OutputArgs) -> CliResult<Report> {
    check_flags(task)?;
    if resolve_format(output, FormatArg::Json) == FormatArg::Csv {
        return usage("estimate reports are JSON only; use --format json");
    }
    let alpha = alpha(output)?;
    let variant = variant(output.variant);
    let (lab, unlab) = load(data)?;
    let value = match &task.task {
        TaskKind::Mean => report::mean_report(&moe_mean(&lab, &unlab, alpha, variant)?, lab.k()),
        TaskKind::Quantile => {
            let cfg = quantile_config(task, &lab, alpha, variant)?;
            report::quantile_report(&moe_quantile_set(&lab, &unlab, &cfg)?, output.verbose)
        }
        TaskKind::Linreg => {
            let opts = LinRegOptions { variant, bonferroni: task.bonferroni, weights: None };
            report::linreg_report(&moe_linreg(&lab, &unlab, alpha, &opts)?)
        }
        TaskKind::Logreg => {
            let cfg = logreg_config(task, &lab, alpha, variant)?;
            report::logreg_report(&moe_logreg_set(&lab, &unlab, &cfg)?, output.verbose)
        }
        TaskKind::Mest(name) => {
            let q = task.q.unwrap_or(0.5);
            let h = match task.bandwidth {
                Some(h) => {
                    moeppi::quantile::check_bandwidth(h, lab.n())?;
                    h
                }
                None => default_bandwidth(lab.n()),
            };
            let d = lab.x().map_or(0, |x| x.ncols());
            let grad = builtin_gradient(name, BuiltinParams { q, h, d })?;
            let fallback = mest_default_grid(name, &lab, q)?;
            let grid = match fallback {
                ThetaGrid::Scalar(spec) => ThetaGrid::Scalar(scalar_grid(task, spec)),
                other => vector_grid(task, grad.theta_dim(), other),
            };
            let mut cfg = MEstConfig::new(grid);
            cfg.alpha = alpha;
            cfg.variant = variant;
            cfg.parallel = true;
            cfg.weight_mode = match task.weight_mode {
                Some(WeightModeArg::Refined) => WeightMode::Refined,
                _ => WeightMode::Standard,
            };
            report::mest_report(&moe_mest_set(&lab, &unlab, grad.as_ref(), &cfg)?, name, output.verbose)
        }
    };
    Ok(Report { body: serde_json::to_string_pretty(&value).map_err(moeppi::Error::from)? })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Choice {
    Conventional,
    Single(usize),
    Average,
    Moe,
}

type Intervals = Vec<Option<(f64, f64)>>;

fn weights_for(choice: Choice, k: usize) -> Option<Vec<f64>> {
    match choice {
        Choice::Single(_) => Some(vec![1.0]),
        Choice::Average => Some(vec![1.0 / k as f64; k]),
        _ => None,
    }
}

fn subset(choice: Choice, lab: &LabeledDataset, unlab: &UnlabeledDataset) -> CliResult<(LabeledDataset, UnlabeledDataset)> {
    Ok(match choice {
        Choice::Single(k) => (lab.select_experts(&[k])?, unlab.select_experts(&[k])?),
        _ => (lab.clone(), unlab.clone()),
    })
}

struct CompareSetup {
    alpha: Alpha,
    variant: Variant,
    quantile: Option<QuantileConfig>,
    logreg: Option<LogRegConfig>,
    bonferroni: bool,
}

fn intervals_for(kind: &TaskKind, choice: Choice, lab: &LabeledDataset, unlab: &UnlabeledDataset, s: &CompareSetup) -> CliResult<Intervals> {
    let y = lab.y().as_slice();
    let fixed = weights_for(choice, lab.k());
    let (l, u) = subset(choice, lab, unlab)?;
    Ok(match kind {
        TaskKind::Mean => {
            let est = match (choice, fixed) {
                (Choice::Conventional, _) => conventional_mean(y, s.alpha)?,
                (_, Some(w)) => moe_mean_with_weights(&l, &u, WeightVector::fixed(w), s.alpha, s.variant)?,
                (_, None) => moe_mean(&l, &u, s.alpha, s.variant)?,
            };
            vec![Some(est.ci)]
        }
        TaskKind::Quantile => {
            let cfg = s.quantile.as_ref().expect("quantile config");
            let res = match (choice, fixed) {
                (Choice::Conventional, _) => conventional_quantile_set(y, cfg)?,
                (_, Some(w)) => quantile_set(&l, &u, cfg, &QuantileWeights::Fixed(w))?,
                (_, None) => moe_quantile_set(&l, &u, cfg)?,
            };
            vec![res.hull]
        }
        TaskKind::Linreg => {
            let est = if choice == Choice::Conventional {
                conventional_linreg(lab, s.alpha, s.bonferroni)?
            } else {
                let opts = LinRegOptions { variant: s.variant, bonferroni: s.bonferroni, weights: fixed.map(WeightVector::fixed) };
                moe_linreg(&l, &u, s.alpha, &opts)?
            };
            est.cis.into_iter().map(Some).collect()
        }
        TaskKind::Logreg => {
            let mut cfg = s.logreg.clone().expect("logreg config");
            if choice == Choice::Conventional {
                conventional_logreg_set(lab, &cfg)?.per_coordinate_intervals
            } else {
                cfg.weights = fixed.map(WeightVector::fixed);
                moe_logreg_set(&l, &u, &cfg)?.per_coordinate_intervals
            }
        }
        TaskKind::Mest(_) => unreachable!("rejected before dispatch"),
    })
}

fn width(iv: &Intervals, c: usize) -> f64 {
    iv.get(c).copied().flatten().map_or(0.0, |(lo, hi)| hi - lo)
}

pub(crate) fn compare(data: &DataArgs, task: &TaskArgs, coef: Option<usize>, output: &OutputArgs) -> CliResult<Report> {
    check_flags(task)?;
    if matches!(task.task, TaskKind::Mest(_)) {
        return usage("compare supports mean, quantile, linreg and logreg");
    }
    let alpha = alpha(output)?;
    let variant = variant(output.variant);
    let (lab, unlab) = load(data)?;
    let dim = match task.task {
        TaskKind::Linreg | TaskKind::Logreg => lab.require_x()?.ncols(),
        _ => 1,
    };
    let coord = coef.unwrap_or(if dim >= 2 { 1 } else { 0 });
    if coord >= dim {
        return usage(format!("--coef {coord} is out of range for {dim} coordinate(s)"));
    }
    let setup = CompareSetup {
        alpha,
        variant,
        quantile: if task.task == TaskKind::Quantile { Some(quantile_config(task, &lab, alpha, variant)?) } else { None },
        logreg: if task.task == TaskKind::Logreg { Some(logreg_config(task, &lab, alpha, variant)?) } else { None },
        bonferroni: task.bonferroni,
    };

    let conventional = intervals_for(&task.task, Choice::Conventional, &lab, &unlab, &setup)?;
    let singles = (0..lab.k())
        .map(|k| intervals_for(&task.task, Choice::Single(k), &lab, &unlab, &setup))
        .collect::<CliResult<Vec<_>>>()?;
    let average = intervals_for(&task.task, Choice::Average, &lab, &unlab, &setup)?;
    let moe = intervals_for(&task.task, Choice::Moe, &lab, &unlab, &setup)?;

    let mut best = 0;
    let mut worst = 0;
    for k in 1..singles.len() {
        if width(&singles[k], coord) < width(&singles[best], coord) {
            best = k;
        }
        if width(&singles[k], coord) > width(&singles[worst], coord) {
            worst = k;
        }
    }
    let names = &lab.names().experts;
    let mut rows: Vec<(String, Option<String>, &Intervals)> = vec![("conventional".into(), None, &conventional)];
    for (k, iv) in singles.iter().enumerate() {
        rows.push(("ppi".into(), Some(names[k].clone()), iv));
    }
    rows.push(("ppi-mean".into(), None, &average));
    rows.push(("ppi-best".into(), Some(names[best].clone()), &singles[best]));
    rows.push(("ppi-worst".into(), Some(names[worst].clone()), &singles[worst]));
    rows.push(("ppi-moe".into(), None, &moe));

    let body = match resolve_format(output, FormatArg::Json) {
        FormatArg::Json => {
            let methods: Vec<_> = rows
                .iter()
                .map(|(m, e, iv)| {
                    json!({
                        "method": m,
                        "expert": e,
                        "intervals": iv.iter().map(|c| c.map(|(lo, hi)| [lo, hi])).collect::<Vec<_>>(),
                        "widths": (0..iv.len()).map(|c| width(iv, c)).collect::<Vec<_>>(),
                    })
                })
                .collect();
            let value = json!({
                "task": task_name(&task.task),
                "coef": coord,
                "alpha": alpha,
                "variant": variant,
                "methods": methods,
            });
            serde_json::to_string_pretty(&value).map_err(moeppi::Error::from)?
        }
        FormatArg::Csv => {
            let mut out = String::from("Method,Expert,Coordinate,Lower,Upper,Width\n");
            for (m, e, iv) in &rows {
                for (c, ci) in iv.iter().enumerate() {
                    let (lo, hi) = ci.map_or((String::new(), String::new()), |(a, b)| (format!("{a:.16e}"), format!("{b:.16e}")));
                    out.push_str(&format!("{m},{},{c},{lo},{hi},{:.16e}\n", e.as_deref().unwrap_or(""), width(iv, c)));
                }
            }
            out
        }
    };
    Ok(Report { body })
}

fn task_name(kind: &TaskKind) -> String {
    match kind {
        TaskKind::Mean => "mean".into(),
        TaskKind::Quantile => "quantile".into(),
        TaskKind::Linreg => "linreg".into(),
        TaskKind::Logreg => "logreg".into(),
        TaskKind::Mest(g) => format!("mest:{g}"),
    }
}
