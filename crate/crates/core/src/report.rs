//! JSON and CSV renderings of estimation and simulation results.
//!
//! JSON floats are printed in shortest round-trip form; CSV floats in
//! scientific notation with 17 significant digits.  Both parse back to the
//! exact `f64`.

use std::io::Write;

use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::error::Result;
use crate::linreg::LinRegEstimate;
use crate::logreg::LogRegResult;
use crate::mean::MeanEstimate;
use crate::mest::MEstResult;
use crate::quantile::QuantileResult;
use crate::sim::{PowerCurve, SimulationResult};

pub const SIMULATION_CSV_HEADER: [&str; 7] = ["Task", "DataMode", "n", "Method", "Coverage", "Width", "RatioVsConventional"];

pub const POWER_CSV_HEADER: [&str; 5] = ["Method", "n", "N", "Power", "MinimalN"];

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn interval(ci: Option<(f64, f64)>) -> Value {
    ci.map_or(Value::Null, |(lo, hi)| json!([lo, hi]))
}

pub fn mean_report(est: &MeanEstimate, k: usize) -> Value {
    json!({
        "task": "mean",
        "theta": est.theta,
        "beta": est.beta.beta,
        "beta_source": est.beta.source,
        "se": est.se,
        "ci": [est.ci.0, est.ci.1],
        "alpha": est.alpha,
        "variant": est.variant,
        "n": est.n,
        "N": est.big_n,
        "K": k,
    })
}

pub fn quantile_report(res: &QuantileResult, verbose: bool) -> Value {
    let (lo, hi, steps) = match &res.grid {
        crate::data::GridSpec::Uniform { lo, hi, steps } => (*lo, *hi, *steps),
        crate::data::GridSpec::Points(p) => (p[0], p[p.len() - 1], p.len()),
    };
    let mut v = json!({
        "task": "quantile",
        "q": res.q,
        "h": res.h,
        "grid": { "lo": lo, "hi": hi, "steps": steps },
        "accepted": res.accepted,
        "hull": interval(res.hull),
        "point_estimate": res.point_estimate,
        "alpha": res.alpha,
        "variant": res.variant,
    });
    if verbose {
        v["per_theta"] = serde_json::to_value(&res.per_theta).unwrap_or(Value::Null);
    }
    v
}

pub fn linreg_report(est: &LinRegEstimate) -> Value {
    json!({
        "task": "linreg",
        "theta": est.theta.as_slice(),
        "beta": est.beta.beta,
        "beta_source": est.beta.source,
        "cis": est.cis.iter().map(|c| [c.0, c.1]).collect::<Vec<_>>(),
        "W_diag": est.w_hat.diagonal().as_slice(),
        "covariance": matrix_rows(&est.w_hat),
        "alpha": est.alpha,
        "variant": est.variant,
        "bonferroni": est.bonferroni,
        "guard_tripped": est.guard_tripped(),
    })
}

pub fn logreg_report(res: &LogRegResult, verbose: bool) -> Value {
    let mut v = json!({
        "task": "logreg",
        "beta": res.beta.beta,
        "beta_source": res.beta.source,
        "delta_hat": res.delta_hat.as_slice(),
        "covariance": matrix_rows(&res.w_hat),
        "accepted_count": res.accepted.len(),
        "grid_size": res.grid_size,
        "per_coordinate_intervals": res.per_coordinate_intervals.iter().map(|c| interval(*c)).collect::<Vec<_>>(),
        "alpha": res.alpha,
        "variant": res.variant,
    });
    if verbose {
        v["accepted"] = json!(res.accepted);
    }
    v
}

pub fn mest_report(res: &MEstResult, gradient: &str, verbose: bool) -> Value {
    let mut v = json!({
        "task": format!("mest:{gradient}"),
        "accepted_count": res.accepted.len(),
        "per_coordinate_intervals": res.per_coordinate_intervals.iter().map(|c| interval(*c)).collect::<Vec<_>>(),
        "point_estimate": res.point_estimate,
        "alpha": res.alpha,
        "variant": res.variant,
    });
    if verbose {
        v["accepted"] = json!(res.accepted);
        v["per_theta"] = serde_json::to_value(&res.per_theta).unwrap_or(Value::Null);
    }
    v
}

fn sci(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        String::new()
    }
}

fn opt_sci(x: Option<f64>) -> String {
    x.map_or_else(String::new, sci)
}

pub fn simulation_json(res: &SimulationResult) -> Result<String> {
    Ok(serde_json::to_string_pretty(res)?)
}

/// One row per method; empty cells where a width was not measured.
pub fn write_simulation_csv<W: Write>(res: &SimulationResult, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(SIMULATION_CSV_HEADER)?;
    for m in &res.methods {
        w.write_record([
            res.task.name().to_string(),
            res.data_mode.as_str().to_string(),
            res.n.to_string(),
            m.method.as_str().to_string(),
            sci(m.coverage),
            opt_sci(m.mean_width),
            opt_sci(m.width_ratio_vs_conventional),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn power_json(curves: &[PowerCurve]) -> Result<String> {
    Ok(serde_json::to_string_pretty(&json!({ "task": "power", "curves": curves }))?)
}

/// One row per (method, n); `MinimalN` repeats the method's answer and is
/// empty when the target power is never reached.
pub fn write_power_csv<W: Write>(curves: &[PowerCurve], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(POWER_CSV_HEADER)?;
    for c in curves {
        let minimal = c.minimal_n.map_or_else(String::new, |n| n.to_string());
        for p in &c.points {
            w.write_record([c.method.as_str().to_string(), p.n.to_string(), p.big_n.to_string(), sci(p.power), minimal.clone()])?;
        }
    }
    w.flush()?;
    Ok(())
}
