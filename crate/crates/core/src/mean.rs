//! Mean estimation: the labeled-only baseline, single-expert PPI and the
//! mixture-of-experts estimator with closed-form weights.
//!
//! All variances here use the denominator `n` (population form).

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::{check_pair, Alpha, LabeledDataset, UnlabeledDataset, Variant, WeightVector};
use crate::error::{Error, Result};
use crate::linalg::{center_columns, mean, pop_variance};
use crate::normal::z_two_sided;

/// Relative threshold on the smallest squared singular value of the centered
/// expert matrix.
const GRAM_GUARD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub theta: f64,
    pub beta: WeightVector,
    pub sigma2_resid: f64,
    /// Unlabeled variance of the fitted mixture; present for the plus variant.
    pub sigma2_pred: Option<f64>,
    pub se: f64,
    pub ci: (f64, f64),
    pub alpha: Alpha,
    pub variant: Variant,
    pub n: usize,
    pub big_n: usize,
}

impl MeanEstimate {
    pub fn width(&self) -> f64 {
        self.ci.1 - self.ci.0
    }

    pub fn contains(&self, value: f64) -> bool {
        self.ci.0 <= value && value <= self.ci.1
    }
}

/// Sample mean with a normal interval; `sd` uses the denominator `n`.
pub fn conventional_mean(y: &[f64], alpha: Alpha) -> Result<MeanEstimate> {
    if y.len() < 2 {
        return Err(Error::TooFewRows { needed: 2, got: y.len() });
    }
    let n = y.len();
    let theta = mean(y);
    let sigma2 = pop_variance(y);
    let se = (sigma2 / n as f64).sqrt();
    let half = z_two_sided(alpha.value()) * se;
    Ok(MeanEstimate {
        theta,
        beta: WeightVector::fixed(Vec::new()),
        sigma2_resid: sigma2,
        sigma2_pred: None,
        se,
        ci: (theta - half, theta + half),
        alpha,
        variant: Variant::Basic,
        n,
        big_n: 0,
    })
}

/// Rectified estimate from already-combined predictions on both samples.
fn rectified(
    y: &[f64],
    pred_lab: &[f64],
    pred_unlab: &[f64],
    beta: WeightVector,
    alpha: Alpha,
    variant: Variant,
) -> Result<MeanEstimate> {
    let n = y.len();
    let big_n = pred_unlab.len();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n });
    }
    if big_n < 1 {
        return Err(Error::TooFewRows { needed: 1, got: 0 });
    }
    if pred_lab.len() != n {
        return Err(Error::LengthMismatch(format!("{} labeled predictions for {n} responses", pred_lab.len())));
    }
    let resid: Vec<f64> = pred_lab.iter().zip(y).map(|(f, y)| f - y).collect();
    let theta = mean(pred_unlab) - mean(&resid);
    let sigma2_resid = pop_variance(&resid);
    let (var, sigma2_pred) = match variant {
        Variant::Basic => (sigma2_resid / n as f64, None),
        Variant::Plus => {
            let s2 = if big_n > 1 { pop_variance(pred_unlab) } else { 0.0 };
            (sigma2_resid / n as f64 + s2 / big_n as f64, Some(s2))
        }
    };
    let se = var.sqrt();
    let half = z_two_sided(alpha.value()) * se;
    Ok(MeanEstimate {
        theta,
        beta,
        sigma2_resid,
        sigma2_pred,
        se,
        ci: (theta - half, theta + half),
        alpha,
        variant,
        n,
        big_n,
    })
}

/// Single-expert prediction-powered estimate.
pub fn ppi_mean(y: &[f64], f_lab: &[f64], f_unlab: &[f64], alpha: Alpha, variant: Variant) -> Result<MeanEstimate> {
    rectified(y, f_lab, f_unlab, WeightVector::fixed(vec![1.0]), alpha, variant)
}

/// Weights minimizing the sample variance of `F beta - y`, i.e. least squares
/// of the centered response on the centered experts.  A nearly singular
/// centered Gram matrix yields the all-zero guard weights.
pub fn fit_weights_mean(y: &DVector<f64>, f: &DMatrix<f64>) -> WeightVector {
    let k = f.ncols();
    if f.nrows() <= k {
        return WeightVector::guard_zero(k);
    }
    let fc = center_columns(f);
    let raw: f64 = f.iter().map(|v| v * v).sum();
    let ym = y.mean();
    let yc = y.map(|v| v - ym);
    let svd = fc.svd(true, true);
    let s = &svd.singular_values;
    let total: f64 = s.iter().map(|v| v * v).sum();
    let smin = s.min();
    if !(total > 1e-20 * raw) || smin * smin < GRAM_GUARD * total / k as f64 {
        return WeightVector::guard_zero(k);
    }
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return WeightVector::guard_zero(k);
    };
    let mut coef = u.transpose() * yc;
    coef.component_div_assign(s);
    let beta = v_t.transpose() * coef;
    WeightVector::closed_form(beta.as_slice().to_vec())
}

/// Population variance of `F beta - y`, the quantity the weights minimize.
pub fn svar_objective(y: &DVector<f64>, f: &DMatrix<f64>, beta: &[f64]) -> f64 {
    let fitted = f * DVector::from_column_slice(beta);
    let resid: Vec<f64> = fitted.iter().zip(y.iter()).map(|(a, b)| a - b).collect();
    pop_variance(&resid)
}

/// Mixture-of-experts estimate using the closed-form variance-minimizing
/// weights.
pub fn moe_mean(
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    alpha: Alpha,
    variant: Variant,
) -> Result<MeanEstimate> {
    check_pair(labeled, unlabeled)?;
    let beta = fit_weights_mean(labeled.y(), labeled.f());
    moe_mean_with_weights(labeled, unlabeled, beta, alpha, variant)
}

/// Mixture estimate with caller-supplied weights.
pub fn moe_mean_with_weights(
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    beta: WeightVector,
    alpha: Alpha,
    variant: Variant,
) -> Result<MeanEstimate> {
    check_pair(labeled, unlabeled)?;
    if beta.k() != labeled.k() {
        return Err(Error::LengthMismatch(format!("{} weights for {} experts", beta.k(), labeled.k())));
    }
    let b = beta.as_dvector();
    let pred_lab = labeled.f() * &b;
    let pred_unlab = unlabeled.f() * &b;
    rectified(labeled.y().as_slice(), pred_lab.as_slice(), pred_unlab.as_slice(), beta, alpha, variant)
}
