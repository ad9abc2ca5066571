//! Linear-regression coefficients: OLS with a heteroskedasticity-robust
//! sandwich covariance, and the mixture-of-experts rectified estimator.

use nalgebra::{DMatrix, DVector};

use crate::data::{check_pair, Alpha, LabeledDataset, UnlabeledDataset, Variant, WeightVector};
use crate::error::{Error, Result};
use crate::linalg::{guarded_psd_solve, symmetrize, LeastSquares};
use crate::normal::z_two_sided;

/// `lambda_min(H) <= HESSIAN_GUARD * trace(H) / K` zeroes the weights.
pub const HESSIAN_GUARD: f64 = 1e-8;

/// `H` whose trace is below this fraction of its uncentered counterpart is
/// treated as numerically zero.
pub const NOISE_FLOOR: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub theta: DVector<f64>,
    /// Sandwich covariance scaled so that `W / n` estimates `Cov(theta)`.
    pub w: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinRegEstimate {
    pub theta: DVector<f64>,
    pub beta: WeightVector,
    pub w_hat: DMatrix<f64>,
    pub cis: Vec<(f64, f64)>,
    pub alpha: Alpha,
    pub variant: Variant,
    pub bonferroni: bool,
}

impl LinRegEstimate {
    pub fn guard_tripped(&self) -> bool {
        self.beta.is_guard_zero()
    }

    pub fn width(&self, s: usize) -> f64 {
        self.cis[s].1 - self.cis[s].0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinRegOptions {
    pub variant: Variant,
    /// Use `z_{alpha / (2d)}` so all coordinates are covered jointly.
    pub bonferroni: bool,
    /// Skip fitting and use these mixture weights.
    pub weights: Option<WeightVector>,
}

/// `n (X'X)^{-1} (sum_i r_i^2 x_i x_i') (X'X)^{-1}`.
fn sandwich(ls: &LeastSquares, x: &DMatrix<f64>, resid: &DVector<f64>) -> DMatrix<f64> {
    let mut xr = x.clone();
    for (i, mut row) in xr.row_iter_mut().enumerate() {
        row *= resid[i];
    }
    let meat = xr.transpose() * &xr;
    let bread = ls.inv_gram();
    symmetrize(&(&bread * meat * &bread * x.nrows() as f64))
}

pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch(format!("{} design rows for {} responses", x.nrows(), y.len())));
    }
    if x.nrows() <= x.ncols() {
        return Err(Error::SingularDesign);
    }
    let ls = LeastSquares::new(x)?;
    let theta = ls.solve_vec(y);
    let resid = y - x * &theta;
    let w = sandwich(&ls, x, &resid);
    Ok(OlsFit { theta, w })
}

/// `(X'X)^{-1} X' (y - fvals)`.
pub fn rectifier_delta(x: &DMatrix<f64>, y: &DVector<f64>, fvals: &DVector<f64>) -> Result<DVector<f64>> {
    if x.nrows() != y.len() || fvals.len() != y.len() {
        return Err(Error::LengthMismatch("design, response and predictions must share a row count".into()));
    }
    Ok(LeastSquares::new(x)?.solve_vec(&(y - fvals)))
}

/// Labeled-sample quantities shared by the weight fit and the covariance.
struct Labeled<'a> {
    x: &'a DMatrix<f64>,
    k: usize,
    ls: LeastSquares,
    /// `F - X A`, experts with their projection on X removed.
    resid_f: DMatrix<f64>,
    /// `y - X b`.
    resid_y: DVector<f64>,
    /// `x_i' Sigma^{-2} x_i` with `Sigma = X'X / n`.
    weights: DVector<f64>,
    a_hat: DMatrix<f64>,
    b_hat: DVector<f64>,
}

impl<'a> Labeled<'a> {
    fn new(labeled: &'a LabeledDataset) -> Result<Self> {
        let x = labeled.require_x()?;
        let (n, d, k) = (labeled.n(), labeled.d(), labeled.k());
        if n <= d.max(k) {
            return Err(Error::TooFewRows { needed: d.max(k) + 1, got: n });
        }
        let ls = LeastSquares::new(x)?;
        let a_hat = ls.solve(labeled.f());
        let b_hat = ls.solve_vec(labeled.y());
        let resid_f = labeled.f() - x * &a_hat;
        let resid_y = labeled.y() - x * &b_hat;
        let n2 = (n as f64) * (n as f64);
        let weights = ls.row_weights() * n2;
        Ok(Self { x, k, ls, resid_f, resid_y, weights, a_hat, b_hat })
    }

    /// Quadratic form of the trace objective: `beta' H beta - 2 beta' r + c`.
    fn moments(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.x.nrows() as f64;
        let mut wf = self.resid_f.clone();
        for (i, mut row) in wf.row_iter_mut().enumerate() {
            row *= self.weights[i];
        }
        let h = symmetrize(&(wf.transpose() * &self.resid_f / n));
        let r = wf.transpose() * &self.resid_y / n;
        (h, r)
    }

    fn fit(&self, f: &DMatrix<f64>) -> WeightVector {
        let (h, r) = self.moments();
        let n = self.x.nrows() as f64;
        let raw_trace: f64 = f.row_iter().zip(self.weights.iter()).map(|(row, w)| w * row.norm_squared()).sum::<f64>() / n;
        match guarded_psd_solve(&h, &r, HESSIAN_GUARD, NOISE_FLOOR * raw_trace) {
            Some(beta) => WeightVector::closed_form(beta.as_slice().to_vec()),
            None => WeightVector::guard_zero(self.k),
        }
    }

    fn covariance(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        // y - F beta - X delta, with delta = b - A beta.
        let resid = &self.resid_y - &self.resid_f * beta;
        sandwich(&self.ls, self.x, &resid)
    }
}

/// Closed-form weights minimizing the trace of the rectified sandwich
/// covariance.
pub fn fit_weights_linreg(labeled: &LabeledDataset) -> Result<WeightVector> {
    Ok(Labeled::new(labeled)?.fit(labeled.f()))
}

/// Sandwich covariance `W(beta)` of the rectified estimator on the labeled
/// sample.
pub fn rectified_covariance(labeled: &LabeledDataset, beta: &[f64]) -> Result<DMatrix<f64>> {
    let lab = Labeled::new(labeled)?;
    Ok(lab.covariance(&DVector::from_column_slice(beta)))
}

/// `trace W(beta)`, the objective the closed-form weights minimize.
pub fn trace_objective(labeled: &LabeledDataset, beta: &[f64]) -> Result<f64> {
    Ok(rectified_covariance(labeled, beta)?.trace())
}

pub fn moe_linreg(
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    alpha: Alpha,
    opts: &LinRegOptions,
) -> Result<LinRegEstimate> {
    check_pair(labeled, unlabeled)?;
    let lab = Labeled::new(labeled)?;
    let x_un = unlabeled.require_x()?;
    if x_un.ncols() != labeled.d() {
        return Err(Error::LengthMismatch(format!(
            "unlabeled covariates have {} columns, labeled have {}",
            x_un.ncols(),
            labeled.d()
        )));
    }
    let beta = match &opts.weights {
        Some(w) if w.k() != labeled.k() => {
            return Err(Error::LengthMismatch(format!("{} weights for {} experts", w.k(), labeled.k())))
        }
        Some(w) => w.clone(),
        None => lab.fit(labeled.f()),
    };
    let b = beta.as_dvector();
    let ls_un = LeastSquares::new(x_un)?;
    let a_un = ls_un.solve(unlabeled.f());
    // (X~'X~)^{-1} X~' F~ b - (X'X)^{-1} X' (F b - y), grouped so that equal
    // samples cancel exactly.
    let theta = &lab.b_hat + (a_un - &lab.a_hat) * &b;

    let n = labeled.n() as f64;
    let w_hat = lab.covariance(&b);
    let mut var = w_hat.diagonal() / n;
    if opts.variant == Variant::Plus {
        let fitted_un = unlabeled.f() * &b;
        let resid_un = &fitted_un - x_un * ls_un.solve_vec(&fitted_un);
        let w_un = sandwich(&ls_un, x_un, &resid_un);
        var += w_un.diagonal() / unlabeled.n() as f64;
    }
    let d = labeled.d();
    let a = if opts.bonferroni { alpha.value() / d as f64 } else { alpha.value() };
    let z = z_two_sided(a);
    let cis = (0..d).map(|s| {
        let half = z * var[s].max(0.0).sqrt();
        (theta[s] - half, theta[s] + half)
    });
    Ok(LinRegEstimate {
        cis: cis.collect(),
        theta,
        beta,
        w_hat,
        alpha,
        variant: opts.variant,
        bonferroni: opts.bonferroni,
    })
}

/// OLS on the labeled sample with entrywise normal intervals.
pub fn conventional_linreg(labeled: &LabeledDataset, alpha: Alpha, bonferroni: bool) -> Result<LinRegEstimate> {
    let x = labeled.require_x()?;
    let fit = ols(x, labeled.y())?;
    let n = labeled.n() as f64;
    let d = labeled.d();
    let a = if bonferroni { alpha.value() / d as f64 } else { alpha.value() };
    let z = z_two_sided(a);
    let cis = (0..d)
        .map(|s| {
            let half = z * (fit.w[(s, s)].max(0.0) / n).sqrt();
            (fit.theta[s] - half, fit.theta[s] + half)
        })
        .collect();
    Ok(LinRegEstimate {
        theta: fit.theta,
        beta: WeightVector::fixed(Vec::new()),
        w_hat: fit.w,
        cis,
        alpha,
        variant: Variant::Basic,
        bonferroni,
    })
}
