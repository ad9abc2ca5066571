//! Generic M-estimation with a user-supplied estimating function.
//!
//! The target `theta` solves `E g_theta(X, Y) = 0`.  At each grid point the
//! mixture weights minimize the trace of the unbiased covariance of the
//! rectifier terms, and `theta` is kept when every coordinate of
//! `g~ + Delta` passes a Bonferroni-corrected normal test.
//!
//! Covariances in this module use the `n - 1` (unbiased) denominator.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{check_pair, Alpha, LabeledDataset, ThetaGrid, UnlabeledDataset, Variant, WeightVector};
use crate::error::{Error, Result};
use crate::logreg::logistic_sigmoid;
use crate::normal::z_two_sided;
use crate::optimize::{least_squares_start, minimize_multistart, standard_starts, BoxOptions};
use crate::quantile::{sigmoid_smooth, sigmoid_smooth_deriv};

/// Estimating function `g_theta(x, y)` with values in `R^p`.
pub trait Gradient: Sync {
    /// Output dimension `p`.
    fn dim(&self) -> usize;

    fn theta_dim(&self) -> usize;

    /// Covariate dimension the function reads, `None` if it ignores `x`.
    fn covariate_dim(&self) -> Option<usize> {
        None
    }

    fn eval(&self, theta: &[f64], x: &[f64], y: f64, out: &mut [f64]);

    /// `d g / d y`; the default is a central finite difference.
    fn eval_dy(&self, theta: &[f64], x: &[f64], y: f64, out: &mut [f64]) {
        let step = 1e-6 * (1.0 + y.abs());
        let p = self.dim();
        let mut hi = vec![0.0; p];
        let mut lo = vec![0.0; p];
        self.eval(theta, x, y + step, &mut hi);
        self.eval(theta, x, y - step, &mut lo);
        for j in 0..p {
            out[j] = (hi[j] - lo[j]) / (2.0 * step);
        }
    }
}

/// `y - theta`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanGradient;

impl Gradient for MeanGradient {
    fn dim(&self) -> usize {
        1
    }
    fn theta_dim(&self) -> usize {
        1
    }
    fn eval(&self, theta: &[f64], _x: &[f64], y: f64, out: &mut [f64]) {
        out[0] = y - theta[0];
    }
    fn eval_dy(&self, _theta: &[f64], _x: &[f64], _y: f64, out: &mut [f64]) {
        out[0] = 1.0;
    }
}

/// `S_h(theta - y) - q`.
#[derive(Debug, Clone, Copy)]
pub struct SmoothedQuantileGradient {
    pub q: f64,
    pub h: f64,
}

impl Gradient for SmoothedQuantileGradient {
    fn dim(&self) -> usize {
        1
    }
    fn theta_dim(&self) -> usize {
        1
    }
    fn eval(&self, theta: &[f64], _x: &[f64], y: f64, out: &mut [f64]) {
        out[0] = sigmoid_smooth(theta[0] - y, self.h) - self.q;
    }
    fn eval_dy(&self, theta: &[f64], _x: &[f64], y: f64, out: &mut [f64]) {
        out[0] = -sigmoid_smooth_deriv(theta[0] - y, self.h);
    }
}

/// Least-squares score `(y - x' theta) x`.
#[derive(Debug, Clone, Copy)]
pub struct LinearScore {
    pub d: usize,
}

impl Gradient for LinearScore {
    fn dim(&self) -> usize {
        self.d
    }
    fn theta_dim(&self) -> usize {
        self.d
    }
    fn covariate_dim(&self) -> Option<usize> {
        Some(self.d)
    }
    fn eval(&self, theta: &[f64], x: &[f64], y: f64, out: &mut [f64]) {
        let r = y - x.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
        for (o, xi) in out.iter_mut().zip(x) {
            *o = r * xi;
        }
    }
    fn eval_dy(&self, _theta: &[f64], x: &[f64], _y: f64, out: &mut [f64]) {
        out.copy_from_slice(x);
    }
}

/// Logistic score `(y - S(x' theta)) x`.
#[derive(Debug, Clone, Copy)]
pub struct LogisticScore {
    pub d: usize,
}

impl Gradient for LogisticScore {
    fn dim(&self) -> usize {
        self.d
    }
    fn theta_dim(&self) -> usize {
        self.d
    }
    fn covariate_dim(&self) -> Option<usize> {
        Some(self.d)
    }
    fn eval(&self, theta: &[f64], x: &[f64], y: f64, out: &mut [f64]) {
        let r = y - logistic_sigmoid(x.iter().zip(theta).map(|(a, b)| a * b).sum());
        for (o, xi) in out.iter_mut().zip(x) {
            *o = r * xi;
        }
    }
    fn eval_dy(&self, _theta: &[f64], x: &[f64], _y: f64, out: &mut [f64]) {
        out.copy_from_slice(x);
    }
}

/// Parameters for [`builtin_gradient`].
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinParams {
    pub q: f64,
    pub h: f64,
    pub d: usize,
}

/// Built-in catalogue by name: `mean`, `quantile`, `linear`, `logistic`.
pub fn builtin_gradient(name: &str, params: BuiltinParams) -> Result<Box<dyn Gradient>> {
    Ok(match name {
        "mean" => Box::new(MeanGradient),
        "quantile" => Box::new(SmoothedQuantileGradient { q: params.q, h: params.h }),
        "linear" => Box::new(LinearScore { d: params.d }),
        "logistic" => Box::new(LogisticScore { d: params.d }),
        other => return Err(Error::InvalidConfig(format!("unknown gradient '{other}'"))),
    })
}

pub const BUILTIN_GRADIENTS: [&str; 4] = ["mean", "quantile", "linear", "logistic"];

/// Mixture family `F_beta(f)` combining the K expert predictions.  Only the
/// linear family is provided; other families plug in through this trait.
pub trait Mixture: Sync {
    fn predict(&self, beta: &[f64], f: &[f64]) -> f64;
    /// `d F_beta(f) / d beta`.
    fn dpredict(&self, beta: &[f64], f: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LinearMixture;

impl Mixture for LinearMixture {
    fn predict(&self, beta: &[f64], f: &[f64]) -> f64 {
        beta.iter().zip(f).map(|(b, v)| b * v).sum()
    }
    fn dpredict(&self, _beta: &[f64], f: &[f64], out: &mut [f64]) {
        out.copy_from_slice(f);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// Minimize the labeled rectifier covariance trace.
    #[default]
    Standard,
    /// Also account for the unlabeled variance of the imputed term.
    Refined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MEstConfig {
    pub grid: ThetaGrid,
    pub alpha: Alpha,
    pub weight_mode: WeightMode,
    pub variant: Variant,
    pub beta_box: f64,
    /// Scan grid points concurrently.
    pub parallel: bool,
    /// Use these weights at every grid point instead of fitting.
    pub weights: Option<Vec<f64>>,
}

impl MEstConfig {
    pub fn new(grid: ThetaGrid) -> Self {
        Self {
            grid,
            alpha: Alpha::default(),
            weight_mode: WeightMode::Standard,
            variant: Variant::Basic,
            beta_box: 10.0,
            parallel: false,
            weights: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MEstDiagnostic {
    pub theta: Vec<f64>,
    pub beta: WeightVector,
    pub g_tilde: Vec<f64>,
    pub delta_hat: Vec<f64>,
    pub w_diag: Vec<f64>,
    pub threshold: Vec<f64>,
    pub accepted: bool,
}

impl MEstDiagnostic {
    pub fn statistic_norm(&self) -> f64 {
        self.g_tilde.iter().zip(&self.delta_hat).map(|(g, d)| (g + d) * (g + d)).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MEstResult {
    pub accepted: Vec<Vec<f64>>,
    /// Per-coordinate hull of the accepted points (along each scanned axis for
    /// axis-aligned grids).
    pub per_coordinate_intervals: Vec<Option<(f64, f64)>>,
    /// Grid point minimizing `|g~ + Delta|`.
    pub point_estimate: Vec<f64>,
    pub per_theta: Vec<MEstDiagnostic>,
    pub alpha: Alpha,
    pub variant: Variant,
}

/// Row-major copies of the data, since gradients read one row at a time.
struct Rows {
    x: Vec<Vec<f64>>,
    f: Vec<Vec<f64>>,
}

impl Rows {
    fn new(x: Option<&DMatrix<f64>>, f: &DMatrix<f64>) -> Self {
        let to_rows = |m: &DMatrix<f64>| m.row_iter().map(|r| r.iter().copied().collect()).collect::<Vec<Vec<f64>>>();
        let f_rows = to_rows(f);
        let x_rows = match x {
            Some(m) => to_rows(m),
            None => vec![Vec::new(); f.nrows()],
        };
        Self { x: x_rows, f: f_rows }
    }
}

struct Problem<'a> {
    grad: &'a dyn Gradient,
    mixture: &'a dyn Mixture,
    y: &'a [f64],
    lab: Rows,
    unlab: Rows,
    k: usize,
    labeled: &'a LabeledDataset,
}

/// Value `sum ||m_i - mbar||^2 / (n - 1)`-style trace pieces at a `beta`.
struct Evaluation {
    g_tilde: DVector<f64>,
    delta: DVector<f64>,
    /// Unbiased covariance of the rectifier terms.
    w_lab: DMatrix<f64>,
    /// Unbiased covariance of the imputed terms.
    w_unlab: DMatrix<f64>,
}

fn unbiased_cov(terms: &[DVector<f64>], mean: &DVector<f64>) -> DMatrix<f64> {
    let n = terms.len();
    let p = mean.len();
    if n < 2 {
        return DMatrix::zeros(p, p);
    }
    let mut s = DMatrix::zeros(p, p);
    for m in terms {
        s += m * m.transpose();
    }
    let nf = n as f64;
    (s - mean * mean.transpose() * nf) / (nf - 1.0)
}

impl<'a> Problem<'a> {
    fn new(
        labeled: &'a LabeledDataset,
        unlabeled: &'a UnlabeledDataset,
        grad: &'a dyn Gradient,
        mixture: &'a dyn Mixture,
    ) -> Result<Self> {
        check_pair(labeled, unlabeled)?;
        if let Some(d) = grad.covariate_dim() {
            for got in [labeled.x().map(|m| m.ncols()), unlabeled.x().map(|m| m.ncols())] {
                match got {
                    None => return Err(Error::MissingCovariates),
                    Some(c) if c != d => return Err(Error::GradientDimensionMismatch { expected: d, got: c }),
                    _ => {}
                }
            }
        }
        Ok(Self {
            grad,
            mixture,
            y: labeled.y().as_slice(),
            lab: Rows::new(labeled.x(), labeled.f()),
            unlab: Rows::new(unlabeled.x(), unlabeled.f()),
            k: labeled.k(),
            labeled,
        })
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.grad.theta_dim() {
            return Err(Error::GradientDimensionMismatch { expected: self.grad.theta_dim(), got: theta.len() });
        }
        Ok(())
    }

    fn rectifier_terms(&self, theta: &[f64], beta: &[f64]) -> Vec<DVector<f64>> {
        let p = self.grad.dim();
        let mut a = vec![0.0; p];
        let mut b = vec![0.0; p];
        (0..self.y.len())
            .map(|i| {
                let x = &self.lab.x[i];
                self.grad.eval(theta, x, self.y[i], &mut a);
                self.grad.eval(theta, x, self.mixture.predict(beta, &self.lab.f[i]), &mut b);
                DVector::from_iterator(p, a.iter().zip(&b).map(|(u, v)| u - v))
            })
            .collect()
    }

    fn imputed_terms(&self, theta: &[f64], beta: &[f64]) -> Vec<DVector<f64>> {
        let p = self.grad.dim();
        let mut a = vec![0.0; p];
        (0..self.unlab.f.len())
            .map(|j| {
                self.grad.eval(theta, &self.unlab.x[j], self.mixture.predict(beta, &self.unlab.f[j]), &mut a);
                DVector::from_column_slice(&a)
            })
            .collect()
    }

    fn evaluate(&self, theta: &[f64], beta: &[f64]) -> Evaluation {
        let m = self.rectifier_terms(theta, beta);
        let u = self.imputed_terms(theta, beta);
        let p = self.grad.dim();
        let delta = m.iter().fold(DVector::zeros(p), |acc, v| acc + v) / m.len() as f64;
        let g_tilde = u.iter().fold(DVector::zeros(p), |acc, v| acc + v) / u.len() as f64;
        Evaluation { w_lab: unbiased_cov(&m, &delta), w_unlab: unbiased_cov(&u, &g_tilde), g_tilde, delta }
    }

    /// Trace objective `tr W_lab(beta) + unlab_factor * tr W_unlab(beta)` and
    /// its gradient.
    fn objective(&self, theta: &[f64], beta: &[f64], unlab_factor: f64, grad_out: &mut [f64]) -> f64 {
        let p = self.grad.dim();
        let k = self.k;
        let n = self.y.len();
        grad_out.iter_mut().for_each(|g| *g = 0.0);

        let m = self.rectifier_terms(theta, beta);
        let delta = m.iter().fold(DVector::zeros(p), |acc, v| acc + v) / n as f64;
        let sum_sq: f64 = m.iter().map(|v| v.norm_squared()).sum();
        let mut value = (sum_sq - n as f64 * delta.norm_squared()) / (n as f64 - 1.0);

        // d m_i / d beta = -(dg/dy)(x_i, F_beta) dF_beta'.
        let mut gy = vec![0.0; p];
        let mut df = vec![0.0; k];
        for i in 0..n {
            let pred = self.mixture.predict(beta, &self.lab.f[i]);
            self.grad.eval_dy(theta, &self.lab.x[i], pred, &mut gy);
            self.mixture.dpredict(beta, &self.lab.f[i], &mut df);
            let c: f64 = gy.iter().zip((&m[i] - &delta).iter()).map(|(a, b)| a * b).sum();
            for j in 0..k {
                grad_out[j] -= 2.0 * c * df[j] / (n as f64 - 1.0);
            }
        }

        let big_n = self.unlab.f.len();
        if unlab_factor > 0.0 && big_n >= 2 {
            let u = self.imputed_terms(theta, beta);
            let ubar = u.iter().fold(DVector::zeros(p), |acc, v| acc + v) / big_n as f64;
            let sum_sq: f64 = u.iter().map(|v| v.norm_squared()).sum();
            value += unlab_factor * (sum_sq - big_n as f64 * ubar.norm_squared()) / (big_n as f64 - 1.0);
            for j in 0..big_n {
                let pred = self.mixture.predict(beta, &self.unlab.f[j]);
                self.grad.eval_dy(theta, &self.unlab.x[j], pred, &mut gy);
                self.mixture.dpredict(beta, &self.unlab.f[j], &mut df);
                let c: f64 = gy.iter().zip((&u[j] - &ubar).iter()).map(|(a, b)| a * b).sum();
                for l in 0..k {
                    grad_out[l] += unlab_factor * 2.0 * c * df[l] / (big_n as f64 - 1.0);
                }
            }
        }
        value
    }

    fn unlab_factor(&self, mode: WeightMode) -> f64 {
        match mode {
            WeightMode::Standard => 0.0,
            WeightMode::Refined => self.y.len() as f64 / self.unlab.f.len() as f64,
        }
    }

    fn fit(&self, theta: &[f64], unlab_factor: f64, bound: f64) -> WeightVector {
        let obj = |b: &[f64], g: &mut [f64]| self.objective(theta, b, unlab_factor, g);
        let opts = BoxOptions { bound, ..BoxOptions::default() };
        let mut starts = standard_starts(self.k, None);
        starts.extend(least_squares_start(self.labeled.y(), self.labeled.f(), bound));
        let m = minimize_multistart(&obj, &starts, &opts);
        WeightVector::numeric(m.x, m.converged)
    }

    fn diagnose(&self, theta: &[f64], beta: WeightVector, z: f64, variant: Variant) -> MEstDiagnostic {
        let ev = self.evaluate(theta, &beta.beta);
        let n = self.y.len() as f64;
        let big_n = self.unlab.f.len() as f64;
        let p = self.grad.dim();
        let w_diag: Vec<f64> = (0..p).map(|s| ev.w_lab[(s, s)]).collect();
        let threshold: Vec<f64> = (0..p)
            .map(|s| {
                let mut v = ev.w_lab[(s, s)] / n;
                if variant == Variant::Plus {
                    v += ev.w_unlab[(s, s)] / big_n;
                }
                z * v.max(0.0).sqrt()
            })
            .collect();
        let accepted = (0..p).all(|s| (ev.g_tilde[s] + ev.delta[s]).abs() <= threshold[s]);
        MEstDiagnostic {
            theta: theta.to_vec(),
            beta,
            g_tilde: ev.g_tilde.as_slice().to_vec(),
            delta_hat: ev.delta.as_slice().to_vec(),
            w_diag,
            threshold,
            accepted,
        }
    }
}

/// `(n-1)^{-1} sum m_i m_i' - n/(n-1) Delta Delta'` with
/// `m_i = g(x_i, y_i) - g(x_i, F_beta(x_i))`.
pub fn rectified_cov_unbiased(
    theta: &[f64],
    beta: &[f64],
    labeled: &LabeledDataset,
    grad: &dyn Gradient,
) -> Result<DMatrix<f64>> {
    let dummy = UnlabeledDataset::new(None, DMatrix::zeros(1, labeled.k()))?;
    let dummy = match (grad.covariate_dim(), labeled.x()) {
        (Some(_), Some(x)) => UnlabeledDataset::new(Some(x.rows(0, 1).into_owned()), DMatrix::zeros(1, labeled.k()))?,
        _ => dummy,
    };
    let p = Problem::new(labeled, &dummy, grad, &LinearMixture)?;
    p.check_theta(theta)?;
    let m = p.rectifier_terms(theta, beta);
    let delta = m.iter().fold(DVector::zeros(grad.dim()), |acc, v| acc + v) / m.len() as f64;
    Ok(unbiased_cov(&m, &delta))
}

/// Imputed gradient `g~` and rectifier `Delta` at fixed `theta` and `beta`.
pub fn estimating_function(
    theta: &[f64],
    beta: &[f64],
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    grad: &dyn Gradient,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let p = Problem::new(labeled, unlabeled, grad, &LinearMixture)?;
    p.check_theta(theta)?;
    let ev = p.evaluate(theta, beta);
    Ok((ev.g_tilde, ev.delta))
}

/// Trace objective of the selected weight mode; `unlab_factor` overrides the
/// default `n / N` weight of the unlabeled term in refined mode.
pub fn weight_objective(
    theta: &[f64],
    beta: &[f64],
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    grad: &dyn Gradient,
    unlab_factor: f64,
) -> Result<f64> {
    let p = Problem::new(labeled, unlabeled, grad, &LinearMixture)?;
    p.check_theta(theta)?;
    let mut g = vec![0.0; labeled.k()];
    Ok(p.objective(theta, beta, unlab_factor, &mut g))
}

/// Gradient of [`weight_objective`] with respect to `beta`.
pub fn weight_objective_gradient(
    theta: &[f64],
    beta: &[f64],
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    grad: &dyn Gradient,
    unlab_factor: f64,
) -> Result<Vec<f64>> {
    let p = Problem::new(labeled, unlabeled, grad, &LinearMixture)?;
    p.check_theta(theta)?;
    let mut g = vec![0.0; labeled.k()];
    p.objective(theta, beta, unlab_factor, &mut g);
    Ok(g)
}

/// Numerically fitted weights at `theta`.
pub fn fit_weights_m(
    theta: &[f64],
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    grad: &dyn Gradient,
    config: &MEstConfig,
) -> Result<WeightVector> {
    let p = Problem::new(labeled, unlabeled, grad, &LinearMixture)?;
    p.check_theta(theta)?;
    Ok(p.fit(theta, p.unlab_factor(config.weight_mode), config.beta_box))
}

/// Like [`fit_weights_m`] with an explicit unlabeled-term factor.
pub fn fit_weights_m_scaled(
    theta: &[f64],
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    grad: &dyn Gradient,
    beta_box: f64,
    unlab_factor: f64,
) -> Result<WeightVector> {
    let p = Problem::new(labeled, unlabeled, grad, &LinearMixture)?;
    p.check_theta(theta)?;
    Ok(p.fit(theta, unlab_factor, beta_box))
}

pub fn moe_mest_set(
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    grad: &dyn Gradient,
    config: &MEstConfig,
) -> Result<MEstResult> {
    moe_mest_set_with_mixture(labeled, unlabeled, grad, &LinearMixture, config)
}

pub fn moe_mest_set_with_mixture(
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    grad: &dyn Gradient,
    mixture: &dyn Mixture,
    config: &MEstConfig,
) -> Result<MEstResult> {
    if !(config.beta_box > 0.0) {
        return Err(Error::InvalidConfig(format!("weight box must be positive, got {}", config.beta_box)));
    }
    let prob = Problem::new(labeled, unlabeled, grad, mixture)?;
    if config.grid.dim() != grad.theta_dim() {
        return Err(Error::GradientDimensionMismatch { expected: grad.theta_dim(), got: config.grid.dim() });
    }
    if let Some(w) = &config.weights {
        if w.len() != labeled.k() {
            return Err(Error::LengthMismatch(format!("{} weights for {} experts", w.len(), labeled.k())));
        }
    }
    let points = config.grid.points()?;
    if points.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let z = z_two_sided(config.alpha.value() / grad.dim() as f64);
    let factor = prob.unlab_factor(config.weight_mode);
    let one = |theta: &[f64]| {
        let beta = match &config.weights {
            Some(w) => WeightVector::fixed(w.clone()),
            None => prob.fit(theta, factor, config.beta_box),
        };
        prob.diagnose(theta, beta, z, config.variant)
    };
    let per_theta: Vec<MEstDiagnostic> = if config.parallel {
        points.par_iter().map(|pt| one(&pt.theta)).collect()
    } else {
        points.iter().map(|pt| one(&pt.theta)).collect()
    };

    let d = grad.theta_dim();
    let mut intervals: Vec<Option<(f64, f64)>> = vec![None; d];
    let mut accepted = Vec::new();
    for (pt, diag) in points.iter().zip(&per_theta) {
        if !diag.accepted {
            continue;
        }
        let coords: Vec<usize> = match pt.axis {
            Some(s) => vec![s],
            None => (0..d).collect(),
        };
        for s in coords {
            let v = pt.theta[s];
            intervals[s] = Some(intervals[s].map_or((v, v), |(lo, hi)| (lo.min(v), hi.max(v))));
        }
        accepted.push(pt.theta.clone());
    }
    let point_estimate = per_theta
        .iter()
        .min_by(|a, b| a.statistic_norm().total_cmp(&b.statistic_norm()))
        .map(|d| d.theta.clone())
        .unwrap_or_default();
    Ok(MEstResult {
        accepted,
        per_coordinate_intervals: intervals,
        point_estimate,
        per_theta,
        alpha: config.alpha,
        variant: config.variant,
    })
}
