//! Logistic-regression coefficients.  Mixture weights do not depend on the
//! candidate `theta`, so the weights, rectifier and covariance are computed
//! once and the grid scan only re-evaluates the imputed score.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{check_pair, grid_points, Alpha, GridSpec, LabeledDataset, ThetaGrid, UnlabeledDataset, Variant, WeightVector};
use crate::error::{Error, Result};
use crate::linalg::{guarded_psd_solve, pop_covariance, symmetrize, LeastSquares};
use crate::linreg::{HESSIAN_GUARD, NOISE_FLOOR};
use crate::normal::z_two_sided;

pub const DEFAULT_AXIS_STEPS: usize = 201;
/// Default grid half-width in coordinate standard errors.
pub const DEFAULT_SE_SPAN: f64 = 8.0;

pub fn logistic_sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn validate_binary(y: &DVector<f64>) -> Result<()> {
    match y.iter().enumerate().find(|(_, &v)| v != 0.0 && v != 1.0) {
        Some((i, &value)) => Err(Error::NonBinaryResponse { row: i + 1, value }),
        None => Ok(()),
    }
}

fn sq_norms(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(x.nrows(), x.row_iter().map(|r| r.norm_squared()))
}

/// Closed-form weights minimizing the trace of the rectifier covariance.
pub fn fit_weights_logreg(labeled: &LabeledDataset) -> Result<WeightVector> {
    validate_binary(labeled.y())?;
    let x = labeled.require_x()?;
    let (f, y) = (labeled.f(), labeled.y());
    let (n, k) = (labeled.n() as f64, labeled.k());
    if labeled.n() <= k {
        return Err(Error::TooFewRows { needed: k + 1, got: labeled.n() });
    }
    let q = sq_norms(x);
    let mut qf = f.clone();
    for (i, mut row) in qf.row_iter_mut().enumerate() {
        row *= q[i];
    }
    // M = n^{-1} sum x_i f_i' (d x K), v = n^{-1} sum x_i y_i.
    let m = x.transpose() * f / n;
    let v = x.transpose() * y / n;
    let raw = symmetrize(&(qf.transpose() * f / n));
    let h = symmetrize(&(&raw - m.transpose() * &m));
    let r = qf.transpose() * y / n - m.transpose() * v;
    Ok(match guarded_psd_solve(&h, &r, HESSIAN_GUARD, NOISE_FLOOR * raw.trace()) {
        Some(beta) => WeightVector::closed_form(beta.as_slice().to_vec()),
        None => WeightVector::guard_zero(k),
    })
}

/// `n^{-1} sum (f_i' beta - y_i) x_i`.
pub fn rectifier(labeled: &LabeledDataset, beta: &[f64]) -> Result<DVector<f64>> {
    let x = labeled.require_x()?;
    let resid = labeled.f() * DVector::from_column_slice(beta) - labeled.y();
    Ok(x.transpose() * resid / labeled.n() as f64)
}

/// `n^{-1} sum (f_i' beta - y_i)^2 x_i x_i' - Delta Delta'`.
pub fn rectified_covariance(labeled: &LabeledDataset, beta: &[f64]) -> Result<DMatrix<f64>> {
    let x = labeled.require_x()?;
    let resid = labeled.f() * DVector::from_column_slice(beta) - labeled.y();
    let mut xr = x.clone();
    for (i, mut row) in xr.row_iter_mut().enumerate() {
        row *= resid[i];
    }
    Ok(pop_covariance(&xr))
}

pub fn trace_objective(labeled: &LabeledDataset, beta: &[f64]) -> Result<f64> {
    Ok(rectified_covariance(labeled, beta)?.trace())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleFit {
    pub theta: DVector<f64>,
    /// Coordinate standard errors from the inverse Fisher information.
    pub se: DVector<f64>,
    pub converged: bool,
}

/// Maximum-likelihood fit by damped Newton iterations.
pub fn mle_logistic(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<MleFit> {
    validate_binary(y)?;
    let (n, d) = (x.nrows(), x.ncols());
    if n <= d {
        return Err(Error::SingularDesign);
    }
    LeastSquares::new(x)?;
    let loglik = |theta: &DVector<f64>| -> f64 {
        let eta = x * theta;
        eta.iter().zip(y.iter()).map(|(&e, &yi)| yi * e - softplus(e)).sum()
    };
    let mut theta = DVector::zeros(d);
    let mut ll = loglik(&theta);
    let mut converged = false;
    for _ in 0..100 {
        let eta = x * &theta;
        let p = eta.map(logistic_sigmoid);
        let score = x.transpose() * (y - &p);
        if score.norm() / (n as f64) < 1e-10 {
            converged = true;
            break;
        }
        let mut xw = x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= p[i] * (1.0 - p[i]);
        }
        let info = symmetrize(&(x.transpose() * xw));
        let Some(step) = info.clone().cholesky().map(|c| c.solve(&score)) else {
            return Err(Error::SingularDesign);
        };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let cand = &theta + &step * t;
            let cll = loglik(&cand);
            if cll >= ll {
                theta = cand;
                ll = cll;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            converged = score.norm() / (n as f64) < 1e-8;
            break;
        }
    }
    let p = (x * &theta).map(logistic_sigmoid);
    let mut xw = x.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        row *= p[i] * (1.0 - p[i]);
    }
    let info = symmetrize(&(x.transpose() * xw));
    let cov = info.try_inverse().ok_or(Error::SingularDesign)?;
    let se = DVector::from_iterator(d, (0..d).map(|s| cov[(s, s)].max(0.0).sqrt()));
    Ok(MleFit { theta, se, converged })
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegConfig {
    /// `None` scans each axis over the MLE plus or minus eight standard errors.
    pub grid: Option<ThetaGrid>,
    pub alpha: Alpha,
    pub variant: Variant,
    pub parallel: bool,
    /// Use these weights instead of the closed-form fit.
    pub weights: Option<WeightVector>,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self { grid: None, alpha: Alpha::default(), variant: Variant::Basic, parallel: false, weights: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegResult {
    pub beta: WeightVector,
    pub delta_hat: DVector<f64>,
    pub w_hat: DMatrix<f64>,
    pub accepted: Vec<Vec<f64>>,
    /// Hull of accepted values along each scanned axis (axis-aligned grids)
    /// or of each coordinate among accepted points (Cartesian grids).
    pub per_coordinate_intervals: Vec<Option<(f64, f64)>>,
    pub grid_size: usize,
    pub alpha: Alpha,
    pub variant: Variant,
}

impl LogRegResult {
    pub fn width(&self, s: usize) -> f64 {
        self.per_coordinate_intervals[s].map_or(0.0, |(lo, hi)| hi - lo)
    }
}

/// Precomputed pieces of the mixture score test.
#[derive(Debug, Clone)]
pub struct LogRegTest<'a> {
    x_un: &'a DMatrix<f64>,
    pred_un: DVector<f64>,
    pub beta: WeightVector,
    pub delta_hat: DVector<f64>,
    pub w_hat: DMatrix<f64>,
    n: usize,
    z: f64,
    variant: Variant,
}

impl<'a> LogRegTest<'a> {
    pub fn new(labeled: &LabeledDataset, unlabeled: &'a UnlabeledDataset, config: &LogRegConfig) -> Result<Self> {
        check_pair(labeled, unlabeled)?;
        validate_binary(labeled.y())?;
        let x = labeled.require_x()?;
        let x_un = unlabeled.require_x()?;
        if x_un.ncols() != x.ncols() {
            return Err(Error::LengthMismatch(format!(
                "unlabeled covariates have {} columns, labeled have {}",
                x_un.ncols(),
                x.ncols()
            )));
        }
        let beta = match &config.weights {
            Some(w) if w.k() != labeled.k() => {
                return Err(Error::LengthMismatch(format!("{} weights for {} experts", w.k(), labeled.k())))
            }
            Some(w) => w.clone(),
            None => fit_weights_logreg(labeled)?,
        };
        let delta_hat = rectifier(labeled, &beta.beta)?;
        let w_hat = rectified_covariance(labeled, &beta.beta)?;
        let pred_un = unlabeled.f() * beta.as_dvector();
        let d = x.ncols();
        Ok(Self {
            x_un,
            pred_un,
            beta,
            delta_hat,
            w_hat,
            n: labeled.n(),
            z: z_two_sided(config.alpha.value() / d as f64),
            variant: config.variant,
        })
    }

    pub fn dim(&self) -> usize {
        self.x_un.ncols()
    }

    /// `N^{-1} X~' (F~ beta - S(X~ theta))`.
    pub fn imputed_gradient(&self, theta: &[f64]) -> DVector<f64> {
        let t = DVector::from_column_slice(theta);
        let resid = &self.pred_un - (self.x_un * t).map(logistic_sigmoid);
        self.x_un.transpose() * resid / self.x_un.nrows() as f64
    }

    /// Per-coordinate statistics `|g~ - Delta|` and thresholds.
    pub fn statistic(&self, theta: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let diff = (self.imputed_gradient(theta) - &self.delta_hat).abs();
        let n = self.n as f64;
        let mut var = self.w_hat.diagonal() / n;
        if self.variant == Variant::Plus {
            let t = DVector::from_column_slice(theta);
            let resid = &self.pred_un - (self.x_un * t).map(logistic_sigmoid);
            let mut xr = self.x_un.clone();
            for (i, mut row) in xr.row_iter_mut().enumerate() {
                row *= resid[i];
            }
            var += pop_covariance(&xr).diagonal() / self.x_un.nrows() as f64;
        }
        let thresholds = var.map(|v| self.z * v.max(0.0).sqrt());
        (diff, thresholds)
    }

    pub fn accepts(&self, theta: &[f64]) -> bool {
        let (diff, thr) = self.statistic(theta);
        diff.iter().zip(thr.iter()).all(|(d, t)| d <= t)
    }

    /// Root of `g~(theta) = Delta` by damped Newton from `start`.
    pub fn point_estimate(&self, start: &[f64]) -> Vec<f64> {
        let big_n = self.x_un.nrows() as f64;
        let residual = |t: &DVector<f64>| self.imputed_gradient(t.as_slice()) - &self.delta_hat;
        let mut theta = DVector::from_column_slice(start);
        let mut r = residual(&theta);
        for _ in 0..100 {
            if r.norm() < 1e-12 {
                break;
            }
            let p = (self.x_un * &theta).map(logistic_sigmoid);
            let mut xw = self.x_un.clone();
            for (i, mut row) in xw.row_iter_mut().enumerate() {
                row *= p[i] * (1.0 - p[i]);
            }
            // d residual / d theta = -J with J = X~' W X~ / N.
            let jac = symmetrize(&(self.x_un.transpose() * xw / big_n));
            let Some(step) = jac.cholesky().map(|c| c.solve(&r)) else { break };
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..40 {
                let cand = &theta + &step * t;
                let rc = residual(&cand);
                if rc.norm() < r.norm() {
                    theta = cand;
                    r = rc;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        theta.as_slice().to_vec()
    }
}

/// Axis-aligned grid centered at the labeled MLE.
pub fn default_grid(labeled: &LabeledDataset) -> Result<ThetaGrid> {
    let x = labeled.require_x()?;
    let mle = mle_logistic(x, labeled.y())?;
    let axes = (0..x.ncols())
        .map(|s| {
            let half = DEFAULT_SE_SPAN * mle.se[s].max(1e-8);
            GridSpec::uniform(mle.theta[s] - half, mle.theta[s] + half, DEFAULT_AXIS_STEPS)
        })
        .collect();
    Ok(ThetaGrid::Axis { axes, center: mle.theta.as_slice().to_vec() })
}

/// Bonferroni grid-scan confidence set for the coefficients.
pub fn moe_logreg_set(labeled: &LabeledDataset, unlabeled: &UnlabeledDataset, config: &LogRegConfig) -> Result<LogRegResult> {
    let test = LogRegTest::new(labeled, unlabeled, config)?;
    let grid = match &config.grid {
        Some(g) => g.clone(),
        None => default_grid(labeled)?,
    };
    let d = test.dim();
    if grid.dim() != d {
        return Err(Error::InvalidGrid(format!("grid has {} coordinates, design has {d}", grid.dim())));
    }
    let (accepted, intervals, size) = scan(&grid, config.parallel, |t| test.accepts(t))?;
    Ok(LogRegResult {
        beta: test.beta.clone(),
        delta_hat: test.delta_hat.clone(),
        w_hat: test.w_hat.clone(),
        accepted,
        per_coordinate_intervals: intervals,
        grid_size: size,
        alpha: config.alpha,
        variant: config.variant,
    })
}

type ScanOutput = (Vec<Vec<f64>>, Vec<Option<(f64, f64)>>, usize);

fn scan<T: Fn(&[f64]) -> bool + Sync>(grid: &ThetaGrid, parallel: bool, test: T) -> Result<ScanOutput> {
    let points = grid.points()?;
    if points.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let flags: Vec<bool> = if parallel {
        points.par_iter().map(|p| test(&p.theta)).collect()
    } else {
        points.iter().map(|p| test(&p.theta)).collect()
    };
    let d = grid.dim();
    let mut intervals: Vec<Option<(f64, f64)>> = vec![None; d];
    let mut accepted = Vec::new();
    for (p, &ok) in points.iter().zip(&flags) {
        if !ok {
            continue;
        }
        let coords: Vec<usize> = match p.axis {
            Some(s) => vec![s],
            None => (0..d).collect(),
        };
        for s in coords {
            let v = p.theta[s];
            intervals[s] = Some(match intervals[s] {
                None => (v, v),
                Some((lo, hi)) => (lo.min(v), hi.max(v)),
            });
        }
        accepted.push(p.theta.clone());
    }
    Ok((accepted, intervals, points.len()))
}

/// Labeled-only score test with a `theta`-dependent sandwich variance.
#[derive(Debug, Clone)]
pub struct ConventionalLogRegTest<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    z: f64,
}

impl<'a> ConventionalLogRegTest<'a> {
    pub fn new(labeled: &'a LabeledDataset, alpha: Alpha) -> Result<Self> {
        validate_binary(labeled.y())?;
        let x = labeled.require_x()?;
        Ok(Self { x, y: labeled.y(), z: z_two_sided(alpha.value() / x.ncols() as f64) })
    }

    pub fn accepts(&self, theta: &[f64]) -> bool {
        let t = DVector::from_column_slice(theta);
        let resid = self.y - (self.x * t).map(logistic_sigmoid);
        let mut xr = self.x.clone();
        for (i, mut row) in xr.row_iter_mut().enumerate() {
            row *= resid[i];
        }
        let n = self.x.nrows() as f64;
        let g = xr.row_sum().transpose() / n;
        let var = pop_covariance(&xr).diagonal() / n;
        g.iter().zip(var.iter()).all(|(gs, vs)| gs.abs() <= self.z * vs.max(0.0).sqrt())
    }
}

pub fn conventional_logreg_set(labeled: &LabeledDataset, config: &LogRegConfig) -> Result<LogRegResult> {
    let test = ConventionalLogRegTest::new(labeled, config.alpha)?;
    let grid = match &config.grid {
        Some(g) => g.clone(),
        None => default_grid(labeled)?,
    };
    let (accepted, intervals, size) = scan(&grid, config.parallel, |t| test.accepts(t))?;
    let d = labeled.d();
    Ok(LogRegResult {
        beta: WeightVector::fixed(Vec::new()),
        delta_hat: DVector::zeros(d),
        w_hat: DMatrix::zeros(d, d),
        accepted,
        per_coordinate_intervals: intervals,
        grid_size: size,
        alpha: config.alpha,
        variant: Variant::Basic,
    })
}

/// Grid points along each axis, used by callers that scan only one axis.
pub fn axis_points(grid: &ThetaGrid, s: usize) -> Result<Vec<f64>> {
    match grid {
        ThetaGrid::Axis { axes, .. } | ThetaGrid::Cartesian(axes) => grid_points(&axes[s]),
        ThetaGrid::Scalar(spec) => grid_points(spec),
    }
}
