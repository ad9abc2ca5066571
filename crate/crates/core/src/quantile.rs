//! Quantile inference through a sigmoid-smoothed estimating function.
//!
//! For each candidate `theta` on a grid, mixture weights are refitted to
//! minimize the labeled variance of
//! `S_h(theta - y_i) - S_h(theta - f_i' beta)`, and `theta` is kept when the
//! rectified estimating function is within a normal threshold of zero.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{check_pair, grid_points, Alpha, GridSpec, LabeledDataset, UnlabeledDataset, Variant, WeightVector};
use crate::error::{Error, Result};
use crate::normal::z_two_sided;
use crate::optimize::{least_squares_start, minimize_multistart, standard_starts, BoxOptions};

pub const DEFAULT_GRID_STEPS: usize = 401;

/// `1 / (1 + exp(-t / h))`, evaluated without overflow.
pub fn sigmoid_smooth(t: f64, h: f64) -> f64 {
    let z = t / h;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Derivative of [`sigmoid_smooth`] with respect to `t`.
pub fn sigmoid_smooth_deriv(t: f64, h: f64) -> f64 {
    let s = sigmoid_smooth(t, h);
    s * (1.0 - s) / h
}

/// `n^{-1/3}`.
pub fn default_bandwidth(n: usize) -> f64 {
    1.0 / (n as f64).cbrt()
}

/// Accepts `h = n^{-gamma}` only for `gamma` strictly between 1/4 and 1/2.
pub fn check_bandwidth(h: f64, n: usize) -> Result<()> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidConfig(format!("bandwidth must be positive, got {h}")));
    }
    if n < 2 {
        return Err(Error::InvalidConfig("bandwidth override needs n >= 2".into()));
    }
    let gamma = -h.ln() / (n as f64).ln();
    if gamma > 0.25 && gamma < 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "bandwidth {h} corresponds to exponent {gamma:.4} for n={n}; must lie in (1/4, 1/2)"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileConfig {
    pub q: f64,
    /// `None` selects `n^{-1/3}`.
    pub bandwidth: Option<f64>,
    pub beta_box: f64,
    /// `None` selects the default grid around the sample quantile.
    pub grid: Option<GridSpec>,
    pub alpha: Alpha,
    pub variant: Variant,
    /// Scan grid points concurrently.
    pub parallel: bool,
}

impl QuantileConfig {
    pub fn new(q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidConfig(format!("quantile level must lie in (0, 1), got {q}")));
        }
        Ok(Self {
            q,
            bandwidth: None,
            beta_box: 10.0,
            grid: None,
            alpha: Alpha::default(),
            variant: Variant::Basic,
            parallel: false,
        })
    }

    pub fn resolve_bandwidth(&self, n: usize) -> Result<f64> {
        match self.bandwidth {
            None => Ok(default_bandwidth(n)),
            Some(h) => check_bandwidth(h, n).map(|_| h),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::InvalidConfig(format!("quantile level must lie in (0, 1), got {}", self.q)));
        }
        if !(self.beta_box > 0.0 && self.beta_box.is_finite()) {
            return Err(Error::InvalidConfig(format!("weight box must be positive, got {}", self.beta_box)));
        }
        Ok(())
    }

    fn box_options(&self) -> BoxOptions {
        BoxOptions { bound: self.beta_box, ..BoxOptions::default() }
    }
}

/// How the per-theta weights are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantileWeights {
    Fit,
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaDiagnostic {
    pub theta: f64,
    pub m_hat: f64,
    /// Labeled variance of the smoothed residual differences.
    pub variance: f64,
    /// Unlabeled variance of the smoothed mixture term.
    pub unlabeled_variance: f64,
    pub threshold: f64,
    pub beta: WeightVector,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileResult {
    pub q: f64,
    pub h: f64,
    pub grid: GridSpec,
    pub accepted: Vec<f64>,
    pub hull: Option<(f64, f64)>,
    /// Grid point minimizing `|m_hat|`.
    pub point_estimate: f64,
    pub per_theta: Vec<ThetaDiagnostic>,
    pub alpha: Alpha,
    pub variant: Variant,
}

impl QuantileResult {
    pub fn width(&self) -> f64 {
        self.hull.map_or(0.0, |(lo, hi)| hi - lo)
    }
}

/// Population variance (denominator `n`) of
/// `S_h(theta - y_i) - S_h(theta - f_i' beta)`.
pub fn qn_objective(theta: f64, beta: &[f64], labeled: &LabeledDataset, h: f64) -> f64 {
    let sy: Vec<f64> = labeled.y().iter().map(|&y| sigmoid_smooth(theta - y, h)).collect();
    objective_and_gradient(theta, &sy, labeled.f(), h, beta, None)
}

/// Objective and optional gradient with the response sigmoids precomputed.
fn objective_and_gradient(theta: f64, sy: &[f64], f: &DMatrix<f64>, h: f64, beta: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let n = sy.len();
    let k = f.ncols();
    let b = DVector::from_column_slice(beta);
    let fitted = f * &b;
    let inv_n = 1.0 / n as f64;
    let mut sum_d = 0.0;
    let mut sum_d2 = 0.0;
    let mut sd = vec![0.0; n];
    let mut sp = vec![0.0; n];
    for i in 0..n {
        let s = sigmoid_smooth(theta - fitted[i], h);
        let d = sy[i] - s;
        sum_d += d;
        sum_d2 += d * d;
        sd[i] = d;
        sp[i] = s * (1.0 - s) / h;
    }
    let dbar = sum_d * inv_n;
    let value = (sum_d2 * inv_n - dbar * dbar).max(0.0);
    if let Some(g) = grad {
        for (j, gj) in g.iter_mut().enumerate().take(k) {
            let col = f.column(j);
            let mut a = 0.0;
            let mut c = 0.0;
            for i in 0..n {
                let w = sp[i] * col[i];
                a += sd[i] * w;
                c += w;
            }
            *gj = 2.0 * inv_n * a - 2.0 * dbar * inv_n * c;
        }
    }
    value
}

/// Analytic gradient of [`qn_objective`] with respect to `beta`.
pub fn qn_gradient(theta: f64, beta: &[f64], labeled: &LabeledDataset, h: f64) -> Vec<f64> {
    let sy: Vec<f64> = labeled.y().iter().map(|&y| sigmoid_smooth(theta - y, h)).collect();
    let mut g = vec![0.0; beta.len()];
    objective_and_gradient(theta, &sy, labeled.f(), h, beta, Some(&mut g));
    g
}

struct Problem<'a> {
    y: &'a DVector<f64>,
    f: &'a DMatrix<f64>,
    f_unlab: &'a DMatrix<f64>,
    h: f64,
    q: f64,
    z: f64,
    variant: Variant,
    opts: BoxOptions,
}

impl Problem<'_> {
    fn response_sigmoids(&self, theta: f64) -> Vec<f64> {
        self.y.iter().map(|&y| sigmoid_smooth(theta - y, self.h)).collect()
    }

    fn fit(&self, theta: f64, sy: &[f64]) -> WeightVector {
        let obj = |b: &[f64], g: &mut [f64]| objective_and_gradient(theta, sy, self.f, self.h, b, Some(g));
        let mut starts = standard_starts(self.f.ncols(), None);
        starts.extend(least_squares_start(self.y, self.f, self.opts.bound));
        let m = minimize_multistart(&obj, &starts, &self.opts);
        WeightVector::numeric(m.x, m.converged)
    }

    fn evaluate(&self, theta: f64, sy: &[f64], beta: WeightVector) -> ThetaDiagnostic {
        let n = sy.len() as f64;
        let b = beta.as_dvector();
        let variance = objective_and_gradient(theta, sy, self.f, self.h, &beta.beta, None);
        let fitted = self.f * &b;
        let rect: f64 = sy.iter().zip(fitted.iter()).map(|(s, f)| s - sigmoid_smooth(theta - f, self.h)).sum::<f64>() / n;
        let pred_unlab = self.f_unlab * &b;
        let big_n = pred_unlab.len() as f64;
        let su: Vec<f64> = pred_unlab.iter().map(|&f| sigmoid_smooth(theta - f, self.h)).collect();
        let su_mean = su.iter().sum::<f64>() / big_n;
        let unlabeled_variance = su.iter().map(|s| (s - su_mean) * (s - su_mean)).sum::<f64>() / big_n;
        let m_hat = su_mean + rect - self.q;
        let var = match self.variant {
            Variant::Basic => variance / n,
            Variant::Plus => variance / n + unlabeled_variance / big_n,
        };
        let threshold = self.z * var.sqrt();
        ThetaDiagnostic { theta, m_hat, variance, unlabeled_variance, threshold, beta, accepted: m_hat.abs() <= threshold }
    }

    fn at(&self, theta: f64, weights: &QuantileWeights) -> ThetaDiagnostic {
        let sy = self.response_sigmoids(theta);
        let beta = match weights {
            QuantileWeights::Fit => self.fit(theta, &sy),
            QuantileWeights::Fixed(b) => WeightVector::fixed(b.clone()),
        };
        self.evaluate(theta, &sy, beta)
    }
}

fn problem<'a>(
    labeled: &'a LabeledDataset,
    unlabeled: &'a UnlabeledDataset,
    config: &QuantileConfig,
) -> Result<Problem<'a>> {
    config.validate()?;
    check_pair(labeled, unlabeled)?;
    Ok(Problem {
        y: labeled.y(),
        f: labeled.f(),
        f_unlab: unlabeled.f(),
        h: config.resolve_bandwidth(labeled.n())?,
        q: config.q,
        z: z_two_sided(config.alpha.value()),
        variant: config.variant,
        opts: config.box_options(),
    })
}

/// Box-constrained multi-start minimizer of [`qn_objective`] at `theta`.
pub fn fit_weights_quantile(theta: f64, labeled: &LabeledDataset, config: &QuantileConfig) -> Result<WeightVector> {
    config.validate()?;
    let h = config.resolve_bandwidth(labeled.n())?;
    let dummy = DMatrix::zeros(1, labeled.k());
    let p = Problem {
        y: labeled.y(),
        f: labeled.f(),
        f_unlab: &dummy,
        h,
        q: config.q,
        z: 0.0,
        variant: Variant::Basic,
        opts: config.box_options(),
    };
    let sy = p.response_sigmoids(theta);
    Ok(p.fit(theta, &sy))
}

/// Type-7 sample quantile (linear interpolation between order statistics).
pub fn sample_quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Sample quantile plus or minus `6 IQR / sqrt(n)`, 401 points.
pub fn default_grid(y: &[f64], q: f64) -> GridSpec {
    let center = sample_quantile(y, q);
    let iqr = sample_quantile(y, 0.75) - sample_quantile(y, 0.25);
    let spread = if iqr > 0.0 { iqr } else { 1.0 + center.abs() };
    let half = 6.0 * spread / (y.len() as f64).sqrt();
    GridSpec::uniform(center - half, center + half, DEFAULT_GRID_STEPS)
}

/// Rectified test at a single `theta`.
pub fn quantile_test_at(
    theta: f64,
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    config: &QuantileConfig,
    weights: &QuantileWeights,
) -> Result<ThetaDiagnostic> {
    let p = problem(labeled, unlabeled, config)?;
    check_fixed(weights, labeled.k())?;
    Ok(p.at(theta, weights))
}

fn check_fixed(weights: &QuantileWeights, k: usize) -> Result<()> {
    if let QuantileWeights::Fixed(b) = weights {
        if b.len() != k {
            return Err(Error::LengthMismatch(format!("{} weights for {k} experts", b.len())));
        }
    }
    Ok(())
}

/// Grid-scan confidence set with refitted mixture weights at every point.
pub fn moe_quantile_set(
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    config: &QuantileConfig,
) -> Result<QuantileResult> {
    quantile_set(labeled, unlabeled, config, &QuantileWeights::Fit)
}

pub fn quantile_set(
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    config: &QuantileConfig,
    weights: &QuantileWeights,
) -> Result<QuantileResult> {
    let p = problem(labeled, unlabeled, config)?;
    check_fixed(weights, labeled.k())?;
    let grid = config.grid.clone().unwrap_or_else(|| default_grid(labeled.y().as_slice(), config.q));
    let thetas = grid_points(&grid)?;
    let per_theta: Vec<ThetaDiagnostic> = if config.parallel {
        thetas.par_iter().map(|&t| p.at(t, weights)).collect()
    } else {
        thetas.iter().map(|&t| p.at(t, weights)).collect()
    };
    Ok(assemble(per_theta, &p, grid, config))
}

fn assemble(per_theta: Vec<ThetaDiagnostic>, p: &Problem<'_>, grid: GridSpec, config: &QuantileConfig) -> QuantileResult {
    let accepted: Vec<f64> = per_theta.iter().filter(|d| d.accepted).map(|d| d.theta).collect();
    let hull = match (accepted.first(), accepted.last()) {
        (Some(&lo), Some(&hi)) => Some((lo, hi)),
        _ => None,
    };
    let point_estimate = per_theta
        .iter()
        .min_by(|a, b| a.m_hat.abs().total_cmp(&b.m_hat.abs()))
        .map(|d| d.theta)
        .unwrap_or(f64::NAN);
    QuantileResult {
        q: p.q,
        h: p.h,
        grid,
        accepted,
        hull,
        point_estimate,
        per_theta,
        alpha: config.alpha,
        variant: config.variant,
    }
}

/// Labeled-only smoothed set: the mixture test with a single all-zero
/// predictor, which cancels every expert term.
pub fn conventional_quantile_set(y: &[f64], config: &QuantileConfig) -> Result<QuantileResult> {
    let (lab, unlab) = zero_expert_pair(y)?;
    quantile_set(&lab, &unlab, config, &QuantileWeights::Fixed(vec![0.0]))
}

pub fn conventional_quantile_test_at(theta: f64, y: &[f64], config: &QuantileConfig) -> Result<ThetaDiagnostic> {
    let (lab, unlab) = zero_expert_pair(y)?;
    quantile_test_at(theta, &lab, &unlab, config, &QuantileWeights::Fixed(vec![0.0]))
}

fn zero_expert_pair(y: &[f64]) -> Result<(LabeledDataset, UnlabeledDataset)> {
    let lab = LabeledDataset::new(y.to_vec(), None, DMatrix::zeros(y.len(), 1))?;
    let unlab = UnlabeledDataset::new(None, DMatrix::zeros(1, 1))?;
    Ok((lab, unlab))
}

/// Root of `m_hat(theta)` on `[lo, hi]` by bisection, refitting weights at
/// every probe.  Used as the point estimate where a full grid would be too
/// costly (bootstrap replicates).
pub fn quantile_point_estimate(
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    config: &QuantileConfig,
    weights: &QuantileWeights,
    lo: f64,
    hi: f64,
) -> Result<f64> {
    let p = problem(labeled, unlabeled, config)?;
    check_fixed(weights, labeled.k())?;
    let (mut a, mut b) = (lo, hi);
    let mut fa = p.at(a, weights).m_hat;
    let fb = p.at(b, weights).m_hat;
    if fa.signum() == fb.signum() {
        return Ok(if fa.abs() < fb.abs() { a } else { b });
    }
    for _ in 0..50 {
        let mid = 0.5 * (a + b);
        let fm = p.at(mid, weights).m_hat;
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
        if b - a <= 1e-10 * (1.0 + a.abs()) {
            break;
        }
    }
    Ok(0.5 * (a + b))
}
