//! Synthetic designs with known targets.
//!
//! Regression modes draw `X ~ N(0, I_d)` and
//! `Y = 10 + X'beta + gamma * g(X) + eps` with
//! `g(X) = 10 sin(pi X_11 X_12) + 20 (X_13 - 1/2)^2` (1-based covariate
//! indices) and `eps ~ N(0, sigma^2)`.  The logistic mode uses an intercept
//! plus one standard normal covariate with Bernoulli responses.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::logreg::logistic_sigmoid;
use crate::normal::inv_cdf;

use super::rng;

/// Offset of the regression response.
pub const INTERCEPT: f64 = 10.0;

/// Logistic-mode coefficients (intercept, slope).
pub const LOGISTIC_THETA: [f64; 2] = [-0.5, 1.0];

/// Covariates feeding the nonlinear term (0-based).
const NONLINEAR_COLS: [usize; 3] = [10, 11, 12];

const QUADRATURE_NODES: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataMode {
    Linear,
    Nonlinear,
    /// Linear design rescaled to `Y ~ N(0, 1)` with no offset.
    Gaussian,
    Logistic,
}

impl DataMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DataMode::Linear => "linear",
            DataMode::Nonlinear => "nonlinear",
            DataMode::Gaussian => "gaussian",
            DataMode::Logistic => "logistic",
        }
    }
}

impl fmt::Display for DataMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DataMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(DataMode::Linear),
            "nonlinear" => Ok(DataMode::Nonlinear),
            "gaussian" => Ok(DataMode::Gaussian),
            "logistic" => Ok(DataMode::Logistic),
            other => Err(Error::InvalidConfig(format!("unknown data mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorConfig {
    pub mode: DataMode,
    pub d: usize,
    /// Number of leading covariates with nonzero coefficients.
    pub active: usize,
    pub coef_lo: f64,
    pub coef_hi: f64,
    pub sigma: f64,
    /// Strength of the nonlinear term (nonlinear mode only).
    pub gamma: f64,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn new(mode: DataMode, seed: u64) -> Self {
        Self { mode, d: 20, active: 10, coef_lo: 0.0, coef_hi: 100.0, sigma: 10.0, gamma: 1.0, seed }
    }

    fn validate(&self) -> Result<()> {
        if self.mode == DataMode::Logistic {
            return Ok(());
        }
        if self.active > self.d {
            return Err(Error::InvalidConfig(format!("{} active covariates exceed d = {}", self.active, self.d)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise sd must be positive, got {}", self.sigma)));
        }
        if !(self.coef_lo <= self.coef_hi) {
            return Err(Error::InvalidConfig("coefficient range is empty".into()));
        }
        if self.mode == DataMode::Nonlinear && (self.d <= NONLINEAR_COLS[2] || self.active > NONLINEAR_COLS[0]) {
            return Err(Error::InvalidConfig(
                "nonlinear mode needs d >= 13 and the nonlinear covariates outside the active set".into(),
            ));
        }
        Ok(())
    }
}

/// Population targets of a design.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Truth {
    pub mean: f64,
    pub median: f64,
    /// Best linear predictor coefficients: intercept first, then one per
    /// covariate (regression modes), or the logistic coefficients.
    pub regression: Vec<f64>,
    pub response_sd: f64,
}

/// One draw of covariates and responses.
#[derive(Debug, Clone)]
pub struct Sample {
    /// `n x d` covariates; the logistic mode includes the intercept column.
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// `E[Y | X]`.
    pub signal: DVector<f64>,
    /// Best linear predictor of `Y` from `X`.
    pub linear_proj: DVector<f64>,
}

/// A design with its coefficients frozen by the master seed.
#[derive(Debug, Clone)]
pub struct Design {
    config: GeneratorConfig,
    beta: Vec<f64>,
}

/// Probabilists' Gauss-Hermite rule (Golub-Welsch): nodes and weights for
/// expectations under `N(0, 1)`; the weights sum to one.
pub fn gauss_hermite(m: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = DMatrix::from_fn(m, m, |i, j| if i.abs_diff(j) == 1 { (i.max(j) as f64).sqrt() } else { 0.0 });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> =
        (0..m).map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)] * eig.eigenvectors[(0, i)])).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Distribution of `sin(pi U V)` for independent standard normals, as
/// `(value, probability)` pairs over 1001 bins of `[-1, 1]` (each value is the
/// probability-weighted mean of its bin).  The double integral uses the
/// trapezoid rule with step 0.05 on `[-9, 9]^2`, which resolves the
/// oscillation in `u v` where Gauss-Hermite does not.
pub fn sine_term_distribution() -> Vec<(f64, f64)> {
    const STEP: f64 = 0.05;
    const HALF: f64 = 9.0;
    const BINS: usize = 1001;
    let pts = (2.0 * HALF / STEP).round() as usize + 1;
    let axis: Vec<(f64, f64)> = (0..pts)
        .map(|i| {
            let u = -HALF + i as f64 * STEP;
            (u, STEP * (-0.5 * u * u).exp() / (2.0 * PI).sqrt())
        })
        .collect();
    let mut mass = vec![0.0; BINS];
    let mut moment = vec![0.0; BINS];
    for &(u, wu) in &axis {
        for &(v, wv) in &axis {
            let t = (PI * u * v).sin();
            let b = (((t + 1.0) * 0.5 * (BINS - 1) as f64).round() as usize).min(BINS - 1);
            mass[b] += wu * wv;
            moment[b] += wu * wv * t;
        }
    }
    let total: f64 = mass.iter().sum();
    mass.iter()
        .zip(&moment)
        .filter(|(m, _)| **m > 0.0)
        .map(|(m, t)| (t / m, m / total))
        .collect()
}

fn nonlinear_term(a: f64, b: f64, c: f64) -> f64 {
    10.0 * (PI * a * b).sin() + 20.0 * (c - 0.5) * (c - 0.5)
}

/// `Var g(X)`: the sine part has variance `50 (1 - (1 + 4 pi^2)^{-1/2})`,
/// the quadratic part `400 * 3`, and they are independent.
fn nonlinear_variance() -> f64 {
    50.0 * (1.0 - 1.0 / (1.0 + 4.0 * PI * PI).sqrt()) + 1200.0
}

impl Design {
    pub fn new(config: GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let beta = if config.mode == DataMode::Logistic {
            LOGISTIC_THETA.to_vec()
        } else {
            let mut r = rng::stream(config.seed, rng::DESIGN_STREAM);
            (0..config.d)
                .map(|j| {
                    if j < config.active {
                        if config.coef_hi > config.coef_lo {
                            r.random_range(config.coef_lo..config.coef_hi)
                        } else {
                            config.coef_lo
                        }
                    } else {
                        0.0
                    }
                })
                .collect()
        };
        Ok(Self { config, beta })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn mode(&self) -> DataMode {
        self.config.mode
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.beta
    }

    fn gamma(&self) -> f64 {
        if self.config.mode == DataMode::Nonlinear {
            self.config.gamma
        } else {
            0.0
        }
    }

    /// `sqrt(|beta|^2 + sigma^2)`, the sd of the linear part.
    fn linear_sd(&self) -> f64 {
        (self.beta.iter().map(|b| b * b).sum::<f64>() + self.config.sigma * self.config.sigma).sqrt()
    }

    /// `E S(theta_0 + theta_1 Z)` and `E S'(theta_0 + theta_1 Z)`.
    fn logistic_moments(&self) -> (f64, f64) {
        let (nodes, weights) = gauss_hermite(QUADRATURE_NODES);
        let mut p = 0.0;
        let mut dp = 0.0;
        for (z, w) in nodes.iter().zip(&weights) {
            let s = logistic_sigmoid(self.beta[0] + self.beta[1] * z);
            p += w * s;
            dp += w * s * (1.0 - s);
        }
        (p, dp)
    }

    pub fn response_sd(&self) -> f64 {
        match self.config.mode {
            DataMode::Linear => self.linear_sd(),
            DataMode::Gaussian => 1.0,
            DataMode::Nonlinear => {
                (self.linear_sd().powi(2) + self.gamma() * self.gamma() * nonlinear_variance()).sqrt()
            }
            DataMode::Logistic => {
                let (p, _) = self.logistic_moments();
                (p * (1.0 - p)).sqrt()
            }
        }
    }

    /// The `q`-quantile of `Y`.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidConfig(format!("quantile level must lie in (0, 1), got {q}")));
        }
        match self.config.mode {
            DataMode::Gaussian => Ok(inv_cdf(q)),
            DataMode::Linear => Ok(INTERCEPT + self.linear_sd() * inv_cdf(q)),
            DataMode::Nonlinear if self.gamma() == 0.0 => Ok(INTERCEPT + self.linear_sd() * inv_cdf(q)),
            DataMode::Nonlinear => Ok(self.nonlinear_quantile(q)),
            DataMode::Logistic => Err(Error::InvalidConfig("quantiles of a binary response are not supported".into())),
        }
    }

    /// Solves `E Phi((m - 10 - gamma g) / s) = q`.  The sine part of `g` is
    /// integrated by its distribution (see [`sine_term_distribution`]), the
    /// quadratic part by Gauss-Hermite.
    fn nonlinear_quantile(&self, q: f64) -> f64 {
        let (nodes, weights) = gauss_hermite(QUADRATURE_NODES);
        let gamma = self.gamma();
        let sine = sine_term_distribution();
        let mut table = Vec::with_capacity(sine.len() * nodes.len());
        for &(t, wt) in &sine {
            for (c, wc) in nodes.iter().zip(&weights) {
                table.push((INTERCEPT + gamma * (10.0 * t + 20.0 * (c - 0.5) * (c - 0.5)), wt * wc));
            }
        }
        let s = self.linear_sd();
        let std = Normal::standard();
        let cdf = |m: f64| table.iter().map(|(shift, w)| w * std.cdf((m - shift) / s)).sum::<f64>();
        let spread = self.response_sd();
        let center = INTERCEPT + 25.0 * gamma;
        let (mut lo, mut hi) = (center - 10.0 * spread, center + 10.0 * spread);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * (1.0 + mid.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn truth(&self) -> Result<Truth> {
        let gamma = self.gamma();
        Ok(match self.config.mode {
            DataMode::Logistic => {
                let (p, _) = self.logistic_moments();
                Truth { mean: p, median: f64::NAN, regression: self.beta.clone(), response_sd: (p * (1.0 - p)).sqrt() }
            }
            DataMode::Gaussian => {
                let s = self.linear_sd();
                let mut regression = vec![0.0];
                regression.extend(self.beta.iter().map(|b| b / s));
                Truth { mean: 0.0, median: 0.0, regression, response_sd: 1.0 }
            }
            DataMode::Linear | DataMode::Nonlinear => {
                // E[X_13 g(X)] = -20 and E[X_j g(X)] = 0 otherwise.
                let mut regression = vec![INTERCEPT + 25.0 * gamma];
                regression.extend(self.beta.iter().copied());
                if gamma != 0.0 {
                    regression[1 + NONLINEAR_COLS[2]] -= 20.0 * gamma;
                }
                Truth {
                    mean: INTERCEPT + 25.0 * gamma,
                    median: self.quantile(0.5)?,
                    regression,
                    response_sd: self.response_sd(),
                }
            }
        })
    }

    /// Draws `rows` observations.
    pub fn sample<R: Rng>(&self, rows: usize, rng: &mut R) -> Sample {
        match self.config.mode {
            DataMode::Logistic => self.sample_logistic(rows, rng),
            _ => self.sample_regression(rows, rng),
        }
    }

    fn sample_regression<R: Rng>(&self, rows: usize, rng: &mut R) -> Sample {
        let d = self.config.d;
        let gamma = self.gamma();
        let scale = if self.config.mode == DataMode::Gaussian { 1.0 / self.linear_sd() } else { 1.0 };
        let offset = if self.config.mode == DataMode::Gaussian { 0.0 } else { INTERCEPT };
        let mut x = DMatrix::zeros(rows, d);
        let mut y = DVector::zeros(rows);
        let mut signal = DVector::zeros(rows);
        let mut linear_proj = DVector::zeros(rows);
        for i in 0..rows {
            for j in 0..d {
                x[(i, j)] = rng.sample(StandardNormal);
            }
            let lin: f64 = (0..d).map(|j| x[(i, j)] * self.beta[j]).sum();
            let (nl, proj_shift) = if gamma != 0.0 {
                let [a, b, c] = NONLINEAR_COLS.map(|j| x[(i, j)]);
                (gamma * nonlinear_term(a, b, c), gamma * (25.0 - 20.0 * c))
            } else {
                (0.0, 0.0)
            };
            let eps: f64 = rng.sample::<f64, _>(StandardNormal) * self.config.sigma;
            signal[i] = (offset + lin + nl) * scale;
            y[i] = (offset + lin + nl + eps) * scale;
            linear_proj[i] = (offset + lin + proj_shift) * scale;
        }
        Sample { x, y, signal, linear_proj }
    }

    fn sample_logistic<R: Rng>(&self, rows: usize, rng: &mut R) -> Sample {
        let (p, dp) = self.logistic_moments();
        let slope = self.beta[1] * dp;
        let mut x = DMatrix::zeros(rows, 2);
        let mut y = DVector::zeros(rows);
        let mut signal = DVector::zeros(rows);
        let mut linear_proj = DVector::zeros(rows);
        for i in 0..rows {
            let z: f64 = rng.sample(StandardNormal);
            x[(i, 0)] = 1.0;
            x[(i, 1)] = z;
            let s = logistic_sigmoid(self.beta[0] + self.beta[1] * z);
            signal[i] = s;
            y[i] = if rng.random::<f64>() < s { 1.0 } else { 0.0 };
            linear_proj[i] = p + slope * z;
        }
        Sample { x, y, signal, linear_proj }
    }

    /// Labeled and unlabeled samples from one stream: the first `n` rows are
    /// labeled.
    pub fn generate<R: Rng>(&self, n: usize, big_n: usize, rng: &mut R) -> Result<(Sample, Sample)> {
        if n < 1 || big_n < 1 {
            return Err(Error::InvalidConfig(format!("need n, N >= 1, got n={n}, N={big_n}")));
        }
        let lab = self.sample(n, rng);
        let unlab = self.sample(big_n, rng);
        Ok((lab, unlab))
    }
}
