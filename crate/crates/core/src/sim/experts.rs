//! Parametric synthetic experts with controllable residual structure.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};

use super::generator::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExpertSpec {
    /// `E[Y | X]` plus `N(0, sd^2)` noise.
    OracleNoise { sd: f64 },
    /// `E[Y | X] + offset` plus `N(0, sd^2)` noise.
    Biased { offset: f64, sd: f64 },
    /// Best linear predictor of `Y` from `X` plus noise.
    LinearProj { noise_sd: f64 },
    /// `N(0, sd^2)`, unrelated to the response.
    PureNoise { sd: f64 },
    Constant { c: f64 },
}

impl ExpertSpec {
    pub fn label(&self) -> String {
        match self {
            ExpertSpec::OracleNoise { sd } => format!("oracle_noise({sd})"),
            ExpertSpec::Biased { offset, sd } => format!("biased({offset},{sd})"),
            ExpertSpec::LinearProj { noise_sd } => format!("linear_proj({noise_sd})"),
            ExpertSpec::PureNoise { sd } => format!("pure_noise({sd})"),
            ExpertSpec::Constant { c } => format!("constant({c})"),
        }
    }

    fn sd(&self) -> f64 {
        match *self {
            ExpertSpec::OracleNoise { sd } | ExpertSpec::Biased { sd, .. } | ExpertSpec::PureNoise { sd } => sd,
            ExpertSpec::LinearProj { noise_sd } => noise_sd,
            ExpertSpec::Constant { .. } => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpertPool {
    pub experts: Vec<ExpertSpec>,
}

impl ExpertPool {
    pub fn new(experts: Vec<ExpertSpec>) -> Result<Self> {
        if experts.is_empty() {
            return Err(Error::InvalidConfig("expert pool is empty".into()));
        }
        for e in &experts {
            let sd = e.sd();
            if !(sd >= 0.0 && sd.is_finite()) {
                return Err(Error::InvalidConfig(format!("expert {} has an invalid sd", e.label())));
            }
        }
        Ok(Self { experts })
    }

    /// A strong expert, a biased noisier one and an uninformative one, scaled
    /// by the response sd.
    pub fn standard(response_sd: f64) -> Self {
        Self {
            experts: vec![
                ExpertSpec::OracleNoise { sd: 0.2 * response_sd },
                ExpertSpec::Biased { offset: 0.5 * response_sd, sd: 0.5 * response_sd },
                ExpertSpec::PureNoise { sd: response_sd },
            ],
        }
    }

    pub fn k(&self) -> usize {
        self.experts.len()
    }

    pub fn labels(&self) -> Vec<String> {
        self.experts.iter().map(ExpertSpec::label).collect()
    }
}

/// Prediction matrix with one column per expert.  Noise is drawn row by row
/// from `rng`, so the output is fixed by the stream state.
pub fn apply_experts<R: Rng>(pool: &ExpertPool, sample: &Sample, rng: &mut R) -> DMatrix<f64> {
    let n = sample.y.len();
    let mut out = DMatrix::zeros(n, pool.k());
    for i in 0..n {
        for (j, e) in pool.experts.iter().enumerate() {
            let noise = |rng: &mut R, sd: f64| if sd > 0.0 { sd * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
            out[(i, j)] = match *e {
                ExpertSpec::OracleNoise { sd } => sample.signal[i] + noise(rng, sd),
                ExpertSpec::Biased { offset, sd } => sample.signal[i] + offset + noise(rng, sd),
                ExpertSpec::LinearProj { noise_sd } => sample.linear_proj[i] + noise(rng, noise_sd),
                ExpertSpec::PureNoise { sd } => noise(rng, sd),
                ExpertSpec::Constant { c } => c,
            };
        }
    }
    out
}
