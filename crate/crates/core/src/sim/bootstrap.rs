//! Nonparametric bootstrap over the labeled rows.

use rand::Rng;
use rayon::prelude::*;

use crate::data::{LabeledDataset, UnlabeledDataset};
use crate::error::{Error, Result};

use super::rng;

/// Sample variance (denominator `B - 1`) of `estimator` over `b` resamples of
/// the labeled rows; the unlabeled sample is held fixed.  Replicate `j` uses
/// stream `j` of `seed`.
pub fn bootstrap_variance<F>(
    estimator: F,
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    b: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&LabeledDataset, &UnlabeledDataset) -> Result<f64> + Sync,
{
    if b < 2 {
        return Err(Error::InvalidConfig(format!("bootstrap needs at least 2 replicates, got {b}")));
    }
    let n = labeled.n();
    let estimates = (0..b)
        .into_par_iter()
        .map(|j| {
            let mut r = rng::stream(seed, j as u64);
            let rows: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
            estimator(&labeled.resample(&rows)?, unlabeled)
        })
        .collect::<Result<Vec<f64>>>()?;
    let m = estimates.iter().sum::<f64>() / b as f64;
    Ok(estimates.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / (b as f64 - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pop_variance;
    use nalgebra::DMatrix;
    use rand_distr::StandardNormal;

    fn data(n: usize) -> (LabeledDataset, UnlabeledDataset) {
        let mut r = rng::stream(99, 0);
        let y: Vec<f64> = (0..n).map(|_| 3.0 * r.sample::<f64, _>(StandardNormal)).collect();
        (
            LabeledDataset::new(y, None, DMatrix::zeros(n, 1)).unwrap(),
            UnlabeledDataset::new(None, DMatrix::zeros(3, 1)).unwrap(),
        )
    }

    #[test]
    fn constant_estimator_has_zero_variance() {
        let (lab, unlab) = data(40);
        assert_eq!(bootstrap_variance(|_, _| Ok(1.5), &lab, &unlab, 50, 1).unwrap(), 0.0);
    }

    #[test]
    fn sample_mean_matches_classical_formula() {
        let (lab, unlab) = data(200);
        let v = bootstrap_variance(|l, _| Ok(l.y().mean()), &lab, &unlab, 1000, 2).unwrap();
        let classical = pop_variance(lab.y().as_slice()) / 200.0;
        assert!((v / classical - 1.0).abs() < 0.15, "{v} vs {classical}");
    }

    #[test]
    fn deterministic_and_validated() {
        let (lab, unlab) = data(30);
        let est = |l: &LabeledDataset, _: &UnlabeledDataset| Ok(l.y().mean());
        let a = bootstrap_variance(est, &lab, &unlab, 100, 3).unwrap();
        let b = bootstrap_variance(est, &lab, &unlab, 100, 3).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert!(bootstrap_variance(est, &lab, &unlab, 1, 3).is_err());
    }
}
