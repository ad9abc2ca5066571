//! Prediction-powered inference with variance-minimizing mixtures of experts.
//!
//! Given a small labeled sample, a large unlabeled sample and the predictions
//! of K experts on both, the task modules fit mixture weights that minimize
//! the variance of the rectified estimator and build confidence sets for
//! means ([`mean`]), quantiles ([`quantile`]), linear and logistic regression
//! coefficients ([`linreg`], [`logreg`]) and generic M-estimation targets
//! ([`mest`]).  The [`sim`] module reproduces coverage, width and power
//! experiments on synthetic data.

pub mod data;
pub mod error;
pub mod linalg;
pub mod linreg;
pub mod logreg;
pub mod mean;
pub mod mest;
pub mod normal;
pub mod optimize;
pub mod quantile;
pub mod report;
pub mod sim;

pub use data::{
    check_pair, grid_points, load_labeled_csv, load_unlabeled_csv, Alpha, GridSpec, LabeledDataset, ThetaGrid,
    UnlabeledDataset, Variant, WeightSource, WeightVector,
};
pub use error::{Error, Result};
