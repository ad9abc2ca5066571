//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative cutoff on `s_min / s_max` below which a design is treated as
/// rank deficient.
const DESIGN_RCOND: f64 = 1e-10;

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Two-pass variance with denominator `n`.
pub fn pop_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

pub fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

pub fn center_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let means = column_means(m);
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    out
}

/// Covariance of the rows of `m` with denominator `n`.
pub fn pop_covariance(m: &DMatrix<f64>) -> DMatrix<f64> {
    let c = center_columns(m);
    symmetrize(&(c.transpose() * &c / m.nrows() as f64))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn min_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(sym.clone()).eigenvalues.min()
}

/// Solves `h x = r` for symmetric positive semi-definite `h`, returning
/// `None` when `lambda_min(h) <= rel_tol * trace(h) / k` or when
/// `trace(h) <= floor` (an `h` made of rounding noise only).
pub fn guarded_psd_solve(h: &DMatrix<f64>, r: &DVector<f64>, rel_tol: f64, floor: f64) -> Option<DVector<f64>> {
    let k = h.nrows();
    let eig = SymmetricEigen::new(symmetrize(h));
    let trace: f64 = eig.eigenvalues.iter().sum();
    let lmin = eig.eigenvalues.min();
    if !(trace > floor) || lmin <= rel_tol * trace / k as f64 {
        return None;
    }
    let proj = eig.eigenvectors.transpose() * r;
    let scaled = DVector::from_iterator(k, proj.iter().zip(eig.eigenvalues.iter()).map(|(p, l)| p / l));
    Some(&eig.eigenvectors * scaled)
}

/// Thin SVD of a tall design matrix, reused for every `(X'X)^{-1} X' b`
/// solve on the same design.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    u: DMatrix<f64>,
    s: DVector<f64>,
    v: DMatrix<f64>,
}

impl LeastSquares {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() < x.ncols() {
            return Err(Error::SingularDesign);
        }
        let svd = x.clone().svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => return Err(Error::SingularDesign),
        };
        let s = svd.singular_values;
        let smax = s.max();
        if !(smax > 0.0) || s.min() <= DESIGN_RCOND * smax {
            return Err(Error::SingularDesign);
        }
        Ok(Self { u, s, v: v_t.transpose() })
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn d(&self) -> usize {
        self.s.len()
    }

    /// `(X'X)^{-1} X' b` for every column of `b`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut ut_b = self.u.transpose() * b;
        for (i, mut row) in ut_b.row_iter_mut().enumerate() {
            row /= self.s[i];
        }
        &self.v * ut_b
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut ut_b = self.u.transpose() * b;
        ut_b.component_div_assign(&self.s);
        &self.v * ut_b
    }

    /// `(X'X)^{-1}`.
    pub fn inv_gram(&self) -> DMatrix<f64> {
        let mut vs = self.v.clone();
        for (j, mut col) in vs.column_iter_mut().enumerate() {
            col /= self.s[j] * self.s[j];
        }
        symmetrize(&(vs * self.v.transpose()))
    }

    /// `x_i' (X'X)^{-2} x_i` for every row.
    pub fn row_weights(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n(),
            self.u.row_iter().map(|row| {
                row.iter().zip(self.s.iter()).map(|(u, s)| (u / s) * (u / s)).sum::<f64>()
            }),
        )
    }
}
