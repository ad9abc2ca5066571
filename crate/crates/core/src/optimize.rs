//! Box-constrained smooth minimization used for the numerically fitted
//! mixture weights (quantile and generic M-estimation tasks).
//!
//! A projected quasi-Newton (BFGS) descent runs from each of several starting
//! points; the best end point wins, ties broken by the smallest Euclidean
//! norm.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxOptions {
    /// Weights are constrained to `[-bound, bound]^K`.
    pub bound: f64,
    pub max_iter: usize,
    /// Stop once an iteration improves the objective by less than this.
    pub tol: f64,
}

impl Default for BoxOptions {
    fn default() -> Self {
        Self { bound: 10.0, max_iter: 500, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
}

fn project(x: &mut DVector<f64>, bound: f64) {
    for v in x.iter_mut() {
        *v = v.clamp(-bound, bound);
    }
}

/// Gradient with the components that push against an active bound zeroed.
fn projected_gradient(x: &DVector<f64>, g: &DVector<f64>, bound: f64) -> DVector<f64> {
    DVector::from_iterator(
        x.len(),
        x.iter().zip(g.iter()).map(|(&xi, &gi)| {
            if (xi >= bound && gi < 0.0) || (xi <= -bound && gi > 0.0) {
                0.0
            } else {
                gi
            }
        }),
    )
}

/// Projected BFGS from a single start.  `f` returns the objective and writes
/// the gradient into its second argument.
pub fn minimize_from<F>(f: &F, start: &[f64], opts: &BoxOptions) -> Minimum
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    let k = start.len();
    let mut x = DVector::from_column_slice(start);
    project(&mut x, opts.bound);
    let mut g = DVector::zeros(k);
    let mut fx = f(x.as_slice(), g.as_mut_slice());
    let mut h = DMatrix::<f64>::identity(k, k);
    let mut restarted = false;

    for _ in 0..opts.max_iter {
        let pg = projected_gradient(&x, &g, opts.bound);
        if pg.norm() <= 1e-12 * (1.0 + fx.abs()) {
            return Minimum { x: x.as_slice().to_vec(), value: fx, converged: true };
        }
        // Free variables only: rows/cols of active bounds are dropped from the
        // quasi-Newton direction.
        let free: Vec<bool> = pg.iter().zip(g.iter()).map(|(p, gi)| *p != 0.0 || *gi == 0.0).collect();
        let mut dir = -(&h * &pg);
        for (i, d) in dir.iter_mut().enumerate() {
            if !free[i] {
                *d = 0.0;
            }
        }
        if dir.dot(&pg) >= 0.0 {
            h.fill_with_identity();
            dir = -pg.clone();
        }

        let mut t = 1.0;
        let mut accepted = None;
        let mut g_new = DVector::zeros(k);
        for _ in 0..60 {
            let mut trial = &x + &dir * t;
            project(&mut trial, opts.bound);
            let step = &trial - &x;
            let f_trial = f(trial.as_slice(), g_new.as_mut_slice());
            if f_trial.is_finite() && f_trial <= fx + 1e-4 * g.dot(&step) {
                accepted = Some((trial, f_trial));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if restarted {
                return Minimum { x: x.as_slice().to_vec(), value: fx, converged: true };
            }
            h.fill_with_identity();
            restarted = true;
            continue;
        };

        let improvement = fx - f_new;
        let s = &x_new - &x;
        let yv = &g_new - &g;
        let sy = s.dot(&yv);
        if sy > 1e-16 * s.norm() * yv.norm() && sy > 0.0 {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(k, k);
            let left = &eye - &s * yv.transpose() * rho;
            let right = &eye - &yv * s.transpose() * rho;
            h = left * &h * right + &s * s.transpose() * rho;
        }
        x = x_new;
        fx = f_new;
        g.copy_from(&g_new);

        if improvement < opts.tol {
            let pg_norm = projected_gradient(&x, &g, opts.bound).norm();
            if pg_norm <= 1e-9 * (1.0 + fx.abs()) || restarted {
                return Minimum { x: x.as_slice().to_vec(), value: fx, converged: true };
            }
            // Tiny progress with a sizeable gradient: restart from steepest
            // descent once before giving up.
            h.fill_with_identity();
            restarted = true;
        } else {
            restarted = false;
        }
    }
    Minimum { x: x.as_slice().to_vec(), value: fx, converged: false }
}

/// Runs [`minimize_from`] from every start and keeps the best result.  End
/// points whose objectives agree to within `1e-12 (1 + |f|)` are tied and
/// resolved toward the smallest norm.
pub fn minimize_multistart<F>(f: &F, starts: &[Vec<f64>], opts: &BoxOptions) -> Minimum
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    assert!(!starts.is_empty(), "at least one start is required");
    let mut best: Option<Minimum> = None;
    for start in starts {
        let m = minimize_from(f, start, opts);
        best = Some(match best {
            None => m,
            Some(b) => {
                let tie = (m.value - b.value).abs() <= 1e-12 * (1.0 + b.value.abs());
                let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
                if (tie && norm(&m.x) < norm(&b.x)) || (!tie && m.value < b.value) {
                    m
                } else {
                    b
                }
            }
        });
    }
    best.expect("nonempty starts")
}

/// The standard start set: the origin, each unit vector, and an optional
/// warm start.
pub fn standard_starts(k: usize, warm: Option<&[f64]>) -> Vec<Vec<f64>> {
    let mut starts = Vec::with_capacity(k + 2);
    starts.push(vec![0.0; k]);
    for j in 0..k {
        let mut e = vec![0.0; k];
        e[j] = 1.0;
        starts.push(e);
    }
    if let Some(w) = warm {
        starts.push(w.to_vec());
    }
    starts
}

/// Uncentered least-squares weights of `y` on the expert columns, clamped to
/// the box; `None` when the fit is not finite.
pub fn least_squares_start(y: &DVector<f64>, f: &DMatrix<f64>, bound: f64) -> Option<Vec<f64>> {
    let beta = f.clone().svd(true, true).solve(y, 1e-12).ok()?;
    beta.iter().all(|v| v.is_finite()).then(|| beta.iter().map(|v| v.clamp(-bound, bound)).collect())
}
