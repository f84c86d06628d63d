//! Dense symmetric positive-definite solves for the normal equations.

use crate::error::{Error, Result};

/// Condition number above which ridge regularisation is engaged.
pub const COND_LIMIT: f64 = 1e8;
/// Ridge coefficient relative to `trace / p`.
pub const RIDGE_SCALE: f64 = 1e-8;

/// In-place lower Cholesky factor of the row-major `p×p` matrix `a`.
pub fn cholesky(a: &mut [f64], p: usize) -> Result<()> {
    debug_assert_eq!(a.len(), p * p);
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= a[j * p + k] * a[j * p + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Numerical(format!("matrix not positive definite at pivot {j}")));
        }
        let d = d.sqrt();
        a[j * p + j] = d;
        for i in j + 1..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = s / d;
        }
        for i in 0..j {
            a[i * p + j] = 0.0;
        }
    }
    Ok(())
}

/// Solves `L Lᵀ x = b` in place.
pub fn cholesky_solve(l: &[f64], p: usize, b: &mut [f64]) {
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * p + k] * b[k];
        }
        b[i] = s / l[i * p + i];
    }
    for i in (0..p).rev() {
        let mut s = b[i];
        for k in i + 1..p {
            s -= l[k * p + i] * b[k];
        }
        b[i] = s / l[i * p + i];
    }
}

/// A factored Gram matrix, possibly ridge-regularised.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    l: Vec<f64>,
    pub p: usize,
    /// `(max Lᵢᵢ / min Lᵢᵢ)²`, a cheap lower estimate of the 2-norm condition number.
    pub condition: f64,
    pub ridge: f64,
}

impl SpdFactor {
    /// Factors `gram`, adding `1e-8·trace/p` to the diagonal when the
    /// condition estimate exceeds [`COND_LIMIT`] or the plain factorisation
    /// fails.
    pub fn new(gram: &[f64], p: usize) -> Result<Self> {
        let mut l = gram.to_vec();
        if cholesky(&mut l, p).is_ok() {
            let condition = diag_condition(&l, p);
            if condition <= COND_LIMIT {
                return Ok(Self { l, p, condition, ridge: 0.0 });
            }
        }
        let trace: f64 = (0..p).map(|i| gram[i * p + i]).sum();
        let ridge = RIDGE_SCALE * trace / p as f64;
        let mut l = gram.to_vec();
        for i in 0..p {
            l[i * p + i] += ridge;
        }
        cholesky(&mut l, p).map_err(|e| {
            Error::Configuration(format!("regression basis is rank deficient even after ridge {ridge:.3e}: {e}"))
        })?;
        let condition = diag_condition(&l, p);
        Ok(Self { l, p, condition, ridge })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        cholesky_solve(&self.l, self.p, &mut x);
        x
    }
}

fn diag_condition(l: &[f64], p: usize) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..p {
        let d = l[i * p + i];
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (hi / lo).powi(2)
}
