//! Linear operators, the coarse dense solve and preconditioned MINRES.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Action of a symmetric operator; materialized sparse, block-composed or
/// rank-one augmented.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for SparseMatrix {
    fn dim(&self) -> usize {
        self.n_rows
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y);
    }
}

pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

/// A + sigma c c^T with the rank-one term applied as c (c^T x), never formed.
pub struct RankOneAugmented<'a> {
    pub base: &'a SparseMatrix,
    pub vector: &'a [f64],
    pub sigma: f64,
}

impl LinearOperator for RankOneAugmented<'_> {
    fn dim(&self) -> usize {
        self.base.n_rows
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.base.matvec(x, y);
        let cx: f64 = self.vector.iter().zip(x).map(|(&c, &v)| c * v).sum();
        for (yi, &ci) in y.iter_mut().zip(self.vector) {
            *yi += self.sigma * cx * ci;
        }
    }
}

/// Exact inverse of a dense SPD matrix, used as the coarse-grid solver and as
/// the dense-preconditioner oracle in tests.
pub struct DenseSpdInverse {
    chol: Cholesky<f64, Dyn>,
    n: usize,
}

impl DenseSpdInverse {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let chol = Cholesky::new(a.clone())
            .ok_or_else(|| Error::Numerical("matrix is not symmetric positive definite".into()))?;
        Ok(DenseSpdInverse { chol, n })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let x = self.chol.solve(&DVector::from_column_slice(b));
        x.as_slice().to_vec()
    }
}

impl LinearOperator for DenseSpdInverse {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.solve(x));
    }
}

/// Direct solve of a dense SPD system via Cholesky.
pub fn dense_solve(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    Ok(DenseSpdInverse::new(a)?.solve(b))
}

#[derive(Debug, Clone)]
pub struct MinresReport {
    pub iterations: usize,
    /// Preconditioned residual norm relative to the preconditioned norm of b.
    pub relative_residual: f64,
    /// Unpreconditioned ||b - Ax|| / ||b||, for cross-checking the stopping rule.
    pub true_relative_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Preconditioned MINRES for a symmetric (possibly indefinite) operator with
/// an SPD preconditioner. Starts from the zero vector and stops when the
/// preconditioned residual norm drops below `rtol` relative to the
/// preconditioned norm of `b`.
pub fn minres(
    a: &dyn LinearOperator,
    m_inv: &dyn LinearOperator,
    b: &[f64],
    rtol: f64,
    maxit: usize,
) -> Result<(Vec<f64>, MinresReport)> {
    let n = a.dim();
    assert_eq!(b.len(), n);
    assert_eq!(m_inv.dim(), n);

    let mut x = vec![0.0; n];
    let mut v = b.to_vec();
    let mut v_old = vec![0.0; n];
    let mut z = vec![0.0; n];
    m_inv.apply(&v, &mut z);
    let gamma_sq = dot(&z, &v);
    if gamma_sq < 0.0 {
        return Err(Error::Preconditioner(format!(
            "negative inner product {gamma_sq:.3e} in preconditioner application"
        )));
    }
    let gamma1 = gamma_sq.sqrt();
    if gamma1 == 0.0 {
        return Ok((
            x,
            MinresReport {
                iterations: 0,
                relative_residual: 0.0,
                true_relative_residual: 0.0,
                converged: true,
            },
        ));
    }

    let mut gamma = gamma1;
    let mut gamma_old = 1.0;
    let mut eta = gamma1;
    let (mut s_old, mut s) = (0.0f64, 0.0f64);
    let (mut c_old, mut c) = (1.0f64, 1.0f64);
    let mut w: Vec<f64> = vec![0.0; n];
    let mut w_old: Vec<f64> = vec![0.0; n];
    let mut az = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;

    for _ in 0..maxit {
        // Lanczos step in the M-inner product
        for zi in z.iter_mut() {
            *zi /= gamma;
        }
        a.apply(&z, &mut az);
        let delta = dot(&az, &z);
        let mut v_new: Vec<f64> = (0..n)
            .map(|i| az[i] - (delta / gamma) * v[i] - (gamma / gamma_old) * v_old[i])
            .collect();
        let mut z_new = vec![0.0; n];
        m_inv.apply(&v_new, &mut z_new);
        let gamma_new_sq = dot(&z_new, &v_new);
        if gamma_new_sq < -1e-13 * norm(&z_new) * norm(&v_new) {
            return Err(Error::Preconditioner(format!(
                "negative inner product {gamma_new_sq:.3e} in preconditioner application"
            )));
        }
        let gamma_new = gamma_new_sq.max(0.0).sqrt();

        // Givens rotations
        let alpha0 = c * delta - c_old * s * gamma;
        let alpha1 = (alpha0 * alpha0 + gamma_new * gamma_new).sqrt();
        let alpha2 = s * delta + c_old * c * gamma;
        let alpha3 = s_old * gamma;
        if alpha1 == 0.0 {
            return Err(Error::Solver(
                "MINRES breakdown: zero candidate direction with nonzero residual".into(),
            ));
        }
        c_old = c;
        s_old = s;
        c = alpha0 / alpha1;
        s = gamma_new / alpha1;

        let w_new: Vec<f64> = (0..n)
            .map(|i| (z[i] - alpha3 * w_old[i] - alpha2 * w[i]) / alpha1)
            .collect();
        for i in 0..n {
            x[i] += c * eta * w_new[i];
        }
        eta = -s * eta;
        iterations += 1;

        std::mem::swap(&mut v_old, &mut v);
        std::mem::swap(&mut v, &mut v_new);
        std::mem::swap(&mut z, &mut z_new);
        std::mem::swap(&mut w_old, &mut w);
        w = w_new;
        gamma_old = gamma;
        gamma = gamma_new;

        if eta.abs() <= rtol * gamma1 {
            converged = true;
            break;
        }
        if gamma == 0.0 {
            // Krylov space exhausted; the residual estimate is exact.
            converged = eta.abs() <= rtol * gamma1;
            if !converged {
                return Err(Error::Solver(
                    "MINRES breakdown: zero candidate direction with nonzero residual".into(),
                ));
            }
            break;
        }
    }

    let mut r = vec![0.0; n];
    a.apply(&x, &mut r);
    for (ri, &bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let report = MinresReport {
        iterations,
        relative_residual: eta.abs() / gamma1,
        true_relative_residual: norm(&r) / norm(b),
        converged,
    };
    Ok((x, report))
}
