//! The scaled Newton linear system: block operator, block-diagonal multigrid
//! preconditioner, variable scaling and the inner MINRES solve.
//!
//! The solve works entirely in the scaled variables that balance the blocks;
//! unscaling is a post-step. The rank-one mean terms are part of the system
//! operator but not of the applied preconditioner, whose blocks are plain
//! sqrt(tau) K + M and sqrt(tau) eps^2 K + M.

use crate::error::{Error, Result};
use crate::fem::{FemSpace, MeanVector};
use crate::linalg::{minres, LinearOperator, MinresReport};
use crate::mesh::MeshHierarchy;
use crate::multigrid::{build_prolongation, MgHierarchy};
use crate::sparse::SparseMatrix;

pub fn validate_parameters(tau: f64, eps: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Config(format!(
            "time step {tau} outside the admissible range (0, 1]"
        )));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Config(format!(
            "interface width {eps} outside the admissible range (0, 1]"
        )));
    }
    Ok(())
}

/// Symmetric 2n x 2n action of
/// [[sqrt(tau)(K + cc^T), M], [M, -sqrt(tau) J - sqrt(tau) eps^2 (K + cc^T)]]
/// with the rank-one terms applied as c (c^T x).
pub struct BlockOperator<'a> {
    sqrt_tau: f64,
    eps: f64,
    stiffness: &'a SparseMatrix,
    mass: &'a SparseMatrix,
    mean: &'a MeanVector,
    weighted_mass: &'a SparseMatrix,
    n: usize,
}

/// The system operator for the current Newton iterate.
pub fn build_scaled_system<'a>(
    stiffness: &'a SparseMatrix,
    mass: &'a SparseMatrix,
    mean: &'a MeanVector,
    weighted_mass: &'a SparseMatrix,
    tau: f64,
    eps: f64,
) -> Result<BlockOperator<'a>> {
    validate_parameters(tau, eps)?;
    let n = stiffness.n_rows;
    if mass.n_rows != n || mean.values.len() != n || weighted_mass.n_rows != n {
        return Err(Error::Assembly(
            "system blocks assembled on different levels".into(),
        ));
    }
    Ok(BlockOperator {
        sqrt_tau: tau.sqrt(),
        eps,
        stiffness,
        mass,
        mean,
        weighted_mass,
        n,
    })
}

impl LinearOperator for BlockOperator<'_> {
    fn dim(&self) -> usize {
        2 * self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        let (u, v) = x.split_at(n);
        let (top, bottom) = y.split_at_mut(n);
        let c = &self.mean.values;

        // top = sqrt(tau) (K u + c (c.u)) + M v
        self.stiffness.matvec(u, top);
        let cu: f64 = c.iter().zip(u).map(|(&a, &b)| a * b).sum();
        for (ti, &ci) in top.iter_mut().zip(c) {
            *ti = self.sqrt_tau * (*ti + cu * ci);
        }
        self.mass.matvec_add(1.0, v, top);

        // bottom = M u - sqrt(tau) J v - sqrt(tau) eps^2 (K v + c (c.v))
        self.mass.matvec(u, bottom);
        self.weighted_mass.matvec_add(-self.sqrt_tau, v, bottom);
        let scale = -self.sqrt_tau * self.eps * self.eps;
        self.stiffness.matvec_add(scale, v, bottom);
        let cv: f64 = c.iter().zip(v).map(|(&a, &b)| a * b).sum();
        for (bi, &ci) in bottom.iter_mut().zip(c) {
            *bi += scale * cv * ci;
        }
    }
}

/// Block-diagonal preconditioner: independent V-cycles for sqrt(tau) K + M
/// and sqrt(tau) eps^2 K + M.
pub struct BlockPreconditioner {
    pub top: MgHierarchy,
    pub bottom: MgHierarchy,
}

impl BlockPreconditioner {
    /// Assembles K and M once per level and shares them between the blocks.
    pub fn build(
        meshes: &MeshHierarchy,
        tau: f64,
        eps: f64,
        nu_pre: usize,
        nu_post: usize,
    ) -> Result<Self> {
        validate_parameters(tau, eps)?;
        let mut stiffness = Vec::with_capacity(meshes.num_levels());
        let mut mass = Vec::with_capacity(meshes.num_levels());
        for level in &meshes.levels {
            let space = FemSpace::new(level)?;
            stiffness.push(space.assemble_stiffness());
            mass.push(space.assemble_mass());
        }
        let mut prolongations = Vec::new();
        for l in 1..meshes.num_levels() {
            prolongations.push(build_prolongation(meshes, l)?);
        }
        let gamma_top = tau.sqrt();
        let gamma_bottom = tau.sqrt() * eps * eps;
        let combine = |gamma: f64| -> Vec<SparseMatrix> {
            stiffness
                .iter()
                .zip(&mass)
                .map(|(k, m)| SparseMatrix::linear_combination(gamma, k, 1.0, m))
                .collect()
        };
        let top = MgHierarchy::from_matrices(
            combine(gamma_top),
            prolongations.clone(),
            gamma_top,
            nu_pre,
            nu_post,
        )?;
        let bottom = MgHierarchy::from_matrices(
            combine(gamma_bottom),
            prolongations,
            gamma_bottom,
            nu_pre,
            nu_post,
        )?;
        Ok(BlockPreconditioner { top, bottom })
    }
}

impl LinearOperator for BlockPreconditioner {
    fn dim(&self) -> usize {
        2 * self.top.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.top.dim();
        self.top.apply(&x[..n], &mut y[..n]);
        self.bottom.apply(&x[n..], &mut y[n..]);
    }
}

/// Stacks the mean-zero-extended loads with the change-of-variables weights:
/// (tau^{-1/4} eps^{-1/2} F, tau^{1/4} eps^{1/2} G).
pub fn build_scaled_rhs(f: &[f64], g: &[f64], tau: f64, eps: f64) -> Vec<f64> {
    let top_scale = tau.powf(-0.25) * eps.powf(-0.5);
    let bottom_scale = tau.powf(0.25) * eps.powf(0.5);
    f.iter()
        .map(|&v| top_scale * v)
        .chain(g.iter().map(|&v| bottom_scale * v))
        .collect()
}

/// Inverse substitution back to the physical corrections.
pub fn unscale_solution(x: &[f64], tau: f64, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let n = x.len() / 2;
    let mu_scale = tau.powf(-0.25) * eps.powf(-0.5);
    let phi_scale = tau.powf(0.25) * eps.powf(0.5);
    let delta_mu = x[..n].iter().map(|&v| mu_scale * v).collect();
    let delta_phi = x[n..].iter().map(|&v| phi_scale * v).collect();
    (delta_mu, delta_phi)
}

/// MINRES on the scaled system followed by unscaling. The corrections are
/// projected onto the zero-mean space: the unconstrained reformulation agrees
/// with the constrained system only up to an O(tau) mean coupling through
/// J(phi), and the scheme iterates live in the zero-mean space.
pub fn solve_newton_system(
    op: &BlockOperator<'_>,
    pre: &BlockPreconditioner,
    rhs: &[f64],
    rtol: f64,
    maxit: usize,
) -> Result<(Vec<f64>, Vec<f64>, MinresReport)> {
    if rhs.len() != op.dim() || pre.dim() != op.dim() {
        return Err(Error::Assembly(format!(
            "inconsistent dimensions: operator {}, preconditioner {}, rhs {}",
            op.dim(),
            pre.dim(),
            rhs.len()
        )));
    }
    let tau = op.sqrt_tau * op.sqrt_tau;
    let (x, report) = minres(op, pre, rhs, rtol, maxit)?;
    if !report.converged {
        return Err(Error::Solver(format!(
            "MINRES did not reach rtol {rtol:.1e} within {maxit} iterations \
             (preconditioned residual {:.3e})",
            report.relative_residual
        )));
    }
    let (mut delta_mu, mut delta_phi) = unscale_solution(&x, tau, op.eps);
    let c = op.mean;
    let shift_mu = c.dot(&delta_mu) / c.sum();
    let shift_phi = c.dot(&delta_phi) / c.sum();
    for v in delta_mu.iter_mut() {
        *v -= shift_mu;
    }
    for v in delta_phi.iter_mut() {
        *v -= shift_phi;
    }
    Ok((delta_mu, delta_phi, report))
}
