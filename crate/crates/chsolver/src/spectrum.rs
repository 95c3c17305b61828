//! Dense spectral harness for the preconditioned system.
//!
//! Assembles B, P and P* densely on coarse meshes, computes the generalized
//! spectra by symmetric reduction and checks that every eigenvalue magnitude
//! of P^{-1} B lies in [max(sqrt(tau), eps)/8, 4]. A second route rebuilds
//! the spectrum from the generalized eigenvalues kappa of (K + c c^T) x =
//! kappa M x through the associated 2x2 blocks, cross-validating the dense
//! assembly.

use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::FemSpace;
use crate::jacobian::validate_parameters;
use crate::mesh::MeshLevel;

/// Dense-work guard: O(n^3) eigensolves stay interactive below this size.
pub const MAX_DENSE_VERTICES: usize = 2000;

pub const BOUND_HIGH: f64 = 4.0;

pub fn bound_low(tau: f64, eps: f64) -> f64 {
    tau.sqrt().max(eps) / 8.0
}

/// Spectrum of one (mesh, tau, eps) point with the proof-constant bounds.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub level: usize,
    pub dimension: usize,
    pub tau: f64,
    pub eps: f64,
    pub eigenvalues: Vec<f64>,
    pub min_abs: f64,
    pub max_abs: f64,
    pub bound_low: f64,
    pub bound_high: f64,
    pub pass: bool,
    /// |lambda| range of P*^{-1} B; positive and bounded, constants implicit.
    pub star_min_abs: f64,
    pub star_max_abs: f64,
}

impl SpectrumReport {
    pub fn csv_header() -> &'static str {
        "level,tau,eps,min_abs_lambda,max_abs_lambda,bound_low,bound_high,pass"
    }

    pub fn csv_row(&self) -> String {
        let mut row = String::new();
        write!(
            row,
            "{},{:.10e},{:.10e},{:.12e},{:.12e},{:.12e},{:.12e},{}",
            self.level,
            self.tau,
            self.eps,
            self.min_abs,
            self.max_abs,
            self.bound_low,
            self.bound_high,
            self.pass
        )
        .unwrap();
        row
    }
}

/// Dense B, P and P* for one mesh:
/// B  = [[sqrt(tau)(K+cc^T), M], [M, -3 sqrt(tau) M - sqrt(tau) eps^2 (K+cc^T)]]
/// P  = blkdiag(sqrt(tau)(K+cc^T) + M, sqrt(tau) eps^2 (K+cc^T) + M)
/// P* = blkdiag(sqrt(tau) K + M, sqrt(tau) eps^2 K + M)
pub fn assemble_dense_bp(
    mesh: &MeshLevel,
    tau: f64,
    eps: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    validate_parameters(tau, eps)?;
    let n = mesh.num_vertices();
    if n > MAX_DENSE_VERTICES {
        return Err(Error::Config(format!(
            "mesh with {n} vertices exceeds the dense-work guard ({MAX_DENSE_VERTICES})"
        )));
    }
    let space = FemSpace::new(mesh)?;
    let k = space.assemble_stiffness().to_dense();
    let m = space.assemble_mass().to_dense();
    let c = DVector::from_column_slice(&space.assemble_mean_vector().values);
    let kc = &k + &c * c.transpose();
    let st = tau.sqrt();

    let mut b = DMatrix::zeros(2 * n, 2 * n);
    b.view_mut((0, 0), (n, n)).copy_from(&(&kc * st));
    b.view_mut((0, n), (n, n)).copy_from(&m);
    b.view_mut((n, 0), (n, n)).copy_from(&m);
    b.view_mut((n, n), (n, n))
        .copy_from(&(-(&m * (3.0 * st)) - &kc * (st * eps * eps)));

    let mut p = DMatrix::zeros(2 * n, 2 * n);
    p.view_mut((0, 0), (n, n)).copy_from(&(&kc * st + &m));
    p.view_mut((n, n), (n, n))
        .copy_from(&(&kc * (st * eps * eps) + &m));

    let mut p_star = DMatrix::zeros(2 * n, 2 * n);
    p_star.view_mut((0, 0), (n, n)).copy_from(&(&k * st + &m));
    p_star
        .view_mut((n, n), (n, n))
        .copy_from(&(&k * (st * eps * eps) + &m));

    Ok((b, p, p_star))
}

/// Magnitudes of the generalized eigenvalues of B x = lambda P x, computed by
/// reducing with the Cholesky factor of the SPD matrix P. The reduced matrix
/// L^{-1} B L^{-T} is symmetric, so the spectrum is real.
pub fn eigenvalues_preconditioned(b: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let chol = Cholesky::new(p.clone())
        .ok_or_else(|| Error::Numerical("preconditioner is not SPD".into()))?;
    let l = chol.l();
    // S = L^{-1} B L^{-T}
    let mut s = b.clone();
    l.solve_lower_triangular_mut(&mut s);
    let mut st = s.transpose();
    l.solve_lower_triangular_mut(&mut st);
    let sym = (&st + st.transpose()) * 0.5;
    let eigs = sym.symmetric_eigen().eigenvalues;
    let mut mags: Vec<f64> = eigs.iter().map(|&l| l.abs()).collect();
    mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(mags)
}

/// Signed spectrum of P^{-1} B rebuilt from the generalized eigenvalues kappa
/// of (K + c c^T) x = kappa M x: for each kappa the invariant 2x2 block
/// [[st*k/(st*k+1), 1/(st*k+1)], [1/(st*e2*k+1), (-3st - st*e2*k)/(st*e2*k+1)]]
/// contributes its two eigenvalues.
pub fn block_reduction_spectrum(mesh: &MeshLevel, tau: f64, eps: f64) -> Result<Vec<f64>> {
    validate_parameters(tau, eps)?;
    let space = FemSpace::new(mesh)?;
    let k = space.assemble_stiffness().to_dense();
    let m = space.assemble_mass().to_dense();
    let c = DVector::from_column_slice(&space.assemble_mean_vector().values);
    let kc = &k + &c * c.transpose();

    // kappa from the SPD pencil (K + cc^T, M)
    let chol = Cholesky::new(m).ok_or_else(|| Error::Numerical("mass matrix not SPD".into()))?;
    let l = chol.l();
    let mut g = kc;
    l.solve_lower_triangular_mut(&mut g);
    let mut gt = g.transpose();
    l.solve_lower_triangular_mut(&mut gt);
    let sym = (&gt + gt.transpose()) * 0.5;
    let kappas = sym.symmetric_eigen().eigenvalues;

    let st = tau.sqrt();
    let e2 = eps * eps;
    let mut spectrum = Vec::with_capacity(2 * kappas.len());
    for &kappa in kappas.iter() {
        let a11 = st * kappa / (st * kappa + 1.0);
        let a12 = 1.0 / (st * kappa + 1.0);
        let a21 = 1.0 / (st * e2 * kappa + 1.0);
        let a22 = (-3.0 * st - st * e2 * kappa) / (st * e2 * kappa + 1.0);
        let trace = a11 + a22;
        let det = a11 * a22 - a12 * a21;
        let disc = trace * trace - 4.0 * det;
        if disc < -1e-10 {
            return Err(Error::Numerical(format!(
                "complex pair in 2x2 reduction (discriminant {disc:.3e})"
            )));
        }
        let root = disc.max(0.0).sqrt();
        spectrum.push(0.5 * (trace + root));
        spectrum.push(0.5 * (trace - root));
    }
    spectrum.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(spectrum)
}

/// Full check for one parameter point: both spectra, bounds with the proof
/// constants C1 = 4 and C2 = 1/8, and the P* spectrum for comparison.
pub fn check_bounds(mesh: &MeshLevel, tau: f64, eps: f64, slack: f64) -> Result<SpectrumReport> {
    let (b, p, p_star) = assemble_dense_bp(mesh, tau, eps)?;
    let mags = eigenvalues_preconditioned(&b, &p)?;
    let star_mags = eigenvalues_preconditioned(&b, &p_star)?;
    let min_abs = mags.first().copied().unwrap_or(0.0);
    let max_abs = mags.last().copied().unwrap_or(0.0);
    let low = bound_low(tau, eps);
    let pass = min_abs >= low - slack && max_abs <= BOUND_HIGH + slack;
    Ok(SpectrumReport {
        level: mesh.level,
        dimension: mesh.dimension,
        tau,
        eps,
        eigenvalues: mags,
        min_abs,
        max_abs,
        bound_low: low,
        bound_high: BOUND_HIGH,
        pass,
        star_min_abs: star_mags.first().copied().unwrap_or(0.0),
        star_max_abs: star_mags.last().copied().unwrap_or(0.0),
    })
}
