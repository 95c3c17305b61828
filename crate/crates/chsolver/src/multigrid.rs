//! Geometric multigrid V(nu1, nu2)-cycle for gamma*K + M on the nested
//! hierarchy. One cycle from a zero initial guess is a fixed symmetric
//! positive definite linear map, which is what MINRES needs from a
//! preconditioner: forward Gauss-Seidel sweeps before coarsening, backward
//! sweeps after, and a dense factorization on level 0.

use crate::error::{Error, Result};
use crate::fem::FemSpace;
use crate::linalg::{DenseSpdInverse, LinearOperator};
use crate::mesh::{MeshHierarchy, ParentRef};
use crate::sparse::{gauss_seidel_sweep, SparseMatrix, SweepDirection, TripletBuilder};

/// Canonical embedding of the coarse P1 space into the fine one: persisting
/// vertices keep their value, midpoints average the parent edge endpoints.
pub fn build_prolongation(hierarchy: &MeshHierarchy, fine_level: usize) -> Result<SparseMatrix> {
    let parents = hierarchy.parents(fine_level)?;
    let n_fine = hierarchy.levels[fine_level].num_vertices();
    let n_coarse = hierarchy.levels[fine_level - 1].num_vertices();
    let mut b = TripletBuilder::new(n_fine, n_coarse);
    for (v, parent) in parents.iter().enumerate() {
        match *parent {
            ParentRef::Vertex(p) => b.push(v, p, 1.0),
            ParentRef::Edge(pa, pb) => {
                b.push(v, pa, 0.5);
                b.push(v, pb, 0.5);
            }
        }
    }
    Ok(b.build())
}

/// Level matrices gamma*K + M, grid transfers and the coarse factorization.
pub struct MgHierarchy {
    pub gamma: f64,
    pub nu_pre: usize,
    pub nu_post: usize,
    matrices: Vec<SparseMatrix>,
    /// `prolongations[l]` maps level l to level l + 1.
    prolongations: Vec<SparseMatrix>,
    coarse: DenseSpdInverse,
}

impl MgHierarchy {
    /// Assembles gamma*K_l + M_l directly on every level; by nestedness these
    /// equal the Galerkin coarse operators.
    pub fn build(
        meshes: &MeshHierarchy,
        gamma: f64,
        nu_pre: usize,
        nu_post: usize,
    ) -> Result<Self> {
        if gamma < 0.0 {
            return Err(Error::Config(format!("negative multigrid shift {gamma}")));
        }
        let mut matrices = Vec::with_capacity(meshes.num_levels());
        for level in &meshes.levels {
            let space = FemSpace::new(level)?;
            let k = space.assemble_stiffness();
            let m = space.assemble_mass();
            matrices.push(SparseMatrix::linear_combination(gamma, &k, 1.0, &m));
        }
        let mut prolongations = Vec::new();
        for l in 1..meshes.num_levels() {
            prolongations.push(build_prolongation(meshes, l)?);
        }
        Self::from_matrices(matrices, prolongations, gamma, nu_pre, nu_post)
    }

    pub fn from_matrices(
        matrices: Vec<SparseMatrix>,
        prolongations: Vec<SparseMatrix>,
        gamma: f64,
        nu_pre: usize,
        nu_post: usize,
    ) -> Result<Self> {
        if matrices.is_empty() || prolongations.len() + 1 != matrices.len() {
            return Err(Error::Hierarchy(
                "level matrices and transfers do not chain".into(),
            ));
        }
        for (l, a) in matrices.iter().enumerate() {
            if a.n_rows != a.n_cols {
                return Err(Error::Hierarchy(format!("level {l} matrix not square")));
            }
            if a.diagonal().iter().any(|&d| d <= 0.0) {
                return Err(Error::Smoother(format!(
                    "level {l} matrix has a non-positive diagonal entry"
                )));
            }
            if l > 0 {
                let p = &prolongations[l - 1];
                if p.n_rows != a.n_rows || p.n_cols != matrices[l - 1].n_rows {
                    return Err(Error::Hierarchy(format!(
                        "transfer into level {l} has shape {}x{}",
                        p.n_rows, p.n_cols
                    )));
                }
            }
        }
        let coarse = DenseSpdInverse::new(&matrices[0].to_dense())?;
        Ok(MgHierarchy {
            gamma,
            nu_pre,
            nu_post,
            matrices,
            prolongations,
            coarse,
        })
    }

    pub fn num_levels(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrix(&self, level: usize) -> &SparseMatrix {
        &self.matrices[level]
    }

    pub fn prolongation(&self, fine_level: usize) -> &SparseMatrix {
        &self.prolongations[fine_level - 1]
    }

    pub fn finest(&self) -> &SparseMatrix {
        self.matrices.last().unwrap()
    }

    /// One V(nu_pre, nu_post)-cycle from a zero initial guess on the finest
    /// level.
    pub fn v_cycle(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.finest().n_rows {
            return Err(Error::Hierarchy(format!(
                "right-hand side length {} does not match finest level size {}",
                b.len(),
                self.finest().n_rows
            )));
        }
        self.cycle_level(self.matrices.len() - 1, b)
    }

    fn cycle_level(&self, level: usize, b: &[f64]) -> Result<Vec<f64>> {
        if level == 0 {
            return Ok(self.coarse.solve(b));
        }
        let a = &self.matrices[level];
        let n = a.n_rows;
        let mut x = vec![0.0; n];
        for _ in 0..self.nu_pre {
            gauss_seidel_sweep(a, &mut x, b, SweepDirection::Forward)?;
        }
        let mut r = vec![0.0; n];
        a.matvec(&x, &mut r);
        for (ri, &bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let p = &self.prolongations[level - 1];
        let mut b_coarse = vec![0.0; p.n_cols];
        p.transpose_matvec(&r, &mut b_coarse);
        let e_coarse = self.cycle_level(level - 1, &b_coarse)?;
        let mut correction = vec![0.0; n];
        p.matvec(&e_coarse, &mut correction);
        for (xi, &ei) in x.iter_mut().zip(&correction) {
            *xi += ei;
        }
        for _ in 0..self.nu_post {
            gauss_seidel_sweep(a, &mut x, b, SweepDirection::Backward)?;
        }
        Ok(x)
    }
}

impl LinearOperator for MgHierarchy {
    fn dim(&self) -> usize {
        self.finest().n_rows
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let result = self.v_cycle(x).expect("hierarchy validated at build");
        y.copy_from_slice(&result);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::FemSpace;
    use crate::mesh::MeshHierarchy;
    use nalgebra::DMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn a_norm(a: &SparseMatrix, e: &[f64]) -> f64 {
        let mut ae = vec![0.0; e.len()];
        a.matvec(e, &mut ae);
        e.iter().zip(&ae).map(|(&x, &y)| x * y).sum::<f64>().sqrt()
    }

    #[test]
    fn prolongation_rows() {
        let hier = MeshHierarchy::build(2, 1).unwrap();
        let p = build_prolongation(&hier, 1).unwrap();
        let n_coarse = hier.levels[0].num_vertices();
        for v in 0..p.n_rows {
            let (cols, vals) = p.row(v);
            if v < n_coarse {
                assert_eq!(cols, &[v]);
                assert_eq!(vals, &[1.0]);
            } else {
                assert_eq!(cols.len(), 2);
                assert!(vals.iter().all(|&w| (w - 0.5).abs() < 1e-15));
            }
        }
        // constants prolongate to constants
        let ones = vec![1.0; n_coarse];
        let mut fine = vec![0.0; p.n_rows];
        p.matvec(&ones, &mut fine);
        assert!(fine.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn galerkin_identity_on_nested_spaces() {
        // P^T A_f P = A_c entrywise for both K and M, hence for gamma*K + M.
        let hier = MeshHierarchy::build(2, 3).unwrap();
        let gamma = (0.002f64 / 64.0).sqrt();
        let mg = MgHierarchy::build(&hier, gamma, 4, 4).unwrap();
        for l in 1..mg.num_levels() {
            let p = mg.prolongation(l).to_dense();
            let triple = p.transpose() * mg.matrix(l).to_dense() * &p;
            let coarse = mg.matrix(l - 1).to_dense();
            assert!(
                (triple - coarse).abs().max() < 1e-11,
                "Galerkin identity fails into level {l}"
            );
        }
    }

    #[test]
    fn zero_shift_gives_mass_matrices() {
        let hier = MeshHierarchy::build(2, 1).unwrap();
        let mg = MgHierarchy::build(&hier, 0.0, 4, 4).unwrap();
        let space = FemSpace::new(&hier.levels[1]).unwrap();
        let m = space.assemble_mass();
        let diff = SparseMatrix::linear_combination(1.0, mg.matrix(1), -1.0, &m);
        assert!(diff.values.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn single_level_cycle_is_dense_solve() {
        let hier = MeshHierarchy::build(2, 0).unwrap();
        let mg = MgHierarchy::build(&hier, 1.0, 4, 4).unwrap();
        let n = hier.levels[0].num_vertices();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = mg.v_cycle(&b).unwrap();
        let mut r = vec![0.0; n];
        mg.matrix(0).matvec(&x, &mut r);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn cycle_is_linear_symmetric_positive_definite() {
        let hier = MeshHierarchy::build(2, 2).unwrap();
        let gamma = (0.002f64 / 64.0).sqrt();
        let mg = MgHierarchy::build(&hier, gamma, 4, 4).unwrap();
        let n = mg.dim();

        assert!(mg.v_cycle(&vec![0.0; n]).unwrap().iter().all(|&v| v == 0.0));

        // induced matrix, column by column
        let mut v = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = mg.v_cycle(&e).unwrap();
            for i in 0..n {
                v[(i, j)] = col[i];
            }
        }
        let asym = (&v - v.transpose()).abs().max();
        assert!(asym < 1e-10 * v.abs().max(), "cycle asymmetry {asym}");
        let sym = (&v + v.transpose()) * 0.5;
        let eigs = sym.symmetric_eigen().eigenvalues;
        assert!(eigs.iter().all(|&l| l > 0.0), "cycle not positive definite");
        assert!(mg.v_cycle(&vec![0.0; n + 3]).is_err());
    }

    #[test]
    fn symmetry_probe_random_vectors() {
        let hier = MeshHierarchy::build(2, 3).unwrap();
        let mg = MgHierarchy::build(&hier, (0.002f64 / 64.0).sqrt(), 4, 4).unwrap();
        let n = mg.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..4 {
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let vb = mg.v_cycle(&b).unwrap();
            let vy = mg.v_cycle(&y).unwrap();
            let yvb: f64 = y.iter().zip(&vb).map(|(&a, &b)| a * b).sum();
            let bvy: f64 = b.iter().zip(&vy).map(|(&a, &b)| a * b).sum();
            let nb = b.iter().map(|&v| v * v).sum::<f64>().sqrt();
            let ny = y.iter().map(|&v| v * v).sum::<f64>().sqrt();
            assert!((yvb - bvy).abs() <= 1e-10 * nb * ny);
        }
    }

    #[test]
    fn gauss_seidel_reduces_a_norm_monotonically() {
        let hier = MeshHierarchy::build(2, 2).unwrap();
        let gamma = (0.002f64 / 64.0).sqrt();
        let mg = MgHierarchy::build(&hier, gamma, 4, 4).unwrap();
        let a = mg.finest();
        let n = a.n_rows;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x_exact: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut b = vec![0.0; n];
        a.matvec(&x_exact, &mut b);
        let mut x = vec![0.0; n];
        let mut prev = a_norm(a, &x_exact);
        for _ in 0..10 {
            gauss_seidel_sweep(a, &mut x, &b, SweepDirection::Forward).unwrap();
            let e: Vec<f64> = x_exact.iter().zip(&x).map(|(&t, &u)| t - u).collect();
            let now = a_norm(a, &e);
            assert!(now < prev, "A-norm error grew: {now} vs {prev}");
            prev = now;
        }
    }

    #[test]
    fn error_contraction_against_dense_solve() {
        // one V(4,4)-cycle contracts the A-norm error by at least a factor
        // five on level 4 with the first-experiment time step
        let hier = MeshHierarchy::build(2, 4).unwrap();
        let gamma = (0.002f64 / 64.0).sqrt();
        let mg = MgHierarchy::build(&hier, gamma, 4, 4).unwrap();
        let a = mg.finest();
        let n = a.n_rows;
        let dense = DenseSpdInverse::new(&a.to_dense()).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x_exact = dense.solve(&b);

        let mut x = vec![0.0; n];
        let mut prev = a_norm(a, &x_exact);
        let mut worst: f64 = 0.0;
        for _ in 0..6 {
            let mut r = vec![0.0; n];
            a.matvec(&x, &mut r);
            for (ri, &bi) in r.iter_mut().zip(&b) {
                *ri = bi - *ri;
            }
            let dx = mg.v_cycle(&r).unwrap();
            for (xi, &di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
            let e: Vec<f64> = x_exact.iter().zip(&x).map(|(&t, &u)| t - u).collect();
            let now = a_norm(a, &e);
            worst = worst.max(now / prev);
            prev = now;
            if now < 1e-13 {
                break;
            }
        }
        assert!(worst <= 0.2, "contraction factor {worst}");
    }
}
