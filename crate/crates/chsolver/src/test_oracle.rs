//! Test-only dense assembly oracles.
//!
//! Everything here integrates barycentric monomials with the exact factorial
//! formula and computes gradients by solving small affine systems with
//! nalgebra, deliberately avoiding the quadrature rules and CSR assembly used
//! by the production path.

use nalgebra::{DMatrix, DVector};

use crate::mesh::MeshLevel;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Exact integral of prod_i lambda_i^{e_i} over a simplex of volume `vol`:
/// d! vol prod(e_i!) / (|e| + d)!.
pub fn simplex_monomial_integral(dim: usize, vol: f64, exps: &[usize]) -> f64 {
    let total: usize = exps.iter().sum();
    factorial(dim) * vol * exps.iter().map(|&e| factorial(e)).product::<f64>()
        / factorial(total + dim)
}

fn cell_volume(mesh: &MeshLevel, cell: &[usize]) -> f64 {
    let dim = mesh.dimension;
    let x0 = mesh.vertices[cell[0]];
    let edges = DMatrix::from_fn(dim, dim, |r, c| mesh.vertices[cell[c + 1]][r] - x0[r]);
    edges.determinant().abs() / factorial(dim)
}

/// Barycentric gradients by solving [1 x_j][a; g] = e_i with LU.
fn cell_gradients(mesh: &MeshLevel, cell: &[usize]) -> Vec<Vec<f64>> {
    let dim = mesh.dimension;
    let nv = dim + 1;
    let a = DMatrix::from_fn(nv, nv, |r, c| {
        if c == 0 {
            1.0
        } else {
            mesh.vertices[cell[r]][c - 1]
        }
    });
    let lu = a.lu();
    (0..nv)
        .map(|i| {
            let mut e = DVector::zeros(nv);
            e[i] = 1.0;
            let sol = lu.solve(&e).expect("non-degenerate simplex");
            (1..nv).map(|k| sol[k]).collect()
        })
        .collect()
}

pub fn dense_stiffness(mesh: &MeshLevel) -> DMatrix<f64> {
    let n = mesh.num_vertices();
    let nv = mesh.dimension + 1;
    let mut k = DMatrix::zeros(n, n);
    for cell in mesh.cells() {
        let vol = cell_volume(mesh, cell);
        let grads = cell_gradients(mesh, cell);
        for i in 0..nv {
            for j in 0..nv {
                let dot: f64 = grads[i].iter().zip(&grads[j]).map(|(&a, &b)| a * b).sum();
                k[(cell[i], cell[j])] += vol * dot;
            }
        }
    }
    k
}

pub fn dense_mass(mesh: &MeshLevel) -> DMatrix<f64> {
    let n = mesh.num_vertices();
    let dim = mesh.dimension;
    let nv = dim + 1;
    let mut m = DMatrix::zeros(n, n);
    for cell in mesh.cells() {
        let vol = cell_volume(mesh, cell);
        for i in 0..nv {
            for j in 0..nv {
                let mut exps = vec![0usize; nv];
                exps[i] += 1;
                exps[j] += 1;
                m[(cell[i], cell[j])] += simplex_monomial_integral(dim, vol, &exps);
            }
        }
    }
    m
}

pub fn dense_mean_vector(mesh: &MeshLevel) -> Vec<f64> {
    let dim = mesh.dimension;
    let nv = dim + 1;
    let mut c = vec![0.0; mesh.num_vertices()];
    for cell in mesh.cells() {
        let vol = cell_volume(mesh, cell);
        for i in 0..nv {
            let mut exps = vec![0usize; nv];
            exps[i] = 1;
            c[cell[i]] += simplex_monomial_integral(dim, vol, &exps);
        }
    }
    c
}

/// J(phi)(k,l) = 3 (phi^2 phi_k, phi_l) with the quartic products expanded
/// into barycentric monomials.
pub fn dense_weighted_mass(mesh: &MeshLevel, phi: &[f64]) -> DMatrix<f64> {
    let n = mesh.num_vertices();
    let dim = mesh.dimension;
    let nv = dim + 1;
    let mut jm = DMatrix::zeros(n, n);
    for cell in mesh.cells() {
        let vol = cell_volume(mesh, cell);
        for k in 0..nv {
            for l in 0..nv {
                let mut entry = 0.0;
                for i in 0..nv {
                    for j in 0..nv {
                        let mut exps = vec![0usize; nv];
                        exps[i] += 1;
                        exps[j] += 1;
                        exps[k] += 1;
                        exps[l] += 1;
                        entry += phi[cell[i]]
                            * phi[cell[j]]
                            * simplex_monomial_integral(dim, vol, &exps);
                    }
                }
                jm[(cell[k], cell[l])] += 3.0 * entry;
            }
        }
    }
    jm
}

/// b(k) = (phi^3, phi_k) by monomial expansion.
pub fn dense_cubic_load(mesh: &MeshLevel, phi: &[f64]) -> Vec<f64> {
    let dim = mesh.dimension;
    let nv = dim + 1;
    let mut b = vec![0.0; mesh.num_vertices()];
    for cell in mesh.cells() {
        let vol = cell_volume(mesh, cell);
        for k in 0..nv {
            let mut entry = 0.0;
            for i in 0..nv {
                for j in 0..nv {
                    for l in 0..nv {
                        let mut exps = vec![0usize; nv];
                        exps[i] += 1;
                        exps[j] += 1;
                        exps[l] += 1;
                        exps[k] += 1;
                        entry += phi[cell[i]]
                            * phi[cell[j]]
                            * phi[cell[l]]
                            * simplex_monomial_integral(dim, vol, &exps);
                    }
                }
            }
            b[cell[k]] += entry;
        }
    }
    b
}

/// Cahn-Hilliard energy with every polynomial term integrated exactly.
pub fn energy_analytic(mesh: &MeshLevel, phi: &[f64], eps: f64) -> f64 {
    let dim = mesh.dimension;
    let nv = dim + 1;
    let k = dense_stiffness(mesh);
    let phi_v = DVector::from_column_slice(phi);
    let grad_term = 0.5 * eps * (phi_v.transpose() * &k * &phi_v)[(0, 0)];

    let mut well = 0.0;
    for cell in mesh.cells() {
        let vol = cell_volume(mesh, cell);
        // (phi^2 - 1)^2 = phi^4 - 2 phi^2 + 1
        let mut p4 = 0.0;
        for i in 0..nv {
            for j in 0..nv {
                for a in 0..nv {
                    for b in 0..nv {
                        let mut exps = vec![0usize; nv];
                        exps[i] += 1;
                        exps[j] += 1;
                        exps[a] += 1;
                        exps[b] += 1;
                        p4 += phi[cell[i]]
                            * phi[cell[j]]
                            * phi[cell[a]]
                            * phi[cell[b]]
                            * simplex_monomial_integral(dim, vol, &exps);
                    }
                }
            }
        }
        let mut p2 = 0.0;
        for i in 0..nv {
            for j in 0..nv {
                let mut exps = vec![0usize; nv];
                exps[i] += 1;
                exps[j] += 1;
                p2 += phi[cell[i]] * phi[cell[j]] * simplex_monomial_integral(dim, vol, &exps);
            }
        }
        well += p4 - 2.0 * p2 + vol;
    }
    grad_term + well / (4.0 * eps)
}

/// Newton load vectors assembled densely from the oracle matrices, extended
/// by zero on constants.
pub fn dense_newton_loads(
    mesh: &MeshLevel,
    phi_ring: &[f64],
    mu_ring: &[f64],
    phi_prev_ring: &[f64],
    mean_phi0: f64,
    tau: f64,
    eps: f64,
) -> (Vec<f64>, Vec<f64>) {
    let k = dense_stiffness(mesh);
    let m = dense_mass(mesh);
    let c = dense_mean_vector(mesh);
    let phi = DVector::from_column_slice(phi_ring);
    let mu = DVector::from_column_slice(mu_ring);
    let prev = DVector::from_column_slice(phi_prev_ring);

    let f = tau * eps * (&k * &mu) + &m * (&phi - &prev);
    let phi_full: Vec<f64> = phi_ring.iter().map(|&v| v + mean_phi0).collect();
    let cubic = DVector::from_column_slice(&dense_cubic_load(mesh, &phi_full));
    let g = &m * &mu - (cubic - &m * &prev) / eps - eps * (&k * &phi);

    let project = |v: DVector<f64>| -> Vec<f64> {
        let total: f64 = v.iter().sum();
        v.iter()
            .zip(&c)
            .map(|(&vi, &ci)| vi - total * ci)
            .collect()
    };
    (project(f), project(g))
}
