//! P1 finite element assembly on a mesh level.
//!
//! Mass, stiffness and the mean vector are integrated analytically; the
//! weighted mass matrix, the quartic potential and cubic loads use the
//! degree-4 simplex rules so quadrature never limits accuracy.

use crate::error::{Error, Result};
use crate::linalg::{minres, Identity, RankOneAugmented};
use crate::mesh::MeshLevel;
use crate::quadrature::{simplex_rule_degree4, QuadRule};
use crate::sparse::{SparseMatrix, TripletBuilder};

/// Coefficients of a P1 function in the nodal basis of one level.
#[derive(Debug, Clone)]
pub struct NodalField {
    pub level: usize,
    pub values: Vec<f64>,
}

impl NodalField {
    pub fn constant(level: usize, n: usize, value: f64) -> Self {
        NodalField {
            level,
            values: vec![value; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Max-norm; for P1 functions this is the L-infinity norm on the domain.
    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }
}

/// Entries (phi_k, 1); all positive, summing to the domain volume.
#[derive(Debug, Clone)]
pub struct MeanVector {
    pub level: usize,
    pub values: Vec<f64>,
}

impl MeanVector {
    pub fn dot(&self, v: &[f64]) -> f64 {
        self.values.iter().zip(v).map(|(&c, &x)| c * x).sum()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

#[derive(Debug, Clone)]
struct CellGeom {
    verts: [usize; 4],
    vol: f64,
    grads: [[f64; 3]; 4],
}

/// Precomputed element geometry for one mesh level.
pub struct FemSpace {
    pub dimension: usize,
    pub level: usize,
    num_vertices: usize,
    vertices: Vec<[f64; 3]>,
    cells: Vec<CellGeom>,
    quad: &'static QuadRule,
}

/// Barycentric gradients and volume of one simplex.
pub(crate) fn element_gradients(
    dimension: usize,
    xs: &[[f64; 3]],
) -> Result<([[f64; 3]; 4], f64)> {
    let mut grads = [[0.0; 3]; 4];
    match dimension {
        2 => {
            let det = (xs[1][0] - xs[0][0]) * (xs[2][1] - xs[0][1])
                - (xs[1][1] - xs[0][1]) * (xs[2][0] - xs[0][0]);
            if det.abs() < 1e-14 {
                return Err(Error::Assembly("degenerate triangle".into()));
            }
            // rows of the inverse Jacobian
            grads[1] = [(xs[2][1] - xs[0][1]) / det, -(xs[2][0] - xs[0][0]) / det, 0.0];
            grads[2] = [-(xs[1][1] - xs[0][1]) / det, (xs[1][0] - xs[0][0]) / det, 0.0];
            for a in 0..2 {
                grads[0][a] = -grads[1][a] - grads[2][a];
            }
            Ok((grads, det / 2.0))
        }
        3 => {
            let e = |k: usize, a: usize| xs[k][a] - xs[0][a];
            let det = e(1, 0) * (e(2, 1) * e(3, 2) - e(2, 2) * e(3, 1))
                - e(2, 0) * (e(1, 1) * e(3, 2) - e(1, 2) * e(3, 1))
                + e(3, 0) * (e(1, 1) * e(2, 2) - e(1, 2) * e(2, 1));
            if det.abs() < 1e-14 {
                return Err(Error::Assembly("degenerate tetrahedron".into()));
            }
            // inverse transpose of the edge matrix [x1-x0 | x2-x0 | x3-x0]
            let edges = [
                [e(1, 0), e(1, 1), e(1, 2)],
                [e(2, 0), e(2, 1), e(2, 2)],
                [e(3, 0), e(3, 1), e(3, 2)],
            ];
            for i in 0..3 {
                let (u, v) = (edges[(i + 1) % 3], edges[(i + 2) % 3]);
                let cross = [
                    u[1] * v[2] - u[2] * v[1],
                    u[2] * v[0] - u[0] * v[2],
                    u[0] * v[1] - u[1] * v[0],
                ];
                for a in 0..3 {
                    grads[i + 1][a] = cross[a] / det;
                }
            }
            for a in 0..3 {
                grads[0][a] = -grads[1][a] - grads[2][a] - grads[3][a];
            }
            Ok((grads, det / 6.0))
        }
        d => Err(Error::Config(format!("unsupported dimension {d}"))),
    }
}

impl FemSpace {
    pub fn new(mesh: &MeshLevel) -> Result<Self> {
        let dim = mesh.dimension;
        let mut cells = Vec::with_capacity(mesh.num_cells());
        for i in 0..mesh.num_cells() {
            let cell = mesh.cell(i);
            let xs: Vec<[f64; 3]> = cell.iter().map(|&v| mesh.vertices[v]).collect();
            let (grads, vol) = element_gradients(dim, &xs)
                .map_err(|_| Error::Assembly(format!("degenerate cell {i}")))?;
            if vol <= 0.0 {
                return Err(Error::Assembly(format!(
                    "cell {i} has non-positive volume {vol:.3e}"
                )));
            }
            let mut verts = [usize::MAX; 4];
            verts[..cell.len()].copy_from_slice(cell);
            cells.push(CellGeom { verts, vol, grads });
        }
        Ok(FemSpace {
            dimension: dim,
            level: mesh.level,
            num_vertices: mesh.num_vertices(),
            vertices: mesh.vertices.clone(),
            cells,
            quad: simplex_rule_degree4(dim),
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    fn nv(&self) -> usize {
        self.dimension + 1
    }

    fn check_level(&self, field: &NodalField) -> Result<()> {
        if field.level != self.level || field.len() != self.num_vertices {
            return Err(Error::Assembly(format!(
                "field on level {} with {} values does not match space level {} ({} vertices)",
                field.level,
                field.len(),
                self.level,
                self.num_vertices
            )));
        }
        Ok(())
    }

    /// K(k,l) = (grad phi_k, grad phi_l); symmetric positive semidefinite with
    /// the constants as kernel.
    pub fn assemble_stiffness(&self) -> SparseMatrix {
        let nv = self.nv();
        let mut b = TripletBuilder::new(self.num_vertices, self.num_vertices);
        for cell in &self.cells {
            for i in 0..nv {
                for j in 0..nv {
                    let g = cell.grads;
                    let dot = g[i][0] * g[j][0] + g[i][1] * g[j][1] + g[i][2] * g[j][2];
                    b.push(cell.verts[i], cell.verts[j], cell.vol * dot);
                }
            }
        }
        b.build()
    }

    /// M(k,l) = (phi_k, phi_l), integrated exactly.
    pub fn assemble_mass(&self) -> SparseMatrix {
        let nv = self.nv();
        let scale = 1.0 / ((nv * (nv + 1)) as f64);
        let mut b = TripletBuilder::new(self.num_vertices, self.num_vertices);
        for cell in &self.cells {
            for i in 0..nv {
                for j in 0..nv {
                    let factor = if i == j { 2.0 } else { 1.0 };
                    b.push(cell.verts[i], cell.verts[j], cell.vol * scale * factor);
                }
            }
        }
        b.build()
    }

    /// c(k) = (phi_k, 1).
    pub fn assemble_mean_vector(&self) -> MeanVector {
        let nv = self.nv();
        let mut values = vec![0.0; self.num_vertices];
        for cell in &self.cells {
            let share = cell.vol / nv as f64;
            for &v in &cell.verts[..nv] {
                values[v] += share;
            }
        }
        MeanVector {
            level: self.level,
            values,
        }
    }

    /// J(phi)(k,l) = 3 (phi^2 phi_k, phi_l); equals 3M when phi is identically
    /// plus or minus one.
    pub fn assemble_weighted_mass(&self, phi: &NodalField) -> Result<SparseMatrix> {
        self.check_level(phi)?;
        let nv = self.nv();
        let mut b = TripletBuilder::new(self.num_vertices, self.num_vertices);
        let mut local = vec![0.0f64; nv * nv];
        for cell in &self.cells {
            local.fill(0.0);
            for (point, &weight) in self.quad.points.iter().zip(&self.quad.weights) {
                let mut phi_q = 0.0;
                for i in 0..nv {
                    phi_q += phi.values[cell.verts[i]] * point[i];
                }
                let scale = 3.0 * weight * cell.vol * phi_q * phi_q;
                for i in 0..nv {
                    for j in 0..nv {
                        local[i * nv + j] += scale * point[i] * point[j];
                    }
                }
            }
            for i in 0..nv {
                for j in 0..nv {
                    b.push(cell.verts[i], cell.verts[j], local[i * nv + j]);
                }
            }
        }
        Ok(b.build())
    }

    /// Nodal interpolant; rejects non-finite samples.
    pub fn interpolate<F: Fn(&[f64; 3]) -> f64>(&self, f: F) -> Result<NodalField> {
        let mut values = Vec::with_capacity(self.num_vertices);
        for (k, x) in self.vertices.iter().enumerate() {
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::Input(format!(
                    "non-finite value {v} at vertex {k} ({:.3}, {:.3}, {:.3})",
                    x[0], x[1], x[2]
                )));
            }
            values.push(v);
        }
        Ok(NodalField {
            level: self.level,
            values,
        })
    }

    /// b(k) = (f, phi_k) by the degree-4 rule.
    pub fn load_vector<F: Fn(&[f64; 3]) -> f64>(&self, f: F) -> Vec<f64> {
        let nv = self.nv();
        let mut b = vec![0.0; self.num_vertices];
        for cell in &self.cells {
            for (point, &weight) in self.quad.points.iter().zip(&self.quad.weights) {
                let mut x = [0.0; 3];
                for i in 0..nv {
                    let xv = self.vertices[cell.verts[i]];
                    for (xa, &va) in x.iter_mut().zip(&xv) {
                        *xa += point[i] * va;
                    }
                }
                let fval = f(&x) * weight * cell.vol;
                for i in 0..nv {
                    b[cell.verts[i]] += fval * point[i];
                }
            }
        }
        b
    }

    /// b(k) = (phi^3, phi_k), a degree-4 integrand.
    pub fn cubic_load(&self, phi: &[f64]) -> Vec<f64> {
        let nv = self.nv();
        let mut b = vec![0.0; self.num_vertices];
        for cell in &self.cells {
            for (point, &weight) in self.quad.points.iter().zip(&self.quad.weights) {
                let mut phi_q = 0.0;
                for i in 0..nv {
                    phi_q += phi[cell.verts[i]] * point[i];
                }
                let fval = phi_q * phi_q * phi_q * weight * cell.vol;
                for i in 0..nv {
                    b[cell.verts[i]] += fval * point[i];
                }
            }
        }
        b
    }

    /// Integral of phi^3 over the domain.
    pub fn integrate_cubed(&self, phi: &[f64]) -> f64 {
        let nv = self.nv();
        let mut total = 0.0;
        for cell in &self.cells {
            for (point, &weight) in self.quad.points.iter().zip(&self.quad.weights) {
                let mut phi_q = 0.0;
                for i in 0..nv {
                    phi_q += phi[cell.verts[i]] * point[i];
                }
                total += phi_q * phi_q * phi_q * weight * cell.vol;
            }
        }
        total
    }

    /// Integral of (phi + shift)^4 over the domain.
    pub fn integrate_quartic(&self, phi: &[f64], shift: f64) -> f64 {
        let nv = self.nv();
        let mut total = 0.0;
        for cell in &self.cells {
            for (point, &weight) in self.quad.points.iter().zip(&self.quad.weights) {
                let mut phi_q = shift;
                for i in 0..nv {
                    phi_q += phi[cell.verts[i]] * point[i];
                }
                total += phi_q.powi(4) * weight * cell.vol;
            }
        }
        total
    }

    /// E(phi) = int (1/4eps)(phi^2-1)^2 + (eps/2)|grad phi|^2; the gradient
    /// term is exact for P1, the quartic term uses the degree-4 rule.
    pub fn energy(&self, phi: &[f64], eps: f64) -> f64 {
        let nv = self.nv();
        let mut total = 0.0;
        for cell in &self.cells {
            let mut grad = [0.0f64; 3];
            for i in 0..nv {
                let v = phi[cell.verts[i]];
                for (ga, &gia) in grad.iter_mut().zip(&cell.grads[i]) {
                    *ga += v * gia;
                }
            }
            let grad_sq = grad[0] * grad[0] + grad[1] * grad[1] + grad[2] * grad[2];
            total += 0.5 * eps * cell.vol * grad_sq;
            for (point, &weight) in self.quad.points.iter().zip(&self.quad.weights) {
                let mut phi_q = 0.0;
                for i in 0..nv {
                    phi_q += phi[cell.verts[i]] * point[i];
                }
                let well = phi_q * phi_q - 1.0;
                total += weight * cell.vol * well * well / (4.0 * eps);
            }
        }
        total
    }
}

/// Projection with matching mean: a(w, v) = (f, v) for all zero-mean v and
/// (w - f, 1) = 0, solved through the rank-one augmented operator K + c c^T.
pub fn ritz_projection<F: Fn(&[f64; 3]) -> f64>(
    space: &FemSpace,
    stiffness: &SparseMatrix,
    mean: &MeanVector,
    f: F,
) -> Result<NodalField> {
    let b = space.load_vector(f);
    let op = RankOneAugmented {
        base: stiffness,
        vector: &mean.values,
        sigma: 1.0,
    };
    let n = b.len();
    let (w, report) = minres(&op, &Identity(n), &b, 1e-12, 200 * n.max(50))?;
    if !report.converged && report.true_relative_residual > 1e-10 {
        return Err(Error::Solver(format!(
            "projection solve stalled at relative residual {:.3e}",
            report.true_relative_residual
        )));
    }
    Ok(NodalField {
        level: space.level,
        values: w,
    })
}

/// Subtracts the plain sum times the mean vector, so the result represents a
/// functional vanishing on constants (|Omega| = 1).
pub fn project_zero_sum(v: &mut [f64], mean: &MeanVector) {
    let total: f64 = v.iter().sum();
    for (vi, &ci) in v.iter_mut().zip(&mean.values) {
        *vi -= total * ci;
    }
}

/// Load vectors F, G of the Newton step, evaluated against every nodal basis
/// function and extended by zero on constants.
#[allow(clippy::too_many_arguments)]
pub fn newton_residual_loads(
    space: &FemSpace,
    stiffness: &SparseMatrix,
    mass: &SparseMatrix,
    mean: &MeanVector,
    phi_ring: &NodalField,
    mu_ring: &NodalField,
    phi_prev_ring: &NodalField,
    mean_phi0: f64,
    tau: f64,
    eps: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    space.check_level(phi_ring)?;
    space.check_level(mu_ring)?;
    space.check_level(phi_prev_ring)?;
    let n = space.num_vertices();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut scratch = vec![0.0; n];

    // F = tau*eps*K*mu_ring + M*(phi_ring - phi_prev_ring)
    stiffness.matvec(&mu_ring.values, &mut f);
    for v in f.iter_mut() {
        *v *= tau * eps;
    }
    let diff: Vec<f64> = phi_ring
        .values
        .iter()
        .zip(&phi_prev_ring.values)
        .map(|(&a, &b)| a - b)
        .collect();
    mass.matvec(&diff, &mut scratch);
    for (fi, &s) in f.iter_mut().zip(&scratch) {
        *fi += s;
    }

    // G = M*mu_ring - eps^{-1} ((phi_full^3, .) - M*phi_prev_ring) - eps*K*phi_ring
    mass.matvec(&mu_ring.values, &mut g);
    let phi_full: Vec<f64> = phi_ring.values.iter().map(|&v| v + mean_phi0).collect();
    let cubic = space.cubic_load(&phi_full);
    mass.matvec(&phi_prev_ring.values, &mut scratch);
    for i in 0..n {
        g[i] -= (cubic[i] - scratch[i]) / eps;
    }
    stiffness.matvec(&phi_ring.values, &mut scratch);
    for (gi, &s) in g.iter_mut().zip(&scratch) {
        *gi -= eps * s;
    }

    // zero-mean extension: both functionals vanish on constants
    project_zero_sum(&mut f, mean);
    project_zero_sum(&mut g, mean);
    Ok((f, g))
}
