//! Simplex quadrature used for the quartic potential and the weighted mass
//! matrix. Mass and stiffness terms are integrated analytically elsewhere;
//! these rules only need strength 4.

use std::sync::OnceLock;

/// Quadrature points in barycentric coordinates with weights summing to one;
/// multiply by the cell volume to integrate.
#[derive(Debug)]
pub struct QuadRule {
    pub points: Vec<[f64; 4]>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }
}

/// Degree-4 rule: Dunavant 6-point on triangles, a collapsed-coordinate
/// Gauss product rule (64 points, exact through degree 5) on tetrahedra.
pub fn simplex_rule_degree4(dimension: usize) -> &'static QuadRule {
    static TRI: OnceLock<QuadRule> = OnceLock::new();
    static TET: OnceLock<QuadRule> = OnceLock::new();
    match dimension {
        2 => TRI.get_or_init(dunavant6),
        3 => TET.get_or_init(collapsed_tet_rule),
        d => panic!("no quadrature for dimension {d}"),
    }
}

fn dunavant6() -> QuadRule {
    let groups = [
        (0.108_103_018_168_070, 0.445_948_490_915_965, 0.223_381_589_678_011),
        (0.816_847_572_980_459, 0.091_576_213_509_771, 0.109_951_743_655_322),
    ];
    let mut points = Vec::with_capacity(6);
    let mut weights = Vec::with_capacity(6);
    for &(a, b, w) in &groups {
        for perm in [[a, b, b], [b, a, b], [b, b, a]] {
            points.push([perm[0], perm[1], perm[2], 0.0]);
            weights.push(w);
        }
    }
    QuadRule { points, weights }
}

/// Gauss-Legendre nodes and weights on [0, 1], four points.
fn gauss4_unit() -> ([f64; 4], [f64; 4]) {
    let r = (6.0f64 / 5.0).sqrt();
    let a = (3.0 / 7.0 - 2.0 / 7.0 * r).sqrt();
    let b = (3.0 / 7.0 + 2.0 / 7.0 * r).sqrt();
    let wa = (18.0 + 30.0f64.sqrt()) / 36.0;
    let wb = (18.0 - 30.0f64.sqrt()) / 36.0;
    (
        [(1.0 - b) / 2.0, (1.0 - a) / 2.0, (1.0 + a) / 2.0, (1.0 + b) / 2.0],
        [wb / 2.0, wa / 2.0, wa / 2.0, wb / 2.0],
    )
}

/// Maps (u, v, w) in the unit cube onto the reference tetrahedron via
/// x = u, y = v(1-u), z = w(1-u)(1-v); the Jacobian is (1-u)^2 (1-v).
fn collapsed_tet_rule() -> QuadRule {
    let (nodes, wts) = gauss4_unit();
    let mut points = Vec::with_capacity(64);
    let mut weights = Vec::with_capacity(64);
    for (iu, &u) in nodes.iter().enumerate() {
        for (iv, &v) in nodes.iter().enumerate() {
            for (iw, &w) in nodes.iter().enumerate() {
                let x = u;
                let y = v * (1.0 - u);
                let z = w * (1.0 - u) * (1.0 - v);
                let jac = (1.0 - u) * (1.0 - u) * (1.0 - v);
                points.push([1.0 - x - y - z, x, y, z]);
                // factor 6 rescales the reference volume 1/6 to unit weight sum
                weights.push(6.0 * wts[iu] * wts[iv] * wts[iw] * jac);
            }
        }
    }
    QuadRule { points, weights }
}
