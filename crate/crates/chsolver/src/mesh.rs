//! Nested uniform simplicial meshes of the unit square/cube.
//!
//! The level-0 meshes are the two-diagonal split of the square (4 triangles)
//! and the six-tetrahedra Kuhn decomposition of the cube. Uniform refinement
//! is midpoint (red) refinement; in 3D the interior octahedron is cut along
//! a fixed diagonal chosen on index-sorted tetrahedra, which keeps the family
//! nested and shape-regular. Coarse vertices keep their indices, midpoints are
//! appended in sorted-edge order so grid-transfer operators are reproducible.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{Error, Result};

const GEOM_TOL: f64 = 1e-12;

/// One level of the mesh hierarchy.
#[derive(Debug, Clone)]
pub struct MeshLevel {
    pub dimension: usize,
    pub vertices: Vec<[f64; 3]>,
    /// First `dimension + 1` entries of each row are vertex indices;
    /// the trailing slot of a triangle row is `usize::MAX`.
    cells: Vec<[usize; 4]>,
    pub level: usize,
    pub boundary_vertices: BTreeSet<usize>,
}

/// Provenance of a fine vertex with respect to the next coarser level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParentRef {
    /// Same vertex, same index, on the coarse level.
    Vertex(usize),
    /// Midpoint of the coarse edge (a, b), a < b.
    Edge(usize, usize),
}

/// Sequence of nested levels, coarse to fine.
#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    pub levels: Vec<MeshLevel>,
    /// `parent_edges[l]` describes level `l + 1` vertices in terms of level `l`.
    pub parent_edges: Vec<Vec<ParentRef>>,
}

impl MeshLevel {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// Vertex indices of cell `i` (length `dimension + 1`).
    pub fn cell(&self, i: usize) -> &[usize] {
        &self.cells[i][..=self.dimension]
    }

    pub fn cells(&self) -> impl Iterator<Item = &[usize]> {
        self.cells.iter().map(move |c| &c[..=self.dimension])
    }

    fn vertex_coords(&self, cell: &[usize]) -> Vec<[f64; 3]> {
        cell.iter().map(|&v| self.vertices[v]).collect()
    }

    /// Signed volume of cell `i` under the stored orientation.
    pub fn signed_volume(&self, i: usize) -> f64 {
        signed_volume(self.dimension, &self.vertex_coords(self.cell(i)))
    }

    /// Longest edge of cell `i`.
    pub fn cell_diameter(&self, i: usize) -> f64 {
        let xs = self.vertex_coords(self.cell(i));
        let mut d = 0.0f64;
        for a in 0..xs.len() {
            for b in a + 1..xs.len() {
                d = d.max(dist(&xs[a], &xs[b]));
            }
        }
        d
    }

    /// Maximum cell diameter over the mesh.
    pub fn max_diameter(&self) -> f64 {
        (0..self.num_cells())
            .map(|i| self.cell_diameter(i))
            .fold(0.0, f64::max)
    }

    /// Checks positive volumes, exact tiling of the unit box, facet conformity
    /// and the boundary-vertex set.
    pub fn validate(&self) -> Result<()> {
        let mut total = 0.0;
        for i in 0..self.num_cells() {
            let vol = self.signed_volume(i);
            if vol <= GEOM_TOL {
                return Err(Error::Assembly(format!(
                    "cell {i} has non-positive volume {vol:.3e}"
                )));
            }
            total += vol;
        }
        if (total - 1.0).abs() > GEOM_TOL {
            return Err(Error::Assembly(format!(
                "cell volumes sum to {total:.15} instead of 1"
            )));
        }

        // Conformity: every facet is shared by exactly two cells, or lies in a
        // face of the unit box and belongs to exactly one.
        let mut facet_count: HashMap<Vec<usize>, usize> = HashMap::new();
        for cell in self.cells() {
            for skip in 0..cell.len() {
                let mut facet: Vec<usize> = cell
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != skip)
                    .map(|(_, &v)| v)
                    .collect();
                facet.sort_unstable();
                *facet_count.entry(facet).or_insert(0) += 1;
            }
        }
        for (facet, count) in &facet_count {
            match count {
                2 => {}
                1 => {
                    if !self.facet_on_box_boundary(facet) {
                        return Err(Error::Assembly(format!(
                            "interior facet {facet:?} belongs to a single cell"
                        )));
                    }
                }
                n => {
                    return Err(Error::Assembly(format!(
                        "facet {facet:?} shared by {n} cells"
                    )));
                }
            }
        }

        let expected: BTreeSet<usize> = (0..self.num_vertices())
            .filter(|&v| on_box_boundary(&self.vertices[v], self.dimension))
            .collect();
        if expected != self.boundary_vertices {
            return Err(Error::Assembly(
                "boundary vertex set inconsistent with coordinates".into(),
            ));
        }
        Ok(())
    }

    fn facet_on_box_boundary(&self, facet: &[usize]) -> bool {
        for axis in 0..self.dimension {
            for value in [0.0, 1.0] {
                if facet
                    .iter()
                    .all(|&v| (self.vertices[v][axis] - value).abs() <= GEOM_TOL)
                {
                    return true;
                }
            }
        }
        false
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Signed volume of a simplex given its vertex coordinates.
pub fn signed_volume(dimension: usize, xs: &[[f64; 3]]) -> f64 {
    match dimension {
        2 => {
            let (a, b, c) = (xs[0], xs[1], xs[2]);
            0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
        }
        3 => {
            let a = xs[0];
            let u = [xs[1][0] - a[0], xs[1][1] - a[1], xs[1][2] - a[2]];
            let v = [xs[2][0] - a[0], xs[2][1] - a[1], xs[2][2] - a[2]];
            let w = [xs[3][0] - a[0], xs[3][1] - a[1], xs[3][2] - a[2]];
            (u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0])
                + u[2] * (v[0] * w[1] - v[1] * w[0]))
                / 6.0
        }
        _ => unreachable!("dimension checked at construction"),
    }
}

fn on_box_boundary(x: &[f64; 3], dimension: usize) -> bool {
    (0..dimension).any(|a| x[a].abs() <= GEOM_TOL || (x[a] - 1.0).abs() <= GEOM_TOL)
}

fn push_oriented(cells: &mut Vec<[usize; 4]>, dimension: usize, verts: &[usize], coords: &[[f64; 3]]) {
    let mut cell = [usize::MAX; 4];
    cell[..verts.len()].copy_from_slice(verts);
    let xs: Vec<[f64; 3]> = verts.iter().map(|&v| coords[v]).collect();
    if signed_volume(dimension, &xs) < 0.0 {
        cell.swap(dimension - 1, dimension);
    }
    cells.push(cell);
}

/// Level-0 triangulation: the two diagonals of the unit square, or the
/// six-tetrahedra Kuhn decomposition of the unit cube.
pub fn build_initial_mesh(dimension: usize) -> Result<MeshLevel> {
    let (vertices, raw_cells): (Vec<[f64; 3]>, Vec<Vec<usize>>) = match dimension {
        2 => (
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [1.0, 1.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.5, 0.5, 0.0],
            ],
            vec![vec![0, 1, 4], vec![1, 2, 4], vec![2, 3, 4], vec![3, 0, 4]],
        ),
        3 => {
            let vertices = (0..8usize)
                .map(|i| [(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64])
                .collect();
            // Paths 0 -> 7 through the cube, one per axis permutation.
            let cells = vec![
                vec![0, 1, 3, 7],
                vec![0, 1, 5, 7],
                vec![0, 2, 3, 7],
                vec![0, 2, 6, 7],
                vec![0, 4, 5, 7],
                vec![0, 4, 6, 7],
            ];
            (vertices, cells)
        }
        d => {
            return Err(Error::Config(format!(
                "unsupported dimension {d}; expected 2 or 3"
            )));
        }
    };
    let mut cells = Vec::with_capacity(raw_cells.len());
    for c in &raw_cells {
        push_oriented(&mut cells, dimension, c, &vertices);
    }
    let boundary_vertices = (0..vertices.len())
        .filter(|&v| on_box_boundary(&vertices[v], dimension))
        .collect();
    Ok(MeshLevel {
        dimension,
        vertices,
        cells,
        level: 0,
        boundary_vertices,
    })
}

/// One uniform (red) refinement. Returns the fine mesh and the provenance of
/// every fine vertex.
pub fn refine_uniform(coarse: &MeshLevel) -> (MeshLevel, Vec<ParentRef>) {
    let dim = coarse.dimension;
    let n_coarse = coarse.num_vertices();

    // Midpoint vertices in sorted-edge order.
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for cell in coarse.cells() {
        for a in 0..cell.len() {
            for b in a + 1..cell.len() {
                let (lo, hi) = (cell[a].min(cell[b]), cell[a].max(cell[b]));
                edges.insert((lo, hi));
            }
        }
    }
    let mut vertices = coarse.vertices.clone();
    let mut midpoint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut parents: Vec<ParentRef> = (0..n_coarse).map(ParentRef::Vertex).collect();
    for &(a, b) in &edges {
        let idx = vertices.len();
        let (pa, pb) = (coarse.vertices[a], coarse.vertices[b]);
        vertices.push([
            0.5 * (pa[0] + pb[0]),
            0.5 * (pa[1] + pb[1]),
            0.5 * (pa[2] + pb[2]),
        ]);
        midpoint.insert((a, b), idx);
        parents.push(ParentRef::Edge(a, b));
    }
    let mid = |a: usize, b: usize| midpoint[&(a.min(b), a.max(b))];

    let mut cells: Vec<[usize; 4]> = Vec::with_capacity(coarse.num_cells() * (1 << dim));
    for cell in coarse.cells() {
        let mut v: Vec<usize> = cell.to_vec();
        v.sort_unstable();
        if dim == 2 {
            let (m01, m02, m12) = (mid(v[0], v[1]), mid(v[0], v[2]), mid(v[1], v[2]));
            for child in [
                [v[0], m01, m02],
                [v[1], m01, m12],
                [v[2], m02, m12],
                [m01, m12, m02],
            ] {
                push_oriented(&mut cells, dim, &child, &vertices);
            }
        } else {
            let m01 = mid(v[0], v[1]);
            let m02 = mid(v[0], v[2]);
            let m03 = mid(v[0], v[3]);
            let m12 = mid(v[1], v[2]);
            let m13 = mid(v[1], v[3]);
            let m23 = mid(v[2], v[3]);
            // Four corner children plus the octahedron cut along (m02, m13).
            for child in [
                [v[0], m01, m02, m03],
                [v[1], m01, m12, m13],
                [v[2], m02, m12, m23],
                [v[3], m03, m13, m23],
                [m01, m02, m03, m13],
                [m01, m02, m12, m13],
                [m02, m03, m13, m23],
                [m02, m12, m13, m23],
            ] {
                push_oriented(&mut cells, dim, &child, &vertices);
            }
        }
    }
    let boundary_vertices = (0..vertices.len())
        .filter(|&v| on_box_boundary(&vertices[v], dim))
        .collect();
    let fine = MeshLevel {
        dimension: dim,
        vertices,
        cells,
        level: coarse.level + 1,
        boundary_vertices,
    };
    (fine, parents)
}

/// Mesh size as reported in iteration tables: the short-edge length
/// `diameter / sqrt(2)` in 2D and the cell diameter in 3D, so level 2 in 2D
/// reads sqrt(2)/8 and level 0 in 3D reads sqrt(3).
pub fn mesh_size(mesh: &MeshLevel) -> f64 {
    let d = mesh.max_diameter();
    if mesh.dimension == 2 {
        d / std::f64::consts::SQRT_2
    } else {
        d
    }
}

impl MeshHierarchy {
    /// Builds level 0 and `refinements` uniform refinements, validating each.
    pub fn build(dimension: usize, refinements: usize) -> Result<Self> {
        let mut levels = vec![build_initial_mesh(dimension)?];
        levels[0].validate()?;
        let mut parent_edges = Vec::new();
        for _ in 0..refinements {
            let (fine, parents) = refine_uniform(levels.last().unwrap());
            fine.validate()?;
            parent_edges.push(parents);
            levels.push(fine);
        }
        Ok(MeshHierarchy {
            levels,
            parent_edges,
        })
    }

    pub fn finest(&self) -> &MeshLevel {
        self.levels.last().unwrap()
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Provenance of the vertices of `fine_level` (>= 1).
    pub fn parents(&self, fine_level: usize) -> Result<&[ParentRef]> {
        if fine_level == 0 || fine_level >= self.levels.len() {
            return Err(Error::Hierarchy(format!(
                "no parent data for level {fine_level}"
            )));
        }
        Ok(&self.parent_edges[fine_level - 1])
    }

    /// Nestedness: vertex counts increase and every midpoint vertex sits at
    /// the midpoint of its parent edge.
    pub fn validate(&self) -> Result<()> {
        for l in 1..self.levels.len() {
            let (coarse, fine) = (&self.levels[l - 1], &self.levels[l]);
            if fine.num_vertices() <= coarse.num_vertices() {
                return Err(Error::Hierarchy(format!(
                    "vertex count not increasing at level {l}"
                )));
            }
            for (v, parent) in self.parent_edges[l - 1].iter().enumerate() {
                match *parent {
                    ParentRef::Vertex(p) => {
                        if dist(&fine.vertices[v], &coarse.vertices[p]) > GEOM_TOL {
                            return Err(Error::Hierarchy(format!(
                                "vertex {v} moved between levels {} and {l}",
                                l - 1
                            )));
                        }
                    }
                    ParentRef::Edge(a, b) => {
                        let (pa, pb) = (coarse.vertices[a], coarse.vertices[b]);
                        let mid = [
                            0.5 * (pa[0] + pb[0]),
                            0.5 * (pa[1] + pb[1]),
                            0.5 * (pa[2] + pb[2]),
                        ];
                        if dist(&fine.vertices[v], &mid) > GEOM_TOL {
                            return Err(Error::Hierarchy(format!(
                                "vertex {v} is not the midpoint of edge ({a},{b})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_square_mesh() {
        let mesh = build_initial_mesh(2).unwrap();
        assert_eq!(mesh.num_vertices(), 5);
        assert_eq!(mesh.num_cells(), 4);
        let mut total = 0.0;
        for i in 0..4 {
            let v = mesh.signed_volume(i);
            assert!((v - 0.25).abs() < 1e-15, "cell {i} area {v}");
            total += v;
        }
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(
            mesh.boundary_vertices,
            BTreeSet::from([0usize, 1, 2, 3])
        );
        mesh.validate().unwrap();
    }

    #[test]
    fn initial_cube_mesh() {
        let mesh = build_initial_mesh(3).unwrap();
        assert_eq!(mesh.num_vertices(), 8);
        assert_eq!(mesh.num_cells(), 6);
        for i in 0..6 {
            assert!((mesh.signed_volume(i) - 1.0 / 6.0).abs() < 1e-15);
        }
        mesh.validate().unwrap();
    }

    #[test]
    fn unsupported_dimension_rejected() {
        assert!(matches!(build_initial_mesh(4), Err(Error::Config(_))));
        assert!(matches!(build_initial_mesh(1), Err(Error::Config(_))));
    }

    #[test]
    fn refine_square_counts() {
        let coarse = build_initial_mesh(2).unwrap();
        let (fine, parents) = refine_uniform(&coarse);
        assert_eq!(fine.num_cells(), 16);
        assert_eq!(fine.num_vertices(), 13);
        assert_eq!(parents.len(), 13);
        fine.validate().unwrap();
    }

    #[test]
    fn refine_cube_counts() {
        let coarse = build_initial_mesh(3).unwrap();
        let (fine, _) = refine_uniform(&coarse);
        assert_eq!(fine.num_cells(), 48);
        assert_eq!(fine.num_vertices(), 27);
        fine.validate().unwrap();
    }

    #[test]
    fn refinement_halves_diameter() {
        for dim in [2, 3] {
            let coarse = build_initial_mesh(dim).unwrap();
            let (fine, _) = refine_uniform(&coarse);
            assert!((fine.max_diameter() - 0.5 * coarse.max_diameter()).abs() < 1e-14);
        }
    }

    #[test]
    fn hierarchy_conforming_and_nested() {
        let hier = MeshHierarchy::build(2, 3).unwrap();
        hier.validate().unwrap();
        for level in &hier.levels {
            level.validate().unwrap();
        }
        let hier3 = MeshHierarchy::build(3, 2).unwrap();
        hier3.validate().unwrap();
        for level in &hier3.levels {
            level.validate().unwrap();
        }
    }

    #[test]
    fn reported_mesh_sizes() {
        let hier = MeshHierarchy::build(2, 2).unwrap();
        let h0 = mesh_size(&hier.levels[0]);
        let h2 = mesh_size(&hier.levels[2]);
        assert!((h0 - std::f64::consts::SQRT_2 / 2.0).abs() < 1e-14);
        assert!((h2 - std::f64::consts::SQRT_2 / 8.0).abs() < 1e-14);

        let cube = build_initial_mesh(3).unwrap();
        assert!((mesh_size(&cube) - 3.0f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn coarse_indices_persist() {
        let hier = MeshHierarchy::build(2, 2).unwrap();
        let parents = hier.parents(1).unwrap();
        for v in 0..hier.levels[0].num_vertices() {
            assert_eq!(parents[v], ParentRef::Vertex(v));
        }
        assert!(hier.parents(0).is_err());
        assert!(hier.parents(9).is_err());
    }
}
