//! Legacy VTK snapshots, CSV statistics streams and sweep tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fem::NodalField;
use crate::mesh::MeshLevel;
use crate::stepper::{RunSummary, StepStats};

/// Legacy ASCII unstructured-grid snapshot with point scalars phi and mu.
pub fn write_snapshot(
    mesh: &MeshLevel,
    phi: &NodalField,
    mu: &NodalField,
    path: &Path,
) -> Result<()> {
    if phi.len() != mesh.num_vertices() || mu.len() != mesh.num_vertices() {
        return Err(Error::Assembly(
            "field lengths do not match the mesh".into(),
        ));
    }
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str("chsolver snapshot\n");
    out.push_str("ASCII\n");
    out.push_str("DATASET UNSTRUCTURED_GRID\n");
    let n = mesh.num_vertices();
    writeln!(out, "POINTS {n} double").unwrap();
    for v in &mesh.vertices {
        writeln!(out, "{:.15e} {:.15e} {:.15e}", v[0], v[1], v[2]).unwrap();
    }
    let m = mesh.num_cells();
    let nv = mesh.dimension + 1;
    writeln!(out, "CELLS {m} {}", m * (nv + 1)).unwrap();
    for cell in mesh.cells() {
        write!(out, "{nv}").unwrap();
        for &v in cell {
            write!(out, " {v}").unwrap();
        }
        out.push('\n');
    }
    let cell_type = if mesh.dimension == 2 { 5 } else { 10 };
    writeln!(out, "CELL_TYPES {m}").unwrap();
    for _ in 0..m {
        writeln!(out, "{cell_type}").unwrap();
    }
    writeln!(out, "POINT_DATA {n}").unwrap();
    for (name, field) in [("phi", phi), ("mu", mu)] {
        writeln!(out, "SCALARS {name} double 1").unwrap();
        out.push_str("LOOKUP_TABLE default\n");
        for v in &field.values {
            writeln!(out, "{v:.15e}").unwrap();
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// A snapshot read back from disk.
#[derive(Debug)]
pub struct Snapshot {
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    pub cell_types: Vec<u8>,
    pub scalars: Vec<(String, Vec<f64>)>,
}

/// Reads the legacy ASCII format emitted by [`write_snapshot`].
pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let text = fs::read_to_string(path)?;
    let mut tokens = text
        .lines()
        .skip_while(|l| l.starts_with('#') || l.trim().is_empty())
        .flat_map(|l| l.split_whitespace())
        .peekable();
    let parse_err = |what: &str| Error::Input(format!("snapshot parse error: {what}"));

    let mut points = Vec::new();
    let mut cells = Vec::new();
    let mut cell_types = Vec::new();
    let mut scalars = Vec::new();
    let mut n_points = 0usize;

    while let Some(tok) = tokens.next() {
        match tok {
            "POINTS" => {
                n_points = tokens
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| parse_err("POINTS count"))?;
                tokens.next(); // data type
                for _ in 0..n_points {
                    let mut p = [0.0; 3];
                    for coord in p.iter_mut() {
                        *coord = tokens
                            .next()
                            .and_then(|t| t.parse().ok())
                            .ok_or_else(|| parse_err("point coordinate"))?;
                    }
                    points.push(p);
                }
            }
            "CELLS" => {
                let m: usize = tokens
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| parse_err("CELLS count"))?;
                tokens.next(); // total entry count
                for _ in 0..m {
                    let nv: usize = tokens
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| parse_err("cell size"))?;
                    let mut cell = Vec::with_capacity(nv);
                    for _ in 0..nv {
                        cell.push(
                            tokens
                                .next()
                                .and_then(|t| t.parse().ok())
                                .ok_or_else(|| parse_err("cell vertex"))?,
                        );
                    }
                    cells.push(cell);
                }
            }
            "CELL_TYPES" => {
                let m: usize = tokens
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| parse_err("CELL_TYPES count"))?;
                for _ in 0..m {
                    cell_types.push(
                        tokens
                            .next()
                            .and_then(|t| t.parse().ok())
                            .ok_or_else(|| parse_err("cell type"))?,
                    );
                }
            }
            "POINT_DATA" => {
                let count: usize = tokens
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| parse_err("POINT_DATA count"))?;
                if count != n_points {
                    return Err(parse_err("POINT_DATA count mismatch"));
                }
            }
            "SCALARS" => {
                let name = tokens
                    .next()
                    .ok_or_else(|| parse_err("scalar name"))?
                    .to_string();
                tokens.next(); // data type
                tokens.next(); // component count
                let lookup = tokens.next().ok_or_else(|| parse_err("LOOKUP_TABLE"))?;
                if lookup != "LOOKUP_TABLE" {
                    return Err(parse_err("expected LOOKUP_TABLE"));
                }
                tokens.next(); // table name
                let mut values = Vec::with_capacity(n_points);
                for _ in 0..n_points {
                    values.push(
                        tokens
                            .next()
                            .and_then(|t| t.parse().ok())
                            .ok_or_else(|| parse_err("scalar value"))?,
                    );
                }
                scalars.push((name, values));
            }
            "ASCII" | "DATASET" | "UNSTRUCTURED_GRID" => {}
            _ => {}
        }
    }
    Ok(Snapshot {
        points,
        cells,
        cell_types,
        scalars,
    })
}

/// Per-step statistics stream. Columns:
/// step,time,newton_its,minres_its,energy,mass[,wall_seconds].
pub fn stats_csv(stats: &[StepStats], no_timing: bool) -> String {
    let mut out = String::new();
    if no_timing {
        out.push_str("step,time,newton_its,minres_its,energy,mass\n");
    } else {
        out.push_str("step,time,newton_its,minres_its,energy,mass,wall_seconds\n");
    }
    for s in stats {
        write!(
            out,
            "{},{:.10e},{},{},{:.12e},{:.12e}",
            s.step_index, s.time, s.newton_iterations, s.minres_total, s.energy_after, s.mass_after
        )
        .unwrap();
        if !no_timing {
            write!(out, ",{:.6}", s.wall_seconds).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_stats_csv(stats: &[StepStats], no_timing: bool, path: &Path) -> Result<()> {
    fs::write(path, stats_csv(stats, no_timing))?;
    Ok(())
}

/// One sweep row: the varied parameter plus iteration aggregates.
pub struct SweepRow {
    pub label: String,
    pub parameter: f64,
    pub summary: RunSummary,
}

/// Sweep summary table. Columns:
/// param,value,steps,max_minres,med_minres,avg_minres,avg_newton[,avg_wall_seconds].
pub fn sweep_table_csv(rows: &[SweepRow], no_timing: bool) -> String {
    let mut out = String::new();
    if no_timing {
        out.push_str("param,value,steps,max_minres,med_minres,avg_minres,avg_newton\n");
    } else {
        out.push_str(
            "param,value,steps,max_minres,med_minres,avg_minres,avg_newton,avg_wall_seconds\n",
        );
    }
    for row in rows {
        let s = &row.summary;
        write!(
            out,
            "{},{:.10e},{},{},{:.2},{:.2},{:.2}",
            row.label,
            row.parameter,
            s.steps,
            s.max_minres,
            s.median_minres,
            s.avg_minres,
            s.avg_newton
        )
        .unwrap();
        if !no_timing {
            write!(out, ",{:.6}", s.avg_wall_seconds).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_sweep_table(rows: &[SweepRow], no_timing: bool, path: &Path) -> Result<()> {
    fs::write(path, sweep_table_csv(rows, no_timing))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_initial_mesh;
    use crate::stepper::summarize;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn snapshot_census_2d() {
        let mesh = build_initial_mesh(2).unwrap();
        let phi = NodalField::constant(0, 5, 0.5);
        let mu = NodalField::constant(0, 5, -0.25);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.vtk");
        write_snapshot(&mesh, &phi, &mu, &path).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0\n"));
        let snap = read_snapshot(&path).unwrap();
        assert_eq!(snap.points.len(), 5);
        assert_eq!(snap.cells.len(), 4);
        assert!(snap.cell_types.iter().all(|&t| t == 5));
        assert_eq!(snap.scalars.len(), 2);
        assert_eq!(snap.scalars[0].0, "phi");
        assert_eq!(snap.scalars[1].0, "mu");
    }

    #[test]
    fn snapshot_census_3d() {
        let mesh = build_initial_mesh(3).unwrap();
        let phi = NodalField::constant(0, 8, 1.0);
        let mu = NodalField::constant(0, 8, 0.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap3.vtk");
        write_snapshot(&mesh, &phi, &mu, &path).unwrap();
        let snap = read_snapshot(&path).unwrap();
        assert_eq!(snap.points.len(), 8);
        assert_eq!(snap.cells.len(), 6);
        assert!(snap.cell_types.iter().all(|&t| t == 10));
    }

    #[test]
    fn snapshot_round_trip_values() {
        let mesh = build_initial_mesh(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let phi = NodalField {
            level: 0,
            values: (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let mu = NodalField {
            level: 0,
            values: (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roundtrip.vtk");
        write_snapshot(&mesh, &phi, &mu, &path).unwrap();
        let snap = read_snapshot(&path).unwrap();
        for (a, b) in snap.scalars[0].1.iter().zip(&phi.values) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        for (a, b) in snap.scalars[1].1.iter().zip(&mu.values) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    fn fake_stats(counts: &[usize]) -> Vec<StepStats> {
        counts
            .iter()
            .enumerate()
            .map(|(i, &c)| StepStats {
                step_index: i + 1,
                time: (i + 1) as f64 * 0.1,
                newton_iterations: 1,
                minres_per_newton: vec![c],
                minres_total: c,
                wall_seconds: 0.5,
                energy_after: 1.0,
                mass_after: 0.0,
                newton_converged: true,
                final_residual: 1e-9,
            })
            .collect()
    }

    #[test]
    fn sweep_aggregates() {
        // constant counts collapse to the same value everywhere
        let stats = fake_stats(&[7, 7, 7]);
        let s = summarize(&stats);
        assert_eq!(s.max_minres, 7);
        assert!((s.median_minres - 7.0).abs() < 1e-15);
        assert!((s.avg_minres - 7.0).abs() < 1e-15);

        // {20, 21, 23}: average 21.33 at two decimals, median 21
        let stats = fake_stats(&[20, 21, 23]);
        let s = summarize(&stats);
        assert!((s.median_minres - 21.0).abs() < 1e-15);
        let table = sweep_table_csv(
            &[SweepRow {
                label: "h".into(),
                parameter: 0.1,
                summary: s,
            }],
            true,
        );
        let row = table.lines().nth(1).unwrap();
        assert!(row.contains(",21.33,"), "{row}");
        assert!(row.contains(",21.00,"), "{row}");
    }

    #[test]
    fn timing_column_toggle() {
        let stats = fake_stats(&[5]);
        let with = stats_csv(&stats, false);
        let without = stats_csv(&stats, true);
        assert!(with.lines().next().unwrap().ends_with("wall_seconds"));
        assert!(without.lines().next().unwrap().ends_with("mass"));
        assert!(!without.contains("0.500000"));
    }
}
