//! Compressed-row sparse matrices and the Gauss-Seidel smoother.

use std::io::Write;

use crate::error::{Error, Result};

/// Compressed-row matrix. Column indices are sorted and unique within a row.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_offsets: Vec<usize>,
    pub column_indices: Vec<usize>,
    pub values: Vec<f64>,
}

/// Accumulates (row, col, value) triplets; duplicates are summed on build.
#[derive(Debug)]
pub struct TripletBuilder {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepDirection {
    Forward,
    Backward,
}

impl TripletBuilder {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        TripletBuilder {
            n_rows,
            n_cols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.entries.push((row, col, value));
    }

    pub fn build(mut self) -> SparseMatrix {
        // Stable sort keeps the accumulation order deterministic for equal keys.
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_counts = vec![0usize; self.n_rows + 1];
        let mut column_indices = Vec::with_capacity(self.entries.len());
        let mut values = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                column_indices.push(c);
                values.push(v);
                row_counts[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..self.n_rows {
            row_counts[r + 1] += row_counts[r];
        }
        SparseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_offsets: row_counts,
            column_indices,
            values,
        }
    }
}

impl SparseMatrix {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.column_indices[lo..hi], &self.values[lo..hi])
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            y[i] = acc;
        }
    }

    /// y += alpha * A x
    pub fn matvec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            y[i] += alpha * acc;
        }
    }

    /// y = A^T x
    pub fn transpose_matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_rows);
        assert_eq!(y.len(), self.n_cols);
        y.fill(0.0);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                y[c] += v * x[i];
            }
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut a = nalgebra::DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                a[(i, c)] = v;
            }
        }
        a
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_rows.min(self.n_cols)];
        for (i, di) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            if let Ok(k) = cols.binary_search(&i) {
                *di = vals[k];
            }
        }
        d
    }

    /// alpha * A + beta * B on possibly different sparsity patterns.
    pub fn linear_combination(alpha: f64, a: &SparseMatrix, beta: f64, b: &SparseMatrix) -> SparseMatrix {
        assert_eq!(a.n_rows, b.n_rows);
        assert_eq!(a.n_cols, b.n_cols);
        let mut builder = TripletBuilder::new(a.n_rows, a.n_cols);
        for i in 0..a.n_rows {
            let (cols, vals) = a.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                builder.push(i, c, alpha * v);
            }
            let (cols, vals) = b.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                builder.push(i, c, beta * v);
            }
        }
        builder.build()
    }

    /// max |A - A^T| relative to the largest entry magnitude.
    pub fn symmetry_error(&self) -> f64 {
        assert_eq!(self.n_rows, self.n_cols);
        let mut max_entry = 0.0f64;
        let mut max_diff = 0.0f64;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                max_entry = max_entry.max(v.abs());
                let (tcols, tvals) = self.row(c);
                let vt = match tcols.binary_search(&i) {
                    Ok(k) => tvals[k],
                    Err(_) => 0.0,
                };
                max_diff = max_diff.max((v - vt).abs());
            }
        }
        if max_entry == 0.0 {
            0.0
        } else {
            max_diff / max_entry
        }
    }

    /// MatrixMarket coordinate output for debugging.
    pub fn write_matrix_market<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:.16e}", i + 1, c + 1, v)?;
            }
        }
        Ok(())
    }
}

/// One lexicographic Gauss-Seidel sweep in place; exact fixed point iff Ax = b.
pub fn gauss_seidel_sweep(
    a: &SparseMatrix,
    x: &mut [f64],
    b: &[f64],
    direction: SweepDirection,
) -> Result<()> {
    assert_eq!(a.n_rows, a.n_cols);
    assert_eq!(x.len(), a.n_rows);
    assert_eq!(b.len(), a.n_rows);
    let update = |x: &mut [f64], i: usize| -> Result<()> {
        let (cols, vals) = a.row(i);
        let mut diag = 0.0;
        let mut acc = b[i];
        for (&c, &v) in cols.iter().zip(vals) {
            if c == i {
                diag = v;
            } else {
                acc -= v * x[c];
            }
        }
        if diag == 0.0 {
            return Err(Error::Smoother(format!("zero diagonal at row {i}")));
        }
        x[i] = acc / diag;
        Ok(())
    };
    match direction {
        SweepDirection::Forward => {
            for i in 0..a.n_rows {
                update(x, i)?;
            }
        }
        SweepDirection::Backward => {
            for i in (0..a.n_rows).rev() {
                update(x, i)?;
            }
        }
    }
    Ok(())
}
