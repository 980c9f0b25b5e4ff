//! Compressed sparse row storage for the reservoir weights.
//!
//! The recurrent matrix is a pure connectivity mask: no values are stored,
//! every present entry is implicitly 1. The input matrix carries real values.

use serde::{Deserialize, Serialize};

use crate::error::{LsmError, Result};

/// CSR connectivity mask with implicit unit weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseBinaryMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
}

/// CSR matrix with real values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseRealMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    values: Vec<f64>,
}

fn validate_structure(
    n_rows: usize,
    n_cols: usize,
    row_offsets: &[usize],
    col_indices: &[u32],
) -> Result<()> {
    if n_cols > u32::MAX as usize {
        return Err(LsmError::Dimension(format!("{n_cols} columns exceed index width")));
    }
    if row_offsets.len() != n_rows + 1 {
        return Err(LsmError::Dimension(format!(
            "row_offsets has length {}, expected {}",
            row_offsets.len(),
            n_rows + 1
        )));
    }
    if row_offsets[0] != 0 {
        return Err(LsmError::Dimension("row_offsets[0] must be 0".into()));
    }
    if row_offsets[n_rows] != col_indices.len() {
        return Err(LsmError::Dimension(format!(
            "row_offsets ends at {} but there are {} column indices",
            row_offsets[n_rows],
            col_indices.len()
        )));
    }
    for r in 0..n_rows {
        let (lo, hi) = (row_offsets[r], row_offsets[r + 1]);
        if lo > hi {
            return Err(LsmError::Dimension(format!("row_offsets decrease at row {r}")));
        }
        let row = &col_indices[lo..hi];
        for (k, &c) in row.iter().enumerate() {
            if c as usize >= n_cols {
                return Err(LsmError::Dimension(format!(
                    "column index {c} out of range in row {r}"
                )));
            }
            if row[..k].contains(&c) {
                return Err(LsmError::Dimension(format!(
                    "duplicate column index {c} in row {r}"
                )));
            }
        }
    }
    Ok(())
}

impl SparseBinaryMatrix {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<u32>,
    ) -> Result<Self> {
        validate_structure(n_rows, n_cols, &row_offsets, &col_indices)?;
        Ok(SparseBinaryMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.col_indices
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[u32] {
        &self.col_indices[self.row_offsets[r]..self.row_offsets[r + 1]]
    }

    /// `out[i] = Σ_{j ∈ row i} v[j]` over integer inputs. Additions only.
    pub fn gather_sum(&self, v: &[i32], out: &mut [i32]) {
        debug_assert_eq!(v.len(), self.n_cols);
        debug_assert_eq!(out.len(), self.n_rows);
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.row(r).iter().map(|&c| v[c as usize]).sum();
        }
    }

    /// Dense 0/1 expansion, row-major.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_rows * self.n_cols];
        for r in 0..self.n_rows {
            for &c in self.row(r) {
                d[r * self.n_cols + c as usize] = 1.0;
            }
        }
        d
    }
}

impl SparseRealMatrix {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<u32>,
        values: Vec<f64>,
    ) -> Result<Self> {
        validate_structure(n_rows, n_cols, &row_offsets, &col_indices)?;
        if values.len() != col_indices.len() {
            return Err(LsmError::Dimension(format!(
                "{} values for {} column indices",
                values.len(),
                col_indices.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v == 0.0) {
            return Err(LsmError::Dimension(format!(
                "stored value {v} must be finite and nonzero"
            )));
        }
        Ok(SparseRealMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let (lo, hi) = (self.row_offsets[r], self.row_offsets[r + 1]);
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    /// Dot product of row `r` with `x`, accumulated in stored column order.
    #[inline]
    pub fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        let (cols, vals) = self.row(r);
        let mut acc = 0.0;
        for (&c, &w) in cols.iter().zip(vals) {
            acc += w * x[c as usize];
        }
        acc
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_rows * self.n_cols];
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &w) in cols.iter().zip(vals) {
                d[r * self.n_cols + c as usize] = w;
            }
        }
        d
    }
}
