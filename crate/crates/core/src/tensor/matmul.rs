use rayon::prelude::*;

use crate::error::{shape_err, Result};

/// A stack of equally sized row-major matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixBatch {
    pub batch: usize,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl MatrixBatch {
    pub fn new(batch: usize, rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != batch * rows * cols {
            return Err(shape_err!(
                "{} values do not fill {batch} matrices of {rows}x{cols}",
                data.len()
            ));
        }
        Ok(Self {
            batch,
            rows,
            cols,
            data,
        })
    }

    pub fn zeros(batch: usize, rows: usize, cols: usize) -> Self {
        Self {
            batch,
            rows,
            cols,
            data: vec![0.0; batch * rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(1, n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn matrix(&self, i: usize) -> &[f32] {
        let n = self.rows * self.cols;
        &self.data[i * n..(i + 1) * n]
    }

    pub fn get(&self, i: usize, r: usize, c: usize) -> f32 {
        self.data[(i * self.rows + r) * self.cols + c]
    }

    /// Swaps rows and columns of every matrix.
    pub fn transpose(&self) -> MatrixBatch {
        let mut out = MatrixBatch::zeros(self.batch, self.cols, self.rows);
        for i in 0..self.batch {
            for r in 0..self.rows {
                for c in 0..self.cols {
                    out.data[(i * self.cols + c) * self.rows + r] = self.get(i, r, c);
                }
            }
        }
        out
    }
}

/// `out[i] = a[i] * b[i]` for every matrix in the batch.
///
/// Each output element is summed over the shared dimension in increasing
/// index order, starting from `0.0`.
pub fn matmul_batched(a: &MatrixBatch, b: &MatrixBatch) -> Result<MatrixBatch> {
    if a.batch != b.batch || a.cols != b.rows {
        return Err(shape_err!(
            "cannot multiply {}x({}x{}) by {}x({}x{})",
            a.batch,
            a.rows,
            a.cols,
            b.batch,
            b.rows,
            b.cols
        ));
    }
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let mut out = MatrixBatch::zeros(a.batch, m, n);
    if m * n == 0 {
        return Ok(out);
    }
    out.data
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(row_idx, out_row)| {
            let i = row_idx / m;
            let r = row_idx % m;
            let a_row = &a.matrix(i)[r * k..(r + 1) * k];
            let bm = b.matrix(i);
            for (kk, &av) in a_row.iter().enumerate() {
                let b_row = &bm[kk * n..(kk + 1) * n];
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += av * bv;
                }
            }
        });
    Ok(out)
}
