//! Dense array types: a row-major matrix and the batch×channels×length window.

use crate::error::{Error, Result};

/// Row-major dense matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::shape(format!(
                    "ragged rows: expected {c} columns, found {}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Mat { rows: r, cols: c, data })
    }

    /// Identity matrix of size n.
    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// self (rows×cols) · x (cols) -> rows.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// selfᵀ · x, i.e. the row-vector product xᵀ·self: out[j] = Σ_i x[i]·self[i][j].
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(&mut out, xi, self.row(i));
            }
        }
        out
    }

    /// Rank-one accumulation: self[i][j] += a[i]·b[j].
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (i, &ai) in a.iter().enumerate() {
            if ai != 0.0 {
                axpy(self.row_mut(i), ai, b);
            }
        }
    }

    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// self (r×c) · other (c×n) -> r×n.
    pub fn matmul(&self, other: &Mat) -> Mat {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for (t, &a) in self.row(i).iter().enumerate() {
                if a != 0.0 {
                    axpy(out.row_mut(i), a, other.row(t));
                }
            }
        }
        out
    }

    /// self (r×c) · otherᵀ (n×c) -> r×n.
    pub fn matmul_nt(&self, other: &Mat) -> Mat {
        debug_assert_eq!(self.cols, other.cols);
        let mut out = Mat::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(a, other.row(j));
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// out += alpha·x.
#[inline]
pub fn axpy(out: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(out.len(), x.len());
    for (o, v) in out.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

pub fn add_slices(out: &mut [f64], x: &[f64]) {
    axpy(out, 1.0, x)
}

/// Real-valued tensor of shape batch × channels × length, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesWindow {
    pub batch: usize,
    pub channels: usize,
    pub len: usize,
    data: Vec<f64>,
}

impl SeriesWindow {
    pub fn zeros(batch: usize, channels: usize, len: usize) -> Self {
        SeriesWindow {
            batch,
            channels,
            len,
            data: vec![0.0; batch * channels * len],
        }
    }

    pub fn from_vec(batch: usize, channels: usize, len: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != batch * channels * len {
            return Err(Error::shape(format!(
                "window data length {} != {batch}×{channels}×{len}",
                data.len()
            )));
        }
        Ok(SeriesWindow {
            batch,
            channels,
            len,
            data,
        })
    }

    /// Builds element-wise from (batch, channel, time) indices.
    pub fn from_fn(
        batch: usize,
        channels: usize,
        len: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut w = SeriesWindow::zeros(batch, channels, len);
        for b in 0..batch {
            for c in 0..channels {
                for t in 0..len {
                    let v = f(b, c, t);
                    w.row_mut(b, c)[t] = v;
                }
            }
        }
        w
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.batch * self.channels
    }

    #[inline]
    pub fn row(&self, b: usize, c: usize) -> &[f64] {
        let i = (b * self.channels + c) * self.len;
        &self.data[i..i + self.len]
    }

    #[inline]
    pub fn row_mut(&mut self, b: usize, c: usize) -> &mut [f64] {
        let i = (b * self.channels + c) * self.len;
        &mut self.data[i..i + self.len]
    }

    /// Flat row access by combined index in [0, batch·channels).
    #[inline]
    pub fn flat_row(&self, i: usize) -> &[f64] {
        &self.data[i * self.len..(i + 1) * self.len]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Rebuilds a window of the same batch/channel layout from per-row outputs.
    pub fn from_rows(batch: usize, channels: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != batch * channels {
            return Err(Error::shape(format!(
                "expected {} rows, found {}",
                batch * channels,
                rows.len()
            )));
        }
        let len = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(batch * channels * len);
        for r in &rows {
            if r.len() != len {
                return Err(Error::shape("ragged window rows".to_string()));
            }
            data.extend_from_slice(r);
        }
        SeriesWindow::from_vec(batch, channels, len, data)
    }

    /// One batch element as an L×C matrix (time positions as rows).
    pub fn batch_mat(&self, b: usize) -> Mat {
        let mut m = Mat::zeros(self.len, self.channels);
        for c in 0..self.channels {
            let row = self.row(b, c);
            for t in 0..self.len {
                m.data[t * self.channels + c] = row[t];
            }
        }
        m
    }

    /// Writes an L×C matrix back into batch element `b`.
    pub fn set_batch_mat(&mut self, b: usize, m: &Mat) {
        debug_assert_eq!(m.rows, self.len);
        debug_assert_eq!(m.cols, self.channels);
        for c in 0..self.channels {
            let len = self.len;
            let row = self.row_mut(b, c);
            for t in 0..len {
                row[t] = m.data[t * m.cols + c];
            }
        }
    }

    pub fn same_shape(&self, other: &SeriesWindow) -> bool {
        self.batch == other.batch && self.channels == other.channels && self.len == other.len
    }

    pub fn shape_str(&self) -> String {
        format!("{}×{}×{}", self.batch, self.channels, self.len)
    }

    /// Elementwise sum of two windows of identical shape.
    pub fn add(&self, other: &SeriesWindow) -> Result<SeriesWindow> {
        if !self.same_shape(other) {
            return Err(Error::shape(format!(
                "cannot add {} to {}",
                other.shape_str(),
                self.shape_str()
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        SeriesWindow::from_vec(self.batch, self.channels, self.len, data)
    }
}
