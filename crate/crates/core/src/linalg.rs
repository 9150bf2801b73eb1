//! Dense row-major matrices and the multiply-accumulate counter.
//!
//! Every inner product in the crate goes through [`dot`] (directly or via
//! [`Matrix::matvec`]), and every elementwise fused multiply-add in the
//! recurrences reports itself through [`macs::record`]. This gives an
//! instrumented count that `count_macs` is checked against.

use rand::Rng;

pub mod macs {
    use std::cell::Cell;

    thread_local! {
        static COUNTER: Cell<u64> = const { Cell::new(0) };
    }

    /// Adds `n` multiply-accumulates to the calling thread's counter.
    #[inline]
    pub fn record(n: usize) {
        COUNTER.with(|c| c.set(c.get().wrapping_add(n as u64)));
    }

    /// Runs `f` and returns its result with the MACs it performed on this thread.
    pub fn measure<R>(f: impl FnOnce() -> R) -> (R, u64) {
        let before = COUNTER.with(Cell::get);
        let out = f();
        let after = COUNTER.with(Cell::get);
        (out, after.wrapping_sub(before))
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    macs::record(a.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
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

    /// `out = self · x`.
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(r), x);
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.matvec_into(x, &mut out);
        out
    }

    /// `out += selfᵀ · y`. Used by the backward passes.
    pub fn matvec_t_acc(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.row(r)) {
                *o += w * yr;
            }
        }
    }

    /// `self += a · bᵀ`.
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (r, &ar) in a.iter().enumerate() {
            if ar == 0.0 {
                continue;
            }
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (w, bc) in row.iter_mut().zip(b) {
                *w += ar * bc;
            }
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut out = Self::zeros(self.rows, cols.len());
        for r in 0..self.rows {
            for (j, &c) in cols.iter().enumerate() {
                out.data[r * cols.len() + j] = self.get(r, c);
            }
        }
        out
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self { rows: rows.len(), cols: self.cols, data }
    }

    /// Adds `src` into the listed columns of `self`.
    pub fn scatter_add_columns(&mut self, cols: &[usize], src: &Matrix) {
        debug_assert_eq!(src.rows, self.rows);
        debug_assert_eq!(src.cols, cols.len());
        for r in 0..self.rows {
            for (j, &c) in cols.iter().enumerate() {
                self.data[r * self.cols + c] += src.get(r, j);
            }
        }
    }

    /// Adds `src` into the listed rows of `self`.
    pub fn scatter_add_rows(&mut self, rows: &[usize], src: &Matrix) {
        debug_assert_eq!(src.cols, self.cols);
        debug_assert_eq!(src.rows, rows.len());
        for (i, &r) in rows.iter().enumerate() {
            for c in 0..self.cols {
                self.data[r * self.cols + c] += src.get(i, c);
            }
        }
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Euclidean norm of `a - b`.
pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn l2_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_counts_rows_times_cols() {
        let m = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let (y, n) = macs::measure(|| m.matvec(&[1.0, 0.0, -1.0]));
        assert_eq!(y, vec![-2.0, -2.0]);
        assert_eq!(n, 6);
    }

    #[test]
    fn transpose_accumulate_matches_explicit() {
        let m = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut out = vec![1.0; 3];
        m.matvec_t_acc(&[1.0, 2.0], &mut out);
        assert_eq!(out, vec![10.0, 13.0, 16.0]);
    }

    #[test]
    fn softplus_and_sigmoid_closed_forms() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((softplus(50.0) - 50.0).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0);
    }
}
