//! Minimal dense column-major storage used throughout the crate.

/// Dense `nrows × ncols` real matrix stored column-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Matrix {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    /// Empty matrix with `nrows` rows and no columns.
    pub fn with_rows(nrows: usize) -> Self {
        Matrix {
            nrows,
            ncols: 0,
            data: Vec::new(),
        }
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(nrows * ncols);
        for j in 0..ncols {
            for i in 0..nrows {
                data.push(f(i, j));
            }
        }
        Matrix { nrows, ncols, data }
    }

    /// Builds a matrix from columns; panics if the columns are ragged.
    pub fn from_columns(nrows: usize, columns: &[Vec<f64>]) -> Self {
        let mut m = Matrix::with_rows(nrows);
        for c in columns {
            m.push_column(c);
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.nrows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.nrows + i] = v;
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.ncols).map(move |j| self.col(j))
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.ncols).map(|j| self.get(i, j)).collect()
    }

    pub fn push_column(&mut self, column: &[f64]) {
        assert_eq!(column.len(), self.nrows, "column length mismatch");
        self.data.extend_from_slice(column);
        self.ncols += 1;
    }

    pub fn hstack(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.nrows, other.nrows, "row count mismatch");
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Matrix {
            nrows: self.nrows,
            ncols: self.ncols + other.ncols,
            data,
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        Matrix::from_fn(rows.len(), self.ncols, |i, j| self.get(rows[i], j))
    }

    pub fn select_cols(&self, cols: &[usize]) -> Matrix {
        let mut m = Matrix::with_rows(self.nrows);
        for &j in cols {
            m.push_column(self.col(j));
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Boolean `nrows × ncols` matrix, column-major. `true` marks a missing cell.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Mask {
    nrows: usize,
    ncols: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Mask {
            nrows,
            ncols,
            data: vec![false; nrows * ncols],
        }
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(nrows * ncols);
        for j in 0..ncols {
            for i in 0..nrows {
                data.push(f(i, j));
            }
        }
        Mask { nrows, ncols, data }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[j * self.nrows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.data[j * self.nrows + i] = v;
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[bool] {
        &self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    /// Missingness pattern of unit `i`.
    pub fn row(&self, i: usize) -> Vec<bool> {
        (0..self.ncols).map(|j| self.get(i, j)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Mask {
        Mask::from_fn(rows.len(), self.ncols, |i, j| self.get(rows[i], j))
    }

    pub fn select_cols(&self, cols: &[usize]) -> Mask {
        Mask::from_fn(self.nrows, cols.len(), |i, j| self.get(i, cols[j]))
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&b| b)
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Sample variance with the `n - 1` divisor.
pub(crate) fn variance(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Text form of a pattern bit-vector, e.g. `01` for (obs, mis).
pub fn pattern_string(pattern: &[bool]) -> String {
    pattern.iter().map(|&b| if b { '1' } else { '0' }).collect()
}
