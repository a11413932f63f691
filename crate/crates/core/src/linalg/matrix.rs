use std::fmt;
use std::ops::Range;

use crate::error::{check_len, Error, Result};

/// Row-major real matrix with strictly positive dimensions and finite entries.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major entries, rejecting empty shapes and non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        check_len("matrix entries", rows * cols, data.len())?;
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: idx / cols,
                col: idx % cols,
                value: data[idx],
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diag(&vec![1.0; n])
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    /// Fills a matrix from `f(row, col)`. Panics if `f` yields a non-finite value.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let v = f(i, j);
                assert!(v.is_finite(), "non-finite entry at ({i}, {j})");
                data.push(v);
            }
        }
        Self { rows, cols, data }
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, col)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Self::from_vec_unchecked(self.cols, self.rows, out)
    }

    /// Copies the sub-block covering `rows` × `cols`.
    pub fn block(&self, rows: Range<usize>, cols: Range<usize>) -> Self {
        assert!(rows.end <= self.rows && cols.end <= self.cols);
        let (m, n) = (rows.len(), cols.len());
        let mut data = Vec::with_capacity(m * n);
        for i in rows {
            data.extend_from_slice(&self.row(i)[cols.clone()]);
        }
        Self::from_vec_unchecked(m, n, data)
    }

    /// Writes `block` into `self` with its top-left corner at `(row0, col0)`.
    pub fn set_block(&mut self, row0: usize, col0: usize, block: &DenseMatrix) {
        assert!(row0 + block.rows <= self.rows && col0 + block.cols <= self.cols);
        for i in 0..block.rows {
            let dst = &mut self.row_mut(row0 + i)[col0..col0 + block.cols];
            dst.copy_from_slice(block.row(i));
        }
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        check_len("matmul inner dimension", self.cols, rhs.rows)?;
        let mut out = vec![0.0; self.rows * rhs.cols];
        for i in 0..self.rows {
            let orow = &mut out[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in orow.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(Self::from_vec_unchecked(self.rows, rhs.cols, out))
    }

    pub fn sub(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        check_len("matrix rows", self.rows, rhs.rows)?;
        check_len("matrix cols", self.cols, rhs.cols)?;
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        Ok(Self::from_vec_unchecked(self.rows, self.cols, data))
    }

    pub fn add(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        check_len("matrix rows", self.rows, rhs.rows)?;
        check_len("matrix cols", self.cols, rhs.cols)?;
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        Ok(Self::from_vec_unchecked(self.rows, self.cols, data))
    }

    pub fn scaled(&self, factor: f64) -> DenseMatrix {
        let data = self.data.iter().map(|v| v * factor).collect();
        Self::from_vec_unchecked(self.rows, self.cols, data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            write!(f, "  ")?;
            for v in self.row(i).iter().take(8) {
                write!(f, "{v:>12.5e} ")?;
            }
            if self.cols > 8 {
                write!(f, "...")?;
            }
            writeln!(f)?;
        }
        if self.rows > 8 {
            writeln!(f, "  ...")?;
        }
        write!(f, "]")
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators so the loop vectorizes
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Exact dense product `A x`.
pub fn matvec_dense(a: &DenseMatrix, x: &[f64]) -> Result<Vec<f64>> {
    check_len("matvec input", a.cols(), x.len())?;
    Ok((0..a.rows()).map(|i| dot(a.row(i), x)).collect())
}

/// `Aᵀ y` without forming the transpose.
pub fn matvec_transpose(a: &DenseMatrix, y: &[f64]) -> Result<Vec<f64>> {
    check_len("transposed matvec input", a.rows(), y.len())?;
    let mut out = vec![0.0; a.cols()];
    for (i, &yi) in y.iter().enumerate() {
        if yi != 0.0 {
            axpy(yi, a.row(i), &mut out);
        }
    }
    Ok(out)
}

pub fn frobenius_norm(a: &DenseMatrix) -> f64 {
    norm2(a.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(matches!(
            DenseMatrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite { row: 0, col: 1, .. })
        ));
        assert!(DenseMatrix::new(0, 2, vec![]).is_err());
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn frobenius_of_small_cases() {
        assert_eq!(frobenius_norm(&DenseMatrix::zeros(3, 4)), 0.0);
        let a = DenseMatrix::new(1, 2, vec![3.0, 4.0]).unwrap();
        assert_eq!(frobenius_norm(&a), 5.0);
    }

    #[test]
    fn matvec_identity_and_zero() {
        let x = vec![1.5, -2.0, 3.25];
        assert_eq!(matvec_dense(&DenseMatrix::identity(3), &x).unwrap(), x);
        assert_eq!(
            matvec_dense(&DenseMatrix::zeros(2, 3), &x).unwrap(),
            vec![0.0, 0.0]
        );
        assert!(matvec_dense(&DenseMatrix::identity(2), &x).is_err());
    }

    #[test]
    fn block_and_set_block_round_trip() {
        let a = DenseMatrix::from_fn(5, 7, |i, j| (i * 7 + j) as f64);
        let b = a.block(1..4, 2..7);
        assert_eq!(b.shape(), (3, 5));
        assert_eq!(b.get(0, 0), a.get(1, 2));
        let mut c = DenseMatrix::zeros(5, 7);
        c.set_block(1, 2, &b);
        assert_eq!(c.get(3, 6), a.get(3, 6));
        assert_eq!(c.get(0, 0), 0.0);
    }
}
