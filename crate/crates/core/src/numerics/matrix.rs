use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`. Column vectors are `n x 1` matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(
                "Matrix::from_vec",
                format!("{} values for a {rows}x{cols} matrix", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
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
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self * x` for a slice `x` of length `cols`, written into `out` (length `rows`).
    #[inline]
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = dot(row, x);
        }
    }

    /// `out += self * x`.
    #[inline]
    pub fn matvec_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += dot(row, x);
        }
    }

    /// `out += self^T * y` for `y` of length `rows`.
    #[inline]
    pub fn matvec_t_add(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (&yi, row) in y.iter().zip(self.data.chunks_exact(self.cols)) {
            if yi != 0.0 {
                for (o, &w) in out.iter_mut().zip(row) {
                    *o += w * yi;
                }
            }
        }
    }

    /// Rank-one accumulation `self += y x^T`.
    #[inline]
    pub fn add_outer(&mut self, y: &[f64], x: &[f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        let cols = self.cols;
        for (&yi, row) in y.iter().zip(self.data.chunks_exact_mut(cols)) {
            if yi != 0.0 {
                for (g, &xj) in row.iter_mut().zip(x) {
                    *g += yi * xj;
                }
            }
        }
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `W x + b` with full shape checking.
pub fn affine(w: &Matrix, x: &Matrix, b: &Matrix) -> Result<Matrix> {
    if x.cols != 1 || b.cols != 1 {
        return Err(Error::dim(
            "affine",
            format!("x is {:?} and b is {:?}; both must be column vectors", x.shape(), b.shape()),
        ));
    }
    if w.cols != x.rows {
        return Err(Error::dim(
            "affine",
            format!("W is {:?} but x has {} rows", w.shape(), x.rows),
        ));
    }
    if w.rows != b.rows {
        return Err(Error::dim(
            "affine",
            format!("W is {:?} but b has {} rows", w.shape(), b.rows),
        ));
    }
    let mut out = b.clone();
    w.matvec_add(&x.data, &mut out.data);
    if !out.is_finite() {
        return Err(Error::non_finite("affine output"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_identity() {
        let w = Matrix::identity(2);
        let x = Matrix::column(&[0.3, -0.7]);
        let b = Matrix::zeros(2, 1);
        assert_eq!(affine(&w, &x, &b).unwrap().as_slice(), &[0.3, -0.7]);
    }

    #[test]
    fn affine_hand_values() {
        let w = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let x = Matrix::column(&[1.0, 1.0]);
        let b = Matrix::column(&[1.0, 0.0]);
        assert_eq!(affine(&w, &x, &b).unwrap().as_slice(), &[4.0, 7.0]);
    }

    #[test]
    fn affine_zero_map() {
        let w = Matrix::zeros(1, 3);
        let x = Matrix::column(&[9.0, -2.0, 1e6]);
        let b = Matrix::column(&[5.0]);
        assert_eq!(affine(&w, &x, &b).unwrap().as_slice(), &[5.0]);
    }

    #[test]
    fn affine_rejects_mismatch() {
        let w = Matrix::zeros(2, 3);
        let x = Matrix::column(&[1.0, 2.0]);
        let b = Matrix::zeros(2, 1);
        let err = affine(&w, &x, &b).unwrap_err();
        assert!(matches!(err, Error::Dimension { op: "affine", .. }));
        assert!(err.to_string().contains("W is (2, 3)"));
    }

    #[test]
    fn transpose_and_outer_products() {
        let w = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut out = vec![0.0; 3];
        w.matvec_t_add(&[1.0, -1.0], &mut out);
        assert_eq!(out, vec![-3.0, -3.0, -3.0]);

        let mut g = Matrix::zeros(2, 3);
        g.add_outer(&[1.0, 2.0], &[1.0, 0.0, -1.0]);
        assert_eq!(g.as_slice(), &[1.0, 0.0, -1.0, 2.0, 0.0, -2.0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn affine_is_linear(
                w in prop::collection::vec(-10.0f64..10.0, 12),
                x in prop::collection::vec(-10.0f64..10.0, 4),
                y in prop::collection::vec(-10.0f64..10.0, 4),
                alpha in -5.0f64..5.0,
                beta in -5.0f64..5.0,
            ) {
                let w = Matrix::from_vec(3, 4, w).unwrap();
                let zero = Matrix::zeros(3, 1);
                let combo: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
                let lhs = affine(&w, &Matrix::column(&combo), &zero).unwrap();
                let fx = affine(&w, &Matrix::column(&x), &zero).unwrap();
                let fy = affine(&w, &Matrix::column(&y), &zero).unwrap();
                for i in 0..3 {
                    let rhs = alpha * fx.as_slice()[i] + beta * fy.as_slice()[i];
                    let scale = lhs.as_slice()[i].abs().max(rhs.abs()).max(1.0);
                    prop_assert!((lhs.as_slice()[i] - rhs).abs() <= 1e-12 * scale);
                }
            }
        }
    }
}
