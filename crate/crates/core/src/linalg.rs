//! Dense row-major matrices, activations and a finite-difference gradient checker.
//!
//! Every product here accumulates each output element over the inner dimension
//! in ascending index order starting from `0.0`. Two code paths that compute the
//! same element through these kernels therefore agree bit for bit, which the
//! serving cache relies on.

use rand::Rng;

use crate::error::{dim_err, Error, Result};

#[derive(Clone, Debug, PartialEq)]
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

    /// Builds a matrix from row-major values, rejecting wrong lengths and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(dim_err(
                "Matrix::from_vec",
                format!("{} values for a {rows}x{cols} matrix", data.len()),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite matrix entry at index {pos}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(dim_err("Matrix::from_rows", "ragged rows"));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    /// Uniform entries in `[-bound, bound]`.
    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
        Self { rows, cols, data }
    }

    /// Glorot/Xavier uniform initialization.
    pub fn xavier<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (rows + cols).max(1) as f64).sqrt();
        Self::uniform(rows, cols, bound, rng)
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(dim_err(
                "add",
                format!("{:?} + {:?}", self.shape(), other.shape()),
            ));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(dim_err("axpy", format!("{:?} += {:?}", self.shape(), other.shape())));
        }
        axpy(alpha, &other.data, &mut self.data);
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Appends one row.
    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.cols, "row width");
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

/// `out = x · wᵀ` for a single row `x` and a weight matrix stored `(out × in)`.
///
/// Accumulates in the same order as [`matmul_nt`], so a row computed here
/// equals the corresponding row of the batched product exactly.
pub fn row_times_transposed(x: &[f64], w_t: &Matrix, out: &mut [f64]) {
    debug_assert_eq!(x.len(), w_t.rows());
    debug_assert_eq!(out.len(), w_t.cols());
    out.iter_mut().for_each(|o| *o = 0.0);
    for (k, &xk) in x.iter().enumerate() {
        if xk != 0.0 {
            axpy(xk, w_t.row(k), out);
        }
    }
}

/// Standard product `a · b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(dim_err("matmul", format!("{:?} x {:?}", a.shape(), b.shape())));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let a_row = a.row(i);
        let o = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a_row.iter().enumerate() {
            if aik != 0.0 {
                axpy(aik, b.row(k), o);
            }
        }
    }
    Ok(out)
}

/// `a · bᵀ`, the layout used for weights stored `(out × in)`.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(dim_err("matmul_nt", format!("{:?} x {:?}ᵀ", a.shape(), b.shape())));
    }
    matmul(a, &b.transpose())
}

/// `a · bᵀ` as row dot products. Faster than [`matmul_nt`] when `b` has few
/// rows, but rounds differently, so serving paths keep using `matmul_nt`.
pub fn matmul_nt_dots(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(dim_err("matmul_nt_dots", format!("{:?} x {:?}ᵀ", a.shape(), b.shape())));
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let a_row = a.row(i);
        if a_row.iter().all(|&v| v == 0.0) {
            continue;
        }
        for (j, o) in out.data[i * b.rows..(i + 1) * b.rows].iter_mut().enumerate() {
            *o = dot(a_row, b.row(j));
        }
    }
    Ok(out)
}

/// `aᵀ · b`, accumulated over rows of `a` and `b` in ascending order.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(dim_err("matmul_tn", format!("{:?}ᵀ x {:?}", a.shape(), b.shape())));
    }
    let mut out = Matrix::zeros(a.cols, b.cols);
    for i in 0..a.rows {
        let b_row = b.row(i);
        for (j, &aij) in a.row(i).iter().enumerate() {
            if aij != 0.0 {
                axpy(aij, b_row, &mut out.data[j * b.cols..(j + 1) * b.cols]);
            }
        }
    }
    Ok(out)
}

#[inline]
pub fn relu_scalar(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu(x: &Matrix) -> Matrix {
    x.map(relu_scalar)
}

pub fn sigmoid(x: &Matrix) -> Matrix {
    x.map(sigmoid_scalar)
}

/// Activation applied after a propagation layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => relu_scalar(x),
        }
    }

    /// Derivative given the pre-activation value. ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Compares an analytic gradient with central finite differences.
///
/// For every coordinate `k` of `theta` the loss is evaluated at `theta ± eps·e_k`
/// and `(f⁺ − f⁻) / 2eps` is compared with `analytic[k]`. The relative error uses
/// the denominator `max(|analytic|, |numeric|, 1e-8)`. `theta` is restored before
/// returning.
pub fn max_relative_error<F>(theta: &mut [f64], analytic: &[f64], eps: f64, mut loss: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if analytic.len() != theta.len() {
        return Err(dim_err(
            "grad_check",
            format!("{} gradient entries for {} parameters", analytic.len(), theta.len()),
        ));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {eps}")));
    }
    let mut worst = 0.0_f64;
    for k in 0..theta.len() {
        let orig = theta[k];
        theta[k] = orig + eps;
        let plus = loss(theta);
        theta[k] = orig - eps;
        let minus = loss(theta);
        theta[k] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFiniteProbe { index: k });
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let denom = analytic[k].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[k] - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = m(&[&[5.0], &[6.0]]);
        assert_eq!(matmul(&a, &b).unwrap(), m(&[&[17.0], &[39.0]]));
        assert_eq!(matmul(&Matrix::identity(2), &a).unwrap(), a);
        assert_eq!(matmul(&Matrix::zeros(2, 2), &a).unwrap(), Matrix::zeros(2, 2));
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(matmul(&a, &a), Err(Error::DimensionMismatch { .. })));
        assert!(matmul_tn(&a, &Matrix::zeros(3, 1)).is_err());
        assert!(matmul_nt(&a, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn from_vec_rejects_bad_input() {
        assert!(Matrix::from_vec(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = m(&[&[1.0, -2.0, 0.5], &[3.0, 4.0, -1.0]]);
        let b = m(&[&[0.0, 1.0, 2.0], &[-1.0, 0.5, 3.0]]);
        assert_eq!(matmul_nt(&a, &b).unwrap(), matmul(&a, &b.transpose()).unwrap());
        assert_eq!(matmul_tn(&a, &b).unwrap(), matmul(&a.transpose(), &b).unwrap());
        let mut row = vec![0.0; 2];
        row_times_transposed(a.row(1), &b.transpose(), &mut row);
        assert_eq!(row, matmul_nt(&a, &b).unwrap().row(1));
    }

    #[test]
    fn activations() {
        let x = m(&[&[-1.0, 0.0, 2.0]]);
        assert_eq!(relu(&x).as_slice(), &[0.0, 0.0, 2.0]);
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        assert!((sigmoid_scalar(1.5) - 0.817_574_476_193_643_7).abs() < 1e-15);
    }

    #[test]
    fn grad_check_quadratic_and_constant() {
        let mut theta = vec![0.3, -1.2, 2.5, 0.0];
        let analytic: Vec<f64> = theta.iter().map(|t| 2.0 * t).collect();
        let err = max_relative_error(&mut theta, &analytic, 1e-5, |t| t.iter().map(|x| x * x).sum())
            .unwrap();
        assert!(err < 1e-8, "{err}");
        let err = max_relative_error(&mut theta, &[0.0; 4], 1e-5, |_| 3.0).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn grad_check_reports_non_finite_probe() {
        let mut theta = vec![1.0, 2.0];
        let err = max_relative_error(&mut theta, &[0.0, 0.0], 1e-5, |t| {
            if t[1] > 2.0 {
                f64::INFINITY
            } else {
                0.0
            }
        });
        assert!(matches!(err, Err(Error::NonFiniteProbe { index: 1 })));
        assert_eq!(theta, vec![1.0, 2.0]);
    }

    fn small_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-3.0f64..3.0, rows * cols)
            .prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
    }

    proptest! {
        #[test]
        fn matmul_is_associative(
            (a, b, c) in (1usize..5, 1usize..5, 1usize..5, 1usize..5).prop_flat_map(|(p, q, r, s)| {
                (small_matrix(p, q), small_matrix(q, r), small_matrix(r, s))
            })
        ) {
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            prop_assert!(left.max_abs_diff(&right) < 1e-9);
        }

        #[test]
        fn activations_are_monotone(x in -50.0f64..50.0, dx in 0.0f64..10.0) {
            prop_assert!(relu_scalar(x + dx) >= relu_scalar(x));
            prop_assert!(sigmoid_scalar(x + dx) >= sigmoid_scalar(x));
            let s = sigmoid_scalar(x);
            prop_assert!((0.0..=1.0).contains(&s));
            if x.abs() < 30.0 {
                prop_assert!(s > 0.0 && s < 1.0);
            }
        }
    }
}
