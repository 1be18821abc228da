//! Per-row symmetric INT8 weight quantization.

use crate::error::{dim_err, Result};
use crate::fusion::{FusedRepresentation, PredictionHead};
use crate::linalg::{sigmoid_scalar, Activation, Matrix};

pub const QMAX: f64 = 127.0;

/// `w[r][c] ≈ scales[r] * q[r][c]`, with `q ∈ [-127, 127]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedMatrix {
    rows: usize,
    cols: usize,
    q: Vec<i8>,
    scales: Vec<f64>,
}

impl QuantizedMatrix {
    pub fn from_parts(rows: usize, cols: usize, q: Vec<i8>, scales: Vec<f64>) -> Result<Self> {
        if q.len() != rows * cols || scales.len() != rows {
            return Err(dim_err("QuantizedMatrix", format!("{} codes, {} scales for {rows}x{cols}", q.len(), scales.len())));
        }
        if q.iter().any(|&v| v == i8::MIN) || scales.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(crate::Error::InvalidInput("quantized codes or scales out of range".into()));
        }
        Ok(Self { rows, cols, q, scales })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn codes(&self) -> &[i8] {
        &self.q
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn row_codes(&self, r: usize) -> &[i8] {
        &self.q[r * self.cols..(r + 1) * self.cols]
    }

    /// `scale_r · Σ_c q[r][c] · x[c]`.
    pub fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        let acc = self.row_codes(r).iter().zip(x).fold(0.0, |acc, (&q, &v)| acc + f64::from(q) * v);
        self.scales[r] * acc
    }

    /// Bytes used by codes plus one f32-equivalent scale per row.
    pub fn storage_bytes(&self) -> usize {
        self.q.len() + 4 * self.scales.len()
    }
}

/// Scale `max|w| / 127` per row (1 for an all-zero row); values rounded half away from zero.
pub fn quantize_per_row(w: &Matrix) -> QuantizedMatrix {
    let (rows, cols) = w.shape();
    let mut q = Vec::with_capacity(rows * cols);
    let mut scales = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = w.row(r);
        let max = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let s = if max > 0.0 { max / QMAX } else { 1.0 };
        scales.push(s);
        q.extend(row.iter().map(|&v| (v / s).round().clamp(-QMAX, QMAX) as i8));
    }
    QuantizedMatrix { rows, cols, q, scales }
}

pub fn dequantize(q: &QuantizedMatrix) -> Matrix {
    let mut data = Vec::with_capacity(q.rows * q.cols);
    for r in 0..q.rows {
        let s = q.scales[r];
        data.extend(q.row_codes(r).iter().map(|&v| s * f64::from(v)));
    }
    Matrix::from_vec(q.rows, q.cols, data).expect("finite by construction")
}

/// The scoring head with both weight matrices in INT8; biases stay in f64.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedHead {
    pub hidden: QuantizedMatrix,
    pub hidden_bias: Vec<f64>,
    pub out: QuantizedMatrix,
    pub out_bias: f64,
    pub hidden_activation: Activation,
}

impl QuantizedHead {
    pub fn from_head(head: &PredictionHead) -> Result<Self> {
        head.validate()?;
        Ok(Self {
            hidden: quantize_per_row(&head.hidden),
            hidden_bias: head.hidden_bias.clone(),
            out: quantize_per_row(&head.out),
            out_bias: head.out_bias,
            hidden_activation: head.hidden_activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.cols
    }

    pub fn dequantized(&self) -> PredictionHead {
        PredictionHead {
            hidden: dequantize(&self.hidden),
            hidden_bias: self.hidden_bias.clone(),
            out: dequantize(&self.out),
            out_bias: self.out_bias,
            hidden_activation: self.hidden_activation,
        }
    }

    fn check_input(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.input_dim() {
            return Err(dim_err("qscore", format!("input has {} entries, head expects {}", z.len(), self.input_dim())));
        }
        Ok(())
    }

    fn activations(&self, z: &[f64]) -> Vec<f64> {
        (0..self.hidden.rows)
            .map(|j| self.hidden_activation.apply(self.hidden.row_dot(j, z) + self.hidden_bias[j]))
            .collect()
    }

    pub fn score_logit(&self, z: &[f64]) -> Result<f64> {
        self.check_input(z)?;
        let a = self.activations(z);
        Ok(self.out.row_dot(0, &a) + self.out_bias)
    }

    /// Upper bound on `|logit_fp − logit_q|` for this input.
    ///
    /// Per-element rounding error is at most `s/2`; the hidden error passes
    /// through a 1-Lipschitz activation and the full-precision output row.
    pub fn logit_error_bound(&self, full: &PredictionHead, z: &[f64]) -> Result<f64> {
        self.check_input(z)?;
        let z_l1: f64 = z.iter().map(|v| v.abs()).sum();
        let a = self.activations(z);
        let a_l1: f64 = a.iter().map(|v| v.abs()).sum();
        let out_term = self.out.scales[0] / 2.0 * a_l1;
        let hidden_term: f64 = full
            .out
            .row(0)
            .iter()
            .zip(&self.hidden.scales)
            .map(|(w, s)| w.abs() * s / 2.0 * z_l1)
            .sum();
        Ok(out_term + hidden_term)
    }
}

/// Quantized interaction probability.
pub fn qscore(z: &FusedRepresentation, head: &QuantizedHead) -> Result<f64> {
    head.score_logit(z.as_slice()).map(sigmoid_scalar)
}

pub fn qscore_logit(z: &FusedRepresentation, head: &QuantizedHead) -> Result<f64> {
    head.score_logit(z.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{fuse, predict};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn known_rows() {
        let w = Matrix::from_rows(&[vec![1.27, -0.64, 0.0], vec![0.0, 0.0, 0.0], vec![-2.54, 1.0, 0.02]]).unwrap();
        let q = quantize_per_row(&w);
        assert_eq!(q.row_codes(0), &[127, -64, 0]);
        assert!((q.scales()[0] - 0.01).abs() < 1e-15);
        assert_eq!(q.row_codes(1), &[0, 0, 0]);
        assert_eq!(q.scales()[1], 1.0);
        assert_eq!(q.row_codes(2), &[-127, 50, 1]);
        assert_eq!(dequantize(&q).row(1), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn extrema_and_half_point() {
        let q = quantize_per_row(&Matrix::from_rows(&[vec![1.0, -1.0], vec![0.5, 1.0]]).unwrap());
        assert_eq!(q.row_codes(0), &[127, -127]);
        assert_eq!(dequantize(&q).row(0), &[1.0, -1.0]);
        assert_eq!(q.row_codes(1), &[64, 127]);
        let back = dequantize(&q).get(1, 0);
        assert!((back - 0.50394).abs() < 1e-5);
        assert!((back - 0.5).abs() <= q.scales()[1] / 2.0 + 1e-15);
    }

    #[test]
    fn exact_single_row_head() {
        let full = PredictionHead {
            hidden: Matrix::from_vec(1, 2, vec![1.0, -1.0]).unwrap(),
            hidden_bias: vec![0.0],
            out: Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
            out_bias: 0.0,
            hidden_activation: Activation::Identity,
        };
        let q = QuantizedHead::from_head(&full).unwrap();
        assert_eq!(q.score_logit(&[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(q.dequantized(), full);
    }

    #[test]
    fn zero_head() {
        let full = PredictionHead::zeros(4, 3);
        let q = QuantizedHead::from_head(&full).unwrap();
        let z = fuse(&[1.0], Some(&[0.5]), &[-2.0], Some(&[0.25]), 1).unwrap();
        assert_eq!(qscore(&z, &q).unwrap(), 0.5);
        assert_eq!(predict(&z, &full).unwrap(), 0.5);
    }

    #[test]
    fn rejects_wrong_input() {
        let q = QuantizedHead::from_head(&PredictionHead::zeros(4, 3)).unwrap();
        assert!(q.score_logit(&[0.0; 3]).is_err());
    }

    #[test]
    fn from_parts_validates() {
        assert!(QuantizedMatrix::from_parts(1, 2, vec![1, 2], vec![0.5]).is_ok());
        assert!(QuantizedMatrix::from_parts(1, 2, vec![1], vec![0.5]).is_err());
        assert!(QuantizedMatrix::from_parts(1, 1, vec![-128], vec![0.5]).is_err());
        assert!(QuantizedMatrix::from_parts(1, 1, vec![1], vec![0.0]).is_err());
    }

    fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |d| Matrix::from_vec(rows, cols, d).unwrap())
    }

    proptest! {
        #[test]
        fn error_within_half_scale(w in matrix(5, 7)) {
            let q = quantize_per_row(&w);
            let back = dequantize(&q);
            for r in 0..5 {
                let s = q.scales()[r];
                for c in 0..7 {
                    prop_assert!((w.get(r, c) - back.get(r, c)).abs() <= s / 2.0 + 1e-15);
                }
            }
        }

        #[test]
        fn requantizing_is_idempotent(w in matrix(4, 9)) {
            let once = dequantize(&quantize_per_row(&w));
            let twice = dequantize(&quantize_per_row(&once));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn logit_error_within_bound(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let full = PredictionHead::new(8, 6, &mut rng);
            let q = QuantizedHead::from_head(&full).unwrap();
            let z: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let err = (full.score_logit(&z).unwrap() - q.score_logit(&z).unwrap()).abs();
            prop_assert!(err <= q.logit_error_bound(&full, &z).unwrap() + 1e-12);
        }
    }
}
