//! Concatenation fusion `z = [h_u | e_u | h_i | e_i]` and the MLP scoring head.

use crate::error::{dim_err, Result};
use crate::linalg::{dot, sigmoid_scalar, Activation, Matrix};

/// Fused user-item representation with a fixed `[h_u | e_u | h_i | e_i]` layout.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedRepresentation {
    values: Vec<f64>,
    d_g: usize,
    d_s: usize,
}

impl FusedRepresentation {
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Splits back into `(h_u, e_u, h_i, e_i)`.
    pub fn parts(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let (hu, rest) = self.values.split_at(self.d_g);
        let (eu, rest) = rest.split_at(self.d_s);
        let (hi, ei) = rest.split_at(self.d_g);
        (hu, eu, hi, ei)
    }
}

/// Concatenates the four parts; absent semantic vectors become zeros.
pub fn fuse(
    h_u: &[f64],
    e_u: Option<&[f64]>,
    h_i: &[f64],
    e_i: Option<&[f64]>,
    d_s: usize,
) -> Result<FusedRepresentation> {
    let d_g = h_u.len();
    if h_i.len() != d_g {
        return Err(dim_err("fuse", format!("h_u has {d_g} entries, h_i has {}", h_i.len())));
    }
    for (name, e) in [("e_u", e_u), ("e_i", e_i)] {
        if let Some(e) = e {
            if e.len() != d_s {
                return Err(dim_err("fuse", format!("{name} has {} entries, expected {d_s}", e.len())));
            }
        }
    }
    let zeros = vec![0.0; d_s];
    let mut values = Vec::with_capacity(2 * (d_g + d_s));
    values.extend_from_slice(h_u);
    values.extend_from_slice(e_u.unwrap_or(&zeros));
    values.extend_from_slice(h_i);
    values.extend_from_slice(e_i.unwrap_or(&zeros));
    Ok(FusedRepresentation { values, d_g, d_s })
}

/// Two-layer scoring head: `out · act(hidden · z + hidden_bias) + out_bias`.
///
/// `hidden` is stored `(d_h × input)` and `out` is a single `(1 × d_h)` row.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionHead {
    pub hidden: Matrix,
    pub hidden_bias: Vec<f64>,
    pub out: Matrix,
    pub out_bias: f64,
    pub hidden_activation: Activation,
}

impl PredictionHead {
    pub fn new<R: rand::Rng + ?Sized>(input: usize, d_h: usize, rng: &mut R) -> Self {
        Self {
            hidden: Matrix::xavier(d_h, input, rng),
            hidden_bias: vec![0.0; d_h],
            out: Matrix::xavier(1, d_h, rng),
            out_bias: 0.0,
            hidden_activation: Activation::Relu,
        }
    }

    pub fn zeros(input: usize, d_h: usize) -> Self {
        Self {
            hidden: Matrix::zeros(d_h, input),
            hidden_bias: vec![0.0; d_h],
            out: Matrix::zeros(1, d_h),
            out_bias: 0.0,
            hidden_activation: Activation::Relu,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden.rows()
    }

    pub fn num_params(&self) -> usize {
        self.hidden.len() + self.hidden_bias.len() + self.out.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        let d_h = self.hidden.rows();
        if self.hidden_bias.len() != d_h || self.out.shape() != (1, d_h) {
            return Err(dim_err(
                "PredictionHead",
                format!(
                    "hidden {:?}, bias {}, out {:?}",
                    self.hidden.shape(),
                    self.hidden_bias.len(),
                    self.out.shape()
                ),
            ));
        }
        Ok(())
    }

    /// Hidden activations for one input, using `hidden` as given.
    pub fn hidden_activations(&self, hidden: &Matrix, z: &[f64]) -> Vec<f64> {
        (0..hidden.rows())
            .map(|j| self.hidden_activation.apply(dot(hidden.row(j), z) + self.hidden_bias[j]))
            .collect()
    }

    /// Pre-sigmoid score, used for ranking.
    pub fn score_logit(&self, z: &[f64]) -> Result<f64> {
        self.validate()?;
        if z.len() != self.input_dim() {
            return Err(dim_err(
                "score_logit",
                format!("input has {} entries, head expects {}", z.len(), self.input_dim()),
            ));
        }
        let a = self.hidden_activations(&self.hidden, z);
        Ok(dot(self.out.row(0), &a) + self.out_bias)
    }

    /// Interaction probability in `(0, 1)`.
    pub fn predict(&self, z: &[f64]) -> Result<f64> {
        self.score_logit(z).map(sigmoid_scalar)
    }
}

pub fn predict(z: &FusedRepresentation, head: &PredictionHead) -> Result<f64> {
    head.predict(z.as_slice())
}

pub fn score_logit(z: &FusedRepresentation, head: &PredictionHead) -> Result<f64> {
    head.score_logit(z.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fuse_examples() {
        let z = fuse(&[1.0, 2.0], Some(&[3.0, 4.0]), &[5.0, 6.0], Some(&[7.0, 8.0]), 2).unwrap();
        assert_eq!(z.as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let z = fuse(&[0.0; 2], Some(&[0.0; 2]), &[0.0; 2], Some(&[0.0; 2]), 2).unwrap();
        assert_eq!(z.as_slice(), &[0.0; 8]);
        let z = fuse(&[1.0, 2.0], None, &[5.0, 6.0], Some(&[7.0, 8.0]), 2).unwrap();
        assert_eq!(z.as_slice(), &[1.0, 2.0, 0.0, 0.0, 5.0, 6.0, 7.0, 8.0]);
    }

    #[test]
    fn fuse_rejects_wrong_lengths() {
        assert!(fuse(&[1.0, 2.0], None, &[5.0], None, 2).is_err());
        assert!(fuse(&[1.0], Some(&[1.0]), &[5.0], None, 2).is_err());
    }

    #[test]
    fn zero_head_scores_half() {
        let head = PredictionHead::zeros(8, 4);
        let z = [1.0, -3.0, 0.5, 2.0, 0.0, 0.0, 9.0, 1.0];
        assert_eq!(head.predict(&z).unwrap(), 0.5);
        assert_eq!(head.score_logit(&z).unwrap(), 0.0);
    }

    #[test]
    fn linear_fixture() {
        let head = PredictionHead {
            hidden: Matrix::identity(2),
            hidden_bias: vec![0.0, 0.0],
            out: Matrix::from_vec(1, 2, vec![2.0, 1.0]).unwrap(),
            out_bias: 0.5,
            hidden_activation: Activation::Identity,
        };
        assert_eq!(head.score_logit(&[1.0, -1.0]).unwrap(), 1.5);
        assert!((head.predict(&[1.0, -1.0]).unwrap() - 0.817_57).abs() < 1e-5);
    }

    #[test]
    fn head_rejects_wrong_input() {
        let head = PredictionHead::zeros(8, 4);
        assert!(head.score_logit(&[0.0; 7]).is_err());
    }

    proptest! {
        #[test]
        fn fuse_round_trips(v in proptest::collection::vec(-5.0f64..5.0, 10)) {
            let z = fuse(&v[0..2], Some(&v[2..5]), &v[5..7], Some(&v[7..10]), 3).unwrap();
            let (hu, eu, hi, ei) = z.parts();
            prop_assert_eq!(hu, &v[0..2]);
            prop_assert_eq!(eu, &v[2..5]);
            prop_assert_eq!(hi, &v[5..7]);
            prop_assert_eq!(ei, &v[7..10]);
        }

        #[test]
        fn ranking_by_logit_equals_ranking_by_score(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let head = PredictionHead::new(6, 5, &mut rng);
            let zs: Vec<Vec<f64>> = (0..12).map(|_| (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
            let logits: Vec<f64> = zs.iter().map(|z| head.score_logit(z).unwrap()).collect();
            let probs: Vec<f64> = zs.iter().map(|z| head.predict(z).unwrap()).collect();
            for (l, p) in logits.iter().zip(&probs) {
                prop_assert!((sigmoid_scalar(*l) - p).abs() < 1e-12);
                prop_assert!(*p > 0.0 && *p < 1.0);
            }
            let mut by_logit: Vec<usize> = (0..12).collect();
            by_logit.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
            let mut by_prob: Vec<usize> = (0..12).collect();
            by_prob.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
            prop_assert_eq!(by_logit, by_prob);
        }
    }
}
