//! Low-rank adapters: `W_eff = W + (alpha / rank) · B · A` with `B` zero-initialized.

use rand::Rng;

use crate::error::{dim_err, Error, Result};
use crate::linalg::{matmul, Matrix};

#[derive(Clone, Debug, PartialEq)]
pub struct LoraAdapter {
    /// `(rank × cols)`.
    pub a: Matrix,
    /// `(rows × rank)`.
    pub b: Matrix,
    pub rank: usize,
    pub alpha: f64,
}

impl LoraAdapter {
    /// Adapter for a `(rows × cols)` weight. `A` gets a Kaiming-style uniform
    /// init, `B` starts at zero so the adapted weight equals the frozen one.
    pub fn new<R: Rng + ?Sized>(rows: usize, cols: usize, rank: usize, alpha: f64, rng: &mut R) -> Result<Self> {
        if rank == 0 {
            return Err(Error::InvalidInput("LoRA rank must be at least 1".into()));
        }
        let bound = 1.0 / (cols.max(1) as f64).sqrt();
        Ok(Self {
            a: Matrix::uniform(rank, cols, bound, rng),
            b: Matrix::zeros(rows, rank),
            rank,
            alpha,
        })
    }

    #[inline]
    pub fn scale(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    pub fn num_params(&self) -> usize {
        self.a.len() + self.b.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.rows() != self.rank || self.b.cols() != self.rank {
            return Err(dim_err(
                "LoraAdapter",
                format!("rank {} with A {:?} and B {:?}", self.rank, self.a.shape(), self.b.shape()),
            ));
        }
        Ok(())
    }
}

/// `frozen + (alpha / rank) · b · a`. The frozen matrix is not modified.
pub fn lora_effective(frozen: &Matrix, adapter: &LoraAdapter) -> Result<Matrix> {
    adapter.validate()?;
    if (adapter.b.rows(), adapter.a.cols()) != frozen.shape() {
        return Err(dim_err(
            "lora_effective",
            format!(
                "frozen {:?} vs B·A {:?}",
                frozen.shape(),
                (adapter.b.rows(), adapter.a.cols())
            ),
        ));
    }
    let mut out = frozen.clone();
    out.axpy(adapter.scale(), &matmul(&adapter.b, &adapter.a)?)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn fresh_adapter_is_identity_update() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let frozen = Matrix::uniform(5, 3, 1.0, &mut rng);
        let adapter = LoraAdapter::new(5, 3, 2, 4.0, &mut rng).unwrap();
        assert_eq!(lora_effective(&frozen, &adapter).unwrap(), frozen);
    }

    #[test]
    fn zero_alpha_is_identity_update() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let frozen = Matrix::uniform(4, 4, 1.0, &mut rng);
        let mut adapter = LoraAdapter::new(4, 4, 2, 0.0, &mut rng).unwrap();
        adapter.b = Matrix::uniform(4, 2, 1.0, &mut rng);
        assert_eq!(lora_effective(&frozen, &adapter).unwrap(), frozen);
    }

    #[test]
    fn hand_computed_update() {
        let adapter = LoraAdapter {
            a: Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap(),
            b: Matrix::from_vec(2, 1, vec![1.0, 0.0]).unwrap(),
            rank: 1,
            alpha: 1.0,
        };
        let out = lora_effective(&Matrix::identity(2), &adapter).unwrap();
        assert_eq!(out.as_slice(), &[2.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let adapter = LoraAdapter::new(3, 3, 1, 1.0, &mut rng).unwrap();
        assert!(lora_effective(&Matrix::zeros(3, 4), &adapter).is_err());
        assert!(LoraAdapter::new(3, 3, 0, 1.0, &mut rng).is_err());
    }
}
