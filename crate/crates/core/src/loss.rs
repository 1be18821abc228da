//! Binary cross-entropy and the temperature-softened distillation objective.

use crate::error::{Error, Result};
use crate::linalg::sigmoid_scalar;

pub const PROB_CLAMP: f64 = 1e-7;

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

#[inline]
fn bce_term(p: f64, y: f64) -> f64 {
    let p = clamp_prob(p);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Mean `−[y ln p + (1−y) ln(1−p)]` with `p` clamped to `[1e-7, 1 − 1e-7]`.
pub fn bce_loss(scores: &[(f64, f64)]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let total: f64 = scores.iter().map(|&(p, y)| bce_term(p, y)).sum();
    Ok(total / scores.len() as f64)
}

/// `ln(1 + e^x)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `KL(Bern(σ(t)) ‖ Bern(σ(s)))` evaluated in logit space.
#[inline]
pub fn bernoulli_kl_logits(teacher: f64, student: f64) -> f64 {
    let p = sigmoid_scalar(teacher);
    p * (softplus(-student) - softplus(-teacher)) + (1.0 - p) * (softplus(student) - softplus(teacher))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistillParams {
    pub temperature: f64,
    pub lambda: f64,
}

impl Default for DistillParams {
    fn default() -> Self {
        Self { temperature: 2.0, lambda: 0.5 }
    }
}

impl DistillParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidInput(format!("temperature must be positive, got {}", self.temperature)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidInput(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        Ok(())
    }
}

/// `λ · BCE(σ(s), y) + (1−λ) · T² · mean KL(Bern(σ(t/T)) ‖ Bern(σ(s/T)))`.
pub fn distill_loss(student: &[f64], teacher: &[f64], labels: &[f64], params: DistillParams) -> Result<f64> {
    distill_loss_and_grad(student, teacher, labels, params).map(|(l, _)| l)
}

/// BCE on logits with the gradient with respect to each logit.
///
/// The gradient is `(p − y)/n` where the probability is inside the clamp
/// range and `0` where the clamp is active.
pub fn bce_logits_and_grad(logits: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>)> {
    if logits.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    if logits.len() != labels.len() {
        return Err(Error::InvalidInput(format!("{} logits for {} labels", logits.len(), labels.len())));
    }
    let n = logits.len() as f64;
    let mut total = 0.0;
    let grad = logits
        .iter()
        .zip(labels)
        .map(|(&s, &y)| {
            let p = sigmoid_scalar(s);
            total += bce_term(p, y);
            if (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
                (p - y) / n
            } else {
                0.0
            }
        })
        .collect();
    Ok((total / n, grad))
}

pub fn distill_loss_and_grad(
    student: &[f64],
    teacher: &[f64],
    labels: &[f64],
    params: DistillParams,
) -> Result<(f64, Vec<f64>)> {
    params.validate()?;
    if student.len() != teacher.len() {
        return Err(Error::InvalidInput(format!(
            "{} student logits for {} teacher logits",
            student.len(),
            teacher.len()
        )));
    }
    let (hard, hard_grad) = bce_logits_and_grad(student, labels)?;
    let t = params.temperature;
    let n = student.len() as f64;
    let soft: f64 = student.iter().zip(teacher).map(|(&s, &q)| bernoulli_kl_logits(q / t, s / t)).sum::<f64>() / n;
    let loss = params.lambda * hard + (1.0 - params.lambda) * t * t * soft;
    let grad = student
        .iter()
        .zip(teacher)
        .zip(hard_grad)
        .map(|((&s, &q), g)| {
            // d/ds of T²·KL(σ(q/T) ‖ σ(s/T)) is T·(σ(s/T) − σ(q/T)).
            params.lambda * g + (1.0 - params.lambda) * t * (sigmoid_scalar(s / t) - sigmoid_scalar(q / t)) / n
        })
        .collect();
    Ok((loss, grad))
}
