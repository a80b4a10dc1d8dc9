//! Temperature softmax, the two cross-entropies used in distillation, and the
//! weighted total loss.

use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;

/// A probability vector over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftDistribution(Vec<f64>);

impl SoftDistribution {
    /// Wraps an externally produced distribution, checking that it is one.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidInput("empty distribution".into()));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidInput("probability outside [0, 1]".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!("probabilities sum to {sum}")));
        }
        Ok(Self(probs))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.0.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }
}

fn check_temperature(temperature: f64) -> Result<()> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidInput(format!("temperature must be positive, got {temperature}")));
    }
    Ok(())
}

fn check_logits(logits: &[f64]) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::InvalidInput("empty logit vector".into()));
    }
    if let Some(i) = logits.iter().position(|z| !z.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite logit at index {i}")));
    }
    Ok(())
}

/// Writes `softmax(logits / temperature)` into `out`. Inputs are assumed valid.
pub(crate) fn softmax_into(logits: &[f64], temperature: f64, out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = ((z - max) / temperature).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Writes `log softmax(logits / temperature)` into `out`.
pub(crate) fn log_softmax_into(logits: &[f64], temperature: f64, out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max) / temperature;
        sum += o.exp();
    }
    let log_sum = sum.ln();
    for o in out.iter_mut() {
        *o -= log_sum;
    }
}

/// Temperature-scaled softmax, `p_i = exp(z_i / T) / sum_j exp(z_j / T)`.
///
/// The maximum logit is subtracted before exponentiation so that small
/// temperatures cannot overflow.
pub fn softmax_t(logits: &[f64], temperature: f64) -> Result<SoftDistribution> {
    check_temperature(temperature)?;
    check_logits(logits)?;
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, temperature, &mut out);
    Ok(SoftDistribution(out))
}

/// Cross-entropy against a hard label at temperature 1.
pub fn cross_entropy_hard(logits: &[f64], label: usize) -> Result<f64> {
    check_logits(logits)?;
    if label >= logits.len() {
        return Err(Error::InvalidInput(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let mut log_p = vec![0.0; logits.len()];
    log_softmax_into(logits, 1.0, &mut log_p);
    Ok(-log_p[label])
}

/// Cross-entropy of the student's temperature softmax against soft targets.
///
/// The student logits are divided by the same temperature that produced the
/// teacher distribution.
pub fn cross_entropy_soft(
    student_logits: &[f64],
    teacher_probs: &SoftDistribution,
    temperature: f64,
) -> Result<f64> {
    check_temperature(temperature)?;
    check_logits(student_logits)?;
    if teacher_probs.len() != student_logits.len() {
        return Err(Error::Shape(format!(
            "teacher distribution has {} classes, student logits {}",
            teacher_probs.len(),
            student_logits.len()
        )));
    }
    let mut log_p = vec![0.0; student_logits.len()];
    log_softmax_into(student_logits, temperature, &mut log_p);
    Ok(-teacher_probs.as_slice().iter().zip(&log_p).map(|(q, lp)| q * lp).sum::<f64>())
}

/// `alpha * s * distill + (1 - alpha) * classification`, with `s = T^2` when
/// `t_squared_scaling` is set and 1 otherwise.
pub fn total_loss(
    alpha: f64,
    distillation: f64,
    classification: f64,
    temperature: f64,
    t_squared_scaling: bool,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(alpha * distill_scale(temperature, t_squared_scaling) * distillation
        + (1.0 - alpha) * classification)
}

pub(crate) fn distill_scale(temperature: f64, t_squared_scaling: bool) -> f64 {
    if t_squared_scaling {
        temperature * temperature
    } else {
        1.0
    }
}

/// Index of the largest logit; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
