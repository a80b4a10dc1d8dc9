use serde::{Deserialize, Serialize};

use super::model::{Gradients, ModelParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    HardOnly,
    Distill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    #[serde(default)]
    pub lr_drop_epochs: Vec<usize>,
    #[serde(default = "default_drop_factor")]
    pub lr_drop_factor: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_loss_mode")]
    pub loss_mode: LossMode,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub t_squared_scaling: bool,
    /// Compute each example's teacher targets once per run instead of once
    /// per batch. The targets are identical either way (the teacher is frozen
    /// and examples are not augmented); only the runtime differs.
    #[serde(default)]
    pub cache_teacher_targets: bool,
}

fn default_drop_factor() -> f64 {
    10.0
}

fn default_loss_mode() -> LossMode {
    LossMode::HardOnly
}

fn default_temperature() -> f64 {
    1.0
}

impl Default for TrainConfig {
    /// Desk-scale defaults: 40 epochs with 10× drops at 50%, 75% and 90% of
    /// training, weight decay 1e-3.
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 64,
            base_lr: 0.1,
            lr_drop_epochs: vec![20, 30, 36],
            lr_drop_factor: 10.0,
            weight_decay: 0.001,
            seed: 1,
            loss_mode: LossMode::HardOnly,
            temperature: 1.0,
            alpha: 0.0,
            t_squared_scaling: false,
            cache_teacher_targets: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if !(self.base_lr > 0.0) || !self.base_lr.is_finite() {
            return Err(Error::config("base_lr", "must be positive"));
        }
        if !(self.lr_drop_factor > 0.0) || !self.lr_drop_factor.is_finite() {
            return Err(Error::config("lr_drop_factor", "must be positive"));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::config("weight_decay", "must be non-negative"));
        }
        if !(self.temperature >= 1.0) || !self.temperature.is_finite() {
            return Err(Error::config("temperature", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config("alpha", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// `base_lr / drop_factor^d`, where `d` counts drop epochs `<= epoch`.
    /// Epochs are zero-based.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let drops = self.lr_drop_epochs.iter().filter(|&&e| e <= epoch).count();
        self.base_lr / self.lr_drop_factor.powi(drops as i32)
    }
}

/// One SGD update with L2 weight decay: `w <- w - lr * (g + weight_decay * w)`.
pub fn sgd_step(params: &mut ModelParams, grads: &Gradients, epoch: usize, cfg: &TrainConfig) -> Result<()> {
    if params.layers.len() != grads.layers.len()
        || params
            .layers
            .iter()
            .zip(&grads.layers)
            .any(|(p, g)| p.weights.len() != g.weights.len() || p.bias.len() != g.bias.len())
    {
        return Err(Error::Shape("gradient buffers do not match the model".into()));
    }
    let lr = cfg.learning_rate(epoch);
    let decay = cfg.weight_decay;
    for (w, &g) in params.flat_mut().zip(grads.flat()) {
        *w -= lr * (g + decay * *w);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Architecture, InputShape};

    #[test]
    fn step_schedule() {
        let cfg = TrainConfig {
            base_lr: 0.1,
            lr_drop_epochs: vec![30, 60, 90],
            lr_drop_factor: 10.0,
            ..TrainConfig::default()
        };
        assert!((cfg.learning_rate(45) - 0.01).abs() < 1e-15);
        assert_eq!(cfg.learning_rate(0), 0.1);
        assert!((cfg.learning_rate(29) - 0.1).abs() < 1e-15);
        assert!((cfg.learning_rate(30) - 0.01).abs() < 1e-15);
        assert!((cfg.learning_rate(95) - 1e-4).abs() < 1e-15);
    }

    fn one_param_model(w: f64) -> ModelParams {
        let arch = Architecture { conv: vec![], hidden: vec![] };
        let mut p = ModelParams::zeros(&arch, InputShape { height: 1, width: 1, channels: 1 }, 2).unwrap();
        p.layers[0].weights = vec![w, w];
        p
    }

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let mut p = one_param_model(0.37);
        let before = p.clone();
        let g = Gradients::zeros_like(&p);
        let cfg = TrainConfig { weight_decay: 0.0, ..TrainConfig::default() };
        sgd_step(&mut p, &g, 3, &cfg).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn weight_decay_arithmetic() {
        let mut p = one_param_model(1.0);
        let g = Gradients::zeros_like(&p);
        let cfg = TrainConfig { base_lr: 0.1, lr_drop_epochs: vec![], weight_decay: 0.001, ..TrainConfig::default() };
        sgd_step(&mut p, &g, 0, &cfg).unwrap();
        assert!((p.layers[0].weights[0] - 0.9999).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { alpha: 1.5, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { temperature: 0.5, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..TrainConfig::default() }.validate().is_err());
    }
}
