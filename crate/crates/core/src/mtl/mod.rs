//! Losses, the multi-target joint loss and a small pixel classifier.

mod features;
mod model;
mod objective;
mod train;

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineError;
use crate::imaging::{BinaryMask, ImagingError};

pub use features::{extract_features, FeatureMap, N_FEATURES};
pub use model::{load_checkpoint, save_checkpoint, Architecture, ModelInput, PixelClassifier};
pub use objective::{LossKind, Objective, TargetRegime};
pub use train::{
    evaluate_objective, gradient, grad_check, train, write_loss_trace, LossTraceRow, TrainConfig, TrainOutcome,
    TrainingSample,
};

/// Probabilities are clipped to `[EPS, 1 - EPS]`.
pub const EPS: f64 = 1e-7;

#[derive(Debug, thiserror::Error)]
pub enum MtlError {
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("invalid weights: {0}")]
    Weights(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFinite { epoch: usize, step: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub fn clip(p: f64) -> f64 {
    p.clamp(EPS, 1.0 - EPS)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-pixel foreground probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    width: usize,
    height: usize,
    probs: Vec<f64>,
}

impl Prediction {
    /// Clips every value into `[EPS, 1 - EPS]`.
    pub fn new(width: usize, height: usize, probs: Vec<f64>) -> Result<Self, MtlError> {
        if probs.len() != width * height {
            return Err(MtlError::Dimensions(format!("{} values for {width}x{height}", probs.len())));
        }
        if probs.iter().any(|p| p.is_nan()) {
            return Err(MtlError::Weights("prediction holds NaN".into()));
        }
        Ok(Prediction { width, height, probs: probs.into_iter().map(clip).collect() })
    }

    pub fn from_logits(width: usize, height: usize, logits: &[f64]) -> Result<Self, MtlError> {
        Prediction::new(width, height, logits.iter().map(|z| sigmoid(*z)).collect())
    }

    pub fn filled(width: usize, height: usize, p: f64) -> Self {
        Prediction { width, height, probs: vec![clip(p); width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Per-pixel target values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftMask {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl SoftMask {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, MtlError> {
        if values.len() != width * height {
            return Err(MtlError::Dimensions(format!("{} values for {width}x{height}", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(MtlError::Weights(format!("target value {v} outside [0, 1]")));
        }
        Ok(SoftMask { width, height, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl From<&BinaryMask> for SoftMask {
    fn from(m: &BinaryMask) -> Self {
        SoftMask { width: m.width(), height: m.height(), values: m.to_f64() }
    }
}

fn check_dims(t: &Prediction, target: &SoftMask) -> Result<(), MtlError> {
    if t.width != target.width || t.height != target.height {
        return Err(MtlError::Dimensions(format!(
            "prediction {}x{} vs target {}x{}",
            t.width, t.height, target.width, target.height
        )));
    }
    Ok(())
}

/// Cross entropy of one pixel and its derivative with respect to `t`.
pub fn ace_pixel(t: f64, y: f64) -> (f64, f64) {
    (-(y * t.ln() + (1.0 - y) * (1.0 - t).ln()), -y / t + (1.0 - y) / (1.0 - t))
}

pub fn mse_pixel(t: f64, y: f64) -> (f64, f64) {
    ((t - y) * (t - y), 2.0 * (t - y))
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.sum::<f64>() / n as f64
}

/// Average cross entropy over pixels.
pub fn ace(t: &Prediction, target: &SoftMask) -> Result<f64, MtlError> {
    check_dims(t, target)?;
    Ok(mean(t.probs.iter().zip(&target.values).map(|(t, y)| ace_pixel(*t, *y).0), t.probs.len()))
}

/// Mean squared error over pixels.
pub fn mse(t: &Prediction, target: &SoftMask) -> Result<f64, MtlError> {
    check_dims(t, target)?;
    Ok(mean(t.probs.iter().zip(&target.values).map(|(t, y)| mse_pixel(*t, *y).0), t.probs.len()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseLoss {
    Ace,
    Mse,
}

impl BaseLoss {
    pub fn eval(self, t: &Prediction, target: &SoftMask) -> Result<f64, MtlError> {
        match self {
            BaseLoss::Ace => ace(t, target),
            BaseLoss::Mse => mse(t, target),
        }
    }
}

pub(crate) const ALPHA_TOLERANCE: f64 = 1e-9;

pub(crate) fn check_alphas(alphas: &[f64]) -> Result<(), MtlError> {
    let sum: f64 = alphas.iter().sum();
    if alphas.is_empty() || alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) || (sum - 1.0).abs() > ALPHA_TOLERANCE {
        return Err(MtlError::Weights(format!("alphas {alphas:?} must be non-negative and sum to 1")));
    }
    Ok(())
}

/// Targets of one instance with their weights.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiTarget {
    targets: Vec<SoftMask>,
    alphas: Vec<f64>,
}

impl MultiTarget {
    pub fn new(targets: Vec<SoftMask>, alphas: Vec<f64>) -> Result<Self, MtlError> {
        if targets.len() != alphas.len() {
            return Err(MtlError::Weights(format!("{} targets with {} weights", targets.len(), alphas.len())));
        }
        check_alphas(&alphas)?;
        let first = &targets[0];
        if targets.iter().any(|t| t.width != first.width || t.height != first.height) {
            return Err(MtlError::Dimensions("targets differ in size".into()));
        }
        Ok(MultiTarget { targets, alphas })
    }

    pub fn from_target_set(set: &crate::imaging::TargetSet) -> Result<Self, MtlError> {
        MultiTarget::new(vec![(&set.target1).into(), (&set.target2).into()], set.alphas.clone())
    }

    pub fn targets(&self) -> &[SoftMask] {
        &self.targets
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// The weighted target `sum_j alpha_j t_j`.
    pub fn blend(&self) -> SoftMask {
        let first = &self.targets[0];
        let values = (0..first.values.len())
            .map(|k| self.alphas.iter().zip(&self.targets).map(|(a, t)| a * t.values[k]).sum::<f64>().clamp(0.0, 1.0))
            .collect();
        SoftMask { width: first.width, height: first.height, values }
    }
}

/// Sum of `terms` that does not depend on their order.
pub(crate) fn order_free_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.into_iter().sum()
}

/// `sum_j alpha_j * base(t, target_j)`.
pub fn joint_loss(t: &Prediction, targets: &MultiTarget, base: BaseLoss) -> Result<f64, MtlError> {
    check_alphas(&targets.alphas)?;
    let terms = targets
        .alphas
        .iter()
        .zip(&targets.targets)
        .map(|(a, target)| Ok(a * base.eval(t, target)?))
        .collect::<Result<Vec<_>, MtlError>>()?;
    Ok(order_free_sum(terms))
}

/// Mean over pixels of the weighted variance of the targets.
pub fn variance_term(targets: &MultiTarget) -> f64 {
    let n = targets.targets[0].values.len();
    let per_pixel = (0..n).map(|k| {
        let m2: f64 = targets.alphas.iter().zip(&targets.targets).map(|(a, t)| a * t.values[k] * t.values[k]).sum();
        let m1: f64 = targets.alphas.iter().zip(&targets.targets).map(|(a, t)| a * t.values[k]).sum();
        (m2 - m1 * m1).max(0.0)
    });
    mean(per_pixel, n)
}

/// Absolute residual of the single-target form of the joint loss.
pub fn verify_theorem1(t: &Prediction, targets: &MultiTarget, base: BaseLoss) -> Result<f64, MtlError> {
    let joint = joint_loss(t, targets, base)?;
    let blended = targets.blend();
    Ok(match base {
        BaseLoss::Ace => (joint - ace(t, &blended)?).abs(),
        BaseLoss::Mse => (joint - mse(t, &blended)? - variance_term(targets)).abs(),
    })
}
