use serde::{Deserialize, Serialize};

use super::{ace_pixel, check_alphas, mse_pixel, order_free_sum, BaseLoss, MtlError, Prediction};
use crate::baselines::BaselineConfig;
use crate::imaging::{BinaryMask, TargetSet};

/// Which abduced targets the loss is measured against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetRegime {
    T1,
    T2,
    /// Weighted sum over both targets.
    Joint,
}

/// Per-target loss: a plain base loss or a noisy-label baseline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LossKind {
    Base(BaseLoss),
    Baseline(BaselineConfig),
}

impl LossKind {
    pub fn validate(&self) -> Result<(), MtlError> {
        if let LossKind::Baseline(cfg) = self {
            cfg.validate()?;
        }
        Ok(())
    }

    pub fn pixel(&self, t: f64, y: f64) -> Result<(f64, f64), MtlError> {
        Ok(match self {
            LossKind::Base(BaseLoss::Ace) => ace_pixel(t, y),
            LossKind::Base(BaseLoss::Mse) => mse_pixel(t, y),
            LossKind::Baseline(cfg) => cfg.pixel(t, y)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub regime: TargetRegime,
    pub loss: LossKind,
    /// Weights of (Target1, Target2) under the joint regime.
    pub alphas: Vec<f64>,
}

impl Objective {
    pub fn new(regime: TargetRegime, loss: LossKind, alphas: Vec<f64>) -> Result<Self, MtlError> {
        let o = Objective { regime, loss, alphas };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<(), MtlError> {
        self.loss.validate()?;
        if self.regime == TargetRegime::Joint {
            if self.alphas.len() != 2 {
                return Err(MtlError::Weights(format!("joint regime needs 2 weights, got {}", self.alphas.len())));
            }
            check_alphas(&self.alphas)?;
        }
        Ok(())
    }

    pub fn weighted_targets<'a>(&self, set: &'a TargetSet) -> Vec<(f64, &'a BinaryMask)> {
        match self.regime {
            TargetRegime::T1 => vec![(1.0, &set.target1)],
            TargetRegime::T2 => vec![(1.0, &set.target2)],
            TargetRegime::Joint => vec![(self.alphas[0], &set.target1), (self.alphas[1], &set.target2)],
        }
    }

    /// Loss of one patch and its derivative with respect to each probability.
    pub fn loss_and_dt(&self, t: &Prediction, set: &TargetSet) -> Result<(f64, Vec<f64>), MtlError> {
        let n = t.probs().len();
        if set.target1.width() != t.width() || set.target1.height() != t.height() {
            return Err(MtlError::Dimensions(format!(
                "prediction {}x{} vs targets {}x{}",
                t.width(),
                t.height(),
                set.target1.width(),
                set.target1.height()
            )));
        }
        let mut dt = vec![0.0; n];
        let mut terms = Vec::with_capacity(2);
        for (alpha, mask) in self.weighted_targets(set) {
            let mut sum = 0.0;
            for (k, (p, y)) in t.probs().iter().zip(mask.bits()).enumerate() {
                let (v, d) = self.loss.pixel(*p, *y as u8 as f64)?;
                sum += v;
                dt[k] += alpha * d / n as f64;
            }
            terms.push(alpha * (sum / n as f64));
        }
        Ok((order_free_sum(terms), dt))
    }

    pub fn loss(&self, t: &Prediction, set: &TargetSet) -> Result<f64, MtlError> {
        Ok(self.loss_and_dt(t, set)?.0)
    }
}
