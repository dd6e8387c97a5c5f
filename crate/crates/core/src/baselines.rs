//! Noisy-label baseline losses: forward and backward correction, hard and
//! soft bootstrapping, and symmetric cross entropy.

use serde::{Deserialize, Serialize};

use crate::imaging::BinaryMask;
use crate::mtl::{ace_pixel, Prediction, SoftMask, EPS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BaselineError {
    #[error("transition matrix is not row-stochastic: {0}")]
    NotStochastic(String),
    #[error("transition matrix is singular")]
    Singular,
    #[error("no pixels of proxy-clean class {0}")]
    EmptyClass(usize),
    #[error("invalid parameter: {0}")]
    Params(String),
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
}

/// 2x2 transition matrix; rows are the clean class, columns the noisy class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 2]; 2]", into = "[[f64; 2]; 2]")]
pub struct NoiseTransition {
    t: [[f64; 2]; 2],
}

impl TryFrom<[[f64; 2]; 2]> for NoiseTransition {
    type Error = BaselineError;
    fn try_from(t: [[f64; 2]; 2]) -> Result<Self, Self::Error> {
        NoiseTransition::new(t)
    }
}

impl From<NoiseTransition> for [[f64; 2]; 2] {
    fn from(n: NoiseTransition) -> Self {
        n.t
    }
}

impl NoiseTransition {
    pub const IDENTITY: NoiseTransition = NoiseTransition { t: [[1.0, 0.0], [0.0, 1.0]] };

    pub fn new(t: [[f64; 2]; 2]) -> Result<Self, BaselineError> {
        for row in &t {
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) || (row[0] + row[1] - 1.0).abs() > 1e-12 {
                return Err(BaselineError::NotStochastic(format!("{t:?}")));
            }
        }
        Ok(NoiseTransition { t })
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        self.t
    }

    pub fn inverse(&self) -> Result<[[f64; 2]; 2], BaselineError> {
        let [[a, b], [c, d]] = self.t;
        let det = a * d - b * c;
        if det.abs() < 1e-12 {
            return Err(BaselineError::Singular);
        }
        Ok([[d / det, -b / det], [-c / det, a / det]])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaselineConfig {
    Forward { transition: NoiseTransition },
    Backward { transition: NoiseTransition },
    BootstrapHard { beta: f64 },
    BootstrapSoft { beta: f64 },
    Sce { alpha: f64, beta: f64, log_floor: f64 },
}

pub const DEFAULT_BETA_HARD: f64 = 0.8;
pub const DEFAULT_BETA_SOFT: f64 = 0.95;
pub const DEFAULT_SCE: (f64, f64, f64) = (1.0, 1.0, -4.0);

impl BaselineConfig {
    pub fn validate(&self) -> Result<(), BaselineError> {
        match *self {
            BaselineConfig::Forward { .. } => Ok(()),
            BaselineConfig::Backward { transition } => transition.inverse().map(|_| ()),
            BaselineConfig::BootstrapHard { beta } | BaselineConfig::BootstrapSoft { beta } => {
                if (0.0..=1.0).contains(&beta) {
                    Ok(())
                } else {
                    Err(BaselineError::Params(format!("bootstrap beta {beta} outside [0, 1]")))
                }
            }
            BaselineConfig::Sce { alpha, beta, log_floor } => {
                if alpha >= 0.0 && beta >= 0.0 && log_floor < 0.0 {
                    Ok(())
                } else {
                    Err(BaselineError::Params(format!("sce needs alpha, beta >= 0 and log_floor < 0, got {alpha}, {beta}, {log_floor}")))
                }
            }
        }
    }

    /// Per-pixel loss and its derivative with respect to `t`.
    pub fn pixel(&self, t: f64, y: f64) -> Result<(f64, f64), BaselineError> {
        Ok(match *self {
            BaselineConfig::Forward { transition } => forward_pixel(t, y, &transition),
            BaselineConfig::Backward { transition } => backward_pixel(t, y, &transition.inverse()?),
            BaselineConfig::BootstrapHard { beta } => bootstrap_pixel(t, y, beta, true),
            BaselineConfig::BootstrapSoft { beta } => bootstrap_pixel(t, y, beta, false),
            BaselineConfig::Sce { alpha, beta, log_floor } => sce_pixel(t, y, alpha, beta, log_floor),
        })
    }

    pub fn loss(&self, t: &Prediction, target: &SoftMask) -> Result<f64, BaselineError> {
        self.validate()?;
        check_dims(t, target)?;
        let n = t.probs().len();
        let mut sum = 0.0;
        for (p, y) in t.probs().iter().zip(target.values()) {
            sum += self.pixel(*p, *y)?.0;
        }
        Ok(sum / n as f64)
    }
}

fn check_dims(t: &Prediction, target: &SoftMask) -> Result<(), BaselineError> {
    if t.width() != target.width() || t.height() != target.height() {
        return Err(BaselineError::Dimensions(format!(
            "prediction {}x{} vs target {}x{}",
            t.width(),
            t.height(),
            target.width(),
            target.height()
        )));
    }
    Ok(())
}

fn forward_pixel(t: f64, y: f64, tr: &NoiseTransition) -> (f64, f64) {
    let [[_, t01], [_, t11]] = tr.t;
    let raw = (1.0 - t) * t01 + t * t11;
    let p = raw.clamp(EPS, 1.0 - EPS);
    let (v, d) = ace_pixel(p, y);
    (v, if p == raw { d * (t11 - t01) } else { 0.0 })
}

fn backward_pixel(t: f64, y: f64, inv: &[[f64; 2]; 2]) -> (f64, f64) {
    // Losses for noisy label 0 and 1, corrected by T^-1 and selected by y.
    let (l0, l1) = (-(1.0 - t).ln(), -t.ln());
    let (d0, d1) = (1.0 / (1.0 - t), -1.0 / t);
    let row = |r: usize| (inv[r][0] * l0 + inv[r][1] * l1, inv[r][0] * d0 + inv[r][1] * d1);
    let (a, b) = (row(0), row(1));
    ((1.0 - y) * a.0 + y * b.0, (1.0 - y) * a.1 + y * b.1)
}

fn bootstrap_pixel(t: f64, y: f64, beta: f64, hard: bool) -> (f64, f64) {
    if hard {
        let q = if t >= 0.5 { 1.0 } else { 0.0 };
        ace_pixel(t, beta * y + (1.0 - beta) * q)
    } else {
        let target = beta * y + (1.0 - beta) * t;
        let (v, d) = ace_pixel(t, target);
        // The blended target moves with t.
        (v, d - (1.0 - beta) * (t.ln() - (1.0 - t).ln()))
    }
}

fn sce_pixel(t: f64, y: f64, alpha: f64, beta: f64, floor: f64) -> (f64, f64) {
    let log = |v: f64| if v <= 0.0 { floor } else { v.ln().max(floor) };
    let (ce, dce) = ace_pixel(t, y);
    let (ly, lny) = (log(y), log(1.0 - y));
    let rce = -(t * ly + (1.0 - t) * lny);
    (alpha * ce + beta * rce, alpha * dce - beta * (ly - lny))
}

pub fn forward_loss(t: &Prediction, target: &SoftMask, transition: NoiseTransition) -> Result<f64, BaselineError> {
    BaselineConfig::Forward { transition }.loss(t, target)
}

pub fn backward_loss(t: &Prediction, target: &SoftMask, transition: NoiseTransition) -> Result<f64, BaselineError> {
    BaselineConfig::Backward { transition }.loss(t, target)
}

pub fn bootstrap_loss(t: &Prediction, target: &SoftMask, beta: f64, hard: bool) -> Result<f64, BaselineError> {
    let cfg = if hard { BaselineConfig::BootstrapHard { beta } } else { BaselineConfig::BootstrapSoft { beta } };
    cfg.loss(t, target)
}

pub fn sce_loss(t: &Prediction, target: &SoftMask, alpha: f64, beta: f64, log_floor: f64) -> Result<f64, BaselineError> {
    BaselineConfig::Sce { alpha, beta, log_floor }.loss(t, target)
}

/// Empirical transition with target2 as proxy-clean and target1 as noisy.
pub fn estimate_transition(target1: &BinaryMask, target2: &BinaryMask) -> Result<NoiseTransition, BaselineError> {
    estimate_transition_many(std::iter::once((target1, target2)))
}

/// Pools the counts over many (target1, target2) pairs.
pub fn estimate_transition_many<'a>(
    pairs: impl IntoIterator<Item = (&'a BinaryMask, &'a BinaryMask)>,
) -> Result<NoiseTransition, BaselineError> {
    let mut counts = [[0u64; 2]; 2];
    for (noisy, clean) in pairs {
        if !noisy.same_shape(clean) {
            return Err(BaselineError::Dimensions("target1 and target2 differ in size".into()));
        }
        for (n, c) in noisy.bits().iter().zip(clean.bits()) {
            counts[*c as usize][*n as usize] += 1;
        }
    }
    let mut t = [[0.0; 2]; 2];
    for c in 0..2 {
        let total = counts[c][0] + counts[c][1];
        if total == 0 {
            return Err(BaselineError::EmptyClass(c));
        }
        t[c][1] = counts[c][1] as f64 / total as f64;
        t[c][0] = 1.0 - t[c][1];
    }
    NoiseTransition::new(t)
}
