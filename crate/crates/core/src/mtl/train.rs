use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{Architecture, ModelInput, PixelClassifier};
use super::objective::Objective;
use super::{sigmoid, EPS, MtlError, Prediction};
use crate::imaging::{GrayImage, TargetSet};
use crate::laf::{aggregate_laf, binarize, laf_counts, LafCounts};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub architecture: Architecture,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Foreground is `t >= threshold`.
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            architecture: Architecture::LogisticFeatures,
            learning_rate: 0.05,
            momentum: 0.9,
            epochs: 30,
            batch_size: 8,
            seed: 7,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MtlError> {
        let bad = |m: String| Err(MtlError::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold must lie in (0, 1), got {}", self.threshold));
        }
        Ok(())
    }
}

/// One patch prepared for a given architecture, with its abduced targets.
#[derive(Clone, Debug)]
pub struct TrainingSample {
    pub input: ModelInput,
    pub targets: TargetSet,
}

impl TrainingSample {
    pub fn new(architecture: Architecture, img: &GrayImage, targets: TargetSet) -> Result<Self, MtlError> {
        if targets.target1.width() != img.width() || targets.target1.height() != img.height() {
            return Err(MtlError::Dimensions("targets do not match the image".into()));
        }
        let input = PixelClassifier { architecture, params: Vec::new() }.prepare(img);
        Ok(TrainingSample { input, targets })
    }
}

fn patch_loss_grad(model: &PixelClassifier, s: &TrainingSample, objective: &Objective) -> Result<(f64, Vec<f64>), MtlError> {
    let logits = model.logits(&s.input);
    let t = Prediction::from_logits(s.input.width, s.input.height, &logits)?;
    let (loss, dt) = objective.loss_and_dt(&t, &s.targets)?;
    let dz: Vec<f64> = logits
        .iter()
        .zip(&dt)
        .map(|(z, d)| {
            let p = sigmoid(*z);
            // Clipped probabilities do not move with the logit.
            if (EPS..=1.0 - EPS).contains(&p) {
                d * p * (1.0 - p)
            } else {
                0.0
            }
        })
        .collect();
    Ok((loss, model.backward(&s.input, &dz)))
}

/// Mean loss over `batch` and its gradient with respect to the weights.
pub fn gradient(model: &PixelClassifier, batch: &[TrainingSample], objective: &Objective) -> Result<(f64, Vec<f64>), MtlError> {
    objective.validate()?;
    model.validate()?;
    if batch.is_empty() {
        return Err(MtlError::Config("empty batch".into()));
    }
    let parts: Vec<(f64, Vec<f64>)> = batch.par_iter().map(|s| patch_loss_grad(model, s, objective)).collect::<Result<_, _>>()?;
    let n = batch.len() as f64;
    let mut grad = vec![0.0; model.params.len()];
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v;
        }
    }
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

/// Mean objective over `samples`.
pub fn evaluate_objective(model: &PixelClassifier, samples: &[TrainingSample], objective: &Objective) -> Result<f64, MtlError> {
    objective.validate()?;
    let losses: Vec<f64> = samples
        .par_iter()
        .map(|s| objective.loss(&model.predict_input(&s.input), &s.targets))
        .collect::<Result<_, _>>()?;
    Ok(losses.iter().sum::<f64>() / samples.len().max(1) as f64)
}

/// Denominator floor of the relative error; below it the finite differences
/// are dominated by rounding.
const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Largest relative difference between the analytic gradient and central
/// differences with step 1e-5.
pub fn grad_check(model: &PixelClassifier, batch: &[TrainingSample], objective: &Objective) -> Result<f64, MtlError> {
    const H: f64 = 1e-5;
    let (_, analytic) = gradient(model, batch, objective)?;
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (i, a) in analytic.iter().enumerate() {
        let orig = probe.params[i];
        probe.params[i] = orig + H;
        let up = evaluate_objective(&probe, batch, objective)?;
        probe.params[i] = orig - H;
        let down = evaluate_objective(&probe, batch, objective)?;
        probe.params[i] = orig;
        let numeric = (up - down) / (2.0 * H);
        worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR));
    }
    Ok(worst)
}

/// Aggregated logical F1 of the model's binarized predictions.
fn logical_f1(model: &PixelClassifier, samples: &[TrainingSample], threshold: f64) -> Result<f64, MtlError> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let counts: Vec<LafCounts> = samples
        .par_iter()
        .map(|s| {
            let (tf, tb) = binarize(&model.predict_input(&s.input), threshold).expect("validated threshold");
            laf_counts(&tf, &tb, &s.targets.target1, &s.targets.target2).expect("targets validated at construction")
        })
        .collect();
    Ok(aggregate_laf(&counts).expect("non-empty").lf1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossTraceRow {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub lf1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// The epoch's model with the best validation Lf1.
    pub model: PixelClassifier,
    pub best_epoch: usize,
    pub final_model: PixelClassifier,
    pub trace: Vec<LossTraceRow>,
}

/// Minibatch SGD with momentum. Epoch 0 in the trace is the initial model.
pub fn train(
    train_set: &[TrainingSample],
    val_set: &[TrainingSample],
    objective: &Objective,
    config: &TrainConfig,
) -> Result<TrainOutcome, MtlError> {
    config.validate()?;
    objective.validate()?;
    if train_set.is_empty() {
        return Err(MtlError::Config("empty training split".into()));
    }
    let mut model = PixelClassifier::init(config.architecture, config.seed);
    let mut velocity = vec![0.0; model.params.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut trace = Vec::new();

    let record = |epoch: usize, model: &PixelClassifier, trace: &mut Vec<LossTraceRow>| -> Result<f64, MtlError> {
        let loss = evaluate_objective(model, train_set, objective)?;
        if !loss.is_finite() {
            return Err(MtlError::NonFinite { epoch, step: 0 });
        }
        trace.push(LossTraceRow { epoch, split: "train".into(), loss, lf1: logical_f1(model, train_set, config.threshold)? });
        let val_lf1 = logical_f1(model, val_set, config.threshold)?;
        if !val_set.is_empty() {
            let loss = evaluate_objective(model, val_set, objective)?;
            trace.push(LossTraceRow { epoch, split: "val".into(), loss, lf1: val_lf1 });
        }
        Ok(val_lf1)
    };

    let mut best = (record(0, &model, &mut trace)?, 0usize, model.clone());
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<TrainingSample> = chunk.iter().map(|i| train_set[*i].clone()).collect();
            let (loss, grad) = gradient(&model, &batch, objective)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(MtlError::NonFinite { epoch, step });
            }
            for ((p, v), g) in model.params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = config.momentum * *v - config.learning_rate * g;
                *p += *v;
            }
        }
        let val_lf1 = record(epoch, &model, &mut trace)?;
        // With no validation split the last epoch wins.
        if val_set.is_empty() || val_lf1 > best.0 {
            best = (val_lf1, epoch, model.clone());
        }
    }
    Ok(TrainOutcome { model: best.2, best_epoch: best.1, final_model: model, trace })
}

pub fn write_loss_trace(trace: &[LossTraceRow], path: &Path) -> Result<(), MtlError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "epoch,split,loss,lf1")?;
    for r in trace {
        writeln!(out, "{},{},{:.8},{:.6}", r.epoch, r.split, r.loss, r.lf1)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{BaselineConfig, NoiseTransition};
    use crate::imaging::BinaryMask;
    use crate::mtl::{BaseLoss, LossKind, TargetRegime};
    use rand::Rng;

    fn random_sample(rng: &mut ChaCha8Rng, arch: Architecture, w: usize, h: usize) -> TrainingSample {
        let img = GrayImage::new(w, h, (0..w * h).map(|_| rng.random()).collect()).unwrap();
        let t1 = BinaryMask::from_bits(w, h, (0..w * h).map(|_| rng.random_bool(0.5)).collect()).unwrap();
        let t2 = t1.and(&BinaryMask::from_bits(w, h, (0..w * h).map(|_| rng.random_bool(0.5)).collect()).unwrap());
        TrainingSample::new(arch, &img, TargetSet::new(t1, t2, vec![0.5, 0.5]).unwrap()).unwrap()
    }

    fn joint(loss: LossKind) -> Objective {
        Objective::new(TargetRegime::Joint, loss, vec![0.4, 0.6]).unwrap()
    }

    #[test]
    fn logistic_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let kinds = [
            LossKind::Base(BaseLoss::Ace),
            LossKind::Base(BaseLoss::Mse),
            LossKind::Baseline(BaselineConfig::Forward { transition: NoiseTransition::new([[0.7, 0.3], [0.1, 0.9]]).unwrap() }),
            LossKind::Baseline(BaselineConfig::Backward { transition: NoiseTransition::new([[0.7, 0.3], [0.1, 0.9]]).unwrap() }),
            LossKind::Baseline(BaselineConfig::BootstrapSoft { beta: 0.95 }),
            LossKind::Baseline(BaselineConfig::Sce { alpha: 1.0, beta: 1.0, log_floor: -4.0 }),
        ];
        for kind in kinds {
            let batch: Vec<_> = (0..3).map(|_| random_sample(&mut rng, Architecture::LogisticFeatures, 9, 7)).collect();
            let model = PixelClassifier {
                architecture: Architecture::LogisticFeatures,
                params: (0..5).map(|_| rng.random_range(-2.0..2.0)).collect(),
            };
            let err = grad_check(&model, &batch, &joint(kind)).unwrap();
            assert!(err < 1e-4, "{kind:?}: {err}");
        }
    }

    #[test]
    fn conv_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch: Vec<_> = (0..2).map(|_| random_sample(&mut rng, Architecture::TinyConvNet, 6, 5)).collect();
        let mut model = PixelClassifier::init(Architecture::TinyConvNet, 3);
        // Nonzero biases keep ReLUs away from their kinks.
        for p in model.params.iter_mut() {
            *p += rng.random_range(-0.05..0.05);
        }
        let err = grad_check(&model, &batch, &joint(LossKind::Base(BaseLoss::Ace))).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn zero_gradient_at_mse_optimum() {
        // T1 all ones, T2 all zeros: the blend is the constant alpha, which the
        // bias alone represents.
        let a = 0.3;
        let img = GrayImage::filled(8, 8, 90);
        let t1 = BinaryMask::from_fn(8, 8, |_, _| true);
        let set = TargetSet::new(t1, BinaryMask::new(8, 8), vec![a, 1.0 - a]).unwrap();
        let s = TrainingSample::new(Architecture::LogisticFeatures, &img, set).unwrap();
        let model = PixelClassifier { architecture: Architecture::LogisticFeatures, params: vec![(a / (1.0 - a)).ln(), 0.0, 0.0, 0.0, 0.0] };
        let o = Objective::new(TargetRegime::Joint, LossKind::Base(BaseLoss::Mse), vec![a, 1.0 - a]).unwrap();
        let (_, g) = gradient(&model, &[s], &o).unwrap();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-8, "{norm}");
    }

    #[test]
    fn doubled_alphas_rejected_before_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_sample(&mut rng, Architecture::LogisticFeatures, 4, 4);
        let o = Objective { regime: TargetRegime::Joint, loss: LossKind::Base(BaseLoss::Ace), alphas: vec![0.8, 1.2] };
        let m = PixelClassifier::init(Architecture::LogisticFeatures, 0);
        assert!(matches!(gradient(&m, &[s], &o), Err(MtlError::Weights(_))));
    }

    #[test]
    fn training_is_deterministic_and_epoch_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<_> = (0..6).map(|_| random_sample(&mut rng, Architecture::LogisticFeatures, 8, 8)).collect();
        let o = joint(LossKind::Base(BaseLoss::Ace));
        let cfg = TrainConfig { epochs: 3, batch_size: 4, ..TrainConfig::default() };
        let a = train(&data[..4], &data[4..], &o, &cfg).unwrap();
        let b = train(&data[..4], &data[4..], &o, &cfg).unwrap();
        assert_eq!(a.final_model, b.final_model);
        assert_eq!(a.trace, b.trace);
        let none = train(&data[..4], &data[4..], &o, &TrainConfig { epochs: 0, ..cfg }).unwrap();
        assert_eq!(none.model, PixelClassifier::init(Architecture::LogisticFeatures, 7));
    }

    #[test]
    fn bad_config_is_rejected() {
        assert!(TrainConfig { learning_rate: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
    }
}
