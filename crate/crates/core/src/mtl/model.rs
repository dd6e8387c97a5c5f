use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{darkness, extract_features, N_FEATURES};
use super::{MtlError, Prediction};
use crate::imaging::GrayImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Logistic regression on the handcrafted pixel features.
    LogisticFeatures,
    /// conv3x3x8 -> ReLU -> conv3x3x16 -> ReLU -> conv3x3x1, same padding.
    TinyConvNet,
}

/// (input channels, output channels) of each 3x3 convolution.
const CONV_LAYERS: [(usize, usize); 3] = [(1, 8), (8, 16), (16, 1)];

fn conv_param_count() -> usize {
    CONV_LAYERS.iter().map(|(i, o)| o * i * 9 + o).sum()
}

impl Architecture {
    pub fn param_count(self) -> usize {
        match self {
            Architecture::LogisticFeatures => N_FEATURES,
            Architecture::TinyConvNet => conv_param_count(),
        }
    }
}

/// Model input planes, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput {
    pub width: usize,
    pub height: usize,
    pub channels: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelClassifier {
    pub architecture: Architecture,
    pub params: Vec<f64>,
}

impl PixelClassifier {
    /// Zero weights for the logistic model; seeded uniform(-r, r) with
    /// r = 1/sqrt(fan_in) for the convolution weights, zero biases.
    pub fn init(architecture: Architecture, seed: u64) -> Self {
        let params = match architecture {
            Architecture::LogisticFeatures => vec![0.0; N_FEATURES],
            Architecture::TinyConvNet => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut p = Vec::with_capacity(conv_param_count());
                for (cin, cout) in CONV_LAYERS {
                    let r = 1.0 / ((cin * 9) as f64).sqrt();
                    p.extend((0..cout * cin * 9).map(|_| rng.random_range(-r..r)));
                    p.extend(std::iter::repeat_n(0.0, cout));
                }
                p
            }
        };
        PixelClassifier { architecture, params }
    }

    pub fn validate(&self) -> Result<(), MtlError> {
        let want = self.architecture.param_count();
        if self.params.len() != want {
            return Err(MtlError::Weights(format!("{:?} needs {want} weights, got {}", self.architecture, self.params.len())));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(MtlError::Weights("non-finite weight".into()));
        }
        Ok(())
    }

    pub fn prepare(&self, img: &GrayImage) -> ModelInput {
        let (width, height) = (img.width(), img.height());
        let channels = match self.architecture {
            Architecture::LogisticFeatures => {
                let f = extract_features(img);
                (0..N_FEATURES).map(|c| f.data.iter().map(|v| v[c]).collect()).collect()
            }
            Architecture::TinyConvNet => vec![img.data().iter().map(|v| darkness(*v as f64)).collect()],
        };
        ModelInput { width, height, channels }
    }

    pub fn logits(&self, input: &ModelInput) -> Vec<f64> {
        match self.architecture {
            Architecture::LogisticFeatures => {
                let n = input.width * input.height;
                (0..n).map(|k| self.params.iter().zip(&input.channels).map(|(w, c)| w * c[k]).sum()).collect()
            }
            Architecture::TinyConvNet => conv_forward(&self.params, input).pop().expect("output layer").0,
        }
    }

    pub fn predict_input(&self, input: &ModelInput) -> Prediction {
        Prediction::from_logits(input.width, input.height, &self.logits(input)).expect("logit count matches input")
    }

    pub fn predict(&self, img: &GrayImage) -> Prediction {
        self.predict_input(&self.prepare(img))
    }

    /// Smallest distance of a hidden pre-activation from the ReLU kink, or
    /// `None` for a model without hidden units. Finite-difference checks are
    /// only meaningful when a step cannot cross a kink.
    pub fn relu_margin(&self, input: &ModelInput) -> Option<f64> {
        match self.architecture {
            Architecture::LogisticFeatures => None,
            Architecture::TinyConvNet => {
                let layers = conv_forward(&self.params, input);
                let hidden = &layers[..layers.len() - 1];
                Some(hidden.iter().flat_map(|(pre, _)| pre.iter()).fold(f64::INFINITY, |m, v| m.min(v.abs())))
            }
        }
    }

    /// Gradient with respect to the weights given dL/dlogit per pixel.
    pub fn backward(&self, input: &ModelInput, dlogits: &[f64]) -> Vec<f64> {
        match self.architecture {
            Architecture::LogisticFeatures => {
                input.channels.iter().map(|c| c.iter().zip(dlogits).map(|(x, g)| x * g).sum()).collect()
            }
            Architecture::TinyConvNet => conv_backward(&self.params, input, dlogits),
        }
    }
}

struct Plane<'a> {
    w: usize,
    h: usize,
    data: &'a [f64],
}

impl Plane<'_> {
    fn at(&self, x: isize, y: isize) -> f64 {
        if x < 0 || y < 0 || x >= self.w as isize || y >= self.h as isize {
            0.0
        } else {
            self.data[y as usize * self.w + x as usize]
        }
    }
}

/// Offsets of each layer's weights and biases in the flat parameter vector.
fn layer_offsets() -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut off = 0;
    for (cin, cout) in CONV_LAYERS {
        out.push((off, off + cout * cin * 9));
        off += cout * cin * 9 + cout;
    }
    out
}

/// Per layer: (pre-activation planes flattened, channel count). The last
/// layer's single plane holds the logits.
fn conv_forward(params: &[f64], input: &ModelInput) -> Vec<(Vec<f64>, usize)> {
    let (w, h) = (input.width, input.height);
    let n = w * h;
    let mut act: Vec<f64> = input.channels.concat();
    let mut layers = Vec::new();
    let last = CONV_LAYERS.len() - 1;
    for (l, ((cin, cout), (woff, boff))) in CONV_LAYERS.iter().zip(layer_offsets()).enumerate() {
        let mut pre = vec![0.0; cout * n];
        for o in 0..*cout {
            let bias = params[boff + o];
            for i in 0..*cin {
                let plane = Plane { w, h, data: &act[i * n..(i + 1) * n] };
                let k = &params[woff + (o * cin + i) * 9..woff + (o * cin + i) * 9 + 9];
                for y in 0..h {
                    for x in 0..w {
                        let mut acc = 0.0;
                        for ky in 0..3 {
                            for kx in 0..3 {
                                acc += k[ky * 3 + kx] * plane.at(x as isize + kx as isize - 1, y as isize + ky as isize - 1);
                            }
                        }
                        pre[o * n + y * w + x] += acc;
                    }
                }
            }
            for v in &mut pre[o * n..(o + 1) * n] {
                *v += bias;
            }
        }
        act = if l < last { pre.iter().map(|v| v.max(0.0)).collect() } else { Vec::new() };
        layers.push((pre, *cout));
    }
    layers
}

fn conv_backward(params: &[f64], input: &ModelInput, dlogits: &[f64]) -> Vec<f64> {
    let (w, h) = (input.width, input.height);
    let n = w * h;
    let layers = conv_forward(params, input);
    let offsets = layer_offsets();
    let mut grad = vec![0.0; params.len()];
    let mut g_out = dlogits.to_vec();
    for l in (0..CONV_LAYERS.len()).rev() {
        let (cin, cout) = CONV_LAYERS[l];
        let (woff, boff) = offsets[l];
        let act_in: Vec<f64> =
            if l == 0 { input.channels.concat() } else { layers[l - 1].0.iter().map(|v| v.max(0.0)).collect() };
        let mut g_in = vec![0.0; cin * n];
        for o in 0..cout {
            let go = &g_out[o * n..(o + 1) * n];
            grad[boff + o] = go.iter().sum();
            for i in 0..cin {
                let a = Plane { w, h, data: &act_in[i * n..(i + 1) * n] };
                let base = woff + (o * cin + i) * 9;
                for ky in 0..3 {
                    for kx in 0..3 {
                        let mut acc = 0.0;
                        let wk = params[base + ky * 3 + kx];
                        for y in 0..h {
                            for x in 0..w {
                                let g = go[y * w + x];
                                acc += g * a.at(x as isize + kx as isize - 1, y as isize + ky as isize - 1);
                                let (sx, sy) = (x as isize + kx as isize - 1, y as isize + ky as isize - 1);
                                if sx >= 0 && sy >= 0 && sx < w as isize && sy < h as isize {
                                    g_in[i * n + sy as usize * w + sx as usize] += wk * g;
                                }
                            }
                        }
                        grad[base + ky * 3 + kx] = acc;
                    }
                }
            }
        }
        if l > 0 {
            let pre = &layers[l - 1].0;
            g_out = g_in.iter().zip(pre).map(|(g, p)| if *p > 0.0 { *g } else { 0.0 }).collect();
        }
    }
    grad
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    architecture: Architecture,
    params: Vec<f64>,
}

const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(model: &PixelClassifier, path: &Path) -> Result<(), MtlError> {
    let ck = Checkpoint { version: CHECKPOINT_VERSION, architecture: model.architecture, params: model.params.clone() };
    std::fs::write(path, serde_json::to_string_pretty(&ck)? + "\n")?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<PixelClassifier, MtlError> {
    let ck: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if ck.version != CHECKPOINT_VERSION {
        return Err(MtlError::Checkpoint(format!("unsupported version {}", ck.version)));
    }
    let model = PixelClassifier { architecture: ck.architecture, params: ck.params };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mtl::{sigmoid, EPS};

    fn patch() -> GrayImage {
        let data = (0..12 * 10).map(|i| ((i * 37 + 11) % 256) as u8).collect();
        GrayImage::new(12, 10, data).unwrap()
    }

    #[test]
    fn zero_weights_predict_one_half() {
        let m = PixelClassifier::init(Architecture::LogisticFeatures, 0);
        assert!(m.predict(&patch()).probs().iter().all(|p| *p == 0.5));
    }

    #[test]
    fn huge_bias_saturates_at_clip() {
        let mut m = PixelClassifier::init(Architecture::LogisticFeatures, 0);
        m.params[0] = 1e9;
        assert!(m.predict(&patch()).probs().iter().all(|p| *p == 1.0 - EPS));
    }

    #[test]
    fn logistic_matches_scalar_reimplementation() {
        let img = patch();
        let m = PixelClassifier { architecture: Architecture::LogisticFeatures, params: vec![0.3, -1.2, 0.8, 2.0, -0.5] };
        let p = m.predict(&img);
        let v = |x: isize, y: isize| img.get_clamped(x, y) as f64;
        for y in 0..10isize {
            for x in 0..12isize {
                let gx = (v(x + 1, y) - v(x - 1, y)) / 2.0;
                let gy = (v(x, y + 1) - v(x, y - 1)) / 2.0;
                let mut lo = 255.0f64;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        lo = lo.min(v(x + dx, y + dy));
                    }
                }
                let mut blur = 0.0;
                let mut norm = 0.0;
                for dy in -6..=6isize {
                    for dx in -6..=6isize {
                        let c = (-((dx * dx + dy * dy) as f64) / 8.0).exp();
                        blur += c * v(x + dx, y + dy);
                        norm += c;
                    }
                }
                let z = 0.3 - 1.2 * (128.0 - v(x, y)) / 32.0 + 0.8 * (128.0 - blur / norm) / 32.0 + 2.0 * gx.hypot(gy) / 32.0 - 0.5 * (128.0 - lo) / 32.0;
                let got = p.probs()[y as usize * 12 + x as usize];
                assert!((got - sigmoid(z).clamp(EPS, 1.0 - EPS)).abs() < 1e-12, "({x},{y})");
            }
        }
    }

    #[test]
    fn relu_margin_only_for_hidden_units() {
        let img = patch();
        let logistic = PixelClassifier::init(Architecture::LogisticFeatures, 0);
        assert_eq!(logistic.relu_margin(&logistic.prepare(&img)), None);
        let conv = PixelClassifier::init(Architecture::TinyConvNet, 3);
        let m = conv.relu_margin(&conv.prepare(&img)).unwrap();
        assert!(m.is_finite() && m >= 0.0);
    }

    #[test]
    fn conv_net_shapes_and_determinism() {
        let a = PixelClassifier::init(Architecture::TinyConvNet, 7);
        assert_eq!(a.params.len(), 8 * 9 + 8 + 16 * 8 * 9 + 16 + 16 * 9 + 1);
        assert_eq!(a, PixelClassifier::init(Architecture::TinyConvNet, 7));
        a.validate().unwrap();
        assert_eq!(a.predict(&patch()).probs().len(), 120);
    }

    #[test]
    fn checkpoint_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let m = PixelClassifier { architecture: Architecture::LogisticFeatures, params: vec![0.1, 0.2, 0.3, 0.4, 0.5] };
        save_checkpoint(&m, &dir.path().join("m.json")).unwrap();
        assert_eq!(load_checkpoint(&dir.path().join("m.json")).unwrap(), m);
        let bad = PixelClassifier { architecture: Architecture::LogisticFeatures, params: vec![0.1] };
        save_checkpoint(&bad, &dir.path().join("b.json")).unwrap();
        assert!(load_checkpoint(&dir.path().join("b.json")).is_err());
    }
}
