use crate::imaging::GrayImage;

pub const N_FEATURES: usize = 5;

const BLUR_SIGMA: f64 = 2.0;
const MID_GRAY: f64 = 128.0;
const GRAY_UNIT: f64 = 32.0;

/// Intensity mapped so that mid-gray is 0 and darker is positive, in units of
/// 32 gray levels.
pub fn darkness(v: f64) -> f64 {
    (MID_GRAY - v) / GRAY_UNIT
}

/// Per-pixel feature vectors in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f64; N_FEATURES]>,
}

fn gaussian_blur(img: &GrayImage, sigma: f64) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let r = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-r..=r).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = kernel.iter().sum();
    let mut horiz = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            horiz[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, c)| c * img.get_clamped(x as isize + k as isize - r, y as isize) as f64)
                .sum::<f64>()
                / norm;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    let yy = (y as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
                    c * horiz[yy * w + x]
                })
                .sum::<f64>()
                / norm;
        }
    }
    out
}

/// Features per pixel: bias, darkness of the pixel, of the blurred image
/// (sigma 2) and of the 3x3 local minimum, plus the central difference
/// gradient magnitude in the same units.
pub fn extract_features(img: &GrayImage) -> FeatureMap {
    let (w, h) = (img.width(), img.height());
    let blur = gaussian_blur(img, BLUR_SIGMA);
    let at = |x: isize, y: isize| img.get_clamped(x, y) as f64;
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(x + 1, y) - at(x - 1, y)) / 2.0;
            let gy = (at(x, y + 1) - at(x, y - 1)) / 2.0;
            let local_min = (-1..=1).flat_map(|dy| (-1..=1).map(move |dx| (dx, dy))).map(|(dx, dy)| at(x + dx, y + dy)).fold(f64::INFINITY, f64::min);
            data.push([
                1.0,
                darkness(at(x, y)),
                darkness(blur[y as usize * w + x as usize]),
                gx.hypot(gy) / GRAY_UNIT,
                darkness(local_min),
            ]);
        }
    }
    FeatureMap { width: w, height: h, data }
}
