//! Canny edge detection with quantile hysteresis thresholds.
//!
//! Smoothing and gradients are computed in exact integer arithmetic with an
//! integer Gaussian kernel, and gradient directions are quantized with exact
//! integer comparisons. Since the thresholds are quantiles of the magnitudes,
//! the output is unchanged under any non-saturating positive affine rescale
//! of the intensities.

use std::collections::VecDeque;

use super::{BinaryMask, GrayImage, ImagingError};

const KERNEL_SCALE: f64 = 1024.0;

fn integer_kernel(sigma: f64) -> Vec<i64> {
    if sigma <= 0.0 {
        return vec![1];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    (-radius..=radius)
        .map(|i| (KERNEL_SCALE * (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).round() as i64)
        .collect()
}

fn smooth(img: &GrayImage, kernel: &[i64]) -> Vec<i64> {
    let (w, h) = (img.width(), img.height());
    let r = (kernel.len() / 2) as isize;
    let mut horiz = vec![0i64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0i64;
            for (k, weight) in kernel.iter().enumerate() {
                acc += weight * img.get_clamped(x as isize + k as isize - r, y as isize) as i64;
            }
            horiz[y * w + x] = acc;
        }
    }
    let mut out = vec![0i64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0i64;
            for (k, weight) in kernel.iter().enumerate() {
                let yy = (y as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
                acc += weight * horiz[yy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Nearest-rank quantile of an ascending slice.
fn nearest_rank(sorted: &[i128], q: f64) -> i128 {
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Edge mask of `img`.
///
/// Hysteresis thresholds are the `low_q` / `high_q` quantiles of the nonzero
/// gradient magnitudes. The one-pixel image border never holds an edge.
pub fn canny(img: &GrayImage, sigma: f64, low_q: f64, high_q: f64) -> Result<BinaryMask, ImagingError> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(ImagingError::Dimensions(format!("canny needs at least 3x3, got {w}x{h}")));
    }
    if !(0.0 < low_q && low_q < high_q && high_q < 1.0) {
        return Err(ImagingError::Params(format!("need 0 < low_q < high_q < 1, got {low_q}, {high_q}")));
    }
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(ImagingError::Params(format!("sigma must be finite and non-negative, got {sigma}")));
    }

    let s = smooth(img, &integer_kernel(sigma));
    let at = |x: usize, y: usize| s[y * w + x];
    let mut gx = vec![0i64; w * h];
    let mut gy = vec![0i64; w * h];
    let mut mag2 = vec![0i128; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            gx[i] = at((x + 1).min(w - 1), y) - at(x.saturating_sub(1), y);
            gy[i] = at(x, (y + 1).min(h - 1)) - at(x, y.saturating_sub(1));
            mag2[i] = (gx[i] as i128).pow(2) + (gy[i] as i128).pow(2);
        }
    }

    let mut nonzero: Vec<i128> = mag2.iter().copied().filter(|m| *m > 0).collect();
    if nonzero.is_empty() {
        return Ok(BinaryMask::new(w, h));
    }
    nonzero.sort_unstable();
    let low = nearest_rank(&nonzero, low_q);
    let high = nearest_rank(&nonzero, high_q);

    // Non-maximum suppression along the quantized gradient direction.
    let mut thin = vec![0i128; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let m = mag2[i];
            if m == 0 {
                continue;
            }
            let (ax, ay) = (gx[i].unsigned_abs() as i128, gy[i].unsigned_abs() as i128);
            // |gy| < tan(22.5°)|gx|  <=>  (|gx| + |gy|)^2 < 2 gx^2
            let (a, b) = if (ax + ay).pow(2) < 2 * ax * ax {
                ((x - 1, y), (x + 1, y))
            } else if ay > ax && (ay - ax).pow(2) > 2 * ax * ax {
                // |gy| > tan(67.5°)|gx|
                ((x, y - 1), (x, y + 1))
            } else if (gx[i] > 0) == (gy[i] > 0) {
                ((x - 1, y - 1), (x + 1, y + 1))
            } else {
                ((x + 1, y - 1), (x - 1, y + 1))
            };
            if m >= mag2[a.1 * w + a.0] && m >= mag2[b.1 * w + b.0] {
                thin[i] = m;
            }
        }
    }

    let mut out = BinaryMask::new(w, h);
    let mut queue = VecDeque::new();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            if thin[y * w + x] >= high && !out.get(x, y) {
                out.set(x, y, true);
                queue.push_back((x, y));
                while let Some((cx, cy)) = queue.pop_front() {
                    for ny in cy - 1..=cy + 1 {
                        for nx in cx - 1..=cx + 1 {
                            if nx == 0 || ny == 0 || nx >= w - 1 || ny >= h - 1 {
                                continue;
                            }
                            if !out.get(nx, ny) && thin[ny * w + nx] >= low && thin[ny * w + nx] > 0 {
                                out.set(nx, ny, true);
                                queue.push_back((nx, ny));
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn components(mask: &BinaryMask, value: bool, eight: bool) -> usize {
        let (w, h) = (mask.width(), mask.height());
        let mut seen = vec![false; w * h];
        let mut count = 0;
        for start in 0..w * h {
            if seen[start] || mask.bits()[start] != value {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(i) = stack.pop() {
                let (x, y) = ((i % w) as isize, (i / w) as isize);
                for dy in -1..=1isize {
                    for dx in -1..=1isize {
                        if (dx == 0 && dy == 0) || (!eight && dx != 0 && dy != 0) {
                            continue;
                        }
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                            continue;
                        }
                        let j = ny as usize * w + nx as usize;
                        if !seen[j] && mask.bits()[j] == value {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        count
    }

    fn disk(size: usize, cx: f64, cy: f64, r: f64, fg: u8, bg: u8) -> GrayImage {
        let mut img = GrayImage::filled(size, size, bg);
        for y in 0..size {
            for x in 0..size {
                if (x as f64 + 0.5 - cx).hypot(y as f64 + 0.5 - cy) <= r {
                    img.set(x, y, fg);
                }
            }
        }
        img
    }

    #[test]
    fn constant_image_has_no_edges() {
        let m = canny(&GrayImage::filled(16, 16, 128), 1.0, 0.7, 0.9).unwrap();
        assert_eq!(m.count(), 0);
    }

    #[test]
    fn vertical_step_gives_vertical_line() {
        let mut img = GrayImage::filled(32, 32, 0);
        for y in 0..32 {
            for x in 16..32 {
                img.set(x, y, 255);
            }
        }
        let m = canny(&img, 1.0, 0.7, 0.9).unwrap();
        let in_band = (0..32).flat_map(|y| (14..=17).map(move |x| (x, y))).filter(|&(x, y)| m.get(x, y)).count();
        assert!(in_band >= 28, "{in_band} edge pixels in band");
        assert_eq!(in_band, m.count(), "edges outside the step band");
        // Every interior row carries an edge pixel.
        for y in 1..31 {
            assert!((14..=17).any(|x| m.get(x, y)), "row {y}");
        }
    }

    #[test]
    fn disk_gives_one_closed_ring() {
        let img = disk(32, 16.0, 16.0, 5.0, 20, 200);
        let m = canny(&img, 1.0, 0.7, 0.9).unwrap();
        assert_eq!(components(&m, true, true), 1, "ring split");
        // Closed: the complement splits into an inside and an outside.
        assert_eq!(components(&m, false, false), 2, "ring not closed");
    }

    #[test]
    fn invariant_under_affine_rescale() {
        let base = disk(32, 13.3, 17.8, 4.2, 30, 110);
        let mut noisy = base.clone();
        let mut state = 12345u32;
        for v in noisy.data_mut() {
            state = state.wrapping_mul(1_103_515_245).wrapping_add(12_345);
            *v = (*v as i32 + ((state >> 16) % 9) as i32 - 4) as u8;
        }
        let reference = canny(&noisy, 1.0, 0.7, 0.9).unwrap();
        for (a, b) in [(2u32, 0u32), (1, 60), (2, 7), (1, 0)] {
            let data = noisy.data().iter().map(|v| (*v as u32 * a + b) as u8).collect();
            let scaled = GrayImage::new(32, 32, data).unwrap();
            assert_eq!(canny(&scaled, 1.0, 0.7, 0.9).unwrap(), reference, "a={a} b={b}");
        }
    }

    #[test]
    fn rejects_tiny_images_and_bad_quantiles() {
        assert!(canny(&GrayImage::filled(2, 5, 0), 1.0, 0.7, 0.9).is_err());
        assert!(canny(&GrayImage::filled(5, 5, 0), 1.0, 0.9, 0.7).is_err());
    }
}
