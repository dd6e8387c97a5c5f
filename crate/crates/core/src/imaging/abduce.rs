use serde::{Deserialize, Serialize};

use super::{canny, rasterize_polygons, BinaryMask, GrayImage, ImagingError, Polygon};

/// Image-processing parameters for abducing Target2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbductionParams {
    /// Pixels at or below this intensity are dark candidates.
    pub gray_threshold: u8,
    pub canny_sigma: f64,
    pub canny_low_q: f64,
    pub canny_high_q: f64,
    /// Chebyshev radius used to grow the edge map before intersecting.
    pub edge_dilate_radius: usize,
}

impl Default for AbductionParams {
    fn default() -> Self {
        AbductionParams { gray_threshold: 80, canny_sigma: 1.0, canny_low_q: 0.70, canny_high_q: 0.90, edge_dilate_radius: 1 }
    }
}

impl AbductionParams {
    pub fn validate(&self) -> Result<(), ImagingError> {
        if !(0.0 < self.canny_low_q && self.canny_low_q < self.canny_high_q && self.canny_high_q < 1.0) {
            return Err(ImagingError::Params(format!(
                "canny quantiles must satisfy 0 < low < high < 1, got {} and {}",
                self.canny_low_q, self.canny_high_q
            )));
        }
        Ok(())
    }
}

/// The abduced targets with their joint-loss weights.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSet {
    pub target1: BinaryMask,
    pub target2: BinaryMask,
    pub alphas: Vec<f64>,
}

impl TargetSet {
    pub const DEFAULT_ALPHAS: [f64; 2] = [0.5, 0.5];

    pub fn new(target1: BinaryMask, target2: BinaryMask, alphas: Vec<f64>) -> Result<Self, ImagingError> {
        target1.check_shape(&target2)?;
        if !target2.is_subset_of(&target1) {
            return Err(ImagingError::Params("target2 foreground must lie inside target1".into()));
        }
        let sum: f64 = alphas.iter().sum();
        if alphas.len() != 2 || alphas.iter().any(|a| *a < 0.0) || (sum - 1.0).abs() > 1e-12 {
            return Err(ImagingError::Params(format!("alphas {alphas:?} must be two non-negative weights summing to 1")));
        }
        Ok(TargetSet { target1, target2, alphas })
    }

    pub fn masks(&self) -> [&BinaryMask; 2] {
        [&self.target1, &self.target2]
    }
}

/// Dark-pixel candidates: intensity <= `threshold`.
pub fn gray_threshold(img: &GrayImage, threshold: u8) -> BinaryMask {
    BinaryMask::from_bits(img.width(), img.height(), img.data().iter().map(|v| *v <= threshold).collect())
        .expect("shape taken from image")
}

/// Square (Chebyshev) dilation.
pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width(), mask.height());
    BinaryMask::from_fn(w, h, |x, y| {
        let (x0, x1) = (x.saturating_sub(radius), (x + radius).min(w - 1));
        let (y0, y1) = (y.saturating_sub(radius), (y + radius).min(h - 1));
        (y0..=y1).any(|yy| (x0..=x1).any(|xx| mask.get(xx, yy)))
    })
}

/// Target1 is the rasterized polygon union; Target2 keeps the Target1 pixels
/// that are dark and lie on (dilated) Canny edges.
pub fn abduce_targets(img: &GrayImage, polygons: &[Polygon], params: &AbductionParams) -> Result<TargetSet, ImagingError> {
    params.validate()?;
    let target1 = rasterize_polygons(polygons, img.width(), img.height())?;
    let dark = gray_threshold(img, params.gray_threshold);
    let edges = canny(img, params.canny_sigma, params.canny_low_q, params.canny_high_q)?;
    let target2 = target1.and(&dark).and(&dilate(&edges, params.edge_dilate_radius));
    TargetSet::new(target1, target2, TargetSet::DEFAULT_ALPHAS.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, s: f64) -> Polygon {
        Polygon::new(vec![[x0, y0], [x0 + s, y0], [x0 + s, y0 + s], [x0, y0 + s]]).unwrap()
    }

    fn dot_image(cx: usize, cy: usize) -> GrayImage {
        let mut img = GrayImage::filled(32, 32, 200);
        for y in cy - 1..=cy + 1 {
            for x in cx - 1..=cx + 1 {
                img.set(x, y, 10);
            }
        }
        img
    }

    #[test]
    fn threshold_extremes() {
        assert_eq!(gray_threshold(&GrayImage::filled(5, 5, 255), 80).count(), 0);
        assert_eq!(gray_threshold(&GrayImage::filled(5, 5, 0), 80).count(), 25);
        let mut img = GrayImage::filled(5, 5, 200);
        img.set(3, 1, 10);
        let m = gray_threshold(&img, 80);
        assert_eq!(m.count(), 1);
        assert!(m.get(3, 1));
    }

    #[test]
    fn dilation_radius_one_is_three_by_three() {
        let mut m = BinaryMask::new(7, 7);
        m.set(3, 3, true);
        assert_eq!(dilate(&m, 1).count(), 9);
        m.set(0, 0, true);
        assert_eq!(dilate(&m, 1).count(), 9 + 4);
    }

    #[test]
    fn bright_image_gives_empty_target2() {
        let mut img = GrayImage::filled(32, 32, 220);
        img.set(10, 10, 120);
        let t = abduce_targets(&img, &[square(2.0, 2.0, 20.0)], &AbductionParams::default()).unwrap();
        assert_eq!(t.target2.count(), 0);
        assert_eq!(t.target1.count(), 400);
        assert_eq!(t.alphas, vec![0.5, 0.5]);
    }

    #[test]
    fn dark_dot_inside_polygon_reaches_target2() {
        let img = dot_image(12, 12);
        let t = abduce_targets(&img, &[square(4.0, 4.0, 16.0)], &AbductionParams::default()).unwrap();
        for y in 11..=13 {
            for x in 11..=13 {
                assert!(t.target2.get(x, y), "({x},{y})");
            }
        }
        assert_eq!(t.target2.count(), 9);
    }

    #[test]
    fn dark_dot_outside_polygons_is_excluded() {
        let img = dot_image(25, 25);
        let t = abduce_targets(&img, &[square(2.0, 2.0, 10.0)], &AbductionParams::default()).unwrap();
        assert_eq!(t.target2.count(), 0);
    }

    #[test]
    fn target_set_rejects_bad_weights_and_containment() {
        let a = BinaryMask::from_fn(4, 4, |x, _| x < 2);
        let b = BinaryMask::from_fn(4, 4, |x, _| x < 1);
        assert!(TargetSet::new(a.clone(), b.clone(), vec![0.5, 0.5]).is_ok());
        assert!(TargetSet::new(a.clone(), b.clone(), vec![1.0, 1.0]).is_err());
        assert!(TargetSet::new(b, a, vec![0.5, 0.5]).is_err());
    }
}
