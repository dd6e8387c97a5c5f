//! Logical assessment metrics measured against the abduced targets, and
//! oracle metrics against a ground-truth mask.

use serde::{Deserialize, Serialize};

use crate::imaging::BinaryMask;
use crate::mtl::Prediction;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LafError {
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("target2 foreground is not contained in target1")]
    Containment,
    #[error("nothing to aggregate")]
    Empty,
    #[error("threshold {0} outside (0, 1)")]
    Threshold(f64),
}

/// Logical pixel counts; real-valued so that means over images fit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LafCounts {
    pub ltp: f64,
    pub lfp: f64,
    pub lfn: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LafReport {
    pub counts: LafCounts,
    pub lprecision: f64,
    pub lrecall: f64,
    pub lf1: f64,
    pub lfiou: f64,
}

/// Precision, recall, F1 and IoU against the true mask.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub tp: f64,
    pub fp: f64,
    pub fn_: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
}

fn ratio(n: f64, d: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else {
        n / d
    }
}

/// (precision, recall, f1, iou) with every 0/0 taken as 0.
fn metrics(tp: f64, fp: f64, fn_: f64) -> (f64, f64, f64, f64) {
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    (p, r, ratio(2.0 * p * r, p + r), ratio(tp, tp + fp + fn_))
}

/// Foreground `t >= threshold` and its complement.
pub fn binarize(t: &Prediction, threshold: f64) -> Result<(BinaryMask, BinaryMask), LafError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(LafError::Threshold(threshold));
    }
    let fg = BinaryMask::from_bits(t.width(), t.height(), t.probs().iter().map(|p| *p >= threshold).collect())
        .expect("shape taken from prediction");
    let bg = fg.not();
    Ok((fg, bg))
}

fn same(a: &BinaryMask, b: &BinaryMask, what: &str) -> Result<(), LafError> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(LafError::Dimensions(format!(
            "{what}: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )))
    }
}

pub fn laf_counts(t_f: &BinaryMask, t_b: &BinaryMask, target1: &BinaryMask, target2: &BinaryMask) -> Result<LafCounts, LafError> {
    same(t_f, t_b, "t_b")?;
    same(t_f, target1, "target1")?;
    same(t_f, target2, "target2")?;
    if !target2.is_subset_of(target1) {
        return Err(LafError::Containment);
    }
    Ok(LafCounts {
        ltp: t_f.and(target2).count() as f64,
        lfp: t_f.and(&target1.not()).count() as f64,
        lfn: t_b.and(target2).count() as f64,
    })
}

pub fn laf_metrics(counts: LafCounts) -> LafReport {
    let (lprecision, lrecall, lf1, lfiou) = metrics(counts.ltp, counts.lfp, counts.lfn);
    LafReport { counts, lprecision, lrecall, lf1, lfiou }
}

fn mean_counts(per_image: &[LafCounts]) -> Result<LafCounts, LafError> {
    if per_image.is_empty() {
        return Err(LafError::Empty);
    }
    let n = per_image.len() as f64;
    Ok(LafCounts {
        ltp: per_image.iter().map(|c| c.ltp).sum::<f64>() / n,
        lfp: per_image.iter().map(|c| c.lfp).sum::<f64>() / n,
        lfn: per_image.iter().map(|c| c.lfn).sum::<f64>() / n,
    })
}

/// Mean counts over images, then metrics of the mean.
pub fn aggregate_laf(per_image: &[LafCounts]) -> Result<LafReport, LafError> {
    Ok(laf_metrics(mean_counts(per_image)?))
}

/// Metrics per image, then their means; counts are the mean counts.
pub fn aggregate_laf_macro(per_image: &[LafCounts]) -> Result<LafReport, LafError> {
    let counts = mean_counts(per_image)?;
    let n = per_image.len() as f64;
    let reports: Vec<LafReport> = per_image.iter().map(|c| laf_metrics(*c)).collect();
    let avg = |f: fn(&LafReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Ok(LafReport {
        counts,
        lprecision: avg(|r| r.lprecision),
        lrecall: avg(|r| r.lrecall),
        lf1: avg(|r| r.lf1),
        lfiou: avg(|r| r.lfiou),
    })
}

pub fn oracle_metrics(t_f: &BinaryMask, true_mask: &BinaryMask) -> Result<OracleReport, LafError> {
    same(t_f, true_mask, "true mask")?;
    let tp = t_f.and(true_mask).count() as f64;
    let fp = t_f.and(&true_mask.not()).count() as f64;
    let fn_ = t_f.not().and(true_mask).count() as f64;
    let (precision, recall, f1, iou) = metrics(tp, fp, fn_);
    Ok(OracleReport { tp, fp, fn_, precision, recall, f1, iou })
}

/// Oracle metrics of summed counts over many images.
pub fn aggregate_oracle(per_image: &[OracleReport]) -> Result<OracleReport, LafError> {
    if per_image.is_empty() {
        return Err(LafError::Empty);
    }
    let n = per_image.len() as f64;
    let tp = per_image.iter().map(|r| r.tp).sum::<f64>() / n;
    let fp = per_image.iter().map(|r| r.fp).sum::<f64>() / n;
    let fn_ = per_image.iter().map(|r| r.fn_).sum::<f64>() / n;
    let (precision, recall, f1, iou) = metrics(tp, fp, fn_);
    Ok(OracleReport { tp, fp, fn_, precision, recall, f1, iou })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask2x2(on: &[(usize, usize)]) -> BinaryMask {
        BinaryMask::from_fn(2, 2, |x, y| on.contains(&(x, y)))
    }

    #[test]
    fn binarize_uses_greater_or_equal() {
        let (fg, bg) = binarize(&Prediction::filled(3, 2, 0.5), 0.5).unwrap();
        assert_eq!(fg.count(), 6);
        assert_eq!(bg.count(), 0);
        assert!(binarize(&Prediction::filled(1, 1, 0.5), 1.0).is_err());
    }

    #[test]
    fn two_by_two_counts() {
        let t1 = mask2x2(&[(0, 0), (0, 1)]);
        let t2 = mask2x2(&[(0, 0)]);
        let tf = mask2x2(&[(0, 0), (1, 1)]);
        let c = laf_counts(&tf, &tf.not(), &t1, &t2).unwrap();
        assert_eq!(c, LafCounts { ltp: 1.0, lfp: 1.0, lfn: 0.0 });
    }

    #[test]
    fn perfect_and_empty_predictions() {
        let t1 = mask2x2(&[(0, 0), (0, 1), (1, 0)]);
        let t2 = mask2x2(&[(0, 0), (1, 0)]);
        let c = laf_counts(&t2, &t2.not(), &t1, &t2).unwrap();
        assert_eq!((c.lfp, c.lfn), (0.0, 0.0));
        let empty = BinaryMask::new(2, 2);
        let c = laf_counts(&empty, &empty.not(), &t1, &t2).unwrap();
        assert_eq!(c, LafCounts { ltp: 0.0, lfp: 0.0, lfn: 2.0 });
    }

    #[test]
    fn count_errors() {
        let a = mask2x2(&[(0, 0)]);
        let b = mask2x2(&[(1, 1)]);
        assert_eq!(laf_counts(&a, &a.not(), &a, &b), Err(LafError::Containment));
        let big = BinaryMask::new(3, 2);
        assert!(matches!(laf_counts(&a, &a.not(), &big, &big), Err(LafError::Dimensions(_))));
    }

    #[test]
    fn metric_values() {
        let r = laf_metrics(LafCounts { ltp: 867.0, lfp: 393.0, lfn: 439.0 });
        assert!((r.lprecision - 0.6881).abs() < 5e-4);
        assert!((r.lrecall - 0.6639).abs() < 5e-4);
        assert!((r.lf1 - 0.6757).abs() < 5e-4);
        assert!((r.lfiou - 0.5103).abs() < 5e-4);
        let r = laf_metrics(LafCounts { ltp: 762.0, lfp: 188.0, lfn: 544.0 });
        assert_eq!((r.lprecision * 10000.0).round() / 100.0, 80.21);
        let z = laf_metrics(LafCounts { ltp: 0.0, lfp: 5.0, lfn: 7.0 });
        assert_eq!((z.lprecision, z.lrecall, z.lf1, z.lfiou), (0.0, 0.0, 0.0, 0.0));
        let zz = laf_metrics(LafCounts::default());
        assert_eq!((zz.lprecision, zz.lrecall, zz.lf1, zz.lfiou), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn aggregation() {
        let a = LafCounts { ltp: 10.0, lfp: 0.0, lfn: 0.0 };
        let b = LafCounts { ltp: 0.0, lfp: 10.0, lfn: 10.0 };
        let r = aggregate_laf(&[a, b]).unwrap();
        assert_eq!((r.lprecision, r.lrecall, r.lf1), (0.5, 0.5, 0.5));
        assert!((r.lfiou - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(aggregate_laf(&[a]).unwrap(), laf_metrics(a));
        assert_eq!(aggregate_laf(&[a, a]).unwrap(), laf_metrics(a));
        assert_eq!(aggregate_laf(&[]), Err(LafError::Empty));
        let m = aggregate_laf_macro(&[a, b]).unwrap();
        assert_eq!((m.lprecision, m.lf1), (0.5, 0.5));
    }

    #[test]
    fn oracle_cases() {
        let truth = mask2x2(&[(0, 0), (1, 0)]);
        let r = oracle_metrics(&truth, &truth).unwrap();
        assert_eq!((r.precision, r.recall, r.f1, r.iou), (1.0, 1.0, 1.0, 1.0));
        assert_eq!(oracle_metrics(&truth.not(), &truth).unwrap().precision, 0.0);
        // tp {(0,0)}, fp {(1,1)}, fn {(1,0)}
        let r = oracle_metrics(&mask2x2(&[(0, 0), (1, 1)]), &truth).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (1.0, 1.0, 1.0));
        assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));
        assert!((r.iou - 1.0 / 3.0).abs() < 1e-15);
    }

    fn masks() -> impl Strategy<Value = (Vec<bool>, Vec<bool>, Vec<bool>)> {
        (prop::collection::vec(any::<bool>(), 36), prop::collection::vec(any::<bool>(), 36), prop::collection::vec(any::<bool>(), 36))
    }

    proptest! {
        #[test]
        fn partition_and_classification((tf, a, b) in masks()) {
            let tf = BinaryMask::from_bits(6, 6, tf).unwrap();
            let t1 = BinaryMask::from_bits(6, 6, a.iter().zip(&b).map(|(x, y)| *x || *y).collect()).unwrap();
            let t2 = BinaryMask::from_bits(6, 6, b).unwrap();
            let c = laf_counts(&tf, &tf.not(), &t1, &t2).unwrap();
            prop_assert_eq!(c.ltp + c.lfn, t2.count() as f64);
            // lfp never counts inside target1, lfn never outside target2.
            let (mut lfp, mut lfn) = (0.0, 0.0);
            for k in 0..36 {
                let (x, y) = (k % 6, k / 6);
                if tf.get(x, y) && !t1.get(x, y) { lfp += 1.0; }
                if !tf.get(x, y) && t2.get(x, y) { lfn += 1.0; }
            }
            prop_assert_eq!((c.lfp, c.lfn), (lfp, lfn));
            let r = laf_metrics(c);
            for v in [r.lprecision, r.lrecall, r.lf1, r.lfiou] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(r.lfiou <= r.lprecision.min(r.lrecall) + 1e-15);

            // Monotonicity under adding one pixel.
            for k in 0..36 {
                let (x, y) = (k % 6, k / 6);
                if tf.get(x, y) { continue; }
                let mut more = tf.clone();
                more.set(x, y, true);
                let c2 = laf_counts(&more, &more.not(), &t1, &t2).unwrap();
                if t2.get(x, y) {
                    prop_assert!(c2.ltp >= c.ltp);
                    prop_assert!(laf_metrics(c2).lrecall >= r.lrecall);
                }
                if !t1.get(x, y) {
                    prop_assert!(c2.lfp >= c.lfp);
                }
            }
        }

        #[test]
        fn binarize_matches_scalar_oracle(t in prop::collection::vec(0.0f64..1.0, 20), thr in 0.01f64..0.99) {
            let p = Prediction::new(5, 4, t).unwrap();
            let (fg, bg) = binarize(&p, thr).unwrap();
            for (k, v) in p.probs().iter().enumerate() {
                prop_assert_eq!(fg.bits()[k], *v >= thr);
                prop_assert_ne!(fg.bits()[k], bg.bits()[k]);
            }
        }

        #[test]
        fn lfiou_lf1_identity(ltp in 0u32..5000, lfp in 0u32..5000, lfn in 0u32..5000) {
            let r = laf_metrics(LafCounts { ltp: ltp as f64, lfp: lfp as f64, lfn: lfn as f64 });
            if r.lf1 > 0.0 {
                prop_assert!((r.lfiou - r.lf1 / (2.0 - r.lf1)).abs() <= 1e-12);
            }
        }
    }
}
