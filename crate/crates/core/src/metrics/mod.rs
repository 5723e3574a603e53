//! Open-set detection metrics: known-class mAP over IoU 0.50:0.95, unknown
//! AP / precision / recall / F1, absolute open-set error, and wilderness
//! impact.

mod ap;
mod matching;
mod report;

pub use ap::{average_precision, pr_curve, Interpolation};
pub use matching::{match_predictions, pooled_flags, MatchResult};
pub use report::{evaluate, EvalConfig, EvalImage, KnownPrediction, MetricsReport, UnknownPrediction};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::scalar::Scalar;

/// Precision, recall and F1 from raw counts. A rate whose denominator is
/// zero is absent rather than zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates<T> {
    pub precision: Option<T>,
    pub recall: Option<T>,
    pub f1: Option<T>,
}

pub fn precision_recall_f1<T: Scalar>(tp: usize, fp: usize, fn_: usize) -> Rates<T> {
    let rate = |den: usize| (den > 0).then(|| T::count(tp) / T::count(den));
    let precision = rate(tp + fp);
    let recall = rate(tp + fn_);
    let f1 = precision.zip(recall).map(|(p, r)| f1_score(p, r));
    Rates { precision, recall, f1 }
}

/// Harmonic mean of precision and recall; zero when both are zero.
pub fn f1_score<T: Scalar>(precision: T, recall: T) -> T {
    let sum = precision + recall;
    if sum > T::zero() {
        T::two() * precision * recall / sum
    } else {
        T::zero()
    }
}

/// Number of unknown ground truths claimed by known-class predictions under
/// greedy, class-blind matching. Each slice element is one image.
pub fn aose<T: Scalar>(known: &[(Vec<BBox<T>>, Vec<T>)], unknown_gts: &[Vec<BBox<T>>], iou_threshold: T) -> usize {
    known
        .iter()
        .zip(unknown_gts)
        .map(|((boxes, scores), gts)| match_predictions(boxes, scores, gts, iou_threshold).tp())
        .sum()
}

/// Ranked TP/FP sequence with the number of ground truths it is scored
/// against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrSequence {
    pub flags: Vec<bool>,
    pub num_gt: usize,
}

/// Precision at the first rank whose recall reaches `level`.
pub fn precision_at_recall<T: Scalar>(seq: &PrSequence, level: T) -> Result<T> {
    let curve: Vec<(T, T)> = if seq.num_gt == 0 {
        Vec::new()
    } else {
        pr_curve(&seq.flags, seq.num_gt)
    };
    curve
        .iter()
        .find(|&&(_, r)| r >= level)
        .map(|&(p, _)| p)
        .ok_or_else(|| Error::RecallUnreachable {
            level: level.to_f64().unwrap_or(f64::NAN),
            max_recall: curve.last().map_or(0.0, |&(_, r)| r.to_f64().unwrap_or(f64::NAN)),
        })
}

/// `precision_closed / precision_open - 1`, both read at recall `level`.
pub fn wilderness_impact<T: Scalar>(closed: &PrSequence, open: &PrSequence, level: T) -> Result<T> {
    let pc = precision_at_recall(closed, level)?;
    let po = precision_at_recall(open, level)?;
    Ok(pc / po - T::one())
}

/// The ten IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds<T: Scalar>() -> Vec<T> {
    (0..10).map(|k| T::count(50 + 5 * k) / T::lit(100.0)).collect()
}

/// Class-aware predictions and ground truths of one image for mAP.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage<T> {
    pub predictions: Vec<(BBox<T>, u32, T)>,
    pub gts: Vec<(BBox<T>, u32)>,
}

/// Mean over `thresholds` of the mean per-class AP. Classes without ground
/// truth are left out; `None` when no class has any.
pub fn map_range<T: Scalar>(
    images: &[LabeledImage<T>],
    thresholds: &[T],
    interpolation: Interpolation,
) -> Result<Option<T>> {
    let mut classes: Vec<u32> = images.iter().flat_map(|im| im.gts.iter().map(|g| g.1)).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.is_empty() || thresholds.is_empty() {
        return Ok(None);
    }
    let mut total = T::zero();
    for &thr in thresholds {
        let mut per_class = T::zero();
        for &c in &classes {
            let mut results = Vec::with_capacity(images.len());
            let mut num_gt = 0;
            for im in images {
                let gts: Vec<BBox<T>> = im.gts.iter().filter(|g| g.1 == c).map(|g| g.0).collect();
                let (boxes, scores): (Vec<BBox<T>>, Vec<T>) =
                    im.predictions.iter().filter(|p| p.1 == c).map(|p| (p.0, p.2)).unzip();
                num_gt += gts.len();
                results.push(match_predictions(&boxes, &scores, &gts, thr));
            }
            let flags = pooled_flags(&results);
            per_class = per_class + average_precision(&flags, num_gt, interpolation)?;
        }
        total = total + per_class / T::count(classes.len());
    }
    Ok(Some(total / T::count(thresholds.len())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox<f64> {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn rate_examples() {
        let r = precision_recall_f1::<f64>(1, 0, 0);
        assert_eq!((r.precision, r.recall, r.f1), (Some(1.0), Some(1.0), Some(1.0)));
        let r = precision_recall_f1::<f64>(1, 1, 1);
        assert_eq!((r.precision, r.recall, r.f1), (Some(0.5), Some(0.5), Some(0.5)));
        let r = precision_recall_f1::<f64>(0, 0, 3);
        assert_eq!((r.precision, r.recall, r.f1), (None, Some(0.0), None));
        let r = precision_recall_f1::<f64>(0, 2, 3);
        assert_eq!(r.f1, Some(0.0));
        assert!((f1_score(0.433f64, 0.535) - 0.479).abs() < 5e-4);
    }

    #[test]
    fn aose_examples() {
        let unk = vec![vec![b(0., 0., 10., 10.)]];
        let on = vec![(vec![b(0., 0., 10., 10.)], vec![0.9])];
        assert_eq!(aose(&on, &unk, 0.5), 1);
        let off = vec![(vec![b(50., 50., 60., 60.)], vec![0.9])];
        assert_eq!(aose(&off, &unk, 0.5), 0);
        let twice = vec![(vec![b(0., 0., 10., 10.), b(0., 0., 10., 10.)], vec![0.9, 0.8])];
        assert_eq!(aose(&twice, &unk, 0.5), 1);
    }

    #[test]
    fn wi_examples() {
        let same = PrSequence { flags: vec![true, false, true], num_gt: 2 };
        assert_eq!(wilderness_impact(&same, &same, 0.8).unwrap(), 0.0);

        // 22 GT: recall first reaches 0.8 at the 18th TP. Two leading FPs give
        // precision 0.9 there, six give 0.75.
        let closed = PrSequence { flags: [vec![false; 2], vec![true; 18]].concat(), num_gt: 22 };
        let open = PrSequence { flags: [vec![false; 6], vec![true; 18]].concat(), num_gt: 22 };
        assert_relative_eq!(precision_at_recall(&closed, 0.8).unwrap(), 0.9);
        assert_relative_eq!(precision_at_recall(&open, 0.8).unwrap(), 0.75);
        assert_relative_eq!(wilderness_impact(&closed, &open, 0.8).unwrap(), 0.2, epsilon = 1e-12);

        let half = PrSequence { flags: vec![true, false], num_gt: 2 };
        assert_eq!(wilderness_impact(&half, &half, 0.5).unwrap(), 0.0);
        let short = PrSequence { flags: vec![true], num_gt: 2 };
        assert!(wilderness_impact(&short, &short, 0.8).is_err());
    }

    #[test]
    fn map_range_examples() {
        let t = coco_thresholds::<f64>();
        assert_eq!(t.len(), 10);
        assert_eq!(t[2], 0.6);
        let gt = b(0., 0., 10., 10.);
        let perfect = [LabeledImage { predictions: vec![(gt, 1, 0.9)], gts: vec![(gt, 1)] }];
        assert_eq!(map_range(&perfect, &t, Interpolation::AllPoint).unwrap(), Some(1.0));
        let partial = [LabeledImage { predictions: vec![(b(0., 0., 10., 6.), 1, 0.9)], gts: vec![(gt, 1)] }];
        assert_relative_eq!(map_range(&partial, &t, Interpolation::AllPoint).unwrap().unwrap(), 0.3, epsilon = 1e-12);
        let none = [LabeledImage { predictions: vec![], gts: vec![(gt, 1)] }];
        assert_eq!(map_range(&none, &t, Interpolation::AllPoint).unwrap(), Some(0.0));
        let wrong_class = [LabeledImage { predictions: vec![(gt, 2, 0.9)], gts: vec![(gt, 1)] }];
        assert_eq!(map_range(&wrong_class, &t, Interpolation::AllPoint).unwrap(), Some(0.0));
        let empty: [LabeledImage<f64>; 0] = [];
        assert_eq!(map_range(&empty, &t, Interpolation::AllPoint).unwrap(), None);
    }

    proptest! {
        #[test]
        fn f1_bounds(p in 0.0..1.0f64, r in 0.0..1.0f64) {
            let f = f1_score(p, r);
            prop_assert!(f <= (2.0 * p).min(2.0 * r) + 1e-12);
            prop_assert!(f <= p.max(r) + 1e-12);
        }

        #[test]
        fn aose_ignores_order_of_distinct_matches(scores in prop::collection::vec(0.0..1.0f64, 4)) {
            let gts: Vec<BBox<f64>> = (0..4).map(|k| b(20.0 * k as f64, 0., 20.0 * k as f64 + 10., 10.)).collect();
            let preds = gts.clone();
            let a = aose(&[(preds.clone(), scores.clone())], std::slice::from_ref(&gts), 0.5);
            let rev: Vec<f64> = scores.iter().rev().copied().collect();
            prop_assert_eq!(a, aose(&[(preds, rev)], &[gts], 0.5));
            prop_assert_eq!(a, 4);
        }
    }
}
