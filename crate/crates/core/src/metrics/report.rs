use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::BBox;
use crate::sampling::GroundTruthInstance;
use crate::scalar::{total_cmp, Scalar};

use super::{
    aose, average_precision, coco_thresholds, map_range, match_predictions, pooled_flags,
    precision_recall_f1, wilderness_impact, Interpolation, LabeledImage, PrSequence,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnownPrediction<T> {
    pub bbox: BBox<T>,
    /// Known class in `1..=C`.
    pub label: u32,
    pub score: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnknownPrediction<T> {
    pub bbox: BBox<T>,
    pub score: T,
}

/// Ground truth and final predictions of one image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalImage<T> {
    pub gts: Vec<GroundTruthInstance<T>>,
    pub known: Vec<KnownPrediction<T>>,
    pub unknown: Vec<UnknownPrediction<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig<T> {
    pub num_classes: u32,
    /// Matching IoU for everything except mAP.
    pub iou_threshold: T,
    /// Recall level at which wilderness impact is read.
    pub wi_recall: T,
    pub interpolation: Interpolation,
}

impl<T: Scalar> EvalConfig<T> {
    pub fn new(num_classes: u32) -> Self {
        Self {
            num_classes,
            iou_threshold: T::lit(0.5),
            wi_recall: T::lit(0.8),
            interpolation: Interpolation::AllPoint,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub known_gt: usize,
    pub unknown_gt: usize,
    pub tp_u: usize,
    pub fp_u: usize,
    pub fn_u: usize,
}

/// Metric suite. Undefined values are `None`, with the reason in `notes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport<T> {
    pub map: Option<T>,
    pub u_ap: Option<T>,
    pub u_pre: Option<T>,
    pub u_rec: Option<T>,
    pub u_f1: Option<T>,
    pub aose: usize,
    pub wi: Option<T>,
    pub counts: Counts,
    pub notes: Vec<String>,
}

pub fn evaluate<T: Scalar>(images: &[EvalImage<T>], cfg: &EvalConfig<T>) -> Result<MetricsReport<T>> {
    let c = cfg.num_classes;
    let thr = cfg.iou_threshold;
    let mut notes = Vec::new();

    let known_gts = |im: &EvalImage<T>| -> Vec<(BBox<T>, u32)> {
        im.gts.iter().filter(|g| !g.is_unknown(c)).map(|g| (g.bbox, g.label)).collect()
    };
    let unknown_gts = |im: &EvalImage<T>| -> Vec<BBox<T>> {
        im.gts.iter().filter(|g| g.is_unknown(c)).map(|g| g.bbox).collect()
    };

    let labeled: Vec<LabeledImage<T>> = images
        .iter()
        .map(|im| LabeledImage {
            predictions: im.known.iter().map(|p| (p.bbox, p.label, p.score)).collect(),
            gts: known_gts(im),
        })
        .collect();
    let map = map_range(&labeled, &coco_thresholds(), cfg.interpolation)?;
    if map.is_none() {
        notes.push("mAP undefined: no known-class ground truth".into());
    }

    let unknown_results: Vec<_> = images
        .iter()
        .map(|im| {
            let (boxes, scores): (Vec<_>, Vec<_>) = im.unknown.iter().map(|p| (p.bbox, p.score)).unzip();
            match_predictions(&boxes, &scores, &unknown_gts(im), thr)
        })
        .collect();
    let mut counts = Counts::default();
    for (im, r) in images.iter().zip(&unknown_results) {
        counts.known_gt += im.gts.len() - r.num_gt();
        counts.unknown_gt += r.num_gt();
        counts.tp_u += r.tp();
        counts.fp_u += r.fp();
        counts.fn_u += r.fn_();
    }
    let rates = precision_recall_f1::<T>(counts.tp_u, counts.fp_u, counts.fn_u);
    let u_ap = if counts.unknown_gt > 0 {
        Some(average_precision(&pooled_flags(&unknown_results), counts.unknown_gt, cfg.interpolation)?)
    } else {
        notes.push("U-AP and U-REC undefined: no unknown ground truth".into());
        None
    };
    if rates.precision.is_none() {
        notes.push("U-PRE undefined: no unknown predictions".into());
    }

    let known_boxes: Vec<(Vec<BBox<T>>, Vec<T>)> = images
        .iter()
        .map(|im| im.known.iter().map(|p| (p.bbox, p.score)).unzip())
        .collect();
    let unknown_boxes: Vec<Vec<BBox<T>>> = images.iter().map(unknown_gts).collect();
    let aose = aose(&known_boxes, &unknown_boxes, thr);

    let (closed, open) = wi_sequences(images, c, thr);
    let wi = match wilderness_impact(&closed, &open, cfg.wi_recall) {
        Ok(v) => Some(v),
        Err(e) => {
            notes.push(format!("WI undefined: {e}"));
            None
        }
    };

    Ok(MetricsReport {
        map,
        u_ap,
        u_pre: rates.precision,
        u_rec: rates.recall,
        u_f1: rates.f1,
        aose,
        wi,
        counts,
        notes,
    })
}

/// Closed- and open-set TP/FP sequences of the known-class predictions.
/// Known predictions that miss every known object but land on an unknown
/// one are absent from the closed-set sequence and count as false positives
/// in the open-set one.
fn wi_sequences<T: Scalar>(images: &[EvalImage<T>], num_classes: u32, thr: T) -> (PrSequence, PrSequence) {
    // (score, image, class, rank, tp, lands on unknown)
    let mut ranked: Vec<(T, usize, u32, usize, bool, bool)> = Vec::new();
    let mut num_gt = 0;
    for (img, im) in images.iter().enumerate() {
        let unknown: Vec<BBox<T>> = im.gts.iter().filter(|g| g.is_unknown(num_classes)).map(|g| g.bbox).collect();
        for class in 1..=num_classes {
            let gts: Vec<BBox<T>> = im.gts.iter().filter(|g| g.label == class).map(|g| g.bbox).collect();
            num_gt += gts.len();
            let preds: Vec<&KnownPrediction<T>> = im.known.iter().filter(|p| p.label == class).collect();
            if preds.is_empty() {
                continue;
            }
            let boxes: Vec<BBox<T>> = preds.iter().map(|p| p.bbox).collect();
            let scores: Vec<T> = preds.iter().map(|p| p.score).collect();
            let r = match_predictions(&boxes, &scores, &gts, thr);
            for rank in 0..r.order.len() {
                let tp = r.is_tp(rank);
                let b = boxes[r.order[rank]];
                let on_unknown = !tp && unknown.iter().any(|u| b.iou(u).unwrap_or(T::zero()) >= thr);
                ranked.push((r.scores[rank], img, class, rank, tp, on_unknown));
            }
        }
    }
    ranked.sort_by(|a, b| {
        total_cmp(b.0, a.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    });
    let closed = PrSequence {
        flags: ranked.iter().filter(|t| !t.5).map(|t| t.4).collect(),
        num_gt,
    };
    let open = PrSequence {
        flags: ranked.iter().map(|t| t.4).collect(),
        num_gt,
    };
    (closed, open)
}
