use crate::geometry::BBox;
use crate::scalar::{total_cmp, Scalar};

/// Greedy matching outcome. Predictions are listed in descending confidence
/// order (input index on ties).
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult<T> {
    /// Input index of each ranked prediction.
    pub order: Vec<usize>,
    /// Confidence of each ranked prediction.
    pub scores: Vec<T>,
    /// Matched ground-truth index of each ranked prediction; `None` is a false
    /// positive.
    pub matched: Vec<Option<usize>>,
    pub gt_matched: Vec<bool>,
    pub iou_threshold: T,
}

impl<T: Scalar> MatchResult<T> {
    pub fn is_tp(&self, rank: usize) -> bool {
        self.matched[rank].is_some()
    }

    pub fn flags(&self) -> Vec<bool> {
        self.matched.iter().map(Option::is_some).collect()
    }

    pub fn tp(&self) -> usize {
        self.matched.iter().filter(|m| m.is_some()).count()
    }

    pub fn fp(&self) -> usize {
        self.matched.len() - self.tp()
    }

    pub fn fn_(&self) -> usize {
        self.gt_matched.iter().filter(|&&m| !m).count()
    }

    pub fn num_gt(&self) -> usize {
        self.gt_matched.len()
    }
}

/// Ranks predictions by descending confidence; each one takes the unmatched
/// ground truth of highest IoU (lowest index on ties) if that IoU reaches
/// `iou_threshold`, otherwise it is a false positive.
pub fn match_predictions<T: Scalar>(
    boxes: &[BBox<T>],
    scores: &[T],
    gts: &[BBox<T>],
    iou_threshold: T,
) -> MatchResult<T> {
    debug_assert_eq!(boxes.len(), scores.len());
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| total_cmp(scores[b], scores[a]).then(a.cmp(&b)));
    let mut gt_matched = vec![false; gts.len()];
    let mut matched = Vec::with_capacity(order.len());
    for &p in &order {
        let mut best: Option<(usize, T)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt_matched[g] {
                continue;
            }
            let v = boxes[p].iou(gt).unwrap_or(T::zero());
            if v >= iou_threshold && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            gt_matched[g] = true;
        }
        matched.push(best.map(|(g, _)| g));
    }
    MatchResult {
        scores: order.iter().map(|&i| scores[i]).collect(),
        order,
        matched,
        gt_matched,
        iou_threshold,
    }
}

/// Merges ranked predictions of several images into one TP/FP sequence,
/// ordered by descending confidence (image order, then rank, on ties).
pub fn pooled_flags<'a, T: Scalar + 'a>(results: impl IntoIterator<Item = &'a MatchResult<T>>) -> Vec<bool> {
    let mut all: Vec<(T, usize, usize, bool)> = Vec::new();
    for (img, r) in results.into_iter().enumerate() {
        for rank in 0..r.order.len() {
            all.push((r.scores[rank], img, rank, r.is_tp(rank)));
        }
    }
    all.sort_by(|a, b| total_cmp(b.0, a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    all.into_iter().map(|t| t.3).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox<f64> {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn match_examples() {
        let gt = [b(0., 0., 10., 10.)];
        let r = match_predictions(&[b(0., 0., 10., 10.)], &[0.9], &gt, 0.5);
        assert_eq!((r.tp(), r.fp(), r.fn_()), (1, 0, 0));

        let r = match_predictions(&[b(0., 0., 10., 10.), b(0., 0., 10., 10.)], &[0.5, 0.9], &gt, 0.5);
        assert_eq!(r.order, vec![1, 0]);
        assert_eq!(r.flags(), vec![true, false]);

        let r = match_predictions(&[b(0., 0., 10., 4.)], &[0.9], &gt, 0.5);
        assert_eq!((r.tp(), r.fp(), r.fn_()), (0, 1, 1));
    }

    #[test]
    fn takes_highest_iou_unmatched_gt() {
        let gts = [b(0., 0., 10., 10.), b(1., 0., 11., 10.)];
        let preds = [b(1., 0., 11., 10.), b(0., 0., 10., 10.)];
        let r = match_predictions(&preds, &[0.9, 0.8], &gts, 0.5);
        assert_eq!(r.matched, vec![Some(1), Some(0)]);
    }

    #[test]
    fn pooling_sorts_across_images() {
        let gt = [b(0., 0., 1., 1.)];
        let a = match_predictions(&[b(0., 0., 1., 1.)], &[0.2], &gt, 0.5);
        let c = match_predictions(&[b(5., 5., 6., 6.)], &[0.7], &gt, 0.5);
        assert_eq!(pooled_flags([&a, &c]), vec![false, true]);
    }
}
