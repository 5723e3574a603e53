use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Area under the monotone precision envelope at every recall step.
    #[default]
    AllPoint,
    /// Mean envelope precision at recall 0, 0.1, ..., 1.
    ElevenPoint,
}

/// Precision and recall after each ranked prediction.
pub fn pr_curve<T: Scalar>(flags: &[bool], num_gt: usize) -> Vec<(T, T)> {
    let mut tp = 0usize;
    flags
        .iter()
        .enumerate()
        .map(|(k, &hit)| {
            tp += usize::from(hit);
            (
                T::count(tp) / T::count(k + 1),
                T::count(tp) / T::count(num_gt),
            )
        })
        .collect()
}

/// Average precision of a TP/FP sequence already sorted by descending
/// confidence, against `num_gt` ground truths.
pub fn average_precision<T: Scalar>(flags: &[bool], num_gt: usize, interpolation: Interpolation) -> Result<T> {
    if num_gt == 0 {
        return Err(Error::EmptyInput("average precision without ground truth"));
    }
    let curve: Vec<(T, T)> = pr_curve(flags, num_gt);
    let mut envelope: Vec<T> = curve.iter().map(|&(p, _)| p).collect();
    for k in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[k] = envelope[k].max(envelope[k + 1]);
    }
    match interpolation {
        Interpolation::AllPoint => {
            let mut ap = T::zero();
            let mut prev_recall = T::zero();
            for (k, &(_, r)) in curve.iter().enumerate() {
                if r > prev_recall {
                    ap = ap + (r - prev_recall) * envelope[k];
                    prev_recall = r;
                }
            }
            Ok(ap)
        }
        Interpolation::ElevenPoint => {
            let mut ap = T::zero();
            for step in 0..=10 {
                let level = T::count(step) / T::lit(10.0);
                let p = curve
                    .iter()
                    .position(|&(_, r)| r >= level)
                    .map_or(T::zero(), |k| envelope[k]);
                ap = ap + p;
            }
            Ok(ap / T::lit(11.0))
        }
    }
}
