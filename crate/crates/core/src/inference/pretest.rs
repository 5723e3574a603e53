use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::gbd::determine_boxes;
use crate::geometry::BBox;
use crate::metrics::{map_range, Interpolation, LabeledImage};
use crate::scalar::{total_cmp, Scalar};

use super::{classify, select_candidates, InferenceConfig, Proposal};

/// Value such that at most 5% of `values` lie strictly below it:
/// the `ceil(0.05 N)`-th smallest.
pub fn pretest_gamma<T: Scalar>(values: &[T]) -> Result<T> {
    if values.is_empty() {
        return Err(Error::EmptyInput("pretest negative energies"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("pretest negative energies must be finite".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| total_cmp(*a, *b));
    let rank = (values.len() * 5).div_ceil(100).max(1);
    Ok(sorted[rank - 1])
}

/// Candidate thresholds 0.1, 0.2, ..., 1.0.
pub fn epsilon_grid<T: Scalar>() -> Vec<T> {
    (1..=10).map(|i| T::count(i) / T::lit(10.0)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSelection<T> {
    pub epsilon: T,
    /// `(epsilon, known AP)` for every grid value.
    pub curve: Vec<(T, T)>,
}

/// Scores every grid value with `metric` and keeps the best one, the
/// smallest epsilon on ties.
pub fn select_epsilon<T: Scalar, F>(grid: &[T], mut metric: F) -> Result<EpsilonSelection<T>>
where
    F: FnMut(T) -> Result<T>,
{
    if grid.is_empty() {
        return Err(Error::EmptyInput("epsilon grid"));
    }
    let curve = grid
        .iter()
        .map(|&e| metric(e).map(|ap| (e, ap)))
        .collect::<Result<Vec<_>>>()?;
    let mut best = curve[0];
    for &(e, ap) in &curve[1..] {
        if ap > best.1 || (ap == best.1 && e < best.0) {
            best = (e, ap);
        }
    }
    Ok(EpsilonSelection { epsilon: best.0, curve })
}

/// An image from the held-out slice: proposals plus known-class ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PretestImage<T> {
    pub proposals: Vec<Proposal<T>>,
    pub gts: Vec<(BBox<T>, u32)>,
}

/// Known-class AP at IoU 0.5 when box determination runs on every pretest
/// proposal with the given `epsilon`. Each kept box takes its argmax class
/// and its GOC score as confidence.
pub fn known_ap_for_epsilon<T: Scalar>(
    images: &[PretestImage<T>],
    cfg: &InferenceConfig<T>,
    epsilon: T,
) -> Result<T> {
    let labeled = images
        .iter()
        .map(|im| {
            let goc: Vec<T> = im.proposals.iter().map(|p| p.goc).collect();
            let chosen = select_candidates(&goc, &cfg.candidate_rule)?;
            let boxes: Vec<BBox<T>> = chosen.iter().map(|&i| im.proposals[i].bbox).collect();
            let scores: Vec<T> = chosen.iter().map(|&i| goc[i]).collect();
            let kept = determine_boxes(&boxes, &scores, epsilon)?;
            let predictions = kept
                .into_iter()
                .filter_map(|k| {
                    let p = &im.proposals[chosen[k]];
                    classify(&p.logits).map(|(label, _)| (p.bbox, label, p.goc))
                })
                .collect();
            Ok(LabeledImage { predictions, gts: im.gts.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    map_range(&labeled, &[T::lit(0.5)], Interpolation::AllPoint)?
        .ok_or(Error::EmptyInput("pretest ground truth"))
}

/// Picks epsilon from the standard grid by known-class AP on the pretest set.
pub fn pretest_epsilon<T: Scalar>(
    images: &[PretestImage<T>],
    model: &EnergyModel<T>,
    cfg: &InferenceConfig<T>,
) -> Result<EpsilonSelection<T>> {
    if images.is_empty() {
        return Err(Error::EmptyInput("pretest images"));
    }
    let c = model.num_classes();
    for im in images {
        if let Some(p) = im.proposals.iter().find(|p| p.logits.len() != c) {
            return Err(Error::DimensionMismatch { expected: c, actual: p.logits.len() });
        }
    }
    select_epsilon(&epsilon_grid(), |e| known_ap_for_epsilon(images, cfg, e))
}
