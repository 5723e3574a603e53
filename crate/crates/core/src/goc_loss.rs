//! Generalized-object-confidence losses over partitioned samples, each
//! returned together with its gradient with respect to the input scores.
//!
//! Reductions always run in input order so repeated evaluations are
//! bit-identical.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::sampling::{GroundTruthInstance, GtSampleGroups};
use crate::scalar::Scalar;

/// Normalizer applied to the per-group contrastive sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConNormalization {
    /// `floor(2 / |B|)`: 2 for singletons, 1 for pairs, 0 for larger groups.
    #[default]
    LiteralFloor,
    /// `2 / (|B| (|B| - 1))`, the mean over unordered pairs.
    PairwiseMean,
}

impl ConNormalization {
    fn factor<T: Scalar>(self, n: usize) -> T {
        match self {
            ConNormalization::LiteralFloor => T::count(2 / n.max(1)),
            ConNormalization::PairwiseMean if n < 2 => T::zero(),
            ConNormalization::PairwiseMean => T::two() / T::count(n * (n - 1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct GocLossConfig<T> {
    /// Ceiling for partial and oversized scores.
    pub delta: T,
    /// Contrastive margin.
    pub zeta: T,
    pub con_normalization: ConNormalization,
}

impl<T: Scalar> Default for GocLossConfig<T> {
    fn default() -> Self {
        Self {
            delta: T::lit(0.5),
            zeta: T::lit(0.01),
            con_normalization: ConNormalization::LiteralFloor,
        }
    }
}

impl<T: Scalar> GocLossConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > T::zero() && self.delta < T::one()) {
            return Err(Error::InvalidConfig(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.zeta.is_nan() || self.zeta <= T::zero() {
            return Err(Error::InvalidConfig(format!("zeta must be positive, got {}", self.zeta)));
        }
        Ok(())
    }
}

/// Loss value with one gradient entry per input score, shaped like the input
/// groups.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad<T> {
    pub value: T,
    pub grads: Vec<Vec<T>>,
}

impl<T: Scalar> LossGrad<T> {
    fn zeros_like<S>(groups: &[Vec<S>]) -> Self {
        Self {
            value: T::zero(),
            grads: groups.iter().map(|g| vec![T::zero(); g.len()]).collect(),
        }
    }
}

/// Score and ground-truth IoU of one complete-object sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample<T> {
    pub score: T,
    pub iou: T,
}

/// Mean squared distance of complete-object scores from one, averaged per
/// group and then over groups.
pub fn positive_loss<T: Scalar>(groups: &[Vec<T>]) -> Result<LossGrad<T>> {
    if groups.is_empty() {
        return Err(Error::EmptyInput("positive loss needs at least one group"));
    }
    let k = T::count(groups.len());
    let mut out = LossGrad::zeros_like(groups);
    for (scores, grads) in groups.iter().zip(out.grads.iter_mut()) {
        if scores.is_empty() {
            return Err(Error::EmptyInput("positive loss group without complete samples"));
        }
        let n = T::count(scores.len());
        let mut sum = T::zero();
        for (&s, g) in scores.iter().zip(grads.iter_mut()) {
            let d = s - T::one();
            sum = sum + d * d;
            *g = T::two() * d / (k * n);
        }
        out.value = out.value + sum / n;
    }
    out.value = out.value / k;
    Ok(out)
}

/// Hinge suppression of partial/oversized scores above `delta`. Empty groups
/// are left out of the group average; all-empty input gives zero.
pub fn negative_loss<T: Scalar>(groups: &[Vec<T>], delta: T) -> Result<LossGrad<T>> {
    let mut out = LossGrad::zeros_like(groups);
    let nonempty = groups.iter().filter(|g| !g.is_empty()).count();
    if nonempty == 0 {
        return Ok(out);
    }
    let k = T::count(nonempty);
    for (scores, grads) in groups.iter().zip(out.grads.iter_mut()) {
        if scores.is_empty() {
            continue;
        }
        let n = T::count(scores.len());
        let mut sum = T::zero();
        for (&s, g) in scores.iter().zip(grads.iter_mut()) {
            if s > delta {
                sum = sum + (s - delta);
                *g = T::one() / (k * n);
            }
        }
        out.value = out.value + sum / n;
    }
    out.value = out.value / k;
    Ok(out)
}

/// Pairwise ranking hinge inside each complete-object group: a box with
/// higher IoU should score at least `zeta` above one with lower IoU. Each
/// unordered pair is counted once and equal-IoU pairs are skipped.
pub fn contrastive_loss<T: Scalar>(
    groups: &[Vec<ScoredSample<T>>],
    zeta: T,
    normalization: ConNormalization,
) -> Result<LossGrad<T>> {
    if groups.is_empty() {
        return Err(Error::EmptyInput("contrastive loss needs at least one group"));
    }
    let k = T::count(groups.len());
    let mut out = LossGrad::zeros_like(groups);
    for (samples, grads) in groups.iter().zip(out.grads.iter_mut()) {
        let scale: T = normalization.factor(samples.len());
        let mut sum = T::zero();
        for a in 0..samples.len() {
            for b in (a + 1)..samples.len() {
                // (lo, hi): lo has the smaller IoU
                let (lo, hi) = match samples[a].iou.partial_cmp(&samples[b].iou) {
                    Some(std::cmp::Ordering::Less) => (a, b),
                    Some(std::cmp::Ordering::Greater) => (b, a),
                    _ => continue,
                };
                let margin = samples[lo].score - samples[hi].score + zeta;
                if margin > T::zero() {
                    sum = sum + margin;
                    let g = scale / k;
                    grads[lo] = grads[lo] + g;
                    grads[hi] = grads[hi] - g;
                }
            }
        }
        out.value = out.value + scale * sum;
    }
    out.value = out.value / k;
    Ok(out)
}

pub fn goc_loss<T: Scalar>(pos: T, neg: T, con: T) -> T {
    neg + pos + con
}

/// Which supervised group a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupTag {
    Complete,
    Partial,
    Oversized,
}

/// One supervised proposal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GocSample<T> {
    pub proposal: usize,
    pub score: T,
    pub iou_to_gt: T,
    pub group_tag: GroupTag,
}

/// Supervised samples of one image, grouped by ground truth. Ground truths
/// without any member in a group simply have an empty list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GocSamples<T> {
    pub complete: Vec<Vec<GocSample<T>>>,
    pub partial_oversized: Vec<Vec<GocSample<T>>>,
}

impl<T: Scalar> GocSamples<T> {
    /// Collects the supervised samples from a partition. A proposal in both
    /// the partial and the oversized set appears once, tagged partial.
    pub fn from_partition(
        groups: &[GtSampleGroups],
        proposals: &[BBox<T>],
        scores: &[T],
        gts: &[GroundTruthInstance<T>],
    ) -> Result<Self> {
        if scores.len() != proposals.len() {
            return Err(Error::DimensionMismatch {
                expected: proposals.len(),
                actual: scores.len(),
            });
        }
        if groups.len() != gts.len() {
            return Err(Error::DimensionMismatch {
                expected: gts.len(),
                actual: groups.len(),
            });
        }
        let mut out = Self::default();
        for (grp, gt) in groups.iter().zip(gts) {
            let sample = |i: usize, tag| -> Result<GocSample<T>> {
                Ok(GocSample {
                    proposal: i,
                    score: scores[i],
                    iou_to_gt: proposals[i].iou(&gt.bbox)?,
                    group_tag: tag,
                })
            };
            out.complete.push(
                grp.complete
                    .iter()
                    .map(|&i| sample(i, GroupTag::Complete))
                    .collect::<Result<_>>()?,
            );
            out.partial_oversized.push(
                grp.partial_or_oversized()
                    .into_iter()
                    .map(|i| {
                        let tag = if grp.partial.contains(&i) {
                            GroupTag::Partial
                        } else {
                            GroupTag::Oversized
                        };
                        sample(i, tag)
                    })
                    .collect::<Result<_>>()?,
            );
        }
        Ok(out)
    }
}

/// All GOC loss components of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GocLossReport<T> {
    pub pos: T,
    pub neg: T,
    pub con: T,
    pub total: T,
    /// Gradient of `total` with respect to every proposal score of the image.
    pub grad: Vec<T>,
}

/// Evaluates the three GOC losses on one image's samples. Ground truths
/// without complete members are left out of the positive and contrastive
/// averages; an image without any complete sample contributes zero to both.
pub fn image_goc_loss<T: Scalar>(
    samples: &GocSamples<T>,
    num_proposals: usize,
    cfg: &GocLossConfig<T>,
) -> Result<GocLossReport<T>> {
    cfg.validate()?;
    let mut grad = vec![T::zero(); num_proposals];
    let mut scatter = |groups: &[&Vec<GocSample<T>>], g: &LossGrad<T>| {
        for (grp, gg) in groups.iter().zip(&g.grads) {
            for (s, &v) in grp.iter().zip(gg) {
                grad[s.proposal] = grad[s.proposal] + v;
            }
        }
    };

    let complete: Vec<&Vec<GocSample<T>>> = samples.complete.iter().filter(|g| !g.is_empty()).collect();
    let (pos, con) = if complete.is_empty() {
        (T::zero(), T::zero())
    } else {
        let scores: Vec<Vec<T>> = complete.iter().map(|g| g.iter().map(|s| s.score).collect()).collect();
        let pairs: Vec<Vec<ScoredSample<T>>> = complete
            .iter()
            .map(|g| g.iter().map(|s| ScoredSample { score: s.score, iou: s.iou_to_gt }).collect())
            .collect();
        let pos = positive_loss(&scores)?;
        let con = contrastive_loss(&pairs, cfg.zeta, cfg.con_normalization)?;
        scatter(&complete, &pos);
        scatter(&complete, &con);
        (pos.value, con.value)
    };

    let po: Vec<&Vec<GocSample<T>>> = samples.partial_oversized.iter().collect();
    let neg_scores: Vec<Vec<T>> = po.iter().map(|g| g.iter().map(|s| s.score).collect()).collect();
    let neg = negative_loss(&neg_scores, cfg.delta)?;
    scatter(&po, &neg);

    Ok(GocLossReport {
        pos,
        neg: neg.value,
        con,
        total: goc_loss(pos, neg.value, con),
        grad,
    })
}
