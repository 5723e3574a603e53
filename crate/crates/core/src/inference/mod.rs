//! Prediction assembly. Proposals are routed by negative energy: the known
//! branch is a stock classifier with per-class NMS, the unknown branch runs
//! graph-based box determination over high-GOC candidates. Unknown boxes
//! that duplicate a known box are then dropped.

mod pretest;

pub use pretest::{
    epsilon_grid, known_ap_for_epsilon, pretest_epsilon, pretest_gamma, select_epsilon, EpsilonSelection,
    PretestImage,
};

use serde::{Deserialize, Serialize};

use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::gbd::{determine_boxes, nms};
use crate::geometry::BBox;
use crate::metrics::{KnownPrediction, UnknownPrediction};
use crate::scalar::{total_cmp, Scalar};

/// One detector proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal<T> {
    pub bbox: BBox<T>,
    pub goc: T,
    pub logits: Vec<T>,
}

/// How the unknown branch picks its high-score proposals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateRule<T> {
    TopK(usize),
    GocAtLeast(T),
}

/// Box determination used on the unknown candidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum UnknownSelector<T> {
    Gbd,
    /// Greedy NMS on GOC scores, optionally truncated to the best `top_k`.
    Nms { iou_threshold: T, top_k: Option<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct InferenceConfig<T> {
    /// Negative-energy threshold between the known and unknown branches.
    pub gamma: T,
    /// IoU above which an unknown box is dropped as a duplicate of a known one.
    pub beta: T,
    /// Normalized-cut split threshold.
    pub epsilon: T,
    pub candidate_rule: CandidateRule<T>,
    pub known_score_threshold: T,
    pub known_nms_iou: T,
    pub unknown_selector: UnknownSelector<T>,
}

impl<T: Scalar> Default for InferenceConfig<T> {
    fn default() -> Self {
        Self {
            gamma: T::lit(4.5),
            beta: T::lit(0.98),
            epsilon: T::lit(0.5),
            candidate_rule: CandidateRule::TopK(100),
            known_score_threshold: T::zero(),
            known_nms_iou: T::lit(0.5),
            unknown_selector: UnknownSelector::Gbd,
        }
    }
}

impl<T: Scalar> InferenceConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > T::zero() && self.beta <= T::one()) {
            return Err(Error::InvalidConfig(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if !(self.epsilon >= T::zero() && self.epsilon <= T::two()) {
            return Err(Error::InvalidConfig(format!("epsilon must lie in [0, 2], got {}", self.epsilon)));
        }
        if !self.gamma.is_finite() {
            return Err(Error::InvalidConfig("gamma must be finite".into()));
        }
        if let UnknownSelector::Nms { top_k: Some(0), .. } = self.unknown_selector {
            return Err(Error::InvalidConfig("NMS top_k must be at least 1".into()));
        }
        validate_rule(&self.candidate_rule)
    }
}

fn validate_rule<T: Scalar>(rule: &CandidateRule<T>) -> Result<()> {
    match *rule {
        CandidateRule::TopK(0) => Err(Error::InvalidConfig("top_k must be at least 1".into())),
        CandidateRule::GocAtLeast(tau) if !tau.is_finite() => {
            Err(Error::InvalidConfig(format!("GOC threshold must be finite, got {tau}")))
        }
        _ => Ok(()),
    }
}

/// Final predictions of one image.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionResult<T> {
    pub known: Vec<KnownPrediction<T>>,
    pub unknown: Vec<UnknownPrediction<T>>,
}

/// Splits proposal indices into `(known, unknown)`: negative energy at or
/// above `gamma` goes to the known branch.
pub fn route_proposals<T: Scalar>(negative_energies: &[T], gamma: T) -> (Vec<usize>, Vec<usize>) {
    (0..negative_energies.len()).partition(|&i| negative_energies[i] >= gamma)
}

/// Indices (ascending) of the proposals passed to box determination.
pub fn select_candidates<T: Scalar>(goc: &[T], rule: &CandidateRule<T>) -> Result<Vec<usize>> {
    validate_rule(rule)?;
    let mut out: Vec<usize> = match *rule {
        CandidateRule::TopK(k) => {
            let mut idx: Vec<usize> = (0..goc.len()).collect();
            idx.sort_by(|&a, &b| total_cmp(goc[b], goc[a]).then(a.cmp(&b)));
            idx.truncate(k);
            idx
        }
        CandidateRule::GocAtLeast(tau) => (0..goc.len()).filter(|&i| goc[i] >= tau).collect(),
    };
    out.sort_unstable();
    Ok(out)
}

/// Drops every unknown prediction whose IoU with some known prediction
/// exceeds `beta`. Order is preserved.
pub fn merge<T: Scalar>(
    known: Vec<KnownPrediction<T>>,
    unknown: Vec<UnknownPrediction<T>>,
    beta: T,
) -> DetectionResult<T> {
    let unknown = unknown
        .into_iter()
        .filter(|u| !known.iter().any(|k| u.bbox.iou(&k.bbox).unwrap_or(T::zero()) > beta))
        .collect();
    DetectionResult { known, unknown }
}

/// Most likely class (1-based, lowest on ties) and its softmax probability.
pub fn classify<T: Scalar>(logits: &[T]) -> Option<(u32, T)> {
    let (best, &top) = logits
        .iter()
        .enumerate()
        .reduce(|a, b| if total_cmp(*b.1, *a.1).is_gt() { b } else { a })?;
    let denom: T = logits.iter().map(|&f| (f - top).exp()).sum();
    Some((best as u32 + 1, T::one() / denom))
}

fn known_branch<T: Scalar>(proposals: &[Proposal<T>], indices: &[usize], cfg: &InferenceConfig<T>) -> Result<Vec<KnownPrediction<T>>> {
    let mut scored: Vec<KnownPrediction<T>> = indices
        .iter()
        .filter_map(|&i| {
            let p = &proposals[i];
            classify(&p.logits).map(|(label, score)| KnownPrediction { bbox: p.bbox, label, score })
        })
        .filter(|k| k.score >= cfg.known_score_threshold)
        .collect();
    scored.sort_by_key(|a| a.label);
    let mut out = Vec::new();
    for chunk in scored.chunk_by(|a, b| a.label == b.label) {
        let boxes: Vec<BBox<T>> = chunk.iter().map(|k| k.bbox).collect();
        let scores: Vec<T> = chunk.iter().map(|k| k.score).collect();
        out.extend(nms(&boxes, &scores, cfg.known_nms_iou)?.into_iter().map(|i| chunk[i]));
    }
    out.sort_by(|a, b| total_cmp(b.score, a.score).then(a.label.cmp(&b.label)));
    Ok(out)
}

fn unknown_branch<T: Scalar>(
    proposals: &[Proposal<T>],
    indices: &[usize],
    cfg: &InferenceConfig<T>,
) -> Result<Vec<UnknownPrediction<T>>> {
    let goc: Vec<T> = indices.iter().map(|&i| proposals[i].goc).collect();
    let chosen: Vec<usize> = select_candidates(&goc, &cfg.candidate_rule)?
        .into_iter()
        .map(|k| indices[k])
        .collect();
    let boxes: Vec<BBox<T>> = chosen.iter().map(|&i| proposals[i].bbox).collect();
    let scores: Vec<T> = chosen.iter().map(|&i| proposals[i].goc).collect();
    let mut picked = match cfg.unknown_selector {
        UnknownSelector::Gbd => determine_boxes(&boxes, &scores, cfg.epsilon)?,
        UnknownSelector::Nms { iou_threshold, top_k } => {
            let mut kept = nms(&boxes, &scores, iou_threshold)?;
            if let Some(k) = top_k {
                kept.truncate(k);
            }
            kept
        }
    };
    picked.sort_by(|&a, &b| total_cmp(scores[b], scores[a]).then(a.cmp(&b)));
    Ok(picked
        .into_iter()
        .map(|k| UnknownPrediction { bbox: boxes[k], score: scores[k] })
        .collect())
}

/// Runs both branches on one image's proposals and merges the results.
pub fn run_pipeline<T: Scalar>(
    proposals: &[Proposal<T>],
    model: &EnergyModel<T>,
    cfg: &InferenceConfig<T>,
) -> Result<DetectionResult<T>> {
    cfg.validate()?;
    let ne: Vec<T> = proposals
        .iter()
        .map(|p| model.negative_energy(&p.logits))
        .collect::<Result<_>>()?;
    let (known_idx, unknown_idx) = route_proposals(&ne, cfg.gamma);
    let known = known_branch(proposals, &known_idx, cfg)?;
    let unknown = unknown_branch(proposals, &unknown_idx, cfg)?;
    Ok(merge(known, unknown, cfg.beta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox<f64> {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn routing_examples() {
        let (k, u) = route_proposals(&[5.0, 3.0, 4.5], 4.5);
        assert_eq!(k, vec![0, 2]);
        assert_eq!(u, vec![1]);
    }

    #[test]
    fn candidate_examples() {
        let s = [0.9, 0.1, 0.8];
        assert_eq!(select_candidates(&s, &CandidateRule::TopK(2)).unwrap(), vec![0, 2]);
        assert_eq!(select_candidates(&s, &CandidateRule::GocAtLeast(0.5)).unwrap(), vec![0, 2]);
        assert_eq!(select_candidates(&s, &CandidateRule::TopK(10)).unwrap(), vec![0, 1, 2]);
        assert!(select_candidates(&s, &CandidateRule::TopK(0)).is_err());
        assert!(select_candidates(&s, &CandidateRule::GocAtLeast(f64::NAN)).is_err());
    }

    #[test]
    fn merge_examples() {
        let kb = b(0., 0., 10., 10.);
        let known = vec![KnownPrediction { bbox: kb, label: 1, score: 0.9 }];
        let unknown = vec![
            UnknownPrediction { bbox: kb, score: 0.8 },
            UnknownPrediction { bbox: b(50., 50., 60., 60.), score: 0.7 },
            UnknownPrediction { bbox: b(5., 5., 15., 15.), score: 0.6 },
        ];
        let r = merge(known, unknown, 0.98);
        assert_eq!(r.unknown.len(), 2);
        assert_eq!(r.unknown[0].score, 0.7);
        assert_eq!(r.unknown[1].score, 0.6);
        assert_eq!(r.known.len(), 1);
    }

    #[test]
    fn classify_picks_softmax_max() {
        let (label, p) = classify(&[0.0f64, 0.0]).unwrap();
        assert_eq!(label, 1);
        assert!((p - 0.5).abs() < 1e-12);
        assert_eq!(classify(&[1.0, 3.0, 2.0f64]).unwrap().0, 2);
        assert!(classify::<f64>(&[]).is_none());
    }

    #[test]
    fn pipeline_examples() {
        let model = EnergyModel::uniform(2).unwrap();
        let cfg = InferenceConfig {
            candidate_rule: CandidateRule::GocAtLeast(0.5),
            ..InferenceConfig::default()
        };
        // nothing above the candidate rule
        let low = vec![Proposal { bbox: b(0., 0., 10., 10.), goc: 0.1, logits: vec![0.0, 0.0] }];
        let r = run_pipeline(&low, &model, &cfg).unwrap();
        assert!(r.unknown.is_empty() && r.known.is_empty());

        // one isolated high-GOC proposal in the unknown branch
        let one = vec![Proposal { bbox: b(0., 0., 10., 10.), goc: 0.9, logits: vec![1.0, 1.0] }];
        let r = run_pipeline(&one, &model, &cfg).unwrap();
        assert_eq!(r.unknown.len(), 1);
        assert_eq!(r.unknown[0].score, 0.9);

        // a confident known proposal suppresses its duplicate unknown box
        let both = vec![
            Proposal { bbox: b(0., 0., 10., 10.), goc: 0.9, logits: vec![9.0, 0.0] },
            Proposal { bbox: b(0., 0., 10., 10.), goc: 0.95, logits: vec![1.0, 1.0] },
            Proposal { bbox: b(0.5, 0., 10.5, 10.), goc: 0.8, logits: vec![8.0, 0.0] },
        ];
        let r = run_pipeline(&both, &model, &cfg).unwrap();
        assert_eq!(r.known.len(), 1);
        assert_eq!(r.known[0].label, 1);
        assert!(r.unknown.is_empty());
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = InferenceConfig::<f64> { beta: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = InferenceConfig::<f64> { epsilon: 3.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
