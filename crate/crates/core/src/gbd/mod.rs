//! Graph-based top-scoring box determination.
//!
//! High-score proposals become nodes of an IoU graph. The graph is split by
//! recursive two-way normalized cuts and the best-scoring proposal of every
//! final subgraph is kept. Greedy NMS is provided as the comparison baseline.

mod graph;
mod ncut;

pub use graph::{build_graph, ProposalGraph};
pub use ncut::{
    ncut_value, recursive_partition, recursive_partition_traced, spectral_bipartition, Bipartition,
    Partition, SplitRecord,
};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::scalar::{total_cmp, Scalar};

/// Index of the highest score in each group, lowest index on ties.
pub fn select_top<T: Scalar>(partition: &Partition, scores: &[T]) -> Result<Vec<usize>> {
    partition
        .groups
        .iter()
        .map(|grp| {
            let mut best: Option<usize> = None;
            for &i in grp {
                let s = *scores.get(i).ok_or(Error::DimensionMismatch {
                    expected: i + 1,
                    actual: scores.len(),
                })?;
                if best.is_none_or(|b| total_cmp(s, scores[b]).is_gt() || (s == scores[b] && i < b)) {
                    best = Some(i);
                }
            }
            best.ok_or(Error::EmptyInput("empty partition group"))
        })
        .collect()
}

/// Greedy NMS: walk boxes by descending score (index on ties) and keep a box
/// unless its IoU with an already kept box exceeds `iou_threshold`.
pub fn nms<T: Scalar>(boxes: &[BBox<T>], scores: &[T], iou_threshold: T) -> Result<Vec<usize>> {
    if boxes.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: boxes.len(),
            actual: scores.len(),
        });
    }
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| total_cmp(scores[b], scores[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let suppressed = kept
            .iter()
            .any(|&k| boxes[i].iou(&boxes[k]).unwrap_or(T::zero()) > iou_threshold);
        if !suppressed {
            kept.push(i);
        }
    }
    Ok(kept)
}

/// Full determination on one set of candidate boxes: graph, recursive
/// partition, top-1 per group. Returns indices into `boxes`.
pub fn determine_boxes<T: Scalar>(boxes: &[BBox<T>], scores: &[T], epsilon: T) -> Result<Vec<usize>> {
    if boxes.is_empty() {
        return Ok(Vec::new());
    }
    let g = build_graph(boxes)?;
    let partition = recursive_partition(&g, epsilon)?;
    select_top(&partition, scores)
}
