//! Training-sample partition of proposals into complete, partial, oversized
//! and non-object groups per ground-truth instance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::scalar::{total_cmp, Scalar};

/// A labeled ground-truth box. Labels `1..=C` are known classes, `C + 1` is
/// the unknown sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthInstance<T> {
    pub bbox: BBox<T>,
    pub label: u32,
}

impl<T: Scalar> GroundTruthInstance<T> {
    pub fn new(bbox: BBox<T>, label: u32, num_classes: u32) -> Result<Self> {
        if label < 1 || label > num_classes + 1 {
            return Err(Error::InvalidConfig(format!(
                "label {label} outside 1..={}",
                num_classes + 1
            )));
        }
        if bbox.area() <= T::zero() {
            return Err(Error::DegenerateArea("ground-truth box with zero area"));
        }
        Ok(Self { bbox, label })
    }

    pub fn is_unknown(&self, num_classes: u32) -> bool {
        self.label == num_classes + 1
    }
}

/// Thresholds of the partition rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct PartitionConfig<T> {
    pub e1: T,
    pub e2: T,
    pub rho: T,
}

impl<T: Scalar> Default for PartitionConfig<T> {
    fn default() -> Self {
        Self {
            e1: T::zero(),
            e2: T::lit(0.5),
            rho: T::lit(0.5),
        }
    }
}

impl<T: Scalar> PartitionConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: T| v >= T::zero() && v <= T::one();
        if !(unit(self.e1) && unit(self.e2) && unit(self.rho) && self.e1 <= self.e2) {
            return Err(Error::InvalidConfig(format!(
                "partition thresholds need 0 <= e1 <= e2 <= 1 and 0 <= rho <= 1 (e1={}, e2={}, rho={})",
                self.e1, self.e2, self.rho
            )));
        }
        Ok(())
    }

    /// Non-object test. With `e1 = 0` the strict inequality is empty, so
    /// zero-overlap proposals are taken as non-objects instead.
    pub fn is_non_object(&self, iou: T) -> bool {
        if self.e1 > T::zero() {
            iou < self.e1
        } else {
            iou == T::zero()
        }
    }
}

/// Sample groups of one ground-truth instance. All sets hold proposal indices
/// in ascending order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GtSampleGroups {
    pub complete: Vec<usize>,
    pub partial: Vec<usize>,
    pub oversized: Vec<usize>,
    pub non_object: Vec<usize>,
    /// Mid-band proposals that satisfy neither the IoP nor the IoC condition.
    pub unassigned: Vec<usize>,
}

impl GtSampleGroups {
    /// Deduplicated union of partial and oversized members.
    pub fn partial_or_oversized(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.partial.iter().chain(&self.oversized).copied().collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn members(&self) -> Vec<usize> {
        let mut out = self.complete.clone();
        out.extend(self.partial_or_oversized());
        out.extend(&self.non_object);
        out.extend(&self.unassigned);
        out.sort_unstable();
        out
    }
}

/// Per-image partition: one entry per ground-truth instance.
pub type SampleGroups = Vec<GtSampleGroups>;

/// Assigns every proposal to the ground truth of maximum IoU, lowest index on
/// ties. Returns one ascending proposal-index list per ground truth.
pub fn assign_to_gt<T: Scalar>(
    proposals: &[BBox<T>],
    gts: &[GroundTruthInstance<T>],
) -> Result<Vec<Vec<usize>>> {
    if gts.is_empty() {
        return Err(Error::EmptyInput("no ground-truth instances to assign to"));
    }
    let mut groups = vec![Vec::new(); gts.len()];
    for (i, p) in proposals.iter().enumerate() {
        let mut best = 0;
        let mut best_iou = p.iou(&gts[0].bbox)?;
        for (k, gt) in gts.iter().enumerate().skip(1) {
            let v = p.iou(&gt.bbox)?;
            if v > best_iou {
                best = k;
                best_iou = v;
            }
        }
        groups[best].push(i);
    }
    Ok(groups)
}

/// Splits the proposals assigned to `gt` into the sample groups.
pub fn partition<T: Scalar>(
    group: &[usize],
    proposals: &[BBox<T>],
    gt: &GroundTruthInstance<T>,
    cfg: &PartitionConfig<T>,
) -> Result<GtSampleGroups> {
    cfg.validate()?;
    let mut out = GtSampleGroups::default();
    let mut sorted = group.to_vec();
    sorted.sort_unstable();
    for i in sorted {
        let p = proposals.get(i).ok_or(Error::DimensionMismatch {
            expected: proposals.len(),
            actual: i + 1,
        })?;
        let iou = p.iou(&gt.bbox)?;
        if cfg.is_non_object(iou) {
            out.non_object.push(i);
        } else if iou >= cfg.e2 {
            out.complete.push(i);
        } else {
            let partial = p.iop(&gt.bbox)? >= cfg.rho;
            let oversized = p.ioc(&gt.bbox)? >= cfg.rho;
            if partial {
                out.partial.push(i);
            }
            if oversized {
                out.oversized.push(i);
            }
            if !partial && !oversized {
                out.unassigned.push(i);
            }
        }
    }
    Ok(out)
}

/// Assignment followed by partition for every ground truth of one image.
pub fn partition_image<T: Scalar>(
    proposals: &[BBox<T>],
    gts: &[GroundTruthInstance<T>],
    cfg: &PartitionConfig<T>,
) -> Result<SampleGroups> {
    cfg.validate()?;
    let assigned = assign_to_gt(proposals, gts)?;
    assigned
        .iter()
        .zip(gts)
        .map(|(group, gt)| partition(group, proposals, gt, cfg))
        .collect()
}

/// IoU of each proposal in `indices` with `gt`, in the given order.
pub fn ious_to<T: Scalar>(proposals: &[BBox<T>], indices: &[usize], gt: &BBox<T>) -> Result<Vec<T>> {
    indices.iter().map(|&i| proposals[i].iou(gt)).collect()
}

/// Index of the maximum-IoU ground truth of a single box.
pub fn best_gt<T: Scalar>(b: &BBox<T>, gts: &[GroundTruthInstance<T>]) -> Option<(usize, T)> {
    gts.iter()
        .enumerate()
        .map(|(k, g)| (k, b.iou(&g.bbox).unwrap_or(T::zero())))
        .fold(None, |acc: Option<(usize, T)>, (k, v)| match acc {
            Some((_, bv)) if total_cmp(v, bv).is_le() => acc,
            _ => Some((k, v)),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox<f64> {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    fn gt(bx: BBox<f64>) -> GroundTruthInstance<f64> {
        GroundTruthInstance::new(bx, 1, 1).unwrap()
    }

    #[test]
    fn assign_examples() {
        let g0 = gt(b(0., 0., 10., 10.));
        let g1 = gt(b(20., 0., 30., 10.));
        assert_eq!(assign_to_gt(&[b(1., 1., 9., 9.)], &[g0]).unwrap(), vec![vec![0]]);

        // 0.6 to g0 against 0.3 to g1: box (0,0,10,6) vs g0 has IoU 0.6.
        let a = gt(b(0., 0., 10., 10.));
        let c = gt(b(0., 0., 10., 20.));
        let p = b(0., 0., 10., 6.);
        assert!((p.iou(&a.bbox).unwrap() - 0.6).abs() < 1e-12);
        assert!((p.iou(&c.bbox).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(assign_to_gt(&[p], &[a, c]).unwrap(), vec![vec![0], vec![]]);

        // Equal IoU 0.4 to both: lowest index wins.
        let p = b(0., 0., 10., 4.);
        let twin = gt(b(0., 0., 10., 10.));
        assert_eq!(assign_to_gt(&[p], &[twin, twin]).unwrap(), vec![vec![0], vec![]]);

        assert!(assign_to_gt::<f64>(&[p], &[]).is_err());
        // Zero IoU everywhere still lands in the first group.
        assert_eq!(assign_to_gt(&[b(50., 50., 51., 51.)], &[g0, g1]).unwrap()[0], vec![0]);
    }

    #[test]
    fn partition_examples() {
        let g = gt(b(0., 0., 10., 10.));
        let props = [
            b(0., 0., 10., 10.),
            b(0., 0., 10., 4.),
            b(-5., -5., 15., 15.),
            b(30., 30., 40., 40.),
            b(5., 5., 15., 15.),
        ];
        let cfg = PartitionConfig::default();
        let out = partition(&[0, 1, 2, 3, 4], &props, &g, &cfg).unwrap();
        assert_eq!(out.complete, vec![0]);
        assert_eq!(out.partial, vec![1]);
        assert_eq!(out.oversized, vec![2]);
        assert_eq!(out.non_object, vec![3]);
        // IoU 25/175, IoP = IoC = 0.25.
        assert_eq!(out.unassigned, vec![4]);
    }

    #[test]
    fn positive_e1_uses_strict_inequality() {
        let g = gt(b(0., 0., 10., 10.));
        let props = [b(0., 0., 10., 1.), b(0., 0., 10., 4.)];
        let cfg = PartitionConfig { e1: 0.2, e2: 0.5, rho: 0.5 };
        let out = partition(&[0, 1], &props, &g, &cfg).unwrap();
        assert_eq!(out.non_object, vec![0]);
        assert_eq!(out.partial, vec![1]);
    }

    #[test]
    fn rejects_bad_config() {
        let g = gt(b(0., 0., 10., 10.));
        let cfg = PartitionConfig { e1: 0.6, e2: 0.5, rho: 0.5 };
        assert!(partition(&[], &[], &g, &cfg).is_err());
        let cfg = PartitionConfig { e1: 0.0, e2: 0.5, rho: 1.5 };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_rho_puts_mid_band_in_both() {
        let g = gt(b(0., 0., 10., 10.));
        let props = [b(5., 5., 15., 15.), b(0., 0., 10., 4.)];
        let cfg = PartitionConfig { e1: 0.0, e2: 0.5, rho: 0.0 };
        let out = partition(&[0, 1], &props, &g, &cfg).unwrap();
        assert_eq!(out.partial, vec![0, 1]);
        assert_eq!(out.oversized, vec![0, 1]);
        assert_eq!(out.partial_or_oversized(), vec![0, 1]);
        assert!(out.unassigned.is_empty());
    }

    fn arb_box() -> impl Strategy<Value = BBox<f64>> {
        (0.0..60.0f64, 0.0..60.0f64, 1.0..30.0f64, 1.0..30.0f64)
            .prop_map(|(x, y, w, h)| BBox::from_xywh(x, y, w, h).unwrap())
    }

    proptest! {
        #[test]
        fn raising_e2_never_grows_complete(
            props in prop::collection::vec(arb_box(), 1..30),
            g in arb_box(),
            lo in 0.0..1.0f64,
            hi in 0.0..1.0f64,
        ) {
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            let g = gt(g);
            let idx: Vec<usize> = (0..props.len()).collect();
            let a = partition(&idx, &props, &g, &PartitionConfig { e1: 0.0, e2: lo, rho: 0.5 }).unwrap();
            let c = partition(&idx, &props, &g, &PartitionConfig { e1: 0.0, e2: hi, rho: 0.5 }).unwrap();
            prop_assert!(c.complete.iter().all(|i| a.complete.contains(i)));
            let mid = |s: &GtSampleGroups| {
                let mut v = s.partial_or_oversized();
                v.extend(&s.unassigned);
                v
            };
            let (ma, mc) = (mid(&a), mid(&c));
            prop_assert!(ma.iter().all(|i| mc.contains(i)));
        }

        #[test]
        fn complete_members_keep_argmax(
            props in prop::collection::vec(arb_box(), 1..30),
            gts in prop::collection::vec(arb_box(), 1..5),
        ) {
            let gts: Vec<_> = gts.into_iter().map(gt).collect();
            let groups = partition_image(&props, &gts, &PartitionConfig::default()).unwrap();
            for (k, grp) in groups.iter().enumerate() {
                for &i in &grp.complete {
                    let own = props[i].iou(&gts[k].bbox).unwrap();
                    prop_assert!(gts.iter().all(|g| props[i].iou(&g.bbox).unwrap() <= own));
                }
            }
            let mut all: Vec<usize> = groups.iter().flat_map(|g| g.members()).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..props.len()).collect::<Vec<_>>());
        }
    }
}
