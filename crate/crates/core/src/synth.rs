//! Seeded synthetic scenes: ground-truth objects, jittered proposals around
//! each one, and background distractors, with GOC scores and logits drawn
//! from per-population score profiles.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::inference::Proposal;
use crate::io::{AnnotatedImage, AnnotationFile, DumpImage, ProposalDump};
use crate::sampling::GroundTruthInstance;

const MAX_TRIES: usize = 1000;

/// Mean and standard deviation of a normally distributed score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreProfile {
    pub mean: f64,
    pub spread: f64,
}

impl ScoreProfile {
    pub const fn new(mean: f64, spread: f64) -> Self {
        Self { mean, spread }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.spread == 0.0 {
            return self.mean;
        }
        Normal::new(self.mean, self.spread).expect("validated spread").sample(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSceneSpec {
    pub seed: u64,
    pub num_images: usize,
    pub num_classes: usize,
    /// Image width and height.
    pub extent: [f64; 2],
    /// Inclusive range of objects per image.
    pub objects: [usize; 2],
    /// Range of object side lengths.
    pub object_size: [f64; 2],
    /// Inclusive range of proposals generated around each object.
    pub proposals_per_object: [usize; 2],
    /// Maximum corner shift as a fraction of the object side.
    pub jitter: f64,
    /// Jittered proposals are redrawn until their IoU with the object reaches this.
    pub min_proposal_iou: f64,
    /// Probability that an object belongs to the unknown class.
    pub unknown_probability: f64,
    /// When set, objects come in overlapping pairs whose IoU is drawn from
    /// this range; different pairs do not touch.
    pub pair_iou: Option<[f64; 2]>,
    /// Background proposals per image.
    pub distractors: usize,
    /// GOC of an object proposal is `iou * mean + noise`.
    pub object_goc: ScoreProfile,
    pub distractor_goc: ScoreProfile,
    pub known_energy: ScoreProfile,
    pub unknown_energy: ScoreProfile,
    pub distractor_energy: ScoreProfile,
    /// Logit gap between the true class and the others for known objects.
    pub known_margin: f64,
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            num_images: 1,
            num_classes: 3,
            extent: [640.0, 480.0],
            objects: [1, 4],
            object_size: [40.0, 120.0],
            proposals_per_object: [3, 8],
            jitter: 0.0,
            min_proposal_iou: 0.7,
            unknown_probability: 0.5,
            pair_iou: None,
            distractors: 10,
            object_goc: ScoreProfile::new(1.0, 0.0),
            distractor_goc: ScoreProfile::new(0.0, 0.0),
            known_energy: ScoreProfile::new(9.0, 0.5),
            unknown_energy: ScoreProfile::new(2.0, 0.5),
            distractor_energy: ScoreProfile::new(-2.0, 0.5),
            known_margin: 4.0,
        }
    }
}

impl SyntheticSceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_classes == 0 {
            return bad("num_classes must be at least 1".into());
        }
        if !(self.extent[0] > 0.0 && self.extent[1] > 0.0) {
            return bad("extent must be positive".into());
        }
        if self.objects[0] > self.objects[1] || self.proposals_per_object[0] > self.proposals_per_object[1] {
            return bad("ranges must be ordered".into());
        }
        if self.proposals_per_object[0] == 0 {
            return bad("every object needs at least one proposal".into());
        }
        let [s0, s1] = self.object_size;
        if !(s0 > 0.0 && s0 <= s1 && s1 <= self.extent[0].min(self.extent[1])) {
            return bad(format!("object_size must satisfy 0 < min <= max <= extent, got {s0}..{s1}"));
        }
        if !(self.jitter >= 0.0 && self.jitter < 0.5) {
            return bad(format!("jitter must lie in [0, 0.5), got {}", self.jitter));
        }
        if !(0.0..=1.0).contains(&self.min_proposal_iou) || !(0.0..=1.0).contains(&self.unknown_probability) {
            return bad("min_proposal_iou and unknown_probability must lie in [0, 1]".into());
        }
        if let Some([a, b]) = self.pair_iou {
            if !(a > 0.0 && a <= b && b < 1.0) {
                return bad(format!("pair_iou must satisfy 0 < min <= max < 1, got {a}..{b}"));
            }
        }
        let profiles = [
            self.object_goc,
            self.distractor_goc,
            self.known_energy,
            self.unknown_energy,
            self.distractor_energy,
        ];
        if profiles.iter().any(|p| !(p.mean.is_finite() && p.spread >= 0.0 && p.spread.is_finite())) {
            return bad("score profiles need a finite mean and a nonnegative spread".into());
        }
        if !(self.known_margin >= 0.0 && self.known_margin.is_finite()) {
            return bad("known_margin must be nonnegative".into());
        }
        Ok(())
    }
}

/// Logits whose uniform-weight negative energy equals `target`. With a class
/// the true one leads the rest by `margin`; without one all logits are equal.
pub fn logits_for_energy(num_classes: usize, target: f64, class: Option<usize>, margin: f64) -> Vec<f64> {
    let c = num_classes as f64;
    match class {
        None => vec![target - c.ln(); num_classes],
        Some(k) => {
            let base = target - ((c - 1.0) + margin.exp()).ln();
            let mut f = vec![base; num_classes];
            f[k] = base + margin;
            f
        }
    }
}

fn uniform(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn place_objects(spec: &SyntheticSceneSpec, rng: &mut impl Rng) -> Result<Vec<BBox<f64>>> {
    let n = rng.random_range(spec.objects[0]..=spec.objects[1]);
    let [w, h] = spec.extent;
    let mut placed: Vec<BBox<f64>> = Vec::with_capacity(n);
    let fits = |b: &BBox<f64>, placed: &[BBox<f64>]| placed.iter().all(|p| p.intersection_area(b) == 0.0);
    while placed.len() < n {
        let mut ok = false;
        for _ in 0..MAX_TRIES {
            let bw = uniform(rng, spec.object_size);
            let bh = uniform(rng, spec.object_size);
            let cluster = match spec.pair_iou {
                Some(range) if placed.len() + 1 < n => {
                    // same-size partner shifted sideways: IoU = (bw - dx) / (bw + dx)
                    let u = uniform(rng, range);
                    let dx = bw * (1.0 - u) / (1.0 + u);
                    if bw + dx > w || bh > h {
                        continue;
                    }
                    let x = rng.random_range(0.0..=w - bw - dx);
                    let y = rng.random_range(0.0..=h - bh);
                    vec![BBox::new(x, y, x + bw, y + bh)?, BBox::new(x + dx, y, x + dx + bw, y + bh)?]
                }
                _ => {
                    let x = rng.random_range(0.0..=w - bw);
                    let y = rng.random_range(0.0..=h - bh);
                    vec![BBox::new(x, y, x + bw, y + bh)?]
                }
            };
            if cluster.iter().all(|b| fits(b, &placed)) {
                placed.extend(cluster);
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::Infeasible(format!(
                "could not place object {} of {n} after {MAX_TRIES} attempts",
                placed.len() + 1
            )));
        }
    }
    Ok(placed)
}

fn jittered(gt: &BBox<f64>, spec: &SyntheticSceneSpec, rng: &mut impl Rng) -> Result<(BBox<f64>, f64)> {
    if spec.jitter == 0.0 {
        return Ok((*gt, 1.0));
    }
    let (gw, gh) = (gt.width(), gt.height());
    let mut shift = |size: f64| size * rng.random_range(-spec.jitter..=spec.jitter);
    for _ in 0..MAX_TRIES {
        let x0 = gt.x_min() + shift(gw);
        let y0 = gt.y_min() + shift(gh);
        let x1 = gt.x_max() + shift(gw);
        let y1 = gt.y_max() + shift(gh);
        let b = BBox::new(x0, y0, x1, y1)?;
        let iou = b.iou(gt)?;
        if iou >= spec.min_proposal_iou {
            return Ok((b, iou));
        }
    }
    Err(Error::Infeasible(format!(
        "no proposal with IoU >= {} after {MAX_TRIES} draws; lower the jitter",
        spec.min_proposal_iou
    )))
}

fn distractor(spec: &SyntheticSceneSpec, rng: &mut impl Rng) -> Result<BBox<f64>> {
    let [w, h] = spec.extent;
    let bw = uniform(rng, spec.object_size);
    let bh = uniform(rng, spec.object_size);
    let x = rng.random_range(0.0..=w - bw);
    let y = rng.random_range(0.0..=h - bh);
    BBox::new(x, y, x + bw, y + bh)
}

fn image_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// One image of the scene set.
pub fn generate_image(spec: &SyntheticSceneSpec, index: usize) -> Result<(AnnotatedImage, DumpImage)> {
    spec.validate()?;
    let mut rng = image_rng(spec.seed, index);
    let c = spec.num_classes;
    let image_id = format!("synth-{index:06}");

    let boxes = place_objects(spec, &mut rng)?;
    let mut instances = Vec::with_capacity(boxes.len());
    let mut proposals = Vec::new();
    for bbox in boxes {
        let unknown = rng.random_bool(spec.unknown_probability);
        let class = (!unknown).then(|| rng.random_range(0..c));
        let label = class.map_or(c as u32 + 1, |k| k as u32 + 1);
        instances.push(GroundTruthInstance::new(bbox, label, c as u32)?);
        let count = rng.random_range(spec.proposals_per_object[0]..=spec.proposals_per_object[1]);
        let energy = if unknown { spec.unknown_energy } else { spec.known_energy };
        for _ in 0..count {
            let (b, iou) = jittered(&bbox, spec, &mut rng)?;
            let goc = iou * spec.object_goc.mean + spec.object_goc.sample(&mut rng) - spec.object_goc.mean;
            let ne = energy.sample(&mut rng);
            proposals.push(Proposal { bbox: b, goc, logits: logits_for_energy(c, ne, class, spec.known_margin) });
        }
    }
    for _ in 0..spec.distractors {
        let b = distractor(spec, &mut rng)?;
        let goc = spec.distractor_goc.sample(&mut rng);
        let ne = spec.distractor_energy.sample(&mut rng);
        proposals.push(Proposal { bbox: b, goc, logits: logits_for_energy(c, ne, None, 0.0) });
    }
    proposals.shuffle(&mut rng);

    Ok((
        AnnotatedImage { image_id: image_id.clone(), instances },
        DumpImage { image_id, proposals },
    ))
}

/// The whole scene set as an annotation file and a matching proposal dump.
pub fn generate_scene(spec: &SyntheticSceneSpec) -> Result<(AnnotationFile, ProposalDump)> {
    spec.validate()?;
    let (anns, dumps): (Vec<_>, Vec<_>) = (0..spec.num_images)
        .map(|i| generate_image(spec, i))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let class_names: Vec<String> = (1..=spec.num_classes).map(|k| format!("class{k}")).collect();
    Ok((
        AnnotationFile { num_classes: spec.num_classes, class_names: class_names.clone(), images: anns },
        ProposalDump { num_classes: spec.num_classes, class_names, class_weights: None, images: dumps },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::EnergyModel;

    #[test]
    fn logits_hit_target_energy() {
        let m = EnergyModel::<f64>::uniform(4).unwrap();
        for (class, margin) in [(None, 0.0), (Some(2), 3.0), (Some(0), 0.0)] {
            let f = logits_for_energy(4, 5.5, class, margin);
            assert!((m.negative_energy(&f).unwrap() - 5.5).abs() < 1e-12);
        }
        let f = logits_for_energy(4, 1.0, Some(1), 2.0);
        assert!((f[1] - f[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = SyntheticSceneSpec { seed: 7, num_images: 3, objects: [3, 3], jitter: 0.1, ..Default::default() };
        assert_eq!(generate_scene(&spec).unwrap(), generate_scene(&spec).unwrap());
        let other = SyntheticSceneSpec { seed: 8, ..spec.clone() };
        assert_ne!(generate_scene(&spec).unwrap(), generate_scene(&other).unwrap());
    }

    #[test]
    fn zero_jitter_proposals_equal_their_object() {
        let spec = SyntheticSceneSpec { seed: 1, num_images: 5, distractors: 0, ..Default::default() };
        let (ann, dump) = generate_scene(&spec).unwrap();
        for (a, d) in ann.images.iter().zip(&dump.images) {
            for p in &d.proposals {
                assert!(a.instances.iter().any(|g| g.bbox.iou(&p.bbox).unwrap() == 1.0));
            }
        }
    }

    #[test]
    fn objects_stay_inside_and_pairs_overlap() {
        let spec = SyntheticSceneSpec {
            seed: 3,
            num_images: 10,
            objects: [2, 2],
            pair_iou: Some([0.3, 0.4]),
            ..Default::default()
        };
        let (ann, _) = generate_scene(&spec).unwrap();
        for im in &ann.images {
            for g in &im.instances {
                assert!(g.bbox.x_min() >= 0.0 && g.bbox.x_max() <= 640.0 + 1e-9);
                assert!(g.bbox.y_min() >= 0.0 && g.bbox.y_max() <= 480.0 + 1e-9);
            }
            let iou = im.instances[0].bbox.iou(&im.instances[1].bbox).unwrap();
            assert!((0.3 - 1e-9..=0.4 + 1e-9).contains(&iou), "{iou}");
        }
    }

    #[test]
    fn overcrowded_scene_is_infeasible() {
        let spec = SyntheticSceneSpec {
            extent: [100.0, 100.0],
            objects: [50, 50],
            object_size: [60.0, 60.0],
            ..Default::default()
        };
        assert!(matches!(generate_scene(&spec), Err(Error::Infeasible(_))));
    }
}
