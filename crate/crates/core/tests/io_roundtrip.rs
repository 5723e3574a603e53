use proptest::prelude::*;
use uod_core::geometry::BBox;
use uod_core::inference::{DetectionResult, Proposal};
use uod_core::io::{
    read_annotations, read_dump, read_results, write_annotations, write_dump, write_results, AnnotatedImage,
    AnnotationFile, DumpImage, ProposalDump, ResultFile, ResultImage,
};
use uod_core::metrics::{KnownPrediction, UnknownPrediction};
use uod_core::sampling::GroundTruthInstance;

// Quarter-pixel grid: corner and xywh conversions are exact there.
fn grid_box() -> impl Strategy<Value = BBox<f64>> + Clone {
    (0u32..4096, 0u32..4096, 1u32..2048, 1u32..2048).prop_map(|(x, y, w, h)| {
        let q = |v: u32| v as f64 / 4.0;
        BBox::from_xywh(q(x), q(y), q(w), q(h)).unwrap()
    })
}

fn any_box() -> impl Strategy<Value = BBox<f64>> + Clone {
    (-1e4f64..1e4, -1e4f64..1e4, 1e-3f64..1e3, 1e-3f64..1e3)
        .prop_map(|(x, y, w, h)| BBox::from_xywh(x, y, w, h).unwrap())
}

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::ZERO
}

fn dump(boxes: impl Strategy<Value = BBox<f64>> + Clone) -> impl Strategy<Value = ProposalDump> {
    (1usize..5).prop_flat_map(move |c| {
        let proposal = (boxes.clone(), 0.0f64..=1.0, prop::collection::vec(finite(), c))
            .prop_map(|(bbox, goc, logits)| Proposal { bbox, goc, logits });
        let images = prop::collection::vec(prop::collection::vec(proposal, 0..6), 0..4);
        let weights = prop::option::of(prop::collection::vec(0.01f64..10.0, c));
        (images, weights).prop_map(move |(images, class_weights)| ProposalDump {
            num_classes: c,
            class_names: (1..=c).map(|k| format!("c{k}")).collect(),
            class_weights,
            images: images
                .into_iter()
                .enumerate()
                .map(|(i, proposals)| DumpImage { image_id: format!("img{i}"), proposals })
                .collect(),
        })
    })
}

fn annotations() -> impl Strategy<Value = AnnotationFile> {
    (1u32..5).prop_flat_map(|c| {
        let inst = (grid_box(), 1..=c + 1).prop_map(move |(b, l)| GroundTruthInstance::new(b, l, c).unwrap());
        prop::collection::vec(prop::collection::vec(inst, 0..6), 0..4).prop_map(move |images| AnnotationFile {
            num_classes: c as usize,
            class_names: Vec::new(),
            images: images
                .into_iter()
                .enumerate()
                .map(|(i, instances)| AnnotatedImage { image_id: format!("a/{i} \"q\""), instances })
                .collect(),
        })
    })
}

fn results() -> impl Strategy<Value = ResultFile> {
    (1u32..5).prop_flat_map(|c| {
        let known = (grid_box(), 1..=c, 0.0f64..1.0).prop_map(|(bbox, label, score)| KnownPrediction { bbox, label, score });
        let unknown = (grid_box(), finite()).prop_map(|(bbox, score)| UnknownPrediction { bbox, score });
        let image = (prop::collection::vec(known, 0..5), prop::collection::vec(unknown, 0..5));
        prop::collection::vec(image, 0..4).prop_map(move |images| ResultFile {
            num_classes: c as usize,
            images: images
                .into_iter()
                .enumerate()
                .map(|(i, (known, unknown))| ResultImage {
                    image_id: format!("r{i}"),
                    detections: DetectionResult { known, unknown },
                })
                .collect(),
        })
    })
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 4.0 * f64::EPSILON * scale
}

proptest! {
    #[test]
    fn dump_round_trips_exactly(d in dump(grid_box())) {
        let mut buf = Vec::new();
        write_dump(&mut buf, &d).unwrap();
        prop_assert_eq!(read_dump(buf.as_slice()).unwrap(), d);
    }

    #[test]
    fn annotations_round_trip_exactly(a in annotations()) {
        let mut buf = Vec::new();
        write_annotations(&mut buf, &a).unwrap();
        prop_assert_eq!(read_annotations(buf.as_slice()).unwrap(), a);
    }

    #[test]
    fn results_round_trip_exactly(r in results()) {
        let mut buf = Vec::new();
        write_results(&mut buf, &r).unwrap();
        prop_assert_eq!(read_results(buf.as_slice()).unwrap(), r);
    }

    #[test]
    fn off_grid_boxes_round_trip_within_a_few_ulps(d in dump(any_box())) {
        let mut buf = Vec::new();
        write_dump(&mut buf, &d).unwrap();
        let back = read_dump(buf.as_slice()).unwrap();
        prop_assert_eq!(back.images.len(), d.images.len());
        for (a, b) in d.images.iter().zip(&back.images) {
            for (p, q) in a.proposals.iter().zip(&b.proposals) {
                prop_assert_eq!(&p.logits, &q.logits);
                prop_assert_eq!(p.goc, q.goc);
                let b = &p.bbox;
                let scale = b.x_min().abs().max(b.x_max().abs()).max(b.y_min().abs()).max(b.y_max().abs());
                prop_assert!(close(p.bbox.x_min(), q.bbox.x_min(), scale));
                prop_assert!(close(p.bbox.y_min(), q.bbox.y_min(), scale));
                prop_assert!(close(p.bbox.x_max(), q.bbox.x_max(), scale));
                prop_assert!(close(p.bbox.y_max(), q.bbox.y_max(), scale));
            }
        }
    }
}
