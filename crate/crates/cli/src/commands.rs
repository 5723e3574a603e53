use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use uod_core::energy::{image_suppression_loss, suppression_loss, EnergyModel};
use uod_core::gbd::{determine_boxes, nms};
use uod_core::goc_loss::{
    contrastive_loss, goc_loss, image_goc_loss, negative_loss, positive_loss, GocLossReport, GocSamples,
};
use uod_core::inference::{
    pretest_epsilon, pretest_gamma, run_pipeline, select_candidates, PretestImage, UnknownSelector,
};
use uod_core::io::{
    load_annotations, load_dump, load_loss_fixture, load_results, save_annotations, save_dump, write_results,
    AnnotatedImage, AnnotationFile, DumpImage, ProposalDump, ReportFile, ResultFile, ResultImage, RunConfig,
    REPORT_SCHEMA,
};
use uod_core::metrics::{evaluate as evaluate_metrics, EvalImage, MetricsReport};
use uod_core::sampling::{partition_image, GtSampleGroups};
use uod_core::synth::{generate_scene, SyntheticSceneSpec};
use uod_core::BBox64;

use crate::{Baseline, DetectArgs, EvaluateArgs, Format, GbdArgs, LossArgs, PartitionArgs, PretestArgs, SynthArgs};

pub struct Output {
    path: Option<PathBuf>,
    format: Format,
}

impl Output {
    pub fn new(path: Option<PathBuf>, format: Format) -> Self {
        Self { path, format }
    }

    fn sink(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.path {
            Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
            None => Box::new(std::io::stdout().lock()),
        })
    }

    /// JSON, or `text` lines when the text format was requested.
    fn emit<T: Serialize>(&self, value: &T, text: impl FnOnce() -> String) -> Result<()> {
        let mut w = self.sink()?;
        match self.format {
            Format::Json => {
                serde_json::to_writer_pretty(&mut w, value)?;
                writeln!(w)?;
            }
            Format::Text => write!(w, "{}", text())?,
        }
        w.flush()?;
        Ok(())
    }
}

fn energy_model(dump: &ProposalDump) -> Result<EnergyModel<f64>> {
    Ok(match &dump.class_weights {
        Some(w) => EnergyModel::new(w.clone())?,
        None => EnergyModel::uniform(dump.num_classes)?,
    })
}

/// Pairs every dump image with its annotation record.
fn join<'a>(dump: &'a ProposalDump, ann: &'a AnnotationFile) -> Result<Vec<(&'a DumpImage, &'a AnnotatedImage)>> {
    if dump.num_classes != ann.num_classes {
        bail!("dump has {} classes but annotations have {}", dump.num_classes, ann.num_classes);
    }
    dump.images
        .iter()
        .map(|d| {
            ann.get(&d.image_id)
                .map(|a| (d, a))
                .ok_or_else(|| anyhow!("image {:?} has no annotation record", d.image_id))
        })
        .collect()
}

fn boxes_of(im: &DumpImage) -> Vec<BBox64> {
    im.proposals.iter().map(|p| p.bbox).collect()
}

// ---- partition

#[derive(Serialize)]
struct PartitionRecord {
    image_id: String,
    groups: Vec<GtSampleGroups>,
    /// Proposals of images without ground truth.
    #[serde(skip_serializing_if = "Option::is_none")]
    ungrouped: Option<Vec<usize>>,
}

pub fn partition(args: &PartitionArgs, cfg: &RunConfig, out: &Output) -> Result<()> {
    let dump = load_dump(&args.dump)?;
    let ann = load_annotations(&args.annotations)?;
    let pairs = join(&dump, &ann)?;
    let records: Vec<PartitionRecord> = pairs
        .par_iter()
        .map(|(d, a)| {
            if a.instances.is_empty() {
                return Ok(PartitionRecord {
                    image_id: d.image_id.clone(),
                    groups: Vec::new(),
                    ungrouped: Some((0..d.proposals.len()).collect()),
                });
            }
            let groups = partition_image(&boxes_of(d), &a.instances, &cfg.partition)
                .with_context(|| format!("image {:?}", d.image_id))?;
            Ok(PartitionRecord { image_id: d.image_id.clone(), groups, ungrouped: None })
        })
        .collect::<Result<_>>()?;
    out.emit(&records, || {
        let mut s = String::from("image\tgt\tcomplete\tpartial\toversized\tnon_object\tunassigned\n");
        for r in &records {
            for (k, g) in r.groups.iter().enumerate() {
                s += &format!(
                    "{}\t{k}\t{}\t{}\t{}\t{}\t{}\n",
                    r.image_id,
                    g.complete.len(),
                    g.partial.len(),
                    g.oversized.len(),
                    g.non_object.len(),
                    g.unassigned.len()
                );
            }
        }
        s
    })
}

// ---- loss

#[derive(Serialize, Default)]
struct LossSummary {
    pos: f64,
    neg: f64,
    con: f64,
    goc: f64,
    suppression: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    images: Vec<ImageLoss>,
}

#[derive(Serialize)]
struct ImageLoss {
    image_id: String,
    pos: f64,
    neg: f64,
    con: f64,
    goc: f64,
    suppression: f64,
    #[serde(skip)]
    goc_grad: Vec<f64>,
    #[serde(skip)]
    logit_grads: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct FixtureGradients {
    positive: Vec<Vec<f64>>,
    negative: Vec<Vec<f64>>,
    contrastive: Vec<Vec<f64>>,
    suppression: Vec<f64>,
}

#[derive(Serialize)]
struct ImageGradients<'a> {
    image_id: &'a str,
    goc: &'a [f64],
    logits: &'a [Vec<f64>],
}

fn write_json(path: &PathBuf, value: &impl Serialize) -> Result<()> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(f, value)?;
    Ok(())
}

pub fn loss(args: &LossArgs, cfg: &RunConfig, out: &Output) -> Result<()> {
    let lc = &cfg.loss.goc;
    let summary = if let Some(path) = &args.fixture {
        let fx = load_loss_fixture(path)?;
        let pos = if fx.positive.is_empty() { None } else { Some(positive_loss(&fx.positive)?) };
        let neg = negative_loss(&fx.negative, lc.delta)?;
        let con = contrastive_loss(&fx.contrastive, lc.zeta, lc.con_normalization)?;
        let (sup, sup_grad) = suppression_loss(&fx.suppression_energies);
        let pos_value = pos.as_ref().map_or(0.0, |p| p.value);
        if let Some(g) = &args.gradients {
            write_json(
                g,
                &FixtureGradients {
                    positive: pos.map(|p| p.grads).unwrap_or_default(),
                    negative: neg.grads,
                    contrastive: con.grads,
                    suppression: sup_grad,
                },
            )?;
        }
        LossSummary {
            pos: pos_value,
            neg: neg.value,
            con: con.value,
            goc: goc_loss(pos_value, neg.value, con.value),
            suppression: sup,
            images: Vec::new(),
        }
    } else {
        let (Some(dump_path), Some(ann_path)) = (&args.dump, &args.annotations) else {
            bail!("loss needs either --fixture or both --dump and --annotations");
        };
        let dump = load_dump(dump_path)?;
        let ann = load_annotations(ann_path)?;
        let model = energy_model(&dump)?;
        let pairs = join(&dump, &ann)?;
        let images: Vec<ImageLoss> = pairs
            .par_iter()
            .map(|(d, a)| image_loss(d, a, &model, cfg).with_context(|| format!("image {:?}", d.image_id)))
            .collect::<Result<_>>()?;
        if let Some(g) = &args.gradients {
            let grads: Vec<ImageGradients> = images
                .iter()
                .map(|im| ImageGradients { image_id: &im.image_id, goc: &im.goc_grad, logits: &im.logit_grads })
                .collect();
            write_json(g, &grads)?;
        }
        let n = images.len().max(1) as f64;
        let mean = |f: fn(&ImageLoss) -> f64| images.iter().map(f).sum::<f64>() / n;
        LossSummary {
            pos: mean(|i| i.pos),
            neg: mean(|i| i.neg),
            con: mean(|i| i.con),
            goc: mean(|i| i.goc),
            suppression: mean(|i| i.suppression),
            images,
        }
    };
    out.emit(&summary, || {
        format!(
            "pos\t{}\nneg\t{}\ncon\t{}\ngoc\t{}\nsuppression\t{}\n",
            summary.pos, summary.neg, summary.con, summary.goc, summary.suppression
        )
    })
}

fn image_loss(d: &DumpImage, a: &AnnotatedImage, model: &EnergyModel<f64>, cfg: &RunConfig) -> Result<ImageLoss> {
    let n = d.proposals.len();
    let boxes = boxes_of(d);
    let scores: Vec<f64> = d.proposals.iter().map(|p| p.goc).collect();
    let report = if a.instances.is_empty() || n == 0 {
        GocLossReport { pos: 0.0, neg: 0.0, con: 0.0, total: 0.0, grad: vec![0.0; n] }
    } else {
        let groups = partition_image(&boxes, &a.instances, &cfg.partition)?;
        let samples = GocSamples::from_partition(&groups, &boxes, &scores, &a.instances)?;
        image_goc_loss(&samples, n, &cfg.loss.goc)?
    };
    let (suppression, logit_grads) = if n == 0 {
        (0.0, Vec::new())
    } else {
        let logits: Vec<Vec<f64>> = d.proposals.iter().map(|p| p.logits.clone()).collect();
        let s = image_suppression_loss(&logits, model, cfg.loss.suppression_top)?;
        (s.value, s.logit_grads)
    };
    Ok(ImageLoss {
        image_id: d.image_id.clone(),
        pos: report.pos,
        neg: report.neg,
        con: report.con,
        goc: report.total,
        suppression,
        goc_grad: report.grad,
        logit_grads,
    })
}

// ---- gbd

#[derive(Serialize)]
struct SelectedBox {
    proposal: usize,
    bbox: [f64; 4],
    score: f64,
}

#[derive(Serialize)]
struct GbdRecord {
    image_id: String,
    candidates: usize,
    selected: Vec<SelectedBox>,
}

pub fn gbd(args: &GbdArgs, cfg: &RunConfig, out: &Output) -> Result<()> {
    let dump = load_dump(&args.dump)?;
    let inf = &cfg.inference;
    let records: Vec<GbdRecord> = dump
        .images
        .par_iter()
        .map(|im| {
            let goc: Vec<f64> = im.proposals.iter().map(|p| p.goc).collect();
            let chosen = select_candidates(&goc, &inf.candidate_rule)?;
            let boxes: Vec<BBox64> = chosen.iter().map(|&i| im.proposals[i].bbox).collect();
            let scores: Vec<f64> = chosen.iter().map(|&i| goc[i]).collect();
            let mut kept = match args.baseline {
                Some(Baseline::Nms) => {
                    let mut k = nms(&boxes, &scores, args.nms_iou)?;
                    if let Some(t) = args.nms_top {
                        k.truncate(t);
                    }
                    k
                }
                None => determine_boxes(&boxes, &scores, inf.epsilon)?,
            };
            kept.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            Ok(GbdRecord {
                image_id: im.image_id.clone(),
                candidates: chosen.len(),
                selected: kept
                    .into_iter()
                    .map(|k| SelectedBox { proposal: chosen[k], bbox: boxes[k].to_xywh(), score: scores[k] })
                    .collect(),
            })
        })
        .collect::<Result<_, uod_core::Error>>()?;
    out.emit(&records, || {
        let mut s = String::from("image\tcandidates\tselected\n");
        for r in &records {
            s += &format!("{}\t{}\t{}\n", r.image_id, r.candidates, r.selected.len());
        }
        s
    })
}

// ---- detect

pub fn detect(args: &DetectArgs, cfg: &RunConfig, out: &Output) -> Result<()> {
    let dump = load_dump(&args.dump)?;
    let model = energy_model(&dump)?;
    let mut inf = cfg.inference;
    if args.baseline == Some(Baseline::Nms) {
        inf.unknown_selector = UnknownSelector::Nms { iou_threshold: args.nms_iou, top_k: args.nms_top };
    }
    let images: Vec<ResultImage> = dump
        .images
        .par_iter()
        .map(|im| {
            run_pipeline(&im.proposals, &model, &inf)
                .map(|detections| ResultImage { image_id: im.image_id.clone(), detections })
        })
        .collect::<Result<_, uod_core::Error>>()?;
    let res = ResultFile { num_classes: dump.num_classes, images };
    // results are always JSONL so that `evaluate` can read them back
    write_results(out.sink()?, &res)?;
    Ok(())
}

// ---- pretest

#[derive(Serialize)]
struct PretestReport {
    gamma: f64,
    proposals: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    /// Known-class AP for every epsilon on the grid.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    epsilon_curve: Vec<(f64, f64)>,
}

fn read_energies(path: &PathBuf) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .enumerate()
        .map(|(k, t)| t.parse::<f64>().with_context(|| format!("{}: value {k} ({t:?})", path.display())))
        .collect()
}

pub fn pretest(args: &PretestArgs, cfg: &RunConfig, out: &Output) -> Result<()> {
    let (energies, selection) = match (&args.energies, &args.dump) {
        (Some(path), _) => (read_energies(path)?, None),
        (None, Some(path)) => {
            let dump = load_dump(path)?;
            let model = energy_model(&dump)?;
            let ne: Vec<f64> = dump
                .images
                .iter()
                .flat_map(|im| &im.proposals)
                .map(|p| model.negative_energy(&p.logits))
                .collect::<Result<_, _>>()?;
            let selection = match &args.annotations {
                Some(ann_path) => {
                    let ann = load_annotations(ann_path)?;
                    let c = ann.num_classes as u32;
                    let images = join(&dump, &ann)?
                        .into_iter()
                        .map(|(d, a)| {
                            if let Some(g) = a.instances.iter().find(|g| g.is_unknown(c)) {
                                bail!("image {:?} contains an unknown object at {:?}", a.image_id, g.bbox.to_xywh());
                            }
                            Ok(PretestImage {
                                proposals: d.proposals.clone(),
                                gts: a.instances.iter().map(|g| (g.bbox, g.label)).collect(),
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Some(pretest_epsilon(&images, &model, &cfg.inference)?)
                }
                None => None,
            };
            (ne, selection)
        }
        (None, None) => bail!("pretest needs --dump or --energies"),
    };
    let report = PretestReport {
        gamma: pretest_gamma(&energies)?,
        proposals: energies.len(),
        epsilon: selection.as_ref().map(|s| s.epsilon),
        epsilon_curve: selection.map(|s| s.curve).unwrap_or_default(),
    };
    out.emit(&report, || {
        let mut s = format!("gamma\t{}\n", report.gamma);
        if let Some(e) = report.epsilon {
            s += &format!("epsilon\t{e}\n");
        }
        s
    })
}

// ---- evaluate

fn metrics_text(m: &MetricsReport<f64>) -> String {
    let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
    let mut s = format!(
        "mAP\t{}\nU-AP\t{}\nU-PRE\t{}\nU-REC\t{}\nU-F1\t{}\nAOSE\t{}\nWI\t{}\n",
        show(m.map),
        show(m.u_ap),
        show(m.u_pre),
        show(m.u_rec),
        show(m.u_f1),
        m.aose,
        show(m.wi)
    );
    for n in &m.notes {
        s += &format!("note\t{n}\n");
    }
    s
}

pub fn evaluate(args: &EvaluateArgs, cfg: &RunConfig, out: &Output) -> Result<()> {
    let res = load_results(&args.results)?;
    let ann = load_annotations(&args.annotations)?;
    if res.num_classes != ann.num_classes {
        bail!("results have {} classes but annotations have {}", res.num_classes, ann.num_classes);
    }
    let mut images: Vec<EvalImage<f64>> = Vec::with_capacity(ann.images.len());
    for a in &ann.images {
        let r = res.images.iter().find(|r| r.image_id == a.image_id);
        images.push(EvalImage {
            gts: a.instances.clone(),
            known: r.map(|r| r.detections.known.clone()).unwrap_or_default(),
            unknown: r.map(|r| r.detections.unknown.clone()).unwrap_or_default(),
        });
    }
    if let Some(extra) = res.images.iter().find(|r| ann.get(&r.image_id).is_none()) {
        bail!("results mention image {:?}, which has no annotation record", extra.image_id);
    }
    let metrics = evaluate_metrics(&images, &cfg.evaluation.for_classes(ann.num_classes as u32))?;
    let report = ReportFile { schema: REPORT_SCHEMA.into(), config: *cfg, metrics };
    out.emit(&report, || metrics_text(&report.metrics))
}

// ---- synth

pub fn synth(args: &SynthArgs, out: &Output) -> Result<()> {
    let mut spec: SyntheticSceneSpec = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => SyntheticSceneSpec::default(),
    };
    spec.seed = args.seed.unwrap_or(spec.seed);
    spec.num_images = args.num_images.unwrap_or(spec.num_images);
    let (ann, dump) = generate_scene(&spec)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let ann_path = args.out_dir.join("annotations.jsonl");
    let dump_path = args.out_dir.join("dump.jsonl");
    save_annotations(&ann_path, &ann)?;
    save_dump(&dump_path, &dump)?;

    #[derive(Serialize)]
    struct Written {
        annotations: PathBuf,
        dump: PathBuf,
        images: usize,
        objects: usize,
        proposals: usize,
    }
    let written = Written {
        annotations: ann_path,
        dump: dump_path,
        images: ann.images.len(),
        objects: ann.images.iter().map(|i| i.instances.len()).sum(),
        proposals: dump.images.iter().map(|i| i.proposals.len()).sum(),
    };
    out.emit(&written, || {
        format!(
            "wrote {} images ({} objects, {} proposals) to {} and {}\n",
            written.images,
            written.objects,
            written.proposals,
            written.annotations.display(),
            written.dump.display()
        )
    })
}
