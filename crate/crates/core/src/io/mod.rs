//! Line-delimited JSON file formats and the run configuration.
//!
//! Every JSONL file starts with a header line carrying a `schema` tag, then
//! holds one record per image. Boxes are written as `[x, y, w, h]`.

mod config;

pub use config::{LossConfig, RunConfig};

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::goc_loss::ScoredSample;
use crate::inference::{DetectionResult, Proposal};
use crate::metrics::{KnownPrediction, MetricsReport, UnknownPrediction};
use crate::sampling::GroundTruthInstance;

pub const DUMP_SCHEMA: &str = "uod.dump/1";
pub const ANNOTATIONS_SCHEMA: &str = "uod.annotations/1";
pub const RESULTS_SCHEMA: &str = "uod.results/1";
pub const LOSS_FIXTURE_SCHEMA: &str = "uod.loss-fixture/1";
pub const REPORT_SCHEMA: &str = "uod.report/1";

#[derive(Debug, Clone, PartialEq)]
pub struct DumpImage {
    pub image_id: String,
    pub proposals: Vec<Proposal<f64>>,
}

/// Detector proposals for a set of images.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalDump {
    pub num_classes: usize,
    pub class_names: Vec<String>,
    /// Energy class weights; all ones when absent.
    pub class_weights: Option<Vec<f64>>,
    pub images: Vec<DumpImage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedImage {
    pub image_id: String,
    pub instances: Vec<GroundTruthInstance<f64>>,
}

/// Ground truth. Label `num_classes + 1` marks an unknown object.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationFile {
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub images: Vec<AnnotatedImage>,
}

impl AnnotationFile {
    pub fn get(&self, image_id: &str) -> Option<&AnnotatedImage> {
        self.images.iter().find(|im| im.image_id == image_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultImage {
    pub image_id: String,
    pub detections: DetectionResult<f64>,
}

/// Final predictions for a set of images.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultFile {
    pub num_classes: usize,
    pub images: Vec<ResultImage>,
}

/// Hand-written loss inputs, grouped per ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossFixture {
    pub schema: String,
    /// Complete-sample scores per ground truth.
    #[serde(default)]
    pub positive: Vec<Vec<f64>>,
    /// Partial and oversized scores per ground truth.
    #[serde(default)]
    pub negative: Vec<Vec<f64>>,
    /// Complete samples with their IoU, per ground truth.
    #[serde(default)]
    pub contrastive: Vec<Vec<ScoredSample<f64>>>,
    /// Energies of the proposals selected for suppression.
    #[serde(default)]
    pub suppression_energies: Vec<f64>,
}

/// Metrics plus the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema: String,
    pub config: RunConfig,
    pub metrics: MetricsReport<f64>,
}

// ---- wire records ----

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DumpHeader {
    schema: String,
    num_classes: usize,
    #[serde(default)]
    class_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class_weights: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireProposal {
    bbox: [f64; 4],
    goc: f64,
    logits: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DumpRecord {
    image_id: String,
    proposals: Vec<WireProposal>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationHeader {
    schema: String,
    num_classes: usize,
    #[serde(default)]
    class_names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireInstance {
    bbox: [f64; 4],
    label: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationRecord {
    image_id: String,
    instances: Vec<WireInstance>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResultHeader {
    schema: String,
    num_classes: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireKnown {
    bbox: [f64; 4],
    label: u32,
    score: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireUnknown {
    bbox: [f64; 4],
    score: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResultRecord {
    image_id: String,
    #[serde(default)]
    known: Vec<WireKnown>,
    #[serde(default)]
    unknown: Vec<WireUnknown>,
}

fn schema_err(record: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema { record: record.into(), message: message.into() }
}

fn parse_box(b: [f64; 4], record: &str) -> Result<BBox<f64>> {
    BBox::from_xywh(b[0], b[1], b[2], b[3]).map_err(|e| schema_err(record, e.to_string()))
}

fn finite(v: f64, what: &str, record: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(schema_err(record, format!("{what} must be finite, got {v}")))
    }
}

/// Header and body lines of a JSONL stream; blank lines are skipped.
fn read_lines<H: DeserializeOwned, R: DeserializeOwned>(
    reader: impl Read,
    schema: &str,
    header_schema: impl Fn(&H) -> &str,
) -> Result<(H, Vec<(usize, R)>)> {
    let mut lines = Vec::new();
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            lines.push((k + 1, line));
        }
    }
    let mut it = lines.into_iter();
    let (hline, htext) = it.next().ok_or_else(|| schema_err("header", "file is empty"))?;
    let header: H =
        serde_json::from_str(&htext).map_err(|e| schema_err(format!("line {hline} (header)"), e.to_string()))?;
    if header_schema(&header) != schema {
        return Err(schema_err(
            format!("line {hline} (header)"),
            format!("expected schema {schema:?}, found {:?}", header_schema(&header)),
        ));
    }
    let body = it
        .map(|(n, text)| {
            serde_json::from_str(&text)
                .map(|r| (n, r))
                .map_err(|e| schema_err(format!("line {n}"), e.to_string()))
        })
        .collect::<Result<_>>()?;
    Ok((header, body))
}

fn check_unique<'a>(ids: impl Iterator<Item = (usize, &'a str)>) -> Result<()> {
    let mut seen = HashSet::new();
    for (line, id) in ids {
        if !seen.insert(id) {
            return Err(schema_err(format!("line {line} (image {id:?})"), "duplicate image id"));
        }
    }
    Ok(())
}

fn write_line(w: &mut impl Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_dump(reader: impl Read) -> Result<ProposalDump> {
    let (h, body): (DumpHeader, Vec<(usize, DumpRecord)>) = read_lines(reader, DUMP_SCHEMA, |h: &DumpHeader| &h.schema)?;
    if h.num_classes == 0 {
        return Err(schema_err("header", "num_classes must be at least 1"));
    }
    if !h.class_names.is_empty() && h.class_names.len() != h.num_classes {
        return Err(schema_err("header", format!("{} class names for {} classes", h.class_names.len(), h.num_classes)));
    }
    if let Some(w) = &h.class_weights {
        if w.len() != h.num_classes {
            return Err(schema_err("header", format!("{} class weights for {} classes", w.len(), h.num_classes)));
        }
        if let Some(v) = w.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(schema_err("header", format!("class weight must be positive, got {v}")));
        }
    }
    check_unique(body.iter().map(|(n, r)| (*n, r.image_id.as_str())))?;
    let images = body
        .into_iter()
        .map(|(line, r)| {
            let proposals = r
                .proposals
                .into_iter()
                .enumerate()
                .map(|(k, p)| {
                    let record = format!("line {line} (image {:?}, proposal {k})", r.image_id);
                    if p.logits.len() != h.num_classes {
                        return Err(schema_err(
                            record,
                            format!("expected {} logits, found {}", h.num_classes, p.logits.len()),
                        ));
                    }
                    for &f in &p.logits {
                        finite(f, "logit", &record)?;
                    }
                    Ok(Proposal {
                        bbox: parse_box(p.bbox, &record)?,
                        goc: finite(p.goc, "goc", &record)?,
                        logits: p.logits,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(DumpImage { image_id: r.image_id, proposals })
        })
        .collect::<Result<_>>()?;
    Ok(ProposalDump {
        num_classes: h.num_classes,
        class_names: h.class_names,
        class_weights: h.class_weights,
        images,
    })
}

pub fn write_dump(w: impl Write, dump: &ProposalDump) -> Result<()> {
    let mut w = BufWriter::new(w);
    write_line(
        &mut w,
        &DumpHeader {
            schema: DUMP_SCHEMA.into(),
            num_classes: dump.num_classes,
            class_names: dump.class_names.clone(),
            class_weights: dump.class_weights.clone(),
        },
    )?;
    for im in &dump.images {
        let rec = DumpRecord {
            image_id: im.image_id.clone(),
            proposals: im
                .proposals
                .iter()
                .map(|p| WireProposal { bbox: p.bbox.to_xywh(), goc: p.goc, logits: p.logits.clone() })
                .collect(),
        };
        write_line(&mut w, &rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_annotations(reader: impl Read) -> Result<AnnotationFile> {
    let (h, body): (AnnotationHeader, Vec<(usize, AnnotationRecord)>) =
        read_lines(reader, ANNOTATIONS_SCHEMA, |h: &AnnotationHeader| &h.schema)?;
    if h.num_classes == 0 {
        return Err(schema_err("header", "num_classes must be at least 1"));
    }
    check_unique(body.iter().map(|(n, r)| (*n, r.image_id.as_str())))?;
    let c = h.num_classes as u32;
    let images = body
        .into_iter()
        .map(|(line, r)| {
            let instances = r
                .instances
                .into_iter()
                .enumerate()
                .map(|(k, inst)| {
                    let record = format!("line {line} (image {:?}, instance {k})", r.image_id);
                    let bbox = parse_box(inst.bbox, &record)?;
                    GroundTruthInstance::new(bbox, inst.label, c).map_err(|e| schema_err(record, e.to_string()))
                })
                .collect::<Result<_>>()?;
            Ok(AnnotatedImage { image_id: r.image_id, instances })
        })
        .collect::<Result<_>>()?;
    Ok(AnnotationFile { num_classes: h.num_classes, class_names: h.class_names, images })
}

pub fn write_annotations(w: impl Write, ann: &AnnotationFile) -> Result<()> {
    let mut w = BufWriter::new(w);
    write_line(
        &mut w,
        &AnnotationHeader {
            schema: ANNOTATIONS_SCHEMA.into(),
            num_classes: ann.num_classes,
            class_names: ann.class_names.clone(),
        },
    )?;
    for im in &ann.images {
        let rec = AnnotationRecord {
            image_id: im.image_id.clone(),
            instances: im
                .instances
                .iter()
                .map(|g| WireInstance { bbox: g.bbox.to_xywh(), label: g.label })
                .collect(),
        };
        write_line(&mut w, &rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(reader: impl Read) -> Result<ResultFile> {
    let (h, body): (ResultHeader, Vec<(usize, ResultRecord)>) =
        read_lines(reader, RESULTS_SCHEMA, |h: &ResultHeader| &h.schema)?;
    check_unique(body.iter().map(|(n, r)| (*n, r.image_id.as_str())))?;
    let c = h.num_classes as u32;
    let images = body
        .into_iter()
        .map(|(line, r)| {
            let known = r
                .known
                .into_iter()
                .enumerate()
                .map(|(k, p)| {
                    let record = format!("line {line} (image {:?}, known {k})", r.image_id);
                    if p.label == 0 || p.label > c {
                        return Err(schema_err(record, format!("known label must lie in 1..={c}, got {}", p.label)));
                    }
                    Ok(KnownPrediction {
                        bbox: parse_box(p.bbox, &record)?,
                        label: p.label,
                        score: finite(p.score, "score", &record)?,
                    })
                })
                .collect::<Result<_>>()?;
            let unknown = r
                .unknown
                .into_iter()
                .enumerate()
                .map(|(k, p)| {
                    let record = format!("line {line} (image {:?}, unknown {k})", r.image_id);
                    Ok(UnknownPrediction {
                        bbox: parse_box(p.bbox, &record)?,
                        score: finite(p.score, "score", &record)?,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(ResultImage { image_id: r.image_id, detections: DetectionResult { known, unknown } })
        })
        .collect::<Result<_>>()?;
    Ok(ResultFile { num_classes: h.num_classes, images })
}

pub fn write_results(w: impl Write, res: &ResultFile) -> Result<()> {
    let mut w = BufWriter::new(w);
    write_line(&mut w, &ResultHeader { schema: RESULTS_SCHEMA.into(), num_classes: res.num_classes })?;
    for im in &res.images {
        let rec = ResultRecord {
            image_id: im.image_id.clone(),
            known: im
                .detections
                .known
                .iter()
                .map(|p| WireKnown { bbox: p.bbox.to_xywh(), label: p.label, score: p.score })
                .collect(),
            unknown: im
                .detections
                .unknown
                .iter()
                .map(|p| WireUnknown { bbox: p.bbox.to_xywh(), score: p.score })
                .collect(),
        };
        write_line(&mut w, &rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_loss_fixture(reader: impl Read) -> Result<LossFixture> {
    let fx: LossFixture = serde_json::from_reader(reader).map_err(|e| schema_err("loss fixture", e.to_string()))?;
    if fx.schema != LOSS_FIXTURE_SCHEMA {
        return Err(schema_err(
            "loss fixture",
            format!("expected schema {LOSS_FIXTURE_SCHEMA:?}, found {:?}", fx.schema),
        ));
    }
    Ok(fx)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn load_dump(path: impl AsRef<Path>) -> Result<ProposalDump> {
    read_dump(open(path.as_ref())?)
}

pub fn save_dump(path: impl AsRef<Path>, dump: &ProposalDump) -> Result<()> {
    write_dump(create(path.as_ref())?, dump)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<AnnotationFile> {
    read_annotations(open(path.as_ref())?)
}

pub fn save_annotations(path: impl AsRef<Path>, ann: &AnnotationFile) -> Result<()> {
    write_annotations(create(path.as_ref())?, ann)
}

pub fn load_results(path: impl AsRef<Path>) -> Result<ResultFile> {
    read_results(open(path.as_ref())?)
}

pub fn save_results(path: impl AsRef<Path>, res: &ResultFile) -> Result<()> {
    write_results(create(path.as_ref())?, res)
}

pub fn load_loss_fixture(path: impl AsRef<Path>) -> Result<LossFixture> {
    read_loss_fixture(open(path.as_ref())?)
}
