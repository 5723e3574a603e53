mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use uod_core::goc_loss::ConNormalization;
use uod_core::io::RunConfig;
use uod_core::metrics::Interpolation;

#[derive(Parser, Debug)]
#[command(name = "uod", version, about = "Unknown-object detection post-processing and evaluation")]
struct Cli {
    /// TOML file with thresholds; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for per-image work (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Write the main output here instead of stdout.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split every image's proposals into complete, partial, oversized and non-object samples.
    Partition(PartitionArgs),
    /// Evaluate the GOC and suppression losses.
    Loss(LossArgs),
    /// Run graph-based box determination (or the NMS baseline) on every image.
    Gbd(GbdArgs),
    /// Run the full known/unknown pipeline and write a results file.
    Detect(DetectArgs),
    /// Pick the energy threshold and the ncut threshold on held-out images.
    Pretest(PretestArgs),
    /// Compute the open-set metric suite for a results file.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic annotation file and proposal dump.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
pub struct PartitionOverrides {
    #[arg(long)]
    e1: Option<f64>,
    #[arg(long)]
    e2: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
}

#[derive(Args, Debug)]
pub struct PartitionArgs {
    #[arg(long)]
    pub dump: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    #[command(flatten)]
    overrides: PartitionOverrides,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum NormArg {
    LiteralFloor,
    PairwiseMean,
}

#[derive(Args, Debug)]
pub struct LossArgs {
    /// Hand-written loss fixture (JSON).
    #[arg(long, conflicts_with_all = ["dump", "annotations"])]
    pub fixture: Option<PathBuf>,
    #[arg(long, requires = "annotations")]
    pub dump: Option<PathBuf>,
    #[arg(long, requires = "dump")]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long, value_enum)]
    con_normalization: Option<NormArg>,
    /// Proposals per image fed to the suppression loss.
    #[arg(long)]
    top: Option<usize>,
    /// Also write per-score gradients to this file.
    #[arg(long)]
    pub gradients: Option<PathBuf>,
    #[command(flatten)]
    partition: PartitionOverrides,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Nms,
}

#[derive(Args, Debug)]
pub struct CandidateOverrides {
    /// Keep the k highest-GOC proposals as candidates.
    #[arg(long, conflicts_with = "goc_at_least")]
    top_k: Option<usize>,
    /// Keep every proposal whose GOC reaches this value.
    #[arg(long)]
    goc_at_least: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args, Debug)]
pub struct GbdArgs {
    #[arg(long)]
    pub dump: PathBuf,
    #[command(flatten)]
    candidates: CandidateOverrides,
    /// Replace box determination with greedy NMS.
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    #[arg(long, default_value_t = 0.5)]
    pub nms_iou: f64,
    /// Keep at most this many NMS boxes.
    #[arg(long)]
    pub nms_top: Option<usize>,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[arg(long)]
    pub dump: PathBuf,
    #[command(flatten)]
    candidates: CandidateOverrides,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    #[arg(long, default_value_t = 0.5)]
    pub nms_iou: f64,
    #[arg(long)]
    pub nms_top: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PretestArgs {
    /// Held-out proposals; the energy threshold uses all of them.
    #[arg(long, required_unless_present = "energies")]
    pub dump: Option<PathBuf>,
    /// Known-only ground truth of the held-out images; enables the ncut threshold search.
    #[arg(long, requires = "dump")]
    pub annotations: Option<PathBuf>,
    /// Plain list of negative energies (whitespace or comma separated) instead of a dump.
    #[arg(long, conflicts_with = "dump")]
    pub energies: Option<PathBuf>,
    #[command(flatten)]
    candidates: CandidateOverrides,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum InterpArg {
    AllPoint,
    ElevenPoint,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    iou: Option<f64>,
    #[arg(long)]
    wi_recall: Option<f64>,
    #[arg(long, value_enum)]
    interpolation: Option<InterpArg>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Scene description (TOML); defaults are used when absent.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Directory receiving annotations.jsonl and dump.jsonl.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub num_images: Option<usize>,
}

impl PartitionOverrides {
    fn apply(&self, cfg: &mut RunConfig) {
        let p = &mut cfg.partition;
        p.e1 = self.e1.unwrap_or(p.e1);
        p.e2 = self.e2.unwrap_or(p.e2);
        p.rho = self.rho.unwrap_or(p.rho);
    }
}

impl CandidateOverrides {
    fn apply(&self, cfg: &mut RunConfig) {
        use uod_core::inference::CandidateRule;
        let inf = &mut cfg.inference;
        if let Some(k) = self.top_k {
            inf.candidate_rule = CandidateRule::TopK(k);
        }
        if let Some(t) = self.goc_at_least {
            inf.candidate_rule = CandidateRule::GocAtLeast(t);
        }
        inf.epsilon = self.epsilon.unwrap_or(inf.epsilon);
    }
}

fn resolve_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match &cli.command {
        Command::Partition(a) => a.overrides.apply(&mut cfg),
        Command::Loss(a) => {
            a.partition.apply(&mut cfg);
            let l = &mut cfg.loss;
            l.goc.delta = a.delta.unwrap_or(l.goc.delta);
            l.goc.zeta = a.zeta.unwrap_or(l.goc.zeta);
            l.suppression_top = a.top.unwrap_or(l.suppression_top);
            if let Some(n) = a.con_normalization {
                l.goc.con_normalization = match n {
                    NormArg::LiteralFloor => ConNormalization::LiteralFloor,
                    NormArg::PairwiseMean => ConNormalization::PairwiseMean,
                };
            }
        }
        Command::Gbd(a) => a.candidates.apply(&mut cfg),
        Command::Detect(a) => {
            a.candidates.apply(&mut cfg);
            cfg.inference.gamma = a.gamma.unwrap_or(cfg.inference.gamma);
            cfg.inference.beta = a.beta.unwrap_or(cfg.inference.beta);
        }
        Command::Pretest(a) => a.candidates.apply(&mut cfg),
        Command::Evaluate(a) => {
            let e = &mut cfg.evaluation;
            e.iou_threshold = a.iou.unwrap_or(e.iou_threshold);
            e.wi_recall = a.wi_recall.unwrap_or(e.wi_recall);
            if let Some(i) = a.interpolation {
                e.interpolation = match i {
                    InterpArg::AllPoint => Interpolation::AllPoint,
                    InterpArg::ElevenPoint => Interpolation::ElevenPoint,
                };
            }
        }
        Command::Synth(_) => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(jobs) = cli.jobs {
        anyhow::ensure!(jobs > 0, "--jobs must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    let cfg = resolve_config(&cli)?;
    let out = commands::Output::new(cli.out.clone(), cli.format);
    match &cli.command {
        Command::Partition(a) => commands::partition(a, &cfg, &out),
        Command::Loss(a) => commands::loss(a, &cfg, &out),
        Command::Gbd(a) => commands::gbd(a, &cfg, &out),
        Command::Detect(a) => commands::detect(a, &cfg, &out),
        Command::Pretest(a) => commands::pretest(a, &cfg, &out),
        Command::Evaluate(a) => commands::evaluate(a, &cfg, &out),
        Command::Synth(a) => commands::synth(a, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
