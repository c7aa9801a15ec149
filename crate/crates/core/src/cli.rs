//! The `ssf` command line.
//!
//! Every flag can also be set through an environment variable named
//! `SSF_<FLAG>` in upper snake case (`--weight-decay` is `SSF_WEIGHT_DECAY`).
//! Exit codes: 0 success, 1 data error, 2 usage error.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::data::synth::{generate_synthetic, SynthSpec};
use crate::data::{load_dataset, load_manifest, DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::eval::{evaluate, measure_complexity, run_ablation, AblationConfig};
use crate::io::{read_mask, write_bytes, write_ssf_container, write_ssf_csv};
use crate::mask::{SegmentationMask, DEFAULT_VOID};
use crate::models::{
    fusion_from_step1, train, Architecture, EpochMetrics, HeadKind, Network, NetworkObjective, SemanticHead, Stage,
    TrainPlan, DEFAULT_FC3,
};
use crate::nn::{grad_check, AdamConfig, Checkpoint, GradCheckConfig};
use crate::ssf::{extract_ssf, FeatureSubset};
use crate::{par, VERSION};

#[derive(Debug, Parser)]
#[command(name = "ssf", version, about = "Segmentation-based semantic features: extraction, training and evaluation")]
pub struct Cli {
    /// Worker threads for per-image and per-cell parallelism.
    #[arg(long, global = true, env = "SSF_THREADS", default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..=256))]
    pub threads: u16,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the L × 5 feature matrix of each mask.
    Extract(ExtractArgs),
    /// Generate a seeded synthetic dataset (masks, global vectors, manifest).
    Synth(SynthArgs),
    /// Train a model on a manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split of a manifest.
    Eval(EvalArgs),
    /// Train and score every feature subset with both heads.
    Ablate(AblateArgs),
    /// Finite-difference check of a model's analytic gradients.
    Gradcheck(GradcheckArgs),
    /// Extraction timing and model complexity.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Format {
    Csv,
    Bin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum StageArg {
    Step1,
    Step2,
    Semantic,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Stage {
        match s {
            StageArg::Step1 => Stage::Step1,
            StageArg::Step2 => Stage::Step2,
            StageArg::Semantic => Stage::Semantic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum HeadArg {
    Cnn,
    Nn,
    Pc1d,
}

impl From<HeadArg> for HeadKind {
    fn from(h: HeadArg) -> HeadKind {
        match h {
            HeadArg::Cnn => HeadKind::Cnn,
            HeadArg::Nn => HeadKind::Nn,
            HeadArg::Pc1d => HeadKind::PcConv1d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum ModelArg {
    SsfCnn,
    SsfNn,
    PcConv1d,
    Fusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

/// Number of categories and void handling shared by mask-reading commands.
#[derive(Debug, Clone, Args, Serialize)]
pub struct MaskArgs {
    /// Number of categories L; masks hold 1..=L plus the void value.
    #[arg(long = "L", env = "SSF_L", value_parser = clap::value_parser!(u16).range(1..))]
    pub l: Option<u16>,

    /// Pixel value of unlabeled pixels [default: 0, or the manifest's value].
    #[arg(long, env = "SSF_VOID", conflicts_with = "no_void")]
    pub void: Option<u16>,

    /// Masks have no void pixels; any value outside 1..=L is an error.
    #[arg(long, env = "SSF_NO_VOID")]
    pub no_void: bool,
}

impl MaskArgs {
    fn resolve(&self, manifest: Option<&DatasetManifest>) -> Result<(usize, Option<u16>)> {
        let l = match (self.l, manifest) {
            (Some(l), _) => l as usize,
            (None, Some(m)) => m.header.num_categories,
            (None, None) => return Err(Error::Usage("--L is required without a manifest".into())),
        };
        let void = if self.no_void {
            None
        } else if let Some(v) = self.void {
            Some(v)
        } else {
            manifest.map_or(Some(DEFAULT_VOID), |m| m.header.void_value)
        };
        Ok((l, void))
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExtractArgs {
    /// Mask files (binary PGM or SSFM container).
    pub masks: Vec<PathBuf>,

    /// Read the mask list (and L / void defaults) from a manifest.
    #[arg(long, env = "SSF_MANIFEST")]
    pub manifest: Option<PathBuf>,

    #[command(flatten)]
    pub mask: MaskArgs,

    /// Output directory; one file per mask, named after the mask or sample id.
    #[arg(long, short, env = "SSF_OUT")]
    pub out: PathBuf,

    #[arg(long, value_enum, env = "SSF_FORMAT", default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, short, env = "SSF_OUT")]
    pub out: PathBuf,

    #[arg(long, env = "SSF_CLASSES", default_value_t = 6, value_parser = clap::value_parser!(u32).range(1..=1000))]
    pub classes: u32,

    /// Number of categories L.
    #[arg(long = "L", env = "SSF_L", default_value_t = 8, value_parser = clap::value_parser!(u16).range(3..))]
    pub l: u16,

    /// Mask side length in pixels.
    #[arg(long, env = "SSF_SIZE", default_value_t = 32, value_parser = clap::value_parser!(u32).range(8..=16384))]
    pub size: u32,

    #[arg(long, env = "SSF_SAMPLES", default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    pub samples: u32,

    /// Jitter of blob positions and sizes plus salt noise, in [0, 1).
    #[arg(long, env = "SSF_NOISE", default_value_t = 0.1)]
    pub noise: f64,

    /// Width of the class-conditioned global vectors; 0 writes none.
    #[arg(long, env = "SSF_GLOBAL_WIDTH", default_value_t = 0)]
    pub global_width: usize,

    /// Standard deviation of global vectors around their class centroid.
    #[arg(long, env = "SSF_GLOBAL_SPREAD", default_value_t = 0.5)]
    pub global_spread: f64,

    /// Six classes whose identity is split between mask layout (class % 2)
    /// and global vector (class / 2). Implies --global-width 16 if unset.
    #[arg(long, env = "SSF_SPLIT_INFO")]
    pub split_info: bool,

    #[arg(long, env = "SSF_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Dataset manifest.
    #[arg(long, alias = "dataset", env = "SSF_MANIFEST")]
    pub manifest: PathBuf,

    #[arg(long, value_enum, env = "SSF_STAGE", default_value_t = StageArg::Semantic)]
    pub stage: StageArg,

    #[arg(long, value_enum, env = "SSF_HEAD", default_value_t = HeadArg::Cnn)]
    pub head: HeadArg,

    /// Feature columns: comma-separated pc, ap, sd (or "all").
    #[arg(long, env = "SSF_SUBSET", default_value = "pc,ap,sd")]
    pub subset: String,

    /// Step-1 checkpoint whose global branch step 2 builds on.
    #[arg(long, env = "SSF_FROM_CHECKPOINT")]
    pub from_checkpoint: Option<PathBuf>,

    /// Width of the global branch output (step 1).
    #[arg(long, env = "SSF_GLOBAL_FEATURES", default_value_t = 256)]
    pub global_features: usize,

    /// Width of the fused hidden layer (step 2).
    #[arg(long, env = "SSF_FC3", default_value_t = DEFAULT_FC3)]
    pub fc3: usize,

    #[command(flatten)]
    pub optim: OptimArgs,

    /// Output directory for the checkpoint, metrics and run record.
    #[arg(long, short, env = "SSF_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OptimArgs {
    #[arg(long, env = "SSF_EPOCHS", default_value_t = 30, value_parser = clap::value_parser!(u32).range(1..=100_000))]
    pub epochs: u32,

    #[arg(long, env = "SSF_BATCH", default_value_t = 32, value_parser = clap::value_parser!(u32).range(1..=65_536))]
    pub batch: u32,

    #[arg(long, env = "SSF_LR", default_value_t = 1e-4)]
    pub lr: f64,

    #[arg(long, env = "SSF_WEIGHT_DECAY", default_value_t = 5e-4)]
    pub weight_decay: f64,

    #[arg(long, env = "SSF_SEED", default_value_t = 0)]
    pub seed: u64,
}

impl OptimArgs {
    fn adam(&self) -> Result<AdamConfig> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Usage(format!("--lr must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Usage(format!(
                "--weight-decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        })
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long, alias = "dataset", env = "SSF_MANIFEST")]
    pub manifest: PathBuf,

    #[arg(long, env = "SSF_CHECKPOINT")]
    pub checkpoint: PathBuf,

    #[arg(long, value_enum, env = "SSF_SPLIT", default_value_t = SplitArg::Test)]
    pub split: SplitArg,

    #[arg(long, env = "SSF_BATCH", default_value_t = 32, value_parser = clap::value_parser!(u32).range(1..=65_536))]
    pub batch: u32,

    /// Directory for report.json, report.txt, confusion.csv and the run record.
    #[arg(long, short, env = "SSF_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AblateArgs {
    #[arg(long, alias = "dataset", env = "SSF_MANIFEST")]
    pub manifest: PathBuf,

    #[command(flatten)]
    pub optim: OptimArgs,

    /// Directory for ablation.json, ablation.txt and the run record.
    #[arg(long, short, env = "SSF_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GradcheckArgs {
    #[arg(long, value_enum, env = "SSF_MODEL", default_value_t = ModelArg::SsfCnn)]
    pub model: ModelArg,

    #[arg(long = "L", env = "SSF_L", default_value_t = 4, value_parser = clap::value_parser!(u16).range(1..=64))]
    pub l: u16,

    #[arg(long, env = "SSF_SUBSET", default_value = "pc,ap,sd")]
    pub subset: String,

    #[arg(long, env = "SSF_CLASSES", default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..=1000))]
    pub classes: u32,

    #[arg(long, env = "SSF_BATCH", default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..=64))]
    pub batch: u32,

    /// Pass threshold on the largest relative error.
    #[arg(long, env = "SSF_TOL", default_value_t = 1e-4)]
    pub tol: f64,

    /// Central-difference step.
    #[arg(long, env = "SSF_STEP", default_value_t = 1e-6)]
    pub step: f64,

    /// Entries checked per parameter block once a model reaches 100k parameters.
    #[arg(long, env = "SSF_MAX_ENTRIES", default_value_t = 64)]
    pub max_entries: usize,

    #[arg(long, env = "SSF_SEED", default_value_t = 0)]
    pub seed: u64,

    #[arg(long, short, env = "SSF_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    /// Number of categories L.
    #[arg(long = "L", env = "SSF_L", default_value_t = 40, value_parser = clap::value_parser!(u16).range(1..))]
    pub l: u16,

    /// Mask side length for the extraction timing.
    #[arg(long, env = "SSF_SIZE", default_value_t = 224, value_parser = clap::value_parser!(u32).range(1..=16384))]
    pub size: u32,

    /// Timed iterations for extraction and for each model.
    #[arg(long, env = "SSF_ITERS", default_value_t = 1000, value_parser = clap::value_parser!(u32).range(1..))]
    pub iters: u32,

    #[arg(long, env = "SSF_WARMUP", default_value_t = 100)]
    pub warmup: u32,

    #[arg(long, env = "SSF_CLASSES", default_value_t = 19, value_parser = clap::value_parser!(u32).range(1..=1000))]
    pub classes: u32,

    /// Skip the model complexity table.
    #[arg(long, env = "SSF_NO_MODELS")]
    pub no_models: bool,

    #[arg(long, env = "SSF_SEED", default_value_t = 0)]
    pub seed: u64,

    #[arg(long, short, env = "SSF_OUT")]
    pub out: Option<PathBuf>,
}

/// Written as `run.json` beside every command's outputs.
#[derive(Debug, Serialize)]
struct RunRecord<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    parallel_feature: bool,
    threads: u16,
    config: &'a T,
}

fn write_record<T: Serialize>(dir: &Path, command: &'static str, threads: u16, config: &T) -> Result<()> {
    let rec = RunRecord {
        tool: "ssf",
        version: VERSION,
        command,
        parallel_feature: par::is_parallel(),
        threads,
        config,
    };
    let json = serde_json::to_string_pretty(&rec).expect("record serializes");
    write_bytes(&dir.join("run.json"), json.as_bytes())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_bytes(path, text.as_bytes())
}

/// Exit code for an error: 2 for usage errors, 1 for everything else.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) | Error::EmptySubset => 2,
        _ => 1,
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    let threads = cli.threads;
    par::with_threads(threads as usize, move || match &cli.command {
        Command::Extract(a) => cmd_extract(a, threads),
        Command::Synth(a) => cmd_synth(a, threads).map(|_| 0),
        Command::Train(a) => cmd_train(a, threads).map(|_| 0),
        Command::Eval(a) => cmd_eval(a, threads).map(|_| 0),
        Command::Ablate(a) => cmd_ablate(a, threads),
        Command::Gradcheck(a) => cmd_gradcheck(a, threads),
        Command::Bench(a) => cmd_bench(a, threads).map(|_| 0),
    })
}

struct ExtractJob {
    name: String,
    path: PathBuf,
}

/// Returns 0 when every mask was processed, 1 when any failed; failures are
/// listed on stderr and do not stop the remaining masks.
pub fn cmd_extract(a: &ExtractArgs, threads: u16) -> Result<i32> {
    let manifest = a.manifest.as_deref().map(load_manifest_entries).transpose()?;
    let (l, void) = a.mask.resolve(manifest.as_ref())?;
    let mut jobs: Vec<ExtractJob> = Vec::new();
    if let Some(m) = &manifest {
        jobs.extend(m.entries.iter().map(|e| ExtractJob {
            name: e.id.clone(),
            path: m.resolve(&e.mask),
        }));
    }
    for p in &a.masks {
        let stem = p.file_stem().map_or_else(|| "mask".into(), |s| s.to_string_lossy().into_owned());
        jobs.push(ExtractJob { name: stem, path: p.clone() });
    }
    if jobs.is_empty() {
        return Err(Error::Usage("no masks given (pass mask paths or --manifest)".into()));
    }
    let mut names = std::collections::HashSet::new();
    if let Some(dup) = jobs.iter().find(|j| !names.insert(j.name.as_str())) {
        return Err(Error::Usage(format!("two masks map to the same output name {:?}", dup.name)));
    }
    let ext = match a.format {
        Format::Csv => "csv",
        Format::Bin => "ssfm",
    };
    let results = par::map(&jobs, |job| -> Result<PathBuf> {
        let mask = read_mask(&job.path, l, void)?;
        let ssf = extract_ssf(&mask);
        let out = a.out.join(format!("{}.{ext}", job.name));
        match a.format {
            Format::Csv => write_ssf_csv(&out, &ssf)?,
            Format::Bin => write_ssf_container(&out, &ssf)?,
        }
        Ok(out)
    });
    let mut failed = 0;
    for (job, r) in jobs.iter().zip(&results) {
        match r {
            Ok(p) => println!("{}", p.display()),
            Err(e) => {
                failed += 1;
                eprintln!("failed: {}: {e}", job.path.display());
            }
        }
    }
    write_record(&a.out, "extract", threads, a)?;
    if failed > 0 {
        eprintln!("{failed} of {} masks failed", jobs.len());
        return Ok(1);
    }
    Ok(0)
}

/// A manifest whose header and entries parse; files are checked per mask.
fn load_manifest_entries(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    crate::data::manifest::parse_manifest(&text, path)
}

pub fn cmd_synth(a: &SynthArgs, threads: u16) -> Result<DatasetManifest> {
    let recipe_err = |e: Error| match e {
        Error::Recipe(m) => Error::Usage(m),
        other => other,
    };
    let side = a.size as usize;
    let spec = if a.split_info {
        let width = if a.global_width == 0 { 16 } else { a.global_width };
        SynthSpec::split_information(a.l as usize, side, a.samples as usize, a.noise, width, a.global_spread, a.seed)
    } else {
        SynthSpec::standard(a.classes as usize, a.l as usize, side, a.samples as usize, a.noise, a.seed).map(|s| {
            if a.global_width > 0 {
                s.with_globals(a.global_width, a.global_spread)
            } else {
                s
            }
        })
    }
    .map_err(recipe_err)?;
    spec.validate().map_err(recipe_err)?;
    let m = generate_synthetic(&spec, &a.out)?;
    write_record(&a.out, "synth", threads, a)?;
    println!("{} samples written to {}", m.entries.len(), a.out.join("manifest.jsonl").display());
    Ok(m)
}

#[derive(Debug, Serialize)]
struct CheckpointMeta<'a> {
    version: &'static str,
    architecture: &'a Architecture,
    plan: &'a TrainPlan,
    seed: u64,
    epochs: usize,
    final_train: Option<&'a EpochMetrics>,
    final_test: Option<&'a EpochMetrics>,
    frozen_hashes: Vec<FrozenHash<'a>>,
}

#[derive(Debug, Serialize)]
struct FrozenHash<'a> {
    branch: &'a str,
    before: &'a str,
    after: &'a str,
}

pub fn cmd_train(a: &TrainArgs, threads: u16) -> Result<PathBuf> {
    let stage: Stage = a.stage.into();
    if stage == Stage::Step2 && a.from_checkpoint.is_none() {
        return Err(Error::Usage(
            "train --stage step2 needs --from-checkpoint <step1 checkpoint>".into(),
        ));
    }
    let subset: FeatureSubset = a.subset.parse().map_err(|e: Error| Error::Usage(e.to_string()))?;
    let kind: HeadKind = a.head.into();
    if kind == HeadKind::PcConv1d && subset != FeatureSubset::PC {
        return Err(Error::Usage("--head pc1d takes only --subset pc".into()));
    }
    let plan = TrainPlan {
        batch_size: a.optim.batch as usize,
        optimizer: a.optim.adam()?,
        ..TrainPlan::new(stage, a.optim.epochs as usize, a.optim.seed)
    };
    let manifest = load_manifest(&a.manifest)?;
    let data = load_dataset(&manifest)?;
    let head = SemanticHead::of_kind(kind, data.num_categories, subset);
    let net = match stage {
        Stage::Semantic => Network::new(
            Architecture::Semantic {
                head,
                num_classes: data.num_classes,
            },
            plan.seed,
        )?,
        Stage::Step1 => {
            let width = data
                .global_width()
                .ok_or_else(|| Error::InvalidDimensions("step 1 needs global feature vectors in the manifest".into()))?;
            Network::new(
                Architecture::Global {
                    input_width: width,
                    features: a.global_features,
                    num_classes: data.num_classes,
                },
                plan.seed,
            )?
        }
        Stage::Step2 => {
            let ckpt = Checkpoint::read(a.from_checkpoint.as_ref().expect("checked above"))?;
            fusion_from_step1(&ckpt, head, a.fc3, plan.seed)?
        }
    };
    let mut log = String::new();
    let out = train(net, &data, &plan, |m| {
        let line = serde_json::to_string(m).expect("metrics serialize");
        eprintln!("{line}");
        log.push_str(&line);
        log.push('\n');
    })?;
    let ckpt_path = a.out.join("model.ssfc");
    out.network.save(&ckpt_path)?;
    write_text(&a.out.join("metrics.jsonl"), &log)?;
    let meta = CheckpointMeta {
        version: VERSION,
        architecture: out.network.architecture(),
        plan: &plan,
        seed: plan.seed,
        epochs: plan.epochs,
        final_train: out.final_metrics(Split::Train),
        final_test: out.final_metrics(Split::Test),
        frozen_hashes: out
            .frozen_hashes
            .iter()
            .map(|(b, h0, h1)| FrozenHash {
                branch: b,
                before: h0,
                after: h1,
            })
            .collect(),
    };
    let meta_json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    write_text(&a.out.join("model.ssfc.meta.json"), &meta_json)?;
    write_record(&a.out, "train", threads, a)?;
    println!("{}", ckpt_path.display());
    Ok(ckpt_path)
}

pub fn cmd_eval(a: &EvalArgs, threads: u16) -> Result<crate::eval::EvalReport> {
    let manifest = load_manifest(&a.manifest)?;
    let data = load_dataset(&manifest)?;
    let net = Network::load(&a.checkpoint)?;
    if net.num_classes() != data.num_classes {
        return Err(Error::Checkpoint(format!(
            "model predicts {} classes, manifest has {}",
            net.num_classes(),
            data.num_classes
        )));
    }
    let report = evaluate(&net, &data, a.split.into(), a.batch as usize)?;
    print!("{}", report.to_text());
    if let Some(dir) = &a.out {
        write_text(&dir.join("report.json"), &serde_json::to_string_pretty(&report).expect("report serializes"))?;
        write_text(&dir.join("report.txt"), &report.to_text())?;
        write_text(&dir.join("confusion.csv"), &report.confusion_csv())?;
        write_record(dir, "eval", threads, a)?;
    }
    Ok(report)
}

/// Exit code 1 when any cell failed.
pub fn cmd_ablate(a: &AblateArgs, threads: u16) -> Result<i32> {
    let manifest = load_manifest(&a.manifest)?;
    let data = load_dataset(&manifest)?;
    let cfg = AblationConfig {
        batch_size: a.optim.batch as usize,
        optimizer: a.optim.adam()?,
        ..AblationConfig::new(a.optim.epochs as usize, a.optim.seed)
    };
    let report = run_ablation(&data, &cfg);
    print!("{}", report.to_text());
    if let Some(dir) = &a.out {
        write_text(&dir.join("ablation.json"), &report.to_json())?;
        write_text(&dir.join("ablation.txt"), &report.to_text())?;
        write_record(dir, "ablate", threads, a)?;
    }
    Ok(if report.cells.iter().any(|c| c.error.is_some()) { 1 } else { 0 })
}

/// Random model plus a random batch for gradient checking. Inputs are drawn
/// away from zero so no ReLU sits exactly on its kink.
pub fn gradcheck_objective(
    model: ModelArg,
    l: usize,
    subset: FeatureSubset,
    classes: usize,
    batch: usize,
    seed: u64,
) -> Result<NetworkObjective> {
    use rand::{Rng, SeedableRng};
    let arch = match model {
        ModelArg::SsfCnn => Architecture::Semantic {
            head: SemanticHead::cnn(l, subset),
            num_classes: classes,
        },
        ModelArg::SsfNn => Architecture::Semantic {
            head: SemanticHead::nn(l, subset),
            num_classes: classes,
        },
        ModelArg::PcConv1d => Architecture::Semantic {
            head: SemanticHead::pc_conv1d(l),
            num_classes: classes,
        },
        ModelArg::Fusion => Architecture::Fusion {
            input_width: 6,
            global_features: 8,
            head: SemanticHead::nn(l, subset),
            fc3: 16,
            num_classes: classes,
        },
    };
    let mut net = Network::new(arch, seed)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    // non-zero biases keep pre-activations off exact zeros
    for (_, t) in net.named_params_mut() {
        if t.shape().len() == 1 {
            for v in t.data_mut() {
                *v = rng.gen_range(-0.1..0.1);
            }
        }
    }
    let examples: Vec<crate::data::Example> = (0..batch)
        .map(|i| crate::data::Example {
            id: format!("g{i}"),
            ssf: (0..l * 5).map(|_| rng.gen_range(0.05..1.0)).collect(),
            global: Some((0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()),
            label: i % classes,
            split: Split::Train,
        })
        .collect();
    let refs: Vec<&crate::data::Example> = examples.iter().collect();
    let batch = net.make_batch(&refs)?;
    Ok(NetworkObjective { net, batch })
}

/// Exit code 0 when the check passes, 1 when it does not.
pub fn cmd_gradcheck(a: &GradcheckArgs, threads: u16) -> Result<i32> {
    let subset: FeatureSubset = a.subset.parse().map_err(|e: Error| Error::Usage(e.to_string()))?;
    if !(a.tol > 0.0) || !(a.step > 0.0) {
        return Err(Error::Usage("--tol and --step must be positive".into()));
    }
    let subset = if a.model == ModelArg::PcConv1d { FeatureSubset::PC } else { subset };
    let mut obj = gradcheck_objective(a.model, a.l as usize, subset, a.classes as usize, a.batch as usize, a.seed)?;
    let total = obj.net.param_count();
    let cfg = GradCheckConfig {
        step: a.step,
        tolerance: a.tol,
        max_entries_per_block: (total >= crate::nn::gradcheck::EXHAUSTIVE_LIMIT).then_some(a.max_entries.max(1)),
        seed: a.seed,
    };
    let report = grad_check(&mut obj, &cfg)?;
    for b in &report.blocks {
        println!(
            "{:<24} {:>9} checked {:>7}  max rel err {:.3e}",
            b.name, b.size, b.checked, b.max_rel_error
        );
    }
    let passed = report.passed();
    println!(
        "{} (max relative error {:.3e}, tolerance {:.0e})",
        if passed { "PASS" } else { "FAIL" },
        report.max_rel_error(),
        a.tol
    );
    if let Some(dir) = &a.out {
        write_text(&dir.join("gradcheck.json"), &serde_json::to_string_pretty(&report).expect("report serializes"))?;
        write_record(dir, "gradcheck", threads, a)?;
    }
    Ok(if passed { 0 } else { 1 })
}

#[derive(Debug, Serialize)]
pub struct ExtractionTiming {
    pub size: usize,
    pub num_categories: usize,
    pub iterations: usize,
    pub median_seconds: f64,
    pub mean_seconds: f64,
}

/// Times single-threaded extraction of a seeded random `size × size` mask.
pub fn time_extraction(size: usize, l: usize, iterations: usize, seed: u64) -> Result<ExtractionTiming> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let data = (0..size * size).map(|_| rng.gen_range(0..=l as u16)).collect();
    let mask = SegmentationMask::new(size, size, l, Some(0), data)?;
    let mut times = Vec::with_capacity(iterations);
    for _ in 0..iterations.max(1) {
        let t = Instant::now();
        std::hint::black_box(extract_ssf(std::hint::black_box(&mask)));
        times.push(t.elapsed().as_secs_f64());
    }
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    times.sort_by(f64::total_cmp);
    let n = times.len();
    let median = if n % 2 == 1 { times[n / 2] } else { 0.5 * (times[n / 2 - 1] + times[n / 2]) };
    Ok(ExtractionTiming {
        size,
        num_categories: l,
        iterations: n,
        median_seconds: median,
        mean_seconds: mean,
    })
}

pub fn cmd_bench(a: &BenchArgs, threads: u16) -> Result<()> {
    let timing = time_extraction(a.size as usize, a.l as usize, a.iters as usize, a.seed)?;
    println!(
        "extraction {0}x{0}, L={1}: median {2:.1} us, mean {3:.1} us over {4} runs",
        timing.size,
        timing.num_categories,
        timing.median_seconds * 1e6,
        timing.mean_seconds * 1e6,
        timing.iterations
    );
    let complexity = if a.no_models {
        None
    } else {
        let r = measure_complexity(a.l as usize, a.classes as usize, a.warmup as usize, a.iters as usize, a.seed)?;
        print!("{}", r.to_text());
        Some(r)
    };
    if let Some(dir) = &a.out {
        #[derive(Serialize)]
        struct Bench<'a> {
            extraction: &'a ExtractionTiming,
            complexity: Option<&'a crate::eval::ComplexityReport>,
        }
        let json = serde_json::to_string_pretty(&Bench {
            extraction: &timing,
            complexity: complexity.as_ref(),
        })
        .expect("bench serializes");
        write_text(&dir.join("bench.json"), &json)?;
        write_record(dir, "bench", threads, a)?;
    }
    Ok(())
}
