//! `forgeguard` command-line entry point.
//!
//! Exit codes: 0 success, 1 internal or data error, 2 usage or configuration
//! error.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataset::{CompressionLevel, ManipulationMethod, Split, SplitMap};
use crate::error::{Error, Result};
use crate::evaluation::{self, Descriptor, MatrixSpec};
use crate::exec::{self, ExecMode};
use crate::frames::FrameStore;
use crate::models::{apply_weight_policy, Checkpoint, Classifier, ModelConfig, PolicyKind, Variant, WeightPolicy};
use crate::preprocess::{self, AutoDecoder, FaceDetector, PreprocessOptions, SkinToneDetector};
use crate::sampling::{
    balance_classes, build_frame_index, build_window_index, cap_per_video, DatasetManifest, IndexFilter, WindowSample,
};
use crate::synthgen::{self, SynthConfig, TamperMode};
use crate::training::{self, RunDir, TrainConfig, SEED_ENV};

#[derive(Debug, Parser)]
#[command(name = "forgeguard", version, about = "Face forgery detection: preprocessing, training and evaluation")]
struct Cli {
    /// Worker threads for parallel stages [default: number of cores].
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset.
    Synth(SynthArgs),
    /// Detect and crop faces from a directory of videos.
    Preprocess(PreprocessArgs),
    /// Train a classifier into a run directory.
    Train(TrainArgs),
    /// Score a checkpoint and write report files.
    Evaluate(EvaluateArgs),
    /// Write a per-frame real/fake CSV for a directory of crops.
    ExportBenchmark(ExportArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 40)]
    videos: usize,
    #[arg(long, default_value_t = 10)]
    frames: usize,
    #[arg(long, default_value_t = 48)]
    size: u32,
    /// spatial_mouth or temporal_flicker.
    #[arg(long, default_value = "spatial_mouth")]
    mode: String,
    /// Method recorded for tampered videos.
    #[arg(long, default_value = "neuraltextures")]
    method: String,
    /// Comma-separated compression levels.
    #[arg(long, default_value = "raw")]
    compression: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated frame indices rendered without a face.
    #[arg(long)]
    blank_frames: Option<String>,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    videos_dir: PathBuf,
    out_dir: PathBuf,
    /// Directory with train.json, val.json and test.json.
    #[arg(long)]
    splits: PathBuf,
    #[arg(long, default_value = "skin-tone")]
    detector: String,
    #[arg(long, default_value_t = preprocess::DEFAULT_MARGIN)]
    margin: f64,
    /// Inferred from a `<method>/<compression>/...` path when omitted.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    compression: Option<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Run configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directories; every manifest below them is used.
    #[arg(long = "data", required = true)]
    data: Vec<PathBuf>,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    window: Option<usize>,
    /// toy or standard.
    #[arg(long)]
    preset: Option<String>,
    /// random, generic or face.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    name_map: Option<PathBuf>,
    #[arg(long)]
    freeze_encoder: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// standard or high.
    #[arg(long)]
    precision: Option<String>,
    /// `key=v1,v2` with key method, compression or split. Repeatable.
    #[arg(long = "filter")]
    filters: Vec<String>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long = "data", required = true)]
    data: Vec<PathBuf>,
    /// `key=v1,v2` with key method, compression or split. Repeatable.
    /// The split defaults to test.
    #[arg(long = "filter")]
    filters: Vec<String>,
    /// Accuracy per method and compression level instead of a single row.
    #[arg(long)]
    matrix: bool,
    /// Score a single-frame checkpoint as a majority vote over this window.
    #[arg(long)]
    majority_window: Option<usize>,
    #[arg(long)]
    per_video_cap: Option<usize>,
    /// Row label in the report.
    #[arg(long)]
    name: Option<String>,
    /// Output directory [default: <checkpoint dir>/eval].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory of face crops; frame ids are paths relative to it.
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Toy,
    Standard,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(Preset::Toy),
            "standard" => Ok(Preset::Standard),
            _ => Err(Error::Config(format!("unknown preset {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub preset: Preset,
    pub variant: Variant,
    pub window: usize,
    pub policy: PolicyKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name_map: Option<PathBuf>,
    pub freeze_encoder: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            preset: Preset::Toy,
            variant: Variant::SingleFrame,
            window: 1,
            policy: PolicyKind::Random,
            checkpoint: None,
            name_map: None,
            freeze_encoder: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Empty means every method.
    pub methods: Vec<ManipulationMethod>,
    /// Empty means every level.
    pub compressions: Vec<CompressionLevel>,
    pub stride: usize,
    /// 0 keeps every training sample.
    pub per_video_cap: usize,
    pub balance: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { methods: Vec::new(), compressions: Vec::new(), stride: 1, per_video_cap: 0, balance: true }
    }
}

/// Effective training configuration. Sources in decreasing precedence:
/// command-line flags, `FORGEGUARD_SEED`, the config file, defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub data: DataSection,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn model_config(&self) -> ModelConfig {
        let variant = match self.model.variant {
            Variant::MajorityVote => Variant::SingleFrame,
            v => v,
        };
        let mut mc = match self.model.preset {
            Preset::Toy => ModelConfig::toy(variant, self.model.window),
            Preset::Standard => ModelConfig::standard(variant, self.model.window),
        };
        mc.init_seed = self.train.seed;
        mc
    }

    pub fn weight_policy(&self) -> WeightPolicy {
        WeightPolicy {
            kind: self.model.policy,
            checkpoint: self.model.checkpoint.clone(),
            name_map: self.model.name_map.clone(),
            freeze_encoder: self.model.freeze_encoder,
        }
    }
}

fn parse_list<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<Vec<T>> {
    s.split(',').map(str::trim).filter(|v| !v.is_empty()).map(str::parse).collect()
}

fn usage(e: Error) -> Error {
    match e {
        Error::Parse { message, .. } => Error::Config(message),
        other => other,
    }
}

/// Parses repeated `key=values` filter flags.
pub fn parse_filters(filters: &[String]) -> Result<IndexFilter> {
    let mut f = IndexFilter::all();
    for raw in filters {
        let (key, values) = raw
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("filter {raw:?} is not key=values")))?;
        match key.trim() {
            "method" | "methods" => {
                let set: BTreeSet<ManipulationMethod> = parse_list(values).map_err(usage)?.into_iter().collect();
                f.methods = Some(set);
            }
            "compression" | "compressions" => {
                let set: BTreeSet<CompressionLevel> = parse_list(values).map_err(usage)?.into_iter().collect();
                f.compressions = Some(set);
            }
            "split" => f.split = Some(values.trim().parse().map_err(usage)?),
            other => return Err(Error::Config(format!("unknown filter key {other:?}"))),
        }
    }
    Ok(f)
}

fn open_sources(dirs: &[PathBuf]) -> Result<Vec<DatasetManifest>> {
    let mut out = Vec::new();
    for d in dirs {
        if !d.exists() {
            return Err(Error::Config(format!("data path {} does not exist", d.display())));
        }
        if d.is_file() {
            out.push(DatasetManifest::open(d)?);
        } else {
            out.extend(DatasetManifest::discover(d)?);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no manifests found under the data paths".into()));
    }
    Ok(out)
}

/// Window samples for a model of window size `w` (1 for frame models).
fn samples_for(sources: &[DatasetManifest], w: usize, stride: usize, filter: &IndexFilter) -> Result<Vec<WindowSample>> {
    if w == 1 {
        Ok(build_frame_index(sources, filter)?.into_iter().map(Into::into).collect())
    } else {
        let s = build_window_index(sources, w, stride, filter)?;
        if s.is_empty() {
            return Err(Error::EmptySelection(format!("no windows of {w} consecutive detected frames")));
        }
        Ok(s)
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn cmd_synth(args: &SynthArgs, mode: ExecMode) -> Result<()> {
    let config = SynthConfig {
        n_videos: args.videos,
        frames_per_video: args.frames,
        image_size: args.size,
        tamper_mode: args.mode.parse::<TamperMode>()?,
        method: args.method.parse().map_err(usage)?,
        compressions: parse_list(&args.compression).map_err(usage)?,
        seed: args.seed.or(env_seed()?).unwrap_or(0),
        blank_frames: match &args.blank_frames {
            Some(s) => s
                .split(',')
                .map(|v| v.trim().parse().map_err(|_| Error::Config(format!("bad frame index {v:?}"))))
                .collect::<Result<_>>()?,
            None => Vec::new(),
        },
    };
    let ds = synthgen::generate(&config, &args.out, mode)?;
    println!("wrote {} manifests under {}", ds.manifests.len(), ds.root.display());
    if config.tamper_mode == TamperMode::SpatialMouth {
        let level = config.compressions[0];
        let c = synthgen::separability_certificate(&config, level, mode)?;
        println!(
            "separability ({}): threshold {:.3} accuracy {:.4} over {} frames",
            level, c.threshold, c.accuracy, c.frames
        );
    }
    Ok(())
}

fn infer_slice(dir: &Path) -> Option<(ManipulationMethod, CompressionLevel)> {
    let abs = dir.canonicalize().ok()?;
    for p in abs.ancestors() {
        let name = p.file_name()?.to_string_lossy();
        if let Ok(level) = name.parse::<CompressionLevel>() {
            let method = p.parent()?.file_name()?.to_string_lossy().parse().ok()?;
            return Some((method, level));
        }
    }
    None
}

fn make_detector(name: &str) -> Result<fn() -> Box<dyn FaceDetector>> {
    match name {
        "skin-tone" => Ok(|| Box::new(SkinToneDetector::default())),
        other => Err(Error::Config(format!("unknown detector {other:?} (available: skin-tone)"))),
    }
}

fn cmd_preprocess(args: &PreprocessArgs, mode: ExecMode) -> Result<()> {
    let detector = make_detector(&args.detector)?;
    if !args.videos_dir.is_dir() {
        return Err(Error::NoVideos(args.videos_dir.clone()));
    }
    let inferred = infer_slice(&args.videos_dir);
    let method = match &args.method {
        Some(m) => m.parse().map_err(usage)?,
        None => inferred
            .map(|i| i.0)
            .ok_or_else(|| Error::Config("cannot infer --method from the path".into()))?,
    };
    let compression = match &args.compression {
        Some(c) => c.parse().map_err(usage)?,
        None => inferred
            .map(|i| i.1)
            .ok_or_else(|| Error::Config("cannot infer --compression from the path".into()))?,
    };
    let splits = SplitMap::load_dir(&args.splits)?;
    let opts = PreprocessOptions {
        videos_dir: args.videos_dir.clone(),
        out_dir: args.out_dir.clone(),
        method,
        compression,
        margin: args.margin,
        exec: mode,
    };
    let manifest = preprocess::preprocess_directory(&opts, &splits, detector, &AutoDecoder::default())?;
    let found = manifest.videos.iter().flat_map(|v| &v.frames).filter(|f| f.face_found()).count();
    println!(
        "{} videos, {} frames, {} with a face -> {}",
        manifest.videos.len(),
        manifest.frame_count(),
        found,
        args.out_dir.join(crate::dataset::MANIFEST_FILE_NAME).display()
    );
    Ok(())
}

fn resolve_run_config(args: &TrainArgs) -> Result<RunConfig> {
    let mut rc = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            RunConfig::from_toml(&text, &p.display().to_string())?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = env_seed()? {
        rc.train.seed = seed;
    }
    if let Some(v) = &args.variant {
        rc.model.variant = v.parse()?;
    }
    if let Some(w) = args.window {
        rc.model.window = w;
    }
    if let Some(p) = &args.preset {
        rc.model.preset = p.parse()?;
    }
    if let Some(p) = &args.policy {
        rc.model.policy = p.parse()?;
    }
    if args.checkpoint.is_some() {
        rc.model.checkpoint = args.checkpoint.clone();
    }
    if args.name_map.is_some() {
        rc.model.name_map = args.name_map.clone();
    }
    if args.freeze_encoder {
        rc.model.freeze_encoder = true;
    }
    if let Some(s) = args.seed {
        rc.train.seed = s;
    }
    if let Some(e) = args.epochs {
        rc.train.max_epochs = e;
    }
    if let Some(lr) = args.lr {
        rc.train.learning_rate = lr;
    }
    if let Some(b) = args.batch_size {
        rc.train.batch_size = b;
    }
    if let Some(p) = args.patience {
        rc.train.early_stop_patience = p;
    }
    if let Some(p) = &args.precision {
        rc.train.precision = p.parse()?;
    }
    if rc.model.variant == Variant::SingleFrame && args.window.is_none() {
        rc.model.window = 1;
    }
    crate::models::check_window(rc.model.window)?;
    if rc.model.variant == Variant::SingleFrame && rc.model.window != 1 {
        return Err(Error::Config("single_frame models take --window 1".into()));
    }
    if rc.data.stride == 0 {
        return Err(Error::Config("data.stride must be positive".into()));
    }
    rc.train.validate()?;
    Ok(rc)
}

fn cmd_train(args: &TrainArgs, mode: ExecMode) -> Result<()> {
    let rc = resolve_run_config(args)?;
    let flag_filter = parse_filters(&args.filters)?;
    let mut filter = IndexFilter {
        methods: (!rc.data.methods.is_empty()).then(|| rc.data.methods.iter().copied().collect()),
        compressions: (!rc.data.compressions.is_empty()).then(|| rc.data.compressions.iter().copied().collect()),
        split: None,
    };
    if flag_filter.methods.is_some() {
        filter.methods = flag_filter.methods;
    }
    if flag_filter.compressions.is_some() {
        filter.compressions = flag_filter.compressions;
    }
    let sources = open_sources(&args.data)?;
    let mc = rc.model_config();
    let w = mc.window;
    let mut train_set = samples_for(&sources, w, rc.data.stride, &filter.clone().with_split(Split::Train))?;
    let val_set = samples_for(&sources, w, 1, &filter.clone().with_split(Split::Val))?;
    if rc.data.per_video_cap > 0 {
        train_set = cap_per_video(train_set, rc.data.per_video_cap);
    }
    if rc.data.balance {
        train_set = balance_classes(train_set, rc.train.seed)?;
    }

    let run = RunDir::create(&args.out)?;
    run.write("config.toml", &rc.to_toml())?;
    let mut model = Classifier::new(mc)?;
    let report = apply_weight_policy(&mut model, &rc.weight_policy())?;
    run.write("load_report.txt", &report.to_text())?;
    let (total, trainable) = model.count_parameters();
    println!(
        "{} ({} frames): {} parameters, {} trainable; {} training / {} validation samples",
        rc.model.variant,
        w,
        total,
        trainable,
        train_set.len(),
        val_set.len()
    );
    let mut frames = FrameStore::new(model.encoder().input_size() as u32);
    let history = training::train(&mut model, &train_set, &val_set, &mut frames, &rc.train, Some(&run), mode)?;
    if rc.model.variant == Variant::MajorityVote {
        let mv = model.as_majority_vote(rc.model.window)?;
        Checkpoint::from_classifier(&mv).save(&run.file(training::BEST_CHECKPOINT))?;
    }
    let best = history.best_epoch().expect("at least one epoch");
    println!(
        "best epoch {} val_acc {:.4}; {} epochs run; outputs in {}",
        best.epoch,
        best.val_acc,
        history.epochs.len(),
        run.path.display()
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<Classifier> {
    Checkpoint::load(path)?.to_classifier()
}

fn write_out(dir: &Path, name: &str, text: &str) -> Result<()> {
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
}

fn cmd_evaluate(args: &EvaluateArgs, mode: ExecMode) -> Result<()> {
    let mut model = load_model(&args.checkpoint)?;
    if let Some(w) = args.majority_window {
        model = model.as_majority_vote(w)?;
    }
    let mut filter = parse_filters(&args.filters)?;
    if filter.split.is_none() {
        filter.split = Some(Split::Test);
    }
    let sources = open_sources(&args.data)?;
    let out = match &args.out {
        Some(o) => o.clone(),
        None => args.checkpoint.parent().unwrap_or(Path::new(".")).join("eval"),
    };
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let frames = FrameStore::new(model.encoder().input_size() as u32);
    let w = model.window_size();
    if args.matrix {
        let present = |f: &dyn Fn(&crate::dataset::VideoRecord) -> bool| {
            sources.iter().flat_map(|s| &s.manifest.videos).any(|v| f(&v.video))
        };
        let rows: Vec<ManipulationMethod> = ManipulationMethod::TABLE_ORDER
            .into_iter()
            .filter(|m| filter.methods.as_ref().map_or_else(|| present(&|v| v.method == *m), |s| s.contains(m)))
            .collect();
        let columns: Vec<CompressionLevel> = CompressionLevel::ALL
            .into_iter()
            .filter(|c| filter.compressions.as_ref().map_or_else(|| present(&|v| v.compression == *c), |s| s.contains(c)))
            .collect();
        let spec = MatrixSpec { rows, columns, split: filter.split, window: w, per_video_cap: args.per_video_cap };
        let matrix = evaluation::evaluate_matrix(&model, &sources, &spec, &frames, mode)?;
        let text = matrix.render();
        write_out(&out, "matrix.txt", &text)?;
        write_out(&out, "matrix.tsv", &matrix.sidecar())?;
        print!("{text}");
        return Ok(());
    }
    let mut samples = samples_for(&sources, w, 1, &filter)?;
    if let Some(cap) = args.per_video_cap {
        samples = cap_per_video(samples, cap);
    }
    let mut descriptor = Descriptor::from_filter(&filter, w);
    if descriptor.methods.is_empty() {
        let mut seen: BTreeSet<ManipulationMethod> = BTreeSet::new();
        seen.extend(samples.iter().map(|s| s.method));
        descriptor.methods = seen.into_iter().collect();
    }
    let eval = evaluation::evaluate(&model, &samples, &frames, mode, descriptor)?;
    let name = args.name.clone().unwrap_or_else(|| model.variant().to_string());
    let rows = vec![(name, eval.report.clone())];
    let text = evaluation::render_report_table(&rows);
    write_out(&out, "report.txt", &text)?;
    write_out(&out, "report.tsv", &evaluation::report_sidecar(&rows))?;
    write_out(&out, "decisions.tsv", &evaluation::decisions_to_text(&eval.decisions))?;
    print!("{text}");
    Ok(())
}

fn cmd_export(args: &ExportArgs, mode: ExecMode) -> Result<()> {
    let model = load_model(&args.checkpoint)?;
    if !matches!(model.variant(), Variant::SingleFrame | Variant::MajorityVote) {
        return Err(Error::Config(format!(
            "benchmark export scores single frames; checkpoint is {}",
            model.variant()
        )));
    }
    if !args.frames.is_dir() {
        return Err(Error::Config(format!("{} is not a directory", args.frames.display())));
    }
    let mut paths = Vec::new();
    for entry in walkdir::WalkDir::new(&args.frames).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::parse(args.frames.display().to_string(), e.to_string()))?;
        let p = entry.path();
        if entry.file_type().is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            paths.push(p.to_path_buf());
        }
    }
    let frames = FrameStore::new(model.encoder().input_size() as u32);
    let probs = exec::map(mode, &paths, |p| -> Result<f64> {
        let x = frames.get(p)?;
        model.probability(&[&x])
    });
    let mut predictions = BTreeMap::new();
    for (p, prob) in paths.iter().zip(probs) {
        let rel = p.strip_prefix(&args.frames).expect("walked below frames dir");
        let id: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
        predictions.insert(id.join("/"), prob?);
    }
    evaluation::export_benchmark(&predictions, &args.out)?;
    println!("{} frames -> {}", predictions.len(), args.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let jobs = cli.jobs.unwrap_or_else(exec::default_jobs);
    if jobs == 0 {
        return Err(Error::Config("--jobs must be positive".into()));
    }
    exec::configure_workers(jobs);
    let mode = ExecMode::from_jobs(jobs);
    match &cli.command {
        Command::Synth(a) => cmd_synth(a, mode),
        Command::Preprocess(a) => cmd_preprocess(a, mode),
        Command::Train(a) => cmd_train(a, mode),
        Command::Evaluate(a) => cmd_evaluate(a, mode),
        Command::ExportBenchmark(a) => cmd_export(a, mode),
    }
}

/// Runs the CLI on the process arguments and returns the exit code.
pub fn main() -> i32 {
    main_with(std::env::args_os())
}

pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filters_parse() {
        let f = parse_filters(&["method=nt,original".into(), "compression=c40".into(), "split=val".into()]).unwrap();
        assert_eq!(
            f.methods,
            Some([ManipulationMethod::NeuralTextures, ManipulationMethod::Original].into_iter().collect())
        );
        assert_eq!(f.compressions, Some([CompressionLevel::C40].into_iter().collect()));
        assert_eq!(f.split, Some(Split::Val));
        assert!(matches!(parse_filters(&["colour=red".into()]), Err(Error::Config(_))));
        assert!(parse_filters(&["method=bogus".into()]).unwrap_err().is_usage());
    }

    #[test]
    fn run_config_round_trips_and_defaults() {
        let rc = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&rc.to_toml(), "t").unwrap(), rc);
        let rc = RunConfig::from_toml("[model]\nvariant = \"conv3d\"\nwindow = 7\n[train]\nseed = 5\n", "t").unwrap();
        assert_eq!(rc.model.variant, Variant::Conv3d);
        assert_eq!(rc.train.seed, 5);
        assert_eq!(rc.train.batch_size, 32);
        assert!(RunConfig::from_toml("[model]\nunknown = 1\n", "t").is_err());
    }

    #[test]
    fn help_exits_zero_and_bad_flag_two() {
        assert_eq!(main_with(["forgeguard", "--help"]), 0);
        assert_eq!(main_with(["forgeguard", "train", "--bogus"]), 2);
    }
}
