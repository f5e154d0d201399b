//! Mini-batch Adam training with per-epoch checkpoints and early stopping.
//!
//! A run directory holds:
//!
//! ```text
//! config.toml    effective training and model configuration
//! history.tsv    epoch  train_loss  train_acc  val_acc
//! timing.tsv     epoch  seconds
//! best.ckpt      parameters of the best validation epoch
//! last.ckpt      parameters after the latest epoch
//! ```
//!
//! `history.tsv` depends only on data, configuration and seed, so two runs
//! with the same inputs produce identical bytes. Wall-clock time lives in
//! `timing.tsv` for that reason.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::evaluation::{self, Descriptor, EvalReport};
use crate::exec::{self, ExecMode};
use crate::frames::FrameStore;
use crate::models::{Checkpoint, Classifier};
use crate::nn::{bce_with_logits, ParamRef};
use crate::sampling::WindowSample;

pub const SEED_ENV: &str = "FORGEGUARD_SEED";

/// `Standard` keeps parameters at single precision after every update;
/// `High` keeps full double precision and is meant for gradient checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Standard,
    High,
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Precision::Standard),
            "high" => Ok(Precision::High),
            _ => Err(Error::Config(format!("unknown precision {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            max_epochs: 10,
            early_stop_patience: 3,
            seed: 0,
            precision: Precision::Standard,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.learning_rate, self.adam_beta1, self.adam_beta2, self.epsilon];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("training hyperparameters must be finite".into()));
        }
        if self.learning_rate <= 0.0 || self.epsilon <= 0.0 {
            return Err(Error::Config("learning_rate and epsilon must be positive".into()));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} = {b} must be in [0, 1)")));
            }
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size and max_epochs must be positive".into()));
        }
        Ok(())
    }

    /// Applies `FORGEGUARD_SEED` when it is set.
    pub fn with_env_seed(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(self)
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState { step: 0, m: vec![0.0; len], v: vec![0.0; len] }
    }
}

/// One Adam update over all of `params`.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, config: &TrainConfig) -> Result<()> {
    let all = [ParamRef { offset: 0, len: params.len() }];
    adam_update(params, grads, state, config, &all)
}

/// One Adam update restricted to the given slices; everything else,
/// including its moment estimates, is left untouched.
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    config: &TrainConfig,
    slots: &[ParamRef],
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::ShapeMismatch(format!(
            "adam: {} params, {} grads, {}/{} moments",
            params.len(),
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    for s in slots {
        if let Some(i) = grads[s.offset..s.offset + s.len].iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(s.offset + i));
        }
    }
    state.step += 1;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let t = i32::try_from(state.step).unwrap_or(i32::MAX);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    for s in slots {
        for i in s.offset..s.offset + s.len {
            let g = grads[i];
            state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
            state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
            let m_hat = state.m[i] / bc1;
            let v_hat = state.v[i] / bc2;
            params[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
    Ok(())
}

/// Mean binary cross-entropy, computed from logits.
pub fn compute_loss(logits: &[f64], labels: &[Label]) -> Result<f64> {
    if logits.len() != labels.len() || logits.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} logits for {} labels",
            logits.len(),
            labels.len()
        )));
    }
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(&z, l)| bce_with_logits(z, l.target()).0)
        .sum();
    Ok(total / logits.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    /// Balanced validation accuracy as a fraction.
    pub val_acc: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` of the earliest maximum of `val_acc`.
    pub best: usize,
}

impl TrainHistory {
    pub fn best_epoch(&self) -> Option<&EpochRecord> {
        self.epochs.get(self.best)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\ttrain_loss\ttrain_acc\tval_acc\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", e.epoch, e.train_loss, e.train_acc, e.val_acc);
        }
        out
    }

    pub fn timing_tsv(&self) -> String {
        let mut out = String::from("epoch\tseconds\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{}\t{:.3}", e.epoch, e.seconds);
        }
        out
    }
}

/// Where a run writes its files.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn create(path: &Path) -> Result<Self> {
        std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
        Ok(RunDir { path: path.to_path_buf() })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write(&self, name: &str, text: &str) -> Result<()> {
        let p = self.file(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }
}

pub const HISTORY_FILE: &str = "history.tsv";
pub const TIMING_FILE: &str = "timing.tsv";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";

/// Loads every crop referenced by `samples`.
pub fn preload_samples<'a, I>(frames: &mut FrameStore, samples: I, mode: ExecMode) -> Result<()>
where
    I: IntoIterator<Item = &'a WindowSample>,
{
    let paths: Vec<&PathBuf> = samples.into_iter().flat_map(|s| s.crop_paths.iter()).collect();
    frames.preload(paths, mode)
}

const GRAD_CHUNK: usize = 4;

/// Trains `model` in place and leaves it holding the parameters of the best
/// validation epoch. Frozen tensors are never updated.
pub fn train(
    model: &mut Classifier,
    train_samples: &[WindowSample],
    val_samples: &[WindowSample],
    frames: &mut FrameStore,
    config: &TrainConfig,
    run_dir: Option<&RunDir>,
    mode: ExecMode,
) -> Result<TrainHistory> {
    config.validate()?;
    for (what, set) in [("training", train_samples), ("validation", val_samples)] {
        if set.is_empty() {
            return Err(Error::EmptySelection(format!("empty {what} set")));
        }
    }
    let tampered = train_samples.iter().filter(|s| s.label == Label::Tampered).count();
    if tampered == 0 || tampered == train_samples.len() {
        return Err(Error::SingleClass(format!("training set of {} samples", train_samples.len())));
    }
    preload_samples(frames, train_samples.iter().chain(val_samples), mode)?;
    let frames: &FrameStore = frames;
    // Fail early on window or shape errors.
    for s in [&train_samples[0], &val_samples[0]] {
        let inputs = load(frames, s);
        let refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
        model.logit(&refs)?;
    }
    if model.variant().is_window_model() {
        if let Some(s) = train_samples.iter().chain(val_samples).find(|s| s.window_size() != model.window_size()) {
            return Err(Error::WindowSizeMismatch { expected: model.window_size(), found: s.window_size() });
        }
    }

    let slots: Vec<ParamRef> = model.params().specs().iter().filter(|s| s.trainable).map(|s| s.slot).collect();
    let n = model.params().len();
    let mut adam = AdamState::new(n);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_samples.len()).collect();
    let mut history = TrainHistory::default();
    let mut best_params = model.params().values().to_vec();
    let val_descriptor = Descriptor { window: model.window_size(), ..Default::default() };

    if config.precision == Precision::Standard {
        round_to_single(model.params_mut().values_mut(), &slots);
    }

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let m: &Classifier = model;
            // layout: [grads.., loss, correct, errors]
            let acc = exec::chunked_sum(mode, batch, GRAD_CHUNK, n + 3, |&i, acc| {
                let s = &train_samples[i];
                let inputs = load(frames, s);
                let refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
                let (grads, tail) = acc.split_at_mut(n);
                match m.loss_and_grad(&refs, s.label, grads) {
                    Ok((logit, loss)) => {
                        tail[0] += loss;
                        tail[1] += f64::from(u8::from((logit > 0.0) == (s.label == Label::Tampered)));
                    }
                    Err(_) => tail[2] += 1.0,
                }
            });
            if acc[n + 2] > 0.0 {
                return Err(Error::ShapeMismatch(format!("{} samples failed the forward pass", acc[n + 2])));
            }
            loss_sum += acc[n];
            correct += acc[n + 1] as usize;
            let scale = 1.0 / batch.len() as f64;
            let grads: Vec<f64> = acc[..n].iter().map(|g| g * scale).collect();
            let params = model.params_mut().values_mut();
            adam_update(params, &grads, &mut adam, config, &slots)?;
            if config.precision == Precision::Standard {
                round_to_single(params, &slots);
            }
        }
        let val = validate(model, val_samples, frames, mode, val_descriptor.clone())?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_samples.len() as f64,
            train_acc: correct as f64 / train_samples.len() as f64,
            val_acc: val.score(),
            seconds: started.elapsed().as_secs_f64(),
        };
        let improved = history.epochs.is_empty() || record.val_acc > history.epochs[history.best].val_acc;
        history.epochs.push(record);
        if improved {
            history.best = history.epochs.len() - 1;
            best_params.copy_from_slice(model.params().values());
        }
        if let Some(dir) = run_dir {
            Checkpoint::from_classifier(model).save(&dir.file(LAST_CHECKPOINT))?;
            if improved {
                Checkpoint::from_classifier(model).save(&dir.file(BEST_CHECKPOINT))?;
            }
            dir.write(HISTORY_FILE, &history.to_tsv())?;
            dir.write(TIMING_FILE, &history.timing_tsv())?;
        }
        if history.epochs.len() - 1 - history.best > config.early_stop_patience {
            break;
        }
    }
    model.params_mut().values_mut().copy_from_slice(&best_params);
    Ok(history)
}

fn load(frames: &FrameStore, s: &WindowSample) -> Vec<Vec<f64>> {
    s.crop_paths
        .iter()
        .map(|p| frames.get_loaded(p).expect("preloaded"))
        .collect()
}

fn validate(
    model: &Classifier,
    samples: &[WindowSample],
    frames: &FrameStore,
    mode: ExecMode,
    descriptor: Descriptor,
) -> Result<EvalReport> {
    Ok(evaluation::evaluate(model, samples, frames, mode, descriptor)?.report)
}

fn round_to_single(params: &mut [f64], slots: &[ParamRef]) {
    for s in slots {
        for v in s.of_mut(params) {
            *v = f64::from(*v as f32);
        }
    }
}
