//! Frame encoder, classifier families and weight initialization policies.
//!
//! Inputs are planar RGB crops normalized with `v / 127.5 - 1`. Every model
//! produces one logit per sample; the decision is tampered iff
//! `logistic(logit) > 0.5`.

mod checkpoint;
mod classifier;
mod encoder;
mod heads;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};

pub use checkpoint::{apply_weight_policy, Checkpoint, LoadReport, NamedTensor, CHECKPOINT_VERSION};
pub use classifier::{Classifier, Decision};
pub use encoder::{EncoderMode, EncoderTape, FrameEncoder, EMBEDDING_DIM};
pub use heads::{BiRecurrentHead, Conv3dHead};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    SingleFrame,
    MajorityVote,
    Conv3d,
    BiRecurrent,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::SingleFrame => "single_frame",
            Variant::MajorityVote => "majority_vote",
            Variant::Conv3d => "conv3d",
            Variant::BiRecurrent => "birecurrent",
        }
    }

    pub fn is_window_model(self) -> bool {
        !matches!(self, Variant::SingleFrame)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "single_frame" | "single" => Ok(Variant::SingleFrame),
            "majority_vote" | "majority" => Ok(Variant::MajorityVote),
            "conv3d" | "3d" => Ok(Variant::Conv3d),
            "birecurrent" | "bilstm" | "bi_lstm" => Ok(Variant::BiRecurrent),
            _ => Err(Error::Config(format!("unknown model variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Square input side in pixels.
    pub input_size: usize,
    pub stem_channels: usize,
    /// One residual stage per entry; the first keeps resolution, the rest
    /// halve it.
    pub stage_channels: Vec<usize>,
    /// Number of residual stages feeding the 3D head.
    pub feature_cut: usize,
}

impl EncoderConfig {
    /// 32×32 input, three narrow stages.
    pub fn toy() -> Self {
        EncoderConfig {
            input_size: 32,
            stem_channels: 8,
            stage_channels: vec![8, 16, 16],
            feature_cut: 2,
        }
    }

    pub fn standard() -> Self {
        EncoderConfig {
            input_size: 160,
            stem_channels: 32,
            stage_channels: vec![64, 128, 256, 512],
            feature_cut: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_channels.is_empty() || self.stage_channels.contains(&0) || self.stem_channels == 0 {
            return Err(Error::Config("encoder needs non-zero channel widths and at least one stage".into()));
        }
        if self.feature_cut == 0 || self.feature_cut > self.stage_channels.len() {
            return Err(Error::Config(format!(
                "feature_cut {} outside 1..={}",
                self.feature_cut,
                self.stage_channels.len()
            )));
        }
        let mut side = self.input_size;
        for _ in 0..self.stage_channels.len() {
            side = side.div_ceil(2);
        }
        if self.input_size < 4 || side < 1 {
            return Err(Error::Config(format!("input size {} too small", self.input_size)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Frames per sample; 1 for single-frame models, odd otherwise.
    pub window: usize,
    pub encoder: EncoderConfig,
    pub conv3d_channels: Vec<usize>,
    pub rnn_hidden: usize,
    pub init_seed: u64,
}

impl ModelConfig {
    pub fn toy(variant: Variant, window: usize) -> Self {
        ModelConfig {
            variant,
            window: if variant == Variant::SingleFrame { 1 } else { window },
            encoder: EncoderConfig::toy(),
            conv3d_channels: vec![16, 16],
            rnn_hidden: 16,
            init_seed: 0,
        }
    }

    pub fn standard(variant: Variant, window: usize) -> Self {
        ModelConfig {
            variant,
            window: if variant == Variant::SingleFrame { 1 } else { window },
            encoder: EncoderConfig::standard(),
            conv3d_channels: vec![128, 128],
            rnn_hidden: 256,
            init_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        check_window(self.window)?;
        if self.variant == Variant::SingleFrame && self.window != 1 {
            return Err(Error::Config("single_frame models take window = 1".into()));
        }
        if self.conv3d_channels.is_empty() || self.conv3d_channels.contains(&0) {
            return Err(Error::Config("conv3d_channels must be non-empty and non-zero".into()));
        }
        if self.rnn_hidden == 0 {
            return Err(Error::Config("rnn_hidden must be positive".into()));
        }
        Ok(())
    }
}

pub fn check_window(w: usize) -> Result<()> {
    if w == 0 {
        return Err(Error::Config("window size must be positive".into()));
    }
    if w % 2 == 0 {
        return Err(Error::EvenWindow(w));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Random,
    /// Generic image-classification pretraining.
    GenericPretrained,
    /// Face-recognition pretraining.
    FacePretrained,
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "random" => Ok(PolicyKind::Random),
            "generic" | "generic_pretrained" | "imagenet" => Ok(PolicyKind::GenericPretrained),
            "face" | "face_pretrained" | "vggface2" => Ok(PolicyKind::FacePretrained),
            _ => Err(Error::Config(format!("unknown weight policy {s:?}"))),
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::Random => "random",
            PolicyKind::GenericPretrained => "generic_pretrained",
            PolicyKind::FacePretrained => "face_pretrained",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightPolicy {
    pub kind: PolicyKind,
    pub checkpoint: Option<PathBuf>,
    /// Optional conversion table: `<checkpoint name>\t<model name>` per line.
    pub name_map: Option<PathBuf>,
    pub freeze_encoder: bool,
}

impl WeightPolicy {
    pub fn random() -> Self {
        WeightPolicy {
            kind: PolicyKind::Random,
            checkpoint: None,
            name_map: None,
            freeze_encoder: false,
        }
    }

    pub fn pretrained(kind: PolicyKind, checkpoint: impl Into<PathBuf>, freeze_encoder: bool) -> Self {
        WeightPolicy {
            kind,
            checkpoint: Some(checkpoint.into()),
            name_map: None,
            freeze_encoder,
        }
    }
}

/// Label held by more than half of an odd-length list of decisions.
pub fn majority_vote(decisions: &[Label]) -> Result<Label> {
    check_window(decisions.len())?;
    let tampered = decisions.iter().filter(|d| **d == Label::Tampered).count();
    Ok(if 2 * tampered > decisions.len() {
        Label::Tampered
    } else {
        Label::Pristine
    })
}
