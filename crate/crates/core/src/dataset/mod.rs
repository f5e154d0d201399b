//! Domain types shared by every stage: labels, manipulation metadata,
//! splits, and the frame manifest.

mod manifest;
mod split;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use manifest::{
    read_manifest, write_manifest, Manifest, ManifestHeader, ManifestWriter, VideoEntry,
    MANIFEST_FILE_NAME, MANIFEST_SCHEMA_VERSION,
};
pub use split::{SplitCounts, SplitMap};

/// How a video was produced. Only `Original` is pristine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManipulationMethod {
    Original,
    DeepFakes,
    Face2Face,
    FaceSwap,
    NeuralTextures,
}

impl ManipulationMethod {
    pub const ALL: [ManipulationMethod; 5] = [
        ManipulationMethod::Original,
        ManipulationMethod::DeepFakes,
        ManipulationMethod::Face2Face,
        ManipulationMethod::FaceSwap,
        ManipulationMethod::NeuralTextures,
    ];

    /// Row order used by generalization tables.
    pub const TABLE_ORDER: [ManipulationMethod; 5] = [
        ManipulationMethod::Original,
        ManipulationMethod::NeuralTextures,
        ManipulationMethod::DeepFakes,
        ManipulationMethod::Face2Face,
        ManipulationMethod::FaceSwap,
    ];

    pub fn label(self) -> Label {
        derive_label(self)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ManipulationMethod::Original => "original",
            ManipulationMethod::DeepFakes => "deepfakes",
            ManipulationMethod::Face2Face => "face2face",
            ManipulationMethod::FaceSwap => "faceswap",
            ManipulationMethod::NeuralTextures => "neuraltextures",
        }
    }

    /// Long row name, e.g. "Neural Textures".
    pub fn display_name(self) -> &'static str {
        match self {
            ManipulationMethod::Original => "Pristine",
            ManipulationMethod::DeepFakes => "DeepFakes",
            ManipulationMethod::Face2Face => "Face2Face",
            ManipulationMethod::FaceSwap => "FaceSwap",
            ManipulationMethod::NeuralTextures => "Neural Textures",
        }
    }

    /// Short column name, e.g. "NT".
    pub fn abbreviation(self) -> &'static str {
        match self {
            ManipulationMethod::Original => "Orig.",
            ManipulationMethod::DeepFakes => "DF",
            ManipulationMethod::Face2Face => "F2F",
            ManipulationMethod::FaceSwap => "FS",
            ManipulationMethod::NeuralTextures => "NT",
        }
    }
}

impl fmt::Display for ManipulationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ManipulationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "original" | "pristine" | "orig" => Ok(ManipulationMethod::Original),
            "deepfakes" | "df" => Ok(ManipulationMethod::DeepFakes),
            "face2face" | "f2f" => Ok(ManipulationMethod::Face2Face),
            "faceswap" | "fs" => Ok(ManipulationMethod::FaceSwap),
            "neuraltextures" | "nt" => Ok(ManipulationMethod::NeuralTextures),
            _ => Err(Error::parse("manipulation method", format!("unknown method {s:?}"))),
        }
    }
}

/// Dataset compression variant, ordered by compression strength.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompressionLevel {
    Raw,
    C23,
    C40,
}

impl CompressionLevel {
    pub const ALL: [CompressionLevel; 3] =
        [CompressionLevel::Raw, CompressionLevel::C23, CompressionLevel::C40];

    pub fn as_str(self) -> &'static str {
        match self {
            CompressionLevel::Raw => "raw",
            CompressionLevel::C23 => "c23",
            CompressionLevel::C40 => "c40",
        }
    }
}

impl fmt::Display for CompressionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CompressionLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "raw" | "c0" => Ok(CompressionLevel::Raw),
            "c23" => Ok(CompressionLevel::C23),
            "c40" => Ok(CompressionLevel::C40),
            _ => Err(Error::parse("compression level", format!("unknown level {s:?}"))),
        }
    }
}

/// Binary target. Encoded as Pristine = 0, Tampered = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Pristine = 0,
    Tampered = 1,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn target(self) -> f64 {
        f64::from(self.as_u8())
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Pristine => "pristine",
            Label::Tampered => "tampered",
        }
    }

    /// Decision rule shared by every classifier: tampered iff p > 0.5.
    pub fn from_probability(p: f64) -> Label {
        if p > 0.5 {
            Label::Tampered
        } else {
            Label::Pristine
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Label::Pristine),
            1 => Ok(Label::Tampered),
            _ => Err(Error::parse("label", format!("label must be 0 or 1, got {v}"))),
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "0" | "pristine" => Ok(Label::Pristine),
            "1" | "tampered" => Ok(Label::Tampered),
            _ => Err(Error::parse("label", format!("unknown label {s:?}"))),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn derive_label(method: ManipulationMethod) -> Label {
    match method {
        ManipulationMethod::Original => Label::Pristine,
        _ => Label::Tampered,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::parse("split", format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoRecord {
    pub video_id: String,
    pub method: ManipulationMethod,
    pub compression: CompressionLevel,
    pub split: Split,
    pub source_path: PathBuf,
    pub frame_count: usize,
}

impl VideoRecord {
    pub fn label(&self) -> Label {
        derive_label(self.method)
    }
}

/// Integer pixel rectangle, top-left origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CropBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl fmt::Display for CropBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x, self.y, self.w, self.h)
    }
}

impl FromStr for CropBox {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::parse("crop box", format!("expected x,y,w,h, got {s:?}")));
        }
        let mut v = [0u32; 4];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|_| Error::parse("crop box", format!("bad integer {p:?} in {s:?}")))?;
        }
        if v[2] == 0 || v[3] == 0 {
            return Err(Error::parse("crop box", format!("empty box {s:?}")));
        }
        Ok(CropBox {
            x: v[0],
            y: v[1],
            w: v[2],
            h: v[3],
        })
    }
}

/// Where a detected face was cropped from and written to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaceCrop {
    pub crop_box: CropBox,
    /// Relative to the manifest's directory.
    pub crop_path: PathBuf,
}

/// One decoded frame. A frame without a detected face is still recorded,
/// with `face` absent, so gaps are visible downstream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameRecord {
    pub video_id: String,
    pub frame_index: usize,
    pub face: Option<FaceCrop>,
}

impl FrameRecord {
    pub fn face_found(&self) -> bool {
        self.face.is_some()
    }

    pub fn missing(video_id: impl Into<String>, frame_index: usize) -> Self {
        FrameRecord {
            video_id: video_id.into(),
            frame_index,
            face: None,
        }
    }
}

/// Relative crop path for a frame: `<video_id>/<frame_index:06>.png`.
pub fn crop_file_name(video_id: &str, frame_index: usize) -> PathBuf {
    PathBuf::from(video_id).join(format!("{frame_index:06}.png"))
}
