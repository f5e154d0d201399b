//! Line-oriented manifest persistence.
//!
//! ```text
//! #forgeguard-manifest v1 detector=<name> margin=<float>
//! @video	<video_id>	<method>	<compression>	<split>	<frame_count>	<source_path>
//! <video_id>	<frame_index>	<face_found>	<x,y,w,h | ->	<crop_path | ->
//! ```
//!
//! Fields are separated by a single tab. Each `@video` line introduces the
//! video that the frame records below it belong to.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{CompressionLevel, FaceCrop, FrameRecord, ManipulationMethod, Split, VideoRecord};
use crate::error::{Error, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE_NAME: &str = "manifest.tsv";
const MAGIC: &str = "#forgeguard-manifest";
const VIDEO_TAG: &str = "@video";

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestHeader {
    pub schema_version: u32,
    pub detector: String,
    /// Crop margin as a fraction of the larger box side.
    pub margin: f64,
}

impl ManifestHeader {
    pub fn new(detector: impl Into<String>, margin: f64) -> Self {
        ManifestHeader {
            schema_version: MANIFEST_SCHEMA_VERSION,
            detector: detector.into(),
            margin,
        }
    }

    fn render(&self) -> Result<String> {
        if self.detector.is_empty() || self.detector.chars().any(char::is_whitespace) {
            return Err(Error::InvalidManifest(format!(
                "detector name {:?} must be non-empty without whitespace",
                self.detector
            )));
        }
        if !self.margin.is_finite() || self.margin < 0.0 {
            return Err(Error::InvalidManifest(format!("margin {} must be finite and >= 0", self.margin)));
        }
        Ok(format!(
            "{MAGIC} v{} detector={} margin={}",
            self.schema_version, self.detector, self.margin
        ))
    }

    fn parse(line: &str, origin: &str) -> Result<Self> {
        let mut parts = line.split(' ');
        if parts.next() != Some(MAGIC) {
            return Err(Error::parse(origin, "missing manifest header line"));
        }
        let version = parts
            .next()
            .ok_or_else(|| Error::parse(origin, "header lacks a schema version"))?;
        let expected = format!("v{MANIFEST_SCHEMA_VERSION}");
        if version != expected {
            return Err(Error::SchemaVersionMismatch {
                found: version.to_string(),
                expected,
            });
        }
        let detector = parts
            .next()
            .and_then(|p| p.strip_prefix("detector="))
            .ok_or_else(|| Error::parse(origin, "header lacks detector="))?;
        let margin = parts
            .next()
            .and_then(|p| p.strip_prefix("margin="))
            .ok_or_else(|| Error::parse(origin, "header lacks margin="))?;
        if parts.next().is_some() {
            return Err(Error::parse(origin, "trailing fields in header"));
        }
        let margin: f64 = margin
            .parse()
            .map_err(|_| Error::parse(origin, format!("bad margin {margin:?}")))?;
        Ok(ManifestHeader {
            schema_version: MANIFEST_SCHEMA_VERSION,
            detector: detector.to_string(),
            margin,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoEntry {
    pub video: VideoRecord,
    pub frames: Vec<FrameRecord>,
}

impl VideoEntry {
    fn validate(&self) -> Result<()> {
        let v = &self.video;
        check_field(&v.video_id, "video id")?;
        if v.video_id == VIDEO_TAG {
            return Err(Error::InvalidManifest("video id collides with the video tag".into()));
        }
        check_field(&v.source_path.to_string_lossy(), "source path")?;
        let mut prev: Option<usize> = None;
        for f in &self.frames {
            if f.video_id != v.video_id {
                return Err(Error::InvalidManifest(format!(
                    "frame record of {:?} filed under video {:?}",
                    f.video_id, v.video_id
                )));
            }
            if prev.is_some_and(|p| f.frame_index <= p) {
                return Err(Error::InvalidManifest(format!(
                    "frame indices of {:?} not strictly increasing at {}",
                    v.video_id, f.frame_index
                )));
            }
            prev = Some(f.frame_index);
            if let Some(face) = &f.face {
                check_field(&face.crop_path.to_string_lossy(), "crop path")?;
                if face.crop_path.as_os_str() == "-" {
                    return Err(Error::InvalidManifest("crop path may not be \"-\"".into()));
                }
            }
        }
        Ok(())
    }
}

fn check_field(value: &str, what: &str) -> Result<()> {
    if value.is_empty() || value.contains(['\t', '\n', '\r']) {
        return Err(Error::InvalidManifest(format!(
            "{what} {value:?} must be non-empty without tabs or newlines"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub videos: Vec<VideoEntry>,
}

impl Manifest {
    pub fn new(header: ManifestHeader) -> Self {
        Manifest {
            header,
            videos: Vec::new(),
        }
    }

    pub fn frame_count(&self) -> usize {
        self.videos.iter().map(|v| v.frames.len()).sum()
    }

    pub fn to_text(&self) -> Result<String> {
        let mut out = self.header.render()?;
        out.push('\n');
        let mut seen = HashSet::new();
        for entry in &self.videos {
            let v = &entry.video;
            if !seen.insert((v.method, v.compression, v.video_id.as_str())) {
                return Err(Error::InvalidManifest(format!(
                    "duplicate video id {:?} for {}/{}",
                    v.video_id, v.method, v.compression
                )));
            }
            append_video(&mut out, entry)?;
        }
        Ok(out)
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, first) = lines
            .next()
            .ok_or_else(|| Error::parse(origin, "empty manifest file"))?;
        let header = ManifestHeader::parse(first, origin)?;
        let mut manifest = Manifest::new(header);
        for (n, line) in lines {
            let at = || format!("{origin}:{}", n + 1);
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields[0] == VIDEO_TAG {
                manifest.videos.push(VideoEntry {
                    video: parse_video(&fields, &at())?,
                    frames: Vec::new(),
                });
                continue;
            }
            let frame = parse_frame(&fields, &at())?;
            let entry = manifest
                .videos
                .last_mut()
                .ok_or_else(|| Error::parse(at(), "frame record before any @video line"))?;
            if entry.video.video_id != frame.video_id {
                return Err(Error::parse(
                    at(),
                    format!("frame of {:?} under video {:?}", frame.video_id, entry.video.video_id),
                ));
            }
            if entry.frames.last().is_some_and(|p| p.frame_index >= frame.frame_index) {
                return Err(Error::parse(at(), "frame indices not strictly increasing"));
            }
            entry.frames.push(frame);
        }
        Ok(manifest)
    }
}

fn append_video(out: &mut String, entry: &VideoEntry) -> Result<()> {
    entry.validate()?;
    let v = &entry.video;
    out.push_str(&format!(
        "{VIDEO_TAG}\t{}\t{}\t{}\t{}\t{}\t{}\n",
        v.video_id,
        v.method,
        v.compression,
        v.split,
        v.frame_count,
        v.source_path.display()
    ));
    for f in &entry.frames {
        match &f.face {
            Some(face) => out.push_str(&format!(
                "{}\t{}\ttrue\t{}\t{}\n",
                f.video_id,
                f.frame_index,
                face.crop_box,
                face.crop_path.display()
            )),
            None => out.push_str(&format!("{}\t{}\tfalse\t-\t-\n", f.video_id, f.frame_index)),
        }
    }
    Ok(())
}

fn parse_video(fields: &[&str], at: &str) -> Result<VideoRecord> {
    if fields.len() != 7 {
        return Err(Error::parse(at, format!("video line has {} fields, expected 7", fields.len())));
    }
    let frame_count = fields[5]
        .parse()
        .map_err(|_| Error::parse(at, format!("bad frame count {:?}", fields[5])))?;
    Ok(VideoRecord {
        video_id: fields[1].to_string(),
        method: fields[2].parse::<ManipulationMethod>()?,
        compression: fields[3].parse::<CompressionLevel>()?,
        split: fields[4].parse::<Split>()?,
        frame_count,
        source_path: PathBuf::from(fields[6]),
    })
}

fn parse_frame(fields: &[&str], at: &str) -> Result<FrameRecord> {
    if fields.len() != 5 {
        return Err(Error::parse(at, format!("frame line has {} fields, expected 5", fields.len())));
    }
    let frame_index = fields[1]
        .parse()
        .map_err(|_| Error::parse(at, format!("bad frame index {:?}", fields[1])))?;
    let face = match (fields[2], fields[3], fields[4]) {
        ("true", bx, path) if bx != "-" && path != "-" => Some(FaceCrop {
            crop_box: bx.parse()?,
            crop_path: PathBuf::from(path),
        }),
        ("false", "-", "-") => None,
        _ => {
            return Err(Error::parse(
                at,
                "face_found must be true with box and path, or false with both \"-\"",
            ))
        }
    };
    Ok(FrameRecord {
        video_id: fields[0].to_string(),
        frame_index,
        face,
    })
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let text = manifest.to_text()?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Manifest::from_text(&text, &path.display().to_string())
}

/// Append-only manifest writer for long preprocessing runs.
pub struct ManifestWriter {
    out: BufWriter<File>,
    path: PathBuf,
    seen: HashSet<(ManipulationMethod, CompressionLevel, String)>,
}

impl ManifestWriter {
    pub fn create(path: &Path, header: &ManifestHeader) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{}", header.render()?).map_err(|e| Error::io(path, e))?;
        Ok(ManifestWriter {
            out,
            path: path.to_path_buf(),
            seen: HashSet::new(),
        })
    }

    pub fn append(&mut self, entry: &VideoEntry) -> Result<()> {
        let v = &entry.video;
        if !self.seen.insert((v.method, v.compression, v.video_id.clone())) {
            return Err(Error::InvalidManifest(format!("duplicate video id {:?}", v.video_id)));
        }
        let mut text = String::new();
        append_video(&mut text, entry)?;
        self.out
            .write_all(text.as_bytes())
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}
