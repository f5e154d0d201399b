//! Procedural toy videos with known labels and face boxes.
//!
//! Originals come in pairs `(a, b)`; each pair yields the tampered videos
//! `a_b` and `b_a`. A tampered video `a_b` is rendered from identity `a`
//! with the same noise stream as original `a`, so the two differ only where
//! the tampering acts.
//!
//! Output layout under the root directory:
//!
//! ```text
//! synth.toml
//! splits/{train,val,test}.json
//! <method>/<compression>/videos/<video_id>/<frame:06>.png
//! <method>/<compression>/crops/manifest.tsv
//! <method>/<compression>/crops/<video_id>/<frame:06>.png
//! ```

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{
    crop_file_name, write_manifest, CompressionLevel, CropBox, FaceCrop, FrameRecord, Manifest, ManifestHeader,
    ManipulationMethod, Split, SplitMap, VideoEntry, VideoRecord, MANIFEST_FILE_NAME,
};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::frames;
use crate::preprocess::{crop_face, FaceBox, DEFAULT_MARGIN};

pub const DETECTOR_NAME: &str = "synthgen-truth";
pub const CONFIG_FILE: &str = "synth.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TamperMode {
    /// Persistent block-noise texture inside the mouth box.
    SpatialMouth,
    /// Face brightness offset whose sign alternates every frame. Originals
    /// carry the same offset with a constant sign, so a single frame says
    /// nothing about the label.
    TemporalFlicker,
}

impl std::str::FromStr for TamperMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spatial_mouth" => Ok(TamperMode::SpatialMouth),
            "temporal_flicker" => Ok(TamperMode::TemporalFlicker),
            _ => Err(Error::Config(format!("unknown tamper mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Originals plus tampered; a multiple of 4.
    pub n_videos: usize,
    pub frames_per_video: usize,
    pub image_size: u32,
    pub tamper_mode: TamperMode,
    /// Method recorded for the tampered videos.
    pub method: ManipulationMethod,
    pub compressions: Vec<CompressionLevel>,
    pub seed: u64,
    /// Frames rendered without a face, in every video.
    pub blank_frames: Vec<usize>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_videos: 40,
            frames_per_video: 10,
            image_size: 48,
            tamper_mode: TamperMode::SpatialMouth,
            method: ManipulationMethod::NeuralTextures,
            compressions: vec![CompressionLevel::Raw],
            seed: 0,
            blank_frames: Vec::new(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_videos == 0 || self.n_videos % 4 != 0 {
            return Err(Error::Config(format!("n_videos = {} must be a positive multiple of 4", self.n_videos)));
        }
        if self.frames_per_video == 0 {
            return Err(Error::Config("frames_per_video must be positive".into()));
        }
        if self.image_size < 24 {
            return Err(Error::Config("image_size must be at least 24".into()));
        }
        if self.method == ManipulationMethod::Original {
            return Err(Error::Config("tampered videos need a manipulation method".into()));
        }
        if self.compressions.is_empty() {
            return Err(Error::Config("at least one compression level is required".into()));
        }
        Ok(())
    }

    pub fn n_originals(&self) -> usize {
        self.n_videos / 2
    }
}

/// Blur radius and quantization step of the simulated codec.
pub fn compression_params(level: CompressionLevel) -> (usize, f64) {
    match level {
        CompressionLevel::Raw => (0, 1.0),
        CompressionLevel::C23 => (1, 6.0),
        CompressionLevel::C40 => (2, 16.0),
    }
}

const FLICKER_AMPLITUDE: f64 = 20.0;
const MOUTH_NOISE: f64 = 70.0;
const PIXEL_NOISE: f64 = 2.0;

fn derive_seed(seed: u64, tag: &str) -> u64 {
    let d = Sha256::new().chain_update(seed.to_le_bytes()).chain_update(tag.as_bytes()).finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn original_id(i: usize) -> String {
    format!("{i:03}")
}

/// Everything about a person that stays fixed across a video.
#[derive(Debug, Clone)]
struct Identity {
    skin: [f64; 3],
    bg: [f64; 3],
    bg_slope: [f64; 3],
    rx: f64,
    ry: f64,
    jitter: [(f64, f64, f64); 2],
    sign: f64,
}

impl Identity {
    fn new(seed: u64, index: usize, size: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("identity/{index}")));
        let r = rng.random_range(185.0..215.0);
        let g = r - rng.random_range(35.0..55.0);
        let b = g - rng.random_range(20.0..35.0);
        let bg = [rng.random_range(30.0..90.0), rng.random_range(70.0..150.0), rng.random_range(100.0..200.0)];
        let bg_slope = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
        let scale = rng.random_range(0.92..1.08);
        let mut axis = || {
            (
                rng.random_range(0.03..0.05) * size,
                rng.random_range(0.05..0.15),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        };
        let jitter = [axis(), axis()];
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        Identity {
            skin: [r, g, b],
            bg,
            bg_slope,
            rx: 0.22 * size * scale,
            ry: 0.28 * size * scale,
            jitter,
            sign,
        }
    }

    fn center(&self, t: usize, size: f64) -> (f64, f64) {
        let off = |(a, f, p): (f64, f64, f64)| a * (std::f64::consts::TAU * f * t as f64 + p).sin();
        (size / 2.0 + off(self.jitter[0]), size / 2.0 + off(self.jitter[1]))
    }
}

/// Inclusive-exclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

#[derive(Debug, Clone)]
pub struct RenderedFrame {
    pub image: RgbImage,
    /// Head bounding box; `None` for blank frames.
    pub face: Option<FaceBox>,
    /// Region the mouth tampering may touch.
    pub mouth: Option<PixelRect>,
}

/// What one generated video is.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoSpec {
    pub video_id: String,
    /// Identity the frames are drawn from.
    pub target: usize,
    pub tampered: bool,
    pub split: Split,
}

/// Every video of a config, originals first, with split assignments
/// drawn per pair.
pub fn video_specs(config: &SynthConfig) -> Vec<VideoSpec> {
    let n = config.n_originals();
    let n_pairs = n / 2;
    let mut pairs: Vec<usize> = (0..n_pairs).collect();
    pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "splits")));
    let n_train = (n_pairs as f64 * 0.72).round() as usize;
    let n_val = ((n_pairs as f64 * 0.14).round() as usize).min(n_pairs - n_train);
    let mut split_of = vec![Split::Test; n_pairs];
    for (rank, &p) in pairs.iter().enumerate() {
        split_of[p] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    let mut specs: Vec<VideoSpec> = (0..n)
        .map(|i| VideoSpec { video_id: original_id(i), target: i, tampered: false, split: split_of[i / 2] })
        .collect();
    for i in 0..n {
        let partner = i ^ 1;
        specs.push(VideoSpec {
            video_id: format!("{}_{}", original_id(i), original_id(partner)),
            target: i,
            tampered: true,
            split: split_of[i / 2],
        });
    }
    specs
}

fn splits_of(config: &SynthConfig) -> SplitMap {
    let mut map = SplitMap::new();
    for s in video_specs(config).into_iter().filter(|s| !s.tampered) {
        map.assign(s.video_id, s.split).expect("ids are unique");
    }
    map
}

/// Renders every frame of one video at one compression level.
pub fn render_video(config: &SynthConfig, spec: &VideoSpec, level: CompressionLevel) -> Vec<RenderedFrame> {
    let size = config.image_size as usize;
    let sf = size as f64;
    let id = Identity::new(config.seed, spec.target, sf);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("noise/{}", spec.target)));
    let mut tamper_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("tamper/{}", spec.video_id)));
    let normal = Normal::new(0.0, PIXEL_NOISE).expect("valid sigma");
    let (radius, step) = compression_params(level);
    let mut out = Vec::with_capacity(config.frames_per_video);
    for t in 0..config.frames_per_video {
        let blank = config.blank_frames.contains(&t);
        let (cx, cy) = id.center(t, sf);
        let mut buf = vec![[0.0f64; 3]; size * size];
        for y in 0..size {
            for x in 0..size {
                let u = x as f64 / sf - 0.5;
                buf[y * size + x] = std::array::from_fn(|c| id.bg[c] + id.bg_slope[c] * u * 2.0);
            }
        }
        let mut face = None;
        let mut mouth = None;
        if !blank {
            let offset = match config.tamper_mode {
                TamperMode::SpatialMouth => 0.0,
                TamperMode::TemporalFlicker => {
                    let alt = if spec.tampered && t % 2 == 1 { -1.0 } else { 1.0 };
                    id.sign * alt * FLICKER_AMPLITUDE
                }
            };
            let (mx, my, mrx, mry) = (cx, cy + 0.45 * id.ry, 0.45 * id.rx, 0.13 * id.ry);
            let eye_r = 0.14 * id.rx;
            let eyes = [(cx - 0.4 * id.rx, cy - 0.2 * id.ry), (cx + 0.4 * id.rx, cy - 0.2 * id.ry)];
            for y in 0..size {
                for x in 0..size {
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    let dx = (px - cx) / id.rx;
                    let dy = (py - cy) / id.ry;
                    if dx * dx + dy * dy > 1.0 {
                        continue;
                    }
                    let shade = 1.0 - 0.08 * dy;
                    let mut c: [f64; 3] = std::array::from_fn(|k| id.skin[k] * shade);
                    if eyes.iter().any(|&(ex, ey)| (px - ex).powi(2) + (py - ey).powi(2) <= eye_r * eye_r) {
                        c = [50.0, 40.0, 35.0];
                    }
                    let (qx, qy) = ((px - mx) / mrx, (py - my) / mry);
                    if qx * qx + qy * qy <= 1.0 {
                        c = [160.0, 60.0, 70.0];
                    }
                    buf[y * size + x] = c.map(|v| v + offset);
                }
            }
            let clamp = |v: f64| v.clamp(0.0, sf) as u32;
            let rect = PixelRect {
                x0: clamp((mx - mrx).floor() - 1.0),
                y0: clamp((my - mry).floor() - 1.0),
                x1: clamp((mx + mrx).ceil() + 1.0),
                y1: clamp((my + mry).ceil() + 1.0),
            };
            if spec.tampered && config.tamper_mode == TamperMode::SpatialMouth {
                for by in (rect.y0..rect.y1).step_by(2) {
                    for bx in (rect.x0..rect.x1).step_by(2) {
                        let d: [f64; 3] = std::array::from_fn(|_| tamper_rng.random_range(-MOUTH_NOISE..MOUTH_NOISE));
                        for y in by..(by + 2).min(rect.y1) {
                            for x in bx..(bx + 2).min(rect.x1) {
                                let p = &mut buf[y as usize * size + x as usize];
                                for k in 0..3 {
                                    p[k] += d[k];
                                }
                            }
                        }
                    }
                }
            }
            mouth = Some(rect);
            let x0 = (cx - id.rx).floor() as i64;
            let y0 = (cy - id.ry).floor() as i64;
            face = Some(FaceBox::new(
                x0,
                y0,
                (cx + id.rx).ceil() as i64 - x0,
                (cy + id.ry).ceil() as i64 - y0,
                1.0,
            ));
        }
        for p in buf.iter_mut() {
            for v in p.iter_mut() {
                *v += noise_rng.sample(normal);
            }
        }
        if radius > 0 {
            buf = box_blur(&buf, size, radius);
        }
        let image = RgbImage::from_fn(config.image_size, config.image_size, |x, y| {
            let p = buf[y as usize * size + x as usize];
            Rgb(p.map(|v| ((v / step).round() * step).clamp(0.0, 255.0).round() as u8))
        });
        out.push(RenderedFrame { image, face, mouth });
    }
    out
}

fn box_blur(buf: &[[f64; 3]], size: usize, r: usize) -> Vec<[f64; 3]> {
    let idx = |v: isize| v.clamp(0, size as isize - 1) as usize;
    let mut tmp = vec![[0.0; 3]; buf.len()];
    let n = (2 * r + 1) as f64;
    for y in 0..size {
        for x in 0..size {
            let mut acc = [0.0; 3];
            for d in -(r as isize)..=r as isize {
                let p = buf[y * size + idx(x as isize + d)];
                for k in 0..3 {
                    acc[k] += p[k];
                }
            }
            tmp[y * size + x] = acc.map(|v| v / n);
        }
    }
    let mut out = vec![[0.0; 3]; buf.len()];
    for y in 0..size {
        for x in 0..size {
            let mut acc = [0.0; 3];
            for d in -(r as isize)..=r as isize {
                let p = tmp[idx(y as isize + d) * size + x];
                for k in 0..3 {
                    acc[k] += p[k];
                }
            }
            out[y * size + x] = acc.map(|v| v / n);
        }
    }
    out
}

/// Where one (method, compression) slice of a dataset lives.
pub fn slice_dir(root: &Path, method: ManipulationMethod, level: CompressionLevel) -> PathBuf {
    root.join(method.as_str()).join(level.as_str())
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub root: PathBuf,
    /// Crop manifests, one per (method, compression).
    pub manifests: Vec<PathBuf>,
    pub splits: SplitMap,
}

/// Writes the dataset. Output bytes depend only on `config`.
pub fn generate(config: &SynthConfig, root: &Path, mode: ExecMode) -> Result<SynthDataset> {
    config.validate()?;
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let toml_text = toml::to_string(config).map_err(|e| Error::Config(e.to_string()))?;
    let cfg_path = root.join(CONFIG_FILE);
    std::fs::write(&cfg_path, toml_text).map_err(|e| Error::io(&cfg_path, e))?;

    let specs = video_specs(config);
    write_split_files(&specs, &root.join("splits"))?;

    let mut manifests = Vec::new();
    for &level in &config.compressions {
        let entries = exec::map(mode, &specs, |spec| write_video(config, spec, level, root));
        let mut by_method: Vec<(ManipulationMethod, Manifest)> = Vec::new();
        for entry in entries {
            let entry = entry?;
            let method = entry.video.method;
            match by_method.iter_mut().find(|(m, _)| *m == method) {
                Some((_, m)) => m.videos.push(entry),
                None => {
                    let mut m = Manifest::new(ManifestHeader::new(DETECTOR_NAME, DEFAULT_MARGIN));
                    m.videos.push(entry);
                    by_method.push((method, m));
                }
            }
        }
        for (method, manifest) in by_method {
            let path = slice_dir(root, method, level).join("crops").join(MANIFEST_FILE_NAME);
            write_manifest(&manifest, &path)?;
            manifests.push(path);
        }
    }
    Ok(SynthDataset { root: root.to_path_buf(), manifests, splits: splits_of(config) })
}

fn write_split_files(specs: &[VideoSpec], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for split in Split::ALL {
        let pairs: Vec<[&str; 2]> = specs
            .iter()
            .filter(|s| !s.tampered && s.split == split && s.target % 2 == 0)
            .map(|s| {
                let partner = specs.iter().find(|o| !o.tampered && o.target == s.target + 1).expect("pair partner");
                [s.video_id.as_str(), partner.video_id.as_str()]
            })
            .collect();
        let path = dir.join(format!("{}.json", split.as_str()));
        let text = serde_json::to_string(&pairs).expect("id pairs serialize");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn write_video(config: &SynthConfig, spec: &VideoSpec, level: CompressionLevel, root: &Path) -> Result<VideoEntry> {
    let method = if spec.tampered { config.method } else { ManipulationMethod::Original };
    let slice = slice_dir(root, method, level);
    let crops_dir = slice.join("crops");
    let rendered = render_video(config, spec, level);
    let mut frames_out = Vec::with_capacity(rendered.len());
    for (t, frame) in rendered.iter().enumerate() {
        let rel = crop_file_name(&spec.video_id, t);
        frames::write_png(&frame.image, &slice.join("videos").join(&rel))?;
        let face = match &frame.face {
            Some(fb) => {
                let crop = crop_face(&frame.image, fb, DEFAULT_MARGIN)?;
                frames::write_png(&crop, &crops_dir.join(&rel))?;
                let crop_box: CropBox = fb
                    .clamp_to(config.image_size, config.image_size)
                    .ok_or_else(|| Error::DegenerateBox(format!("{fb:?}")))?;
                Some(FaceCrop { crop_box, crop_path: rel })
            }
            None => None,
        };
        frames_out.push(FrameRecord { video_id: spec.video_id.clone(), frame_index: t, face });
    }
    Ok(VideoEntry {
        video: VideoRecord {
            video_id: spec.video_id.clone(),
            method,
            compression: level,
            split: spec.split,
            source_path: Path::new("..").join("videos").join(&spec.video_id),
            frame_count: rendered.len(),
        },
        frames: frames_out,
    })
}

/// Mean absolute horizontal gradient over the mouth region.
pub fn mouth_energy(frame: &RenderedFrame) -> Option<f64> {
    let r = frame.mouth?;
    let img = &frame.image;
    let (mut sum, mut n) = (0.0, 0usize);
    for y in r.y0..r.y1 {
        for x in r.x0..r.x1.saturating_sub(1).min(img.width() - 1) {
            let a = img.get_pixel(x, y).0;
            let b = img.get_pixel(x + 1, y).0;
            for k in 0..3 {
                sum += (f64::from(a[k]) - f64::from(b[k])).abs();
            }
            n += 3;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Result of the brute-force threshold classifier on mouth energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub threshold: f64,
    pub accuracy: f64,
    pub frames: usize,
}

/// Best single-threshold classifier on [`mouth_energy`] over every face
/// frame at `level`: "tampered iff energy > threshold", all thresholds
/// between consecutive observed values tried.
pub fn separability_certificate(config: &SynthConfig, level: CompressionLevel, mode: ExecMode) -> Result<Certificate> {
    config.validate()?;
    let specs = video_specs(config);
    let per_video = exec::map(mode, &specs, |spec| {
        render_video(config, spec, level)
            .iter()
            .filter_map(mouth_energy)
            .map(|e| (e, spec.tampered))
            .collect::<Vec<_>>()
    });
    let mut points: Vec<(f64, bool)> = per_video.into_iter().flatten().collect();
    if points.is_empty() {
        return Err(Error::EmptySelection("no face frames".into()));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = points.len();
    let total_tampered = points.iter().filter(|p| p.1).count();
    // threshold below everything: all predicted tampered
    let mut best = (total_tampered, points[0].0 - 1.0);
    let (mut pristine_below, mut tampered_below) = (0, 0);
    for i in 0..n {
        if points[i].1 {
            tampered_below += 1;
        } else {
            pristine_below += 1;
        }
        if i + 1 < n && points[i + 1].0 == points[i].0 {
            continue;
        }
        let correct = pristine_below + (total_tampered - tampered_below);
        let thr = if i + 1 < n { (points[i].0 + points[i + 1].0) / 2.0 } else { points[i].0 };
        if correct > best.0 {
            best = (correct, thr);
        }
    }
    Ok(Certificate { threshold: best.1, accuracy: best.0 as f64 / n as f64, frames: n })
}
