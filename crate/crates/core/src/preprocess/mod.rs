//! Video → face crops + manifest.
//!
//! Every decoded frame yields one [`FrameRecord`]; frames where the detector
//! finds nothing (or fails) are recorded with `face_found = false` rather
//! than dropped. Crops are written as lossless PNG under
//! `<out_dir>/<video_id>/<frame_index:06>.png`.

mod decoder;
mod detector;

use std::path::{Path, PathBuf};

use image::RgbImage;

use crate::dataset::{
    crop_file_name, CompressionLevel, CropBox, FaceCrop, FrameRecord, ManifestHeader, ManifestWriter,
    ManipulationMethod, Manifest, SplitMap, VideoEntry, VideoRecord, MANIFEST_FILE_NAME,
};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::frames;

pub use decoder::{AutoDecoder, FfmpegDecoder, FrameDirDecoder, FrameStream, VideoDecoder};
pub use detector::{SkinToneDetector, StaticDetector};

/// Default crop margin: 30% of the larger box side on each side.
pub const DEFAULT_MARGIN: f64 = 0.3;

/// Detector output. Coordinates may fall outside the image; they are
/// clamped before use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceBox {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
    /// In [0, 1].
    pub confidence: f64,
}

impl FaceBox {
    pub fn new(x: i64, y: i64, w: i64, h: i64, confidence: f64) -> Self {
        FaceBox { x, y, w, h, confidence }
    }

    /// Intersection with the image, or `None` when nothing is left.
    pub fn clamp_to(&self, width: u32, height: u32) -> Option<CropBox> {
        let x0 = self.x.max(0);
        let y0 = self.y.max(0);
        let x1 = (self.x + self.w).min(i64::from(width));
        let y1 = (self.y + self.h).min(i64::from(height));
        (x1 - x0 >= 1 && y1 - y0 >= 1).then(|| CropBox {
            x: x0 as u32,
            y: y0 as u32,
            w: (x1 - x0) as u32,
            h: (y1 - y0) as u32,
        })
    }
}

pub trait FaceDetector: Send {
    fn name(&self) -> &str;

    /// Faces sorted by confidence, highest first. Must be deterministic for
    /// a given image.
    fn detect(&mut self, image: &RgbImage) -> Result<Vec<FaceBox>>;
}

/// The box grown by `margin · max(w, h)` (rounded to whole pixels) on every
/// side and clamped to the image.
pub fn crop_region(width: u32, height: u32, face: &FaceBox, margin: f64) -> Result<CropBox> {
    if !margin.is_finite() || margin < 0.0 {
        return Err(Error::Config(format!("crop margin {margin} must be finite and >= 0")));
    }
    let pad = (margin * face.w.max(face.h) as f64).round() as i64;
    let grown = FaceBox::new(face.x - pad, face.y - pad, face.w + 2 * pad, face.h + 2 * pad, face.confidence);
    if face.w < 1 || face.h < 1 {
        return Err(Error::DegenerateBox(format!("{face:?}")));
    }
    grown
        .clamp_to(width, height)
        .ok_or_else(|| Error::DegenerateBox(format!("{face:?} outside {width}x{height}")))
}

pub fn crop_face(image: &RgbImage, face: &FaceBox, margin: f64) -> Result<RgbImage> {
    let r = crop_region(image.width(), image.height(), face, margin)?;
    Ok(image::imageops::crop_imm(image, r.x, r.y, r.w, r.h).to_image())
}

/// Decodes every frame of `video`, optionally writing each as
/// `<out_dir>/<video_id>/<index:06>.png`.
pub fn extract_frames(
    decoder: &dyn VideoDecoder,
    video: &VideoRecord,
    out_dir: Option<&Path>,
) -> Result<Vec<(usize, RgbImage)>> {
    let mut stream = decoder.open(&video.source_path)?;
    let reported = stream.reported_frame_count();
    let mut frames_out = Vec::new();
    for (i, frame) in stream.by_ref().enumerate() {
        let frame = frame?;
        if let Some(dir) = out_dir {
            frames::write_png(&frame, &dir.join(crop_file_name(&video.video_id, i)))?;
        }
        frames_out.push((i, frame));
    }
    if frames_out.is_empty() {
        return Err(Error::EmptyVideo(video.source_path.clone()));
    }
    if let Some(n) = reported {
        if n != frames_out.len() {
            return Err(Error::Decode {
                path: video.source_path.clone(),
                message: format!("decoder reported {n} frames but yielded {}", frames_out.len()),
            });
        }
    }
    Ok(frames_out)
}

/// One record per decoded frame, keeping the most confident detection.
pub fn process_video(
    video: &VideoRecord,
    detector: &mut dyn FaceDetector,
    decoder: &dyn VideoDecoder,
    margin: f64,
    out_dir: &Path,
) -> Result<Vec<FrameRecord>> {
    let decoded = extract_frames(decoder, video, None)?;
    let mut records = Vec::with_capacity(decoded.len());
    for (index, image) in decoded {
        let best = detector.detect(&image).ok().and_then(|faces| {
            faces
                .into_iter()
                .filter(|f| f.clamp_to(image.width(), image.height()).is_some())
                .fold(None, |best: Option<FaceBox>, f| match best {
                    Some(b) if b.confidence >= f.confidence => Some(b),
                    _ => Some(f),
                })
        });
        let face = match best {
            Some(face) => {
                let crop_box = face.clamp_to(image.width(), image.height()).expect("filtered");
                match crop_face(&image, &face, margin) {
                    Ok(crop) => {
                        let rel = crop_file_name(&video.video_id, index);
                        frames::write_png(&crop, &out_dir.join(&rel))?;
                        Some(FaceCrop { crop_box, crop_path: rel })
                    }
                    Err(Error::DegenerateBox(_)) => None,
                    Err(e) => return Err(e),
                }
            }
            None => None,
        };
        records.push(FrameRecord {
            video_id: video.video_id.clone(),
            frame_index: index,
            face,
        });
    }
    Ok(records)
}

#[derive(Debug, Clone)]
pub struct PreprocessOptions {
    pub videos_dir: PathBuf,
    pub out_dir: PathBuf,
    pub method: ManipulationMethod,
    pub compression: CompressionLevel,
    pub margin: f64,
    pub exec: ExecMode,
}

const VIDEO_EXTENSIONS: &[&str] = &["mp4", "avi", "mkv", "mov", "webm", "y4m"];

/// Videos in a directory: sub-directories of PNG frames and files with a
/// known video extension, sorted by name.
pub fn list_videos(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut videos = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let id = if path.is_dir() {
            path.file_name().map(|n| n.to_string_lossy().into_owned())
        } else {
            let ext = path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase());
            match ext {
                Some(e) if VIDEO_EXTENSIONS.contains(&e.as_str()) => {
                    path.file_stem().map(|n| n.to_string_lossy().into_owned())
                }
                _ => None,
            }
        };
        if let Some(id) = id {
            videos.push((id, path));
        }
    }
    videos.sort();
    Ok(videos)
}

/// Processes every video in `opts.videos_dir` and writes
/// `<out_dir>/manifest.tsv`. Videos run in parallel, one detector per worker;
/// the manifest keeps directory order.
pub fn preprocess_directory<F>(
    opts: &PreprocessOptions,
    splits: &SplitMap,
    make_detector: F,
    decoder: &dyn VideoDecoder,
) -> Result<Manifest>
where
    F: Fn() -> Box<dyn FaceDetector> + Sync + Send,
{
    let listed = list_videos(&opts.videos_dir)?;
    if listed.is_empty() {
        return Err(Error::NoVideos(opts.videos_dir.clone()));
    }
    let mut videos = Vec::with_capacity(listed.len());
    for (id, path) in listed {
        let split = splits.split_of(&id).ok_or_else(|| Error::UnknownSplit(id.clone()))?;
        videos.push(VideoRecord {
            video_id: id,
            method: opts.method,
            compression: opts.compression,
            split,
            source_path: path,
            frame_count: 0,
        });
    }
    std::fs::create_dir_all(&opts.out_dir).map_err(|e| Error::io(&opts.out_dir, e))?;
    let detector_name = make_detector().name().to_string();
    let results = exec::map_init(opts.exec, &videos, &make_detector, |det, video| {
        process_video(video, det.as_mut(), decoder, opts.margin, &opts.out_dir)
    });
    let header = ManifestHeader::new(detector_name, opts.margin);
    let mut writer = ManifestWriter::create(&opts.out_dir.join(MANIFEST_FILE_NAME), &header)?;
    let mut manifest = Manifest::new(header);
    for (mut video, records) in videos.into_iter().zip(results) {
        let frames = records?;
        video.frame_count = frames.len();
        let entry = VideoEntry { video, frames };
        writer.append(&entry)?;
        manifest.videos.push(entry);
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fb(x: i64, y: i64, w: i64, h: i64) -> FaceBox {
        FaceBox::new(x, y, w, h, 1.0)
    }

    #[test]
    fn crop_region_examples() {
        assert_eq!(crop_region(100, 100, &fb(0, 0, 100, 100), 0.0).unwrap(), CropBox { x: 0, y: 0, w: 100, h: 100 });
        assert_eq!(crop_region(100, 100, &fb(40, 40, 20, 20), 0.5).unwrap(), CropBox { x: 30, y: 30, w: 40, h: 40 });
        assert_eq!(crop_region(100, 100, &fb(90, 90, 20, 20), 0.0).unwrap(), CropBox { x: 90, y: 90, w: 10, h: 10 });
        assert!(matches!(crop_region(100, 100, &fb(120, 10, 5, 5), 0.0), Err(Error::DegenerateBox(_))));
        assert!(matches!(crop_region(100, 100, &fb(10, 10, 0, 5), 0.0), Err(Error::DegenerateBox(_))));
        assert!(crop_region(100, 100, &fb(10, 10, 5, 5), f64::NAN).is_err());
    }

    #[test]
    fn full_box_without_margin_is_identity() {
        let img = RgbImage::from_fn(100, 100, |x, y| image::Rgb([x as u8, y as u8, (x ^ y) as u8]));
        assert_eq!(crop_face(&img, &fb(0, 0, 100, 100), 0.0).unwrap(), img);
        let c = crop_face(&img, &fb(40, 40, 20, 20), 0.5).unwrap();
        assert_eq!(c.dimensions(), (40, 40));
        assert_eq!(c.get_pixel(0, 0), img.get_pixel(30, 30));
    }

    proptest::proptest! {
        #[test]
        fn crop_stays_inside_image_and_covers_box(
            iw in 1u32..200, ih in 1u32..200,
            x in -50i64..250, y in -50i64..250, w in 1i64..120, h in 1i64..120,
            margin in 0.0f64..2.0,
        ) {
            let face = fb(x, y, w, h);
            match (face.clamp_to(iw, ih), crop_region(iw, ih, &face, margin)) {
                (Some(inner), Ok(r)) => {
                    proptest::prop_assert!(r.x + r.w <= iw && r.y + r.h <= ih);
                    proptest::prop_assert!(r.x <= inner.x && r.y <= inner.y);
                    proptest::prop_assert!(r.x + r.w >= inner.x + inner.w && r.y + r.h >= inner.y + inner.h);
                }
                (None, _) => {}
                (Some(_), Err(e)) => proptest::prop_assert!(false, "unexpected {e}"),
            }
        }
    }
}
