//! Crop loading and input normalization.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::RgbImage;

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};

/// Pixels map to `v / 127.5 - 1`, i.e. [0, 255] onto [-1, 1], per channel.
pub const PIXEL_SCALE: f64 = 127.5;

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(img.to_rgb8())
}

pub fn write_png(img: &RgbImage, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

pub fn resize_square(img: &RgbImage, size: u32) -> RgbImage {
    if img.width() == size && img.height() == size {
        img.clone()
    } else {
        imageops::resize(img, size, size, FilterType::Triangle)
    }
}

/// Planar CHW layout, values in [-1, 1].
pub fn normalize(img: &RgbImage) -> Vec<f64> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = vec![0.0; 3 * w * h];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            out[c * w * h + i] = f64::from(px.0[c]) / PIXEL_SCALE - 1.0;
        }
    }
    out
}

/// Decoded, resized crops keyed by path, stored as 8-bit CHW planes.
#[derive(Debug, Default)]
pub struct FrameStore {
    size: u32,
    frames: HashMap<PathBuf, Vec<u8>>,
}

impl FrameStore {
    pub fn new(size: u32) -> Self {
        FrameStore {
            size,
            frames: HashMap::new(),
        }
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    /// Loads every path not yet cached.
    pub fn preload<'a, I>(&mut self, paths: I, mode: ExecMode) -> Result<()>
    where
        I: IntoIterator<Item = &'a PathBuf>,
    {
        let mut todo: Vec<PathBuf> = paths
            .into_iter()
            .filter(|p| !self.frames.contains_key(*p))
            .cloned()
            .collect();
        todo.sort();
        todo.dedup();
        let size = self.size;
        let loaded = exec::map(mode, &todo, |p| load_planes(p, size));
        for (p, planes) in todo.into_iter().zip(loaded) {
            self.frames.insert(p, planes?);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn contains(&self, path: &Path) -> bool {
        self.frames.contains_key(path)
    }

    /// Normalized input for a preloaded crop.
    pub fn get_loaded(&self, path: &Path) -> Option<Vec<f64>> {
        self.frames
            .get(path)
            .map(|planes| planes.iter().map(|v| f64::from(*v) / PIXEL_SCALE - 1.0).collect())
    }

    /// Normalized input for one crop; reads from disk when not preloaded.
    pub fn get(&self, path: &Path) -> Result<Vec<f64>> {
        let planes = match self.frames.get(path) {
            Some(p) => std::borrow::Cow::Borrowed(p),
            None => std::borrow::Cow::Owned(load_planes(path, self.size)?),
        };
        Ok(planes.iter().map(|v| f64::from(*v) / PIXEL_SCALE - 1.0).collect())
    }
}

fn load_planes(path: &Path, size: u32) -> Result<Vec<u8>> {
    let img = resize_square(&read_rgb(path)?, size);
    let n = (size * size) as usize;
    let mut out = vec![0u8; 3 * n];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            out[c * n + i] = px.0[c];
        }
    }
    Ok(out)
}
