use image::RgbImage;

use super::{FaceBox, FaceDetector};
use crate::error::Result;

/// Finds skin-coloured blobs. Adequate for frontal faces on non-skin
/// backgrounds; a learned detector can be plugged in through [`FaceDetector`].
#[derive(Debug, Clone)]
pub struct SkinToneDetector {
    /// Minimum blob area as a fraction of the image.
    pub min_area_fraction: f64,
}

impl Default for SkinToneDetector {
    fn default() -> Self {
        SkinToneDetector { min_area_fraction: 0.01 }
    }
}

fn is_skin(p: [u8; 3]) -> bool {
    let [r, g, b] = p.map(i32::from);
    r >= 110 && r - g >= 15 && g - b >= 3 && r - b >= 40
}

impl FaceDetector for SkinToneDetector {
    fn name(&self) -> &str {
        "skin-tone"
    }

    fn detect(&mut self, image: &RgbImage) -> Result<Vec<FaceBox>> {
        let (w, h) = (image.width() as usize, image.height() as usize);
        let mask: Vec<bool> = image.pixels().map(|p| is_skin(p.0)).collect();
        let mut seen = vec![false; w * h];
        let min_area = ((w * h) as f64 * self.min_area_fraction).ceil().max(1.0) as usize;
        let mut faces = Vec::new();
        let mut stack = Vec::new();
        for start in 0..w * h {
            if !mask[start] || seen[start] {
                continue;
            }
            seen[start] = true;
            stack.push(start);
            let (mut x0, mut y0, mut x1, mut y1, mut area) = (w, h, 0, 0, 0usize);
            while let Some(i) = stack.pop() {
                let (x, y) = (i % w, i / w);
                area += 1;
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
                let mut visit = |j: usize| {
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                };
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < w {
                    visit(i + 1);
                }
                if y > 0 {
                    visit(i - w);
                }
                if y + 1 < h {
                    visit(i + w);
                }
            }
            if area < min_area {
                continue;
            }
            let (bw, bh) = (x1 - x0 + 1, y1 - y0 + 1);
            let ellipse = std::f64::consts::FRAC_PI_4 * (bw * bh) as f64;
            faces.push(FaceBox::new(
                x0 as i64,
                y0 as i64,
                bw as i64,
                bh as i64,
                (area as f64 / ellipse).min(1.0),
            ));
        }
        faces.sort_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then((b.w * b.h).cmp(&(a.w * a.h)))
        });
        Ok(faces)
    }
}

/// Returns the same boxes for every frame. Useful when the face location is
/// known in advance, and in tests.
#[derive(Debug, Clone)]
pub struct StaticDetector {
    pub name: String,
    pub faces: Vec<FaceBox>,
}

impl FaceDetector for StaticDetector {
    fn name(&self) -> &str {
        &self.name
    }

    fn detect(&mut self, _image: &RgbImage) -> Result<Vec<FaceBox>> {
        Ok(self.faces.clone())
    }
}
