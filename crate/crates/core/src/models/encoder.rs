use image::RgbImage;

use super::EncoderConfig;
use crate::error::{Error, Result};
use crate::frames;
use crate::nn::{relu_backward, relu_inplace, ConvGeom, ConvNd, Dims3, Linear, ParamGroup, ParamStore};

/// Width of the per-frame embedding fed to recurrent heads.
pub const EMBEDDING_DIM: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderMode {
    /// Full trunk, global average pool and projection to 512 values.
    Embedding,
    /// Stem plus the first `cut` residual stages; yields a C×H'×W' map.
    FeatureMap { cut: usize },
}

#[derive(Debug, Clone)]
struct ResBlock {
    conv1: ConvNd,
    conv2: ConvNd,
    proj: Option<ConvNd>,
}

#[derive(Debug, Clone)]
struct BlockTape {
    in_dims: Dims3,
    mid_dims: Dims3,
    cols1: Vec<f64>,
    act1: Vec<f64>,
    cols2: Vec<f64>,
    proj_cols: Option<Vec<f64>>,
    out: Vec<f64>,
}

/// Saved activations of one encoder application.
#[derive(Debug, Clone)]
pub struct EncoderTape {
    stem_cols: Vec<f64>,
    stem_out: Vec<f64>,
    blocks: Vec<BlockTape>,
    pooled: Vec<f64>,
}

/// Residual convolutional frame encoder. One instance (one parameter set)
/// is applied to every frame of a window.
#[derive(Debug, Clone)]
pub struct FrameEncoder {
    config: EncoderConfig,
    mode: EncoderMode,
    stem: ConvNd,
    blocks: Vec<ResBlock>,
    embed: Option<Linear>,
    out_dims: Dims3,
    out_channels: usize,
}

impl FrameEncoder {
    pub fn new(store: &mut ParamStore, config: &EncoderConfig, mode: EncoderMode) -> Result<Self> {
        config.validate()?;
        let g = ParamGroup::Encoder;
        let input = Dims3::plane(config.input_size, config.input_size);
        let stem_geom = ConvGeom::planar(3, config.stem_channels, 3, 2, 1);
        let stem = ConvNd::new(store, "encoder.stem", stem_geom, g);
        let mut dims = stem_geom.out_dims(input).expect("validated size");
        let stages = match mode {
            EncoderMode::Embedding => config.stage_channels.len(),
            EncoderMode::FeatureMap { cut } => {
                if cut == 0 || cut > config.stage_channels.len() {
                    return Err(Error::Config(format!(
                        "feature cut {cut} outside 1..={}",
                        config.stage_channels.len()
                    )));
                }
                cut
            }
        };
        let mut cin = config.stem_channels;
        let mut blocks = Vec::with_capacity(stages);
        for (i, &cout) in config.stage_channels.iter().take(stages).enumerate() {
            let stride = if i == 0 { 1 } else { 2 };
            let name = format!("encoder.stage{}", i + 1);
            let c1 = ConvGeom::planar(cin, cout, 3, stride, 1);
            let conv1 = ConvNd::new(store, &format!("{name}.conv1"), c1, g);
            let conv2 = ConvNd::new(store, &format!("{name}.conv2"), ConvGeom::planar(cout, cout, 3, 1, 1), g);
            let proj = (cin != cout || stride != 1)
                .then(|| ConvNd::new(store, &format!("{name}.proj"), ConvGeom::planar(cin, cout, 1, stride, 0), g));
            dims = c1.out_dims(dims).expect("validated size");
            blocks.push(ResBlock { conv1, conv2, proj });
            cin = cout;
        }
        let embed = match mode {
            EncoderMode::Embedding => Some(Linear::new(store, "encoder.embed", cin, EMBEDDING_DIM, g)),
            EncoderMode::FeatureMap { .. } => None,
        };
        Ok(FrameEncoder {
            config: config.clone(),
            mode,
            stem,
            blocks,
            embed,
            out_dims: dims,
            out_channels: cin,
        })
    }

    pub fn mode(&self) -> EncoderMode {
        self.mode
    }

    pub fn input_size(&self) -> usize {
        self.config.input_size
    }

    pub fn input_len(&self) -> usize {
        3 * self.config.input_size * self.config.input_size
    }

    /// Output shape per frame: `[512]` in embedding mode, `[C, H', W']` for
    /// feature maps.
    pub fn output_shape(&self) -> Vec<usize> {
        match self.mode {
            EncoderMode::Embedding => vec![EMBEDDING_DIM],
            EncoderMode::FeatureMap { .. } => vec![self.out_channels, self.out_dims.h, self.out_dims.w],
        }
    }

    pub fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_len() {
            return Err(Error::ShapeMismatch(format!(
                "encoder expects 3x{s}x{s} inputs ({} values), got {}",
                self.input_len(),
                x.len(),
                s = self.config.input_size
            )));
        }
        Ok(())
    }

    /// Encodes one normalized CHW frame.
    pub fn encode(&self, params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.forward(params, x).0)
    }

    /// Encodes a batch of RGB images (resolution must match the config).
    pub fn encode_images(&self, params: &[f64], images: &[RgbImage]) -> Result<Vec<Vec<f64>>> {
        let s = self.config.input_size as u32;
        images
            .iter()
            .map(|img| {
                if img.width() != s || img.height() != s {
                    return Err(Error::ShapeMismatch(format!(
                        "encoder expects {s}x{s} images, got {}x{}",
                        img.width(),
                        img.height()
                    )));
                }
                self.encode(params, &frames::normalize(img))
            })
            .collect()
    }

    pub(crate) fn forward(&self, params: &[f64], x: &[f64]) -> (Vec<f64>, EncoderTape) {
        let input = Dims3::plane(self.config.input_size, self.config.input_size);
        let (mut h, stem_cols, mut dims) = self.stem.forward(params, x, input);
        relu_inplace(&mut h);
        let stem_out = h.clone();
        let mut tapes = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let in_dims = dims;
            let (mut a1, cols1, mid) = b.conv1.forward(params, &h, in_dims);
            relu_inplace(&mut a1);
            let (mut out, cols2, _) = b.conv2.forward(params, &a1, mid);
            let proj_cols = match &b.proj {
                Some(p) => {
                    let (s, pc, _) = p.forward(params, &h, in_dims);
                    out.iter_mut().zip(&s).for_each(|(o, v)| *o += v);
                    Some(pc)
                }
                None => {
                    out.iter_mut().zip(&h).for_each(|(o, v)| *o += v);
                    None
                }
            };
            relu_inplace(&mut out);
            h = out.clone();
            dims = mid;
            tapes.push(BlockTape {
                in_dims,
                mid_dims: mid,
                cols1,
                act1: a1,
                cols2,
                proj_cols,
                out,
            });
        }
        let mut tape = EncoderTape {
            stem_cols,
            stem_out,
            blocks: tapes,
            pooled: Vec::new(),
        };
        match &self.embed {
            None => (h, tape),
            Some(embed) => {
                let area = dims.volume() as f64;
                let pooled: Vec<f64> = h.chunks(dims.volume()).map(|c| c.iter().sum::<f64>() / area).collect();
                let y = embed.forward(params, &pooled);
                tape.pooled = pooled;
                (y, tape)
            }
        }
    }

    /// Accumulates parameter gradients for one frame given the gradient on
    /// the encoder output.
    pub(crate) fn backward(&self, params: &[f64], tape: &EncoderTape, dout: &[f64], grads: &mut [f64]) {
        let mut dh = match &self.embed {
            None => dout.to_vec(),
            Some(embed) => {
                let dp = embed
                    .backward(params, &tape.pooled, dout, grads, true)
                    .expect("requested dx");
                let area = self.out_dims.volume();
                let mut dh = vec![0.0; self.out_channels * area];
                for (c, chunk) in dh.chunks_mut(area).enumerate() {
                    chunk.iter_mut().for_each(|v| *v = dp[c] / area as f64);
                }
                dh
            }
        };
        for (b, t) in self.blocks.iter().zip(&tape.blocks).rev() {
            relu_backward(&t.out, &mut dh);
            let mut da1 = b
                .conv2
                .backward(params, &t.cols2, &dh, t.mid_dims, grads, true)
                .expect("requested dx");
            relu_backward(&t.act1, &mut da1);
            let mut dx = b
                .conv1
                .backward(params, &t.cols1, &da1, t.in_dims, grads, true)
                .expect("requested dx");
            match (&b.proj, &t.proj_cols) {
                (Some(p), Some(pc)) => {
                    let ds = p.backward(params, pc, &dh, t.in_dims, grads, true).expect("requested dx");
                    dx.iter_mut().zip(&ds).for_each(|(a, v)| *a += v);
                }
                _ => dx.iter_mut().zip(&dh).for_each(|(a, v)| *a += v),
            }
            dh = dx;
        }
        relu_backward(&tape.stem_out, &mut dh);
        let input = Dims3::plane(self.config.input_size, self.config.input_size);
        self.stem.backward(params, &tape.stem_cols, &dh, input, grads, false);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> EncoderConfig {
        EncoderConfig::toy()
    }

    #[test]
    fn embedding_shape_is_512() {
        let mut s = ParamStore::new();
        let enc = FrameEncoder::new(&mut s, &toy(), EncoderMode::Embedding).unwrap();
        s.initialize(0);
        let imgs: Vec<RgbImage> = (0..7)
            .map(|i| RgbImage::from_fn(32, 32, |x, y| image::Rgb([(x * 8) as u8, (y * 8) as u8, i * 30])))
            .collect();
        let out = enc.encode_images(s.values(), &imgs).unwrap();
        assert_eq!(out.len(), 7);
        assert!(out.iter().all(|e| e.len() == EMBEDDING_DIM && e.iter().all(|v| v.is_finite())));
        assert!(enc.encode_images(s.values(), &[]).unwrap().is_empty());
        let wrong = RgbImage::new(31, 32);
        assert!(matches!(enc.encode_images(s.values(), &[wrong]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn feature_map_shape_follows_cut() {
        let mut s = ParamStore::new();
        let enc = FrameEncoder::new(&mut s, &toy(), EncoderMode::FeatureMap { cut: 2 }).unwrap();
        s.initialize(0);
        assert_eq!(enc.output_shape(), vec![16, 8, 8]);
        let y = enc.encode(s.values(), &vec![0.1; enc.input_len()]).unwrap();
        assert_eq!(y.len(), 16 * 8 * 8);
        assert!(s.specs().iter().all(|p| !p.name.starts_with("encoder.embed")));
        let mut s2 = ParamStore::new();
        assert!(FrameEncoder::new(&mut s2, &toy(), EncoderMode::FeatureMap { cut: 4 }).is_err());
    }

    #[test]
    fn encoder_gradient_matches_finite_differences() {
        let cfg = EncoderConfig {
            input_size: 8,
            stem_channels: 2,
            stage_channels: vec![2, 3],
            feature_cut: 1,
        };
        let mut s = ParamStore::new();
        let enc = FrameEncoder::new(&mut s, &cfg, EncoderMode::Embedding).unwrap();
        s.initialize(5);
        let p = s.values().to_vec();
        let x: Vec<f64> = (0..enc.input_len()).map(|i| ((i * 37) % 17) as f64 / 8.5 - 1.0).collect();
        let r: Vec<f64> = (0..EMBEDDING_DIM).map(|i| (i as f64 * 0.01).cos()).collect();
        let loss = |p: &[f64]| enc.forward(p, &x).0.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();
        let (_, tape) = enc.forward(&p, &x);
        let mut g = vec![0.0; p.len()];
        enc.backward(&p, &tape, &r, &mut g);
        let h = 1e-6;
        let mut bad = 0;
        let mut checked = 0;
        for i in (0..p.len()).step_by(3) {
            let (mut a, mut b) = (p.clone(), p.clone());
            a[i] += h;
            b[i] -= h;
            let fd = (loss(&a) - loss(&b)) / (2.0 * h);
            let denom = fd.abs().max(g[i].abs()).max(1e-6);
            checked += 1;
            if (fd - g[i]).abs() / denom > 1e-4 {
                bad += 1;
            }
        }
        assert!(bad * 50 <= checked, "{bad} of {checked} mismatched");
    }
}
