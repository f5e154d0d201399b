use super::encoder::{EncoderMode, EncoderTape, FrameEncoder};
use super::heads::{BiRecurrentHead, Conv3dHead};
use super::{majority_vote, ModelConfig, Variant, EMBEDDING_DIM};
use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::nn::{bce_with_logits, sigmoid, Dims3, Linear, ParamGroup, ParamStore};

#[derive(Debug, Clone)]
enum Head {
    Frame(Linear),
    Conv3d(Conv3dHead),
    BiRecurrent(BiRecurrentHead),
}

/// Outcome for one sample. Majority-vote decisions carry no probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub label: Label,
    pub probability: Option<f64>,
}

/// A frame encoder plus one of the classification heads, over a single
/// parameter store.
#[derive(Debug, Clone)]
pub struct Classifier {
    config: ModelConfig,
    store: ParamStore,
    encoder: FrameEncoder,
    head: Head,
}

impl Classifier {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let (encoder, head) = match config.variant {
            Variant::SingleFrame | Variant::MajorityVote => {
                let enc = FrameEncoder::new(&mut store, &config.encoder, EncoderMode::Embedding)?;
                let fc = Linear::new(&mut store, "head.fc", EMBEDDING_DIM, 1, ParamGroup::Head);
                (enc, Head::Frame(fc))
            }
            Variant::Conv3d => {
                let mode = EncoderMode::FeatureMap {
                    cut: config.encoder.feature_cut,
                };
                let enc = FrameEncoder::new(&mut store, &config.encoder, mode)?;
                let channels = enc.output_shape()[0];
                let head = Conv3dHead::new(&mut store, channels, &config.conv3d_channels);
                (enc, Head::Conv3d(head))
            }
            Variant::BiRecurrent => {
                let enc = FrameEncoder::new(&mut store, &config.encoder, EncoderMode::Embedding)?;
                let head = BiRecurrentHead::new(&mut store, EMBEDDING_DIM, config.rnn_hidden);
                (enc, Head::BiRecurrent(head))
            }
        };
        store.initialize(config.init_seed);
        Ok(Classifier {
            config,
            store,
            encoder,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    /// Frames consumed per sample.
    pub fn window_size(&self) -> usize {
        self.config.window
    }

    pub fn encoder(&self) -> &FrameEncoder {
        &self.encoder
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// (total, trainable).
    pub fn count_parameters(&self) -> (usize, usize) {
        self.store.count()
    }

    pub fn encoder_hash(&self) -> String {
        self.store.group_hash(ParamGroup::Encoder)
    }

    pub fn head_hash(&self) -> String {
        self.store.group_hash(ParamGroup::Head)
    }

    pub fn freeze_encoder(&mut self, frozen: bool) {
        self.store.set_trainable(ParamGroup::Encoder, !frozen);
    }

    /// Wraps a single-frame model as a `w`-frame majority vote sharing the
    /// same parameters.
    pub fn as_majority_vote(&self, w: usize) -> Result<Classifier> {
        super::check_window(w)?;
        if !matches!(self.config.variant, Variant::SingleFrame | Variant::MajorityVote) {
            return Err(Error::Config(format!(
                "majority vote needs a single-frame model, got {}",
                self.config.variant.as_str()
            )));
        }
        let mut out = self.clone();
        out.config.variant = Variant::MajorityVote;
        out.config.window = w;
        Ok(out)
    }

    fn check_frames(&self, frames: &[&[f64]]) -> Result<()> {
        for f in frames {
            self.encoder.check_input(f)?;
        }
        match self.config.variant {
            Variant::SingleFrame | Variant::MajorityVote => {
                if frames.len() % 2 == 0 {
                    return Err(Error::WindowSizeMismatch {
                        expected: self.config.window,
                        found: frames.len(),
                    });
                }
            }
            Variant::Conv3d | Variant::BiRecurrent => {
                if frames.len() != self.config.window {
                    return Err(Error::WindowSizeMismatch {
                        expected: self.config.window,
                        found: frames.len(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Logit for a sample. Single-frame and majority-vote models score the
    /// middle frame only; window models consume all frames.
    pub fn logit(&self, frames: &[&[f64]]) -> Result<f64> {
        self.logit_with(self.store.values(), frames)
    }

    /// Same as [`Classifier::logit`] with an explicit parameter vector.
    pub fn logit_with(&self, params: &[f64], frames: &[&[f64]]) -> Result<f64> {
        self.check_frames(frames)?;
        Ok(self.forward(params, frames).0)
    }

    pub fn probability(&self, frames: &[&[f64]]) -> Result<f64> {
        Ok(sigmoid(self.logit(frames)?))
    }

    pub fn decide(&self, frames: &[&[f64]]) -> Result<Decision> {
        if self.config.variant == Variant::MajorityVote {
            if frames.len() != self.config.window {
                return Err(Error::WindowSizeMismatch {
                    expected: self.config.window,
                    found: frames.len(),
                });
            }
            let votes = frames
                .iter()
                .map(|f| self.logit(std::slice::from_ref(f)).map(|z| Label::from_probability(sigmoid(z))))
                .collect::<Result<Vec<_>>>()?;
            return Ok(Decision {
                label: majority_vote(&votes)?,
                probability: None,
            });
        }
        let p = self.probability(frames)?;
        Ok(Decision {
            label: Label::from_probability(p),
            probability: Some(p),
        })
    }

    /// Adds d(loss)/d(params) for one sample into `grads`; returns
    /// (logit, loss).
    pub fn loss_and_grad(&self, frames: &[&[f64]], label: Label, grads: &mut [f64]) -> Result<(f64, f64)> {
        self.loss_and_grad_with(self.store.values(), frames, label, grads)
    }

    pub fn loss_and_grad_with(
        &self,
        params: &[f64],
        frames: &[&[f64]],
        label: Label,
        grads: &mut [f64],
    ) -> Result<(f64, f64)> {
        self.check_frames(frames)?;
        if grads.len() != params.len() {
            return Err(Error::ShapeMismatch(format!(
                "gradient buffer has {} entries, model has {}",
                grads.len(),
                params.len()
            )));
        }
        let (logit, tape) = self.forward(params, frames);
        let (loss, dz) = bce_with_logits(logit, label.target());
        self.backward(params, frames, &tape, dz, grads);
        Ok((logit, loss))
    }

    /// Per-frame feature maps stacked on a temporal axis: (C, w, H', W').
    pub fn conv3d_input(&self, frames: &[&[f64]]) -> Result<(Vec<f64>, [usize; 4])> {
        if !matches!(self.head, Head::Conv3d(_)) {
            return Err(Error::Config("conv3d_input needs a conv3d model".into()));
        }
        self.check_frames(frames)?;
        let maps: Vec<Vec<f64>> = frames
            .iter()
            .map(|f| self.encoder.forward(self.store.values(), f).0)
            .collect();
        let (vol, dims) = self.stack(&maps);
        Ok((vol, [self.encoder.output_shape()[0], dims.t, dims.h, dims.w]))
    }

    /// The (w, 512) embedding sequence seen by the recurrent head.
    pub fn embedding_sequence(&self, frames: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        if self.encoder.mode() != EncoderMode::Embedding {
            return Err(Error::Config("model encoder is not in embedding mode".into()));
        }
        self.check_frames(frames)?;
        Ok(frames
            .iter()
            .map(|f| self.encoder.forward(self.store.values(), f).0)
            .collect())
    }

    fn stack(&self, maps: &[Vec<f64>]) -> (Vec<f64>, Dims3) {
        let shape = self.encoder.output_shape();
        let (c, area) = (shape[0], shape[1] * shape[2]);
        let t = maps.len();
        let mut vol = vec![0.0; c * t * area];
        for (ti, m) in maps.iter().enumerate() {
            for ci in 0..c {
                vol[(ci * t + ti) * area..(ci * t + ti + 1) * area].copy_from_slice(&m[ci * area..(ci + 1) * area]);
            }
        }
        (vol, Dims3::new(t, shape[1], shape[2]))
    }

    fn forward(&self, p: &[f64], frames: &[&[f64]]) -> (f64, Tape) {
        match &self.head {
            Head::Frame(fc) => {
                let mid = frames[frames.len() / 2];
                let (emb, et) = self.encoder.forward(p, mid);
                let z = fc.forward(p, &emb)[0];
                (z, Tape::Frame { enc: et, emb })
            }
            Head::Conv3d(head) => {
                let (maps, tapes): (Vec<_>, Vec<_>) = frames.iter().map(|f| self.encoder.forward(p, f)).unzip();
                let (vol, dims) = self.stack(&maps);
                let (z, ht) = head.forward(p, &vol, dims);
                (z, Tape::Conv3d { encs: tapes, head: ht })
            }
            Head::BiRecurrent(head) => {
                let (embs, tapes): (Vec<_>, Vec<_>) = frames.iter().map(|f| self.encoder.forward(p, f)).unzip();
                let seq: Vec<&[f64]> = embs.iter().map(|e| e.as_slice()).collect();
                let (z, ht) = head.forward(p, &seq);
                (z, Tape::BiRecurrent { encs: tapes, embs, head: ht })
            }
        }
    }

    fn backward(&self, p: &[f64], frames: &[&[f64]], tape: &Tape, dz: f64, grads: &mut [f64]) {
        match (&self.head, tape) {
            (Head::Frame(fc), Tape::Frame { enc, emb }) => {
                let de = fc.backward(p, emb, &[dz], grads, true).expect("requested dx");
                self.encoder.backward(p, enc, &de, grads);
            }
            (Head::Conv3d(head), Tape::Conv3d { encs, head: ht }) => {
                let dvol = head.backward(p, ht, dz, grads);
                let shape = self.encoder.output_shape();
                let (c, area) = (shape[0], shape[1] * shape[2]);
                let t = frames.len();
                for (ti, et) in encs.iter().enumerate() {
                    let mut dm = vec![0.0; c * area];
                    for ci in 0..c {
                        dm[ci * area..(ci + 1) * area]
                            .copy_from_slice(&dvol[(ci * t + ti) * area..(ci * t + ti + 1) * area]);
                    }
                    self.encoder.backward(p, et, &dm, grads);
                }
            }
            (Head::BiRecurrent(head), Tape::BiRecurrent { encs, embs, head: ht }) => {
                let seq: Vec<&[f64]> = embs.iter().map(|e| e.as_slice()).collect();
                let dseq = head.backward(p, &seq, ht, dz, grads);
                for (et, de) in encs.iter().zip(&dseq) {
                    self.encoder.backward(p, et, de, grads);
                }
            }
            _ => unreachable!("tape produced by the same head"),
        }
    }
}

enum Tape {
    Frame {
        enc: EncoderTape,
        emb: Vec<f64>,
    },
    Conv3d {
        encs: Vec<EncoderTape>,
        head: super::heads::Conv3dTape,
    },
    BiRecurrent {
        encs: Vec<EncoderTape>,
        embs: Vec<Vec<f64>>,
        head: super::heads::BiRecurrentTape,
    },
}
