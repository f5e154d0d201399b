use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

/// Handle to a contiguous parameter tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamRef {
    pub offset: usize,
    pub len: usize,
}

impl ParamRef {
    pub fn of<'a>(&self, values: &'a [f64]) -> &'a [f64] {
        &values[self.offset..self.offset + self.len]
    }

    pub fn of_mut<'a>(&self, values: &'a mut [f64]) -> &'a mut [f64] {
        &mut values[self.offset..self.offset + self.len]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Encoder,
    Head,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// U(-b, b) with b = sqrt(6 / fan_in); for layers followed by ReLU.
    HeUniform { fan_in: usize },
    /// U(-b, b) with b = 1 / sqrt(fan_in).
    SmallUniform { fan_in: usize },
    /// Row blocks of `n`×`n` orthogonal matrices.
    Orthogonal { n: usize },
    Constant(f64),
    /// Constant per gate block of `n` entries.
    Blocks { n: usize, values: [f64; 4] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub group: ParamGroup,
    pub init: Init,
    pub trainable: bool,
    pub slot: ParamRef,
}

/// Named parameter collection backed by one flat vector.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    specs: Vec<ParamSpec>,
    values: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], group: ParamGroup, init: Init) -> ParamRef {
        let name = name.into();
        assert!(self.find(&name).is_none(), "parameter {name} registered twice");
        let len: usize = shape.iter().product();
        let slot = ParamRef {
            offset: self.values.len(),
            len,
        };
        self.values.resize(self.values.len() + len, 0.0);
        self.specs.push(ParamSpec {
            name,
            shape: shape.to_vec(),
            group,
            init,
            trainable: true,
            slot,
        });
        slot
    }

    /// Fills every parameter from its init scheme. Each tensor draws from a
    /// stream keyed by (seed, name), so adding a tensor never perturbs the
    /// others.
    pub fn initialize(&mut self, seed: u64) {
        for i in 0..self.specs.len() {
            self.initialize_one(i, seed);
        }
    }

    pub fn initialize_one(&mut self, index: usize, seed: u64) {
        let spec = self.specs[index].clone();
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &spec.name));
        let out = spec.slot.of_mut(&mut self.values);
        match spec.init {
            Init::HeUniform { fan_in } => {
                let b = (6.0 / fan_in.max(1) as f64).sqrt();
                out.iter_mut().for_each(|v| *v = rng.random_range(-b..b));
            }
            Init::SmallUniform { fan_in } => {
                let b = 1.0 / (fan_in.max(1) as f64).sqrt();
                out.iter_mut().for_each(|v| *v = rng.random_range(-b..b));
            }
            Init::Orthogonal { n } => {
                for block in out.chunks_mut(n * n) {
                    orthogonal_block(n, &mut rng, block);
                }
            }
            Init::Constant(c) => out.iter_mut().for_each(|v| *v = c),
            Init::Blocks { n, values } => {
                for (i, v) in out.iter_mut().enumerate() {
                    *v = values[(i / n).min(3)];
                }
            }
        }
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<&ParamSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    pub fn set_trainable(&mut self, group: ParamGroup, trainable: bool) {
        for s in &mut self.specs {
            if s.group == group {
                s.trainable = trainable;
            }
        }
    }

    pub fn set_trainable_by_name(&mut self, name: &str, trainable: bool) -> bool {
        match self.specs.iter_mut().find(|s| s.name == name) {
            Some(s) => {
                s.trainable = trainable;
                true
            }
            None => false,
        }
    }

    pub fn count(&self) -> (usize, usize) {
        let total = self.values.len();
        let trainable = self.specs.iter().filter(|s| s.trainable).map(|s| s.slot.len).sum();
        (total, trainable)
    }

    /// SHA-256 over names, shapes and the exact bit patterns of one group.
    pub fn group_hash(&self, group: ParamGroup) -> String {
        let mut h = Sha256::new();
        for s in self.specs.iter().filter(|s| s.group == group) {
            h.update(s.name.as_bytes());
            for d in &s.shape {
                h.update((*d as u64).to_le_bytes());
            }
            for v in s.slot.of(&self.values) {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn stream_seed(seed: u64, name: &str) -> u64 {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(name.as_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn orthogonal_block(n: usize, rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let g = nalgebra::DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = q[(i, j)];
        }
    }
}
