//! Checkpoint container and weight-policy loading.
//!
//! Binary layout, little-endian throughout:
//!
//! ```text
//! "FGCK" u32:version
//! u32:config_len  config_len bytes of TOML (the ModelConfig)
//! u32:tensor_count
//! per tensor: u32:name_len name u8:group(0 encoder, 1 head) u8:trainable
//!             u32:ndim ndim×u64:dims  product(dims)×f64:values
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Classifier, ModelConfig, PolicyKind, WeightPolicy};
use crate::error::{Error, Result};
use crate::nn::ParamGroup;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"FGCK";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub group: ParamGroup,
    pub trainable: bool,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_classifier(model: &Classifier) -> Self {
        let store = model.params();
        let tensors = store
            .specs()
            .iter()
            .map(|s| NamedTensor {
                name: s.name.clone(),
                shape: s.shape.clone(),
                group: s.group,
                trainable: s.trainable,
                values: s.slot.of(store.values()).to_vec(),
            })
            .collect();
        Checkpoint {
            config: model.config().clone(),
            tensors,
        }
    }

    /// Keeps only encoder tensors, as a face-recognition backbone export would.
    pub fn encoder_only(mut self) -> Self {
        self.tensors.retain(|t| t.group == ParamGroup::Encoder);
        self
    }

    /// Rebuilds the exact model that was saved.
    pub fn to_classifier(&self) -> Result<Classifier> {
        let mut model = Classifier::new(self.config.clone())?;
        let by_name: HashMap<&str, &NamedTensor> = self.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        if by_name.len() != model.params().specs().len() {
            return Err(Error::parse(
                "checkpoint",
                format!(
                    "checkpoint has {} tensors, model expects {}",
                    by_name.len(),
                    model.params().specs().len()
                ),
            ));
        }
        let specs = model.params().specs().to_vec();
        for spec in specs {
            let t = by_name
                .get(spec.name.as_str())
                .ok_or_else(|| Error::parse("checkpoint", format!("missing tensor {}", spec.name)))?;
            if t.shape != spec.shape {
                return Err(Error::parse("checkpoint", format!("shape mismatch for {}", spec.name)));
            }
            spec.slot.of_mut(model.params_mut().values_mut()).copy_from_slice(&t.values);
            model.params_mut().set_trainable_by_name(&spec.name, t.trainable);
        }
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let cfg = toml::to_string(&self.config).expect("model config serializes");
        out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        out.extend_from_slice(cfg.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(match t.group {
                ParamGroup::Encoder => 0,
                ParamGroup::Head => 1,
            });
            out.push(u8::from(t.trainable));
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for d in &t.shape {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, origin };
        if r.take(4)? != MAGIC {
            return Err(Error::parse(origin, "not a forgeguard checkpoint"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::SchemaVersionMismatch {
                found: version.to_string(),
                expected: CHECKPOINT_VERSION.to_string(),
            });
        }
        let cfg_len = r.u32()? as usize;
        let cfg_text = std::str::from_utf8(r.take(cfg_len)?).map_err(|_| Error::parse(origin, "config is not UTF-8"))?;
        let config: ModelConfig = toml::from_str(cfg_text).map_err(|e| Error::parse(origin, e.to_string()))?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| Error::parse(origin, "tensor name is not UTF-8"))?;
            let group = match r.take(1)?[0] {
                0 => ParamGroup::Encoder,
                1 => ParamGroup::Head,
                g => return Err(Error::parse(origin, format!("bad group tag {g}"))),
            };
            let trainable = match r.take(1)?[0] {
                0 => false,
                1 => true,
                v => return Err(Error::parse(origin, format!("bad trainable flag {v}"))),
            };
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim.min(8));
            for _ in 0..ndim {
                shape.push(r.u64()? as usize);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |a, d| a.checked_mul(*d))
                .ok_or_else(|| Error::parse(origin, "tensor too large"))?;
            if numel.saturating_mul(8) > r.remaining() {
                return Err(Error::parse(origin, format!("truncated tensor {name}")));
            }
            let values = (0..numel).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            tensors.push(NamedTensor {
                name,
                shape,
                group,
                trainable,
                values,
            });
        }
        if r.remaining() != 0 {
            return Err(Error::parse(origin, "trailing bytes after last tensor"));
        }
        Ok(Checkpoint { config, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::CheckpointMissing {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::parse(self.origin, "unexpected end of checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Which model parameters a pretrained checkpoint supplied.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub policy: Option<PolicyKind>,
    pub source: Option<PathBuf>,
    pub matched: Vec<String>,
    /// Model parameters with no tensor in the checkpoint; left at their
    /// seeded initialization.
    pub unmatched: Vec<String>,
    /// Names present on both sides with different shapes; left initialized.
    pub shape_mismatch: Vec<String>,
    /// Checkpoint tensors that no model parameter took.
    pub unused: Vec<String>,
}

impl LoadReport {
    pub fn is_empty(&self) -> bool {
        self.matched.is_empty() && self.unmatched.is_empty() && self.shape_mismatch.is_empty() && self.unused.is_empty()
    }

    /// `#forgeguard-load-report v1 policy=<p> source=<path|->` then one
    /// `<status>\t<name>` line per parameter.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "#forgeguard-load-report v1 policy={} source={}\n",
            self.policy.map(|p| p.to_string()).unwrap_or_else(|| "-".into()),
            self.source.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "-".into())
        );
        for (status, names) in [
            ("matched", &self.matched),
            ("unmatched", &self.unmatched),
            ("shape_mismatch", &self.shape_mismatch),
            ("unused", &self.unused),
        ] {
            for n in names {
                out.push_str(&format!("{status}\t{n}\n"));
            }
        }
        out
    }
}

fn read_name_map(path: &Path) -> Result<HashMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (src, dst) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(format!("{}:{}", path.display(), n + 1), "expected <source>\\t<target>"))?;
        map.insert(src.to_string(), dst.to_string());
    }
    Ok(map)
}

/// Initializes `model` according to `policy` and applies the freeze flag.
///
/// Pretrained policies copy every checkpoint tensor whose (possibly
/// renamed) name and shape match a model parameter; everything else keeps
/// its seeded initialization.
pub fn apply_weight_policy(model: &mut Classifier, policy: &WeightPolicy) -> Result<LoadReport> {
    let report = match policy.kind {
        PolicyKind::Random => {
            let seed = model.config().init_seed;
            model.params_mut().initialize(seed);
            LoadReport::default()
        }
        PolicyKind::GenericPretrained | PolicyKind::FacePretrained => {
            let path = policy.checkpoint.as_ref().ok_or_else(|| Error::CheckpointMissing {
                path: PathBuf::new(),
                message: format!("policy {} needs a checkpoint path", policy.kind),
            })?;
            let ckpt = Checkpoint::load(path)?;
            let renames = match &policy.name_map {
                Some(p) => read_name_map(p)?,
                None => HashMap::new(),
            };
            let mut source: HashMap<String, &NamedTensor> = HashMap::new();
            for t in &ckpt.tensors {
                let name = renames.get(&t.name).cloned().unwrap_or_else(|| t.name.clone());
                source.insert(name, t);
            }
            let mut report = LoadReport {
                policy: Some(policy.kind),
                source: Some(path.clone()),
                ..LoadReport::default()
            };
            let mut used = std::collections::HashSet::new();
            let specs = model.params().specs().to_vec();
            for spec in specs {
                match source.get(&spec.name) {
                    Some(t) if t.shape == spec.shape => {
                        spec.slot.of_mut(model.params_mut().values_mut()).copy_from_slice(&t.values);
                        report.matched.push(spec.name.clone());
                        used.insert(t.name.clone());
                    }
                    Some(t) => {
                        report.shape_mismatch.push(spec.name.clone());
                        used.insert(t.name.clone());
                    }
                    None => report.unmatched.push(spec.name.clone()),
                }
            }
            report.unused = ckpt
                .tensors
                .iter()
                .filter(|t| !used.contains(&t.name))
                .map(|t| t.name.clone())
                .collect();
            if report.matched.is_empty() {
                return Err(Error::NoParameterOverlap(path.clone()));
            }
            report
        }
    };
    model.freeze_encoder(policy.freeze_encoder);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Variant;

    fn toy(v: Variant, w: usize) -> Classifier {
        Classifier::new(ModelConfig::toy(v, w)).unwrap()
    }

    #[test]
    fn bytes_round_trip_and_rebuild() {
        let mut m = toy(Variant::BiRecurrent, 3);
        m.freeze_encoder(true);
        let c = Checkpoint::from_classifier(&m);
        let back = Checkpoint::from_bytes(&c.to_bytes(), "mem").unwrap();
        assert_eq!(back, c);
        let rebuilt = back.to_classifier().unwrap();
        assert_eq!(rebuilt.params().values(), m.params().values());
        assert_eq!(rebuilt.count_parameters(), m.count_parameters());
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let m = toy(Variant::SingleFrame, 1);
        let bytes = Checkpoint::from_classifier(&m).to_bytes();
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3], "mem"), Err(Error::Parse { .. })));
        assert!(matches!(Checkpoint::from_bytes(b"garbage", "mem"), Err(Error::Parse { .. })));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(Checkpoint::from_bytes(&v2, "mem"), Err(Error::SchemaVersionMismatch { .. })));
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            Checkpoint::load(&dir.path().join("none.ckpt")),
            Err(Error::CheckpointMissing { .. })
        ));
    }

    #[test]
    fn random_policy_has_empty_report() {
        let mut m = toy(Variant::SingleFrame, 1);
        let before = m.params().values().to_vec();
        let r = apply_weight_policy(&mut m, &WeightPolicy::random()).unwrap();
        assert!(r.is_empty());
        assert_eq!(m.params().values(), &before[..]);
    }

    #[test]
    fn encoder_checkpoint_matches_encoder_names_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("face.ckpt");
        let mut donor = toy(Variant::SingleFrame, 1);
        donor.params_mut().values_mut().iter_mut().for_each(|v| *v += 0.25);
        Checkpoint::from_classifier(&donor).encoder_only().save(&path).unwrap();

        let mut m = toy(Variant::BiRecurrent, 7);
        let policy = WeightPolicy::pretrained(PolicyKind::FacePretrained, &path, true);
        let report = apply_weight_policy(&mut m, &policy).unwrap();
        let enc: Vec<String> = m
            .params()
            .specs()
            .iter()
            .filter(|s| s.group == ParamGroup::Encoder)
            .map(|s| s.name.clone())
            .collect();
        let head: Vec<String> = m
            .params()
            .specs()
            .iter()
            .filter(|s| s.group == ParamGroup::Head)
            .map(|s| s.name.clone())
            .collect();
        assert_eq!(report.matched, enc);
        assert_eq!(report.unmatched, head);
        assert!(report.unused.is_empty());
        assert_eq!(m.encoder_hash(), donor.encoder_hash());
        let (total, trainable) = m.count_parameters();
        assert!(trainable < total);
        assert!(report.to_text().starts_with("#forgeguard-load-report v1 policy=face_pretrained"));
    }

    #[test]
    fn conv3d_takes_the_leading_encoder_stages() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("face.ckpt");
        Checkpoint::from_classifier(&toy(Variant::SingleFrame, 1)).encoder_only().save(&path).unwrap();
        let mut m = toy(Variant::Conv3d, 7);
        let report = apply_weight_policy(&mut m, &WeightPolicy::pretrained(PolicyKind::GenericPretrained, &path, false)).unwrap();
        assert!(report.matched.iter().all(|n| n.starts_with("encoder.stem") || n.starts_with("encoder.stage1") || n.starts_with("encoder.stage2")));
        assert!(report.unused.iter().any(|n| n.starts_with("encoder.stage3")));
        assert!(report.unused.iter().any(|n| n.starts_with("encoder.embed")));
    }

    #[test]
    fn renaming_table_and_no_overlap() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = Checkpoint::from_classifier(&toy(Variant::SingleFrame, 1)).encoder_only();
        for t in &mut c.tensors {
            t.name = format!("backbone/{}", t.name);
        }
        let path = dir.path().join("renamed.ckpt");
        c.save(&path).unwrap();
        let mut m = toy(Variant::SingleFrame, 1);
        let mut policy = WeightPolicy::pretrained(PolicyKind::FacePretrained, &path, false);
        assert!(matches!(apply_weight_policy(&mut m, &policy), Err(Error::NoParameterOverlap(_))));
        let table: String = c
            .tensors
            .iter()
            .map(|t| format!("{}\t{}\n", t.name, t.name.trim_start_matches("backbone/")))
            .collect();
        let map = dir.path().join("names.tsv");
        fs::write(&map, format!("# converted names\n{table}")).unwrap();
        policy.name_map = Some(map);
        let report = apply_weight_policy(&mut m, &policy).unwrap();
        assert_eq!(report.matched.len(), c.tensors.len());
    }
}
