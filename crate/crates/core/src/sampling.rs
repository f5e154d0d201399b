//! Frame and window indices over one or more manifests.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::dataset::{
    read_manifest, CompressionLevel, Label, Manifest, ManipulationMethod, Split, VideoEntry, MANIFEST_FILE_NAME,
};
use crate::error::{Error, Result};
use crate::models::check_window;

/// A manifest together with the directory its crop paths are relative to.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl DatasetManifest {
    /// Accepts either a manifest file or a directory containing one.
    pub fn open(path: &Path) -> Result<Self> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE_NAME) } else { path.to_path_buf() };
        let manifest = read_manifest(&file)?;
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(DatasetManifest { root, manifest })
    }

    /// Every manifest below `dir`, in path order.
    pub fn discover(dir: &Path) -> Result<Vec<Self>> {
        let mut files = Vec::new();
        for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
            let entry = entry.map_err(|e| Error::Parse {
                origin: dir.display().to_string(),
                message: e.to_string(),
            })?;
            if entry.file_type().is_file() && entry.file_name() == MANIFEST_FILE_NAME {
                files.push(entry.into_path());
            }
        }
        files.iter().map(|f| Self::open(f)).collect()
    }

    fn crop_path(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }
}

/// `None` fields accept everything.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndexFilter {
    pub methods: Option<BTreeSet<ManipulationMethod>>,
    pub compressions: Option<BTreeSet<CompressionLevel>>,
    pub split: Option<Split>,
}

impl IndexFilter {
    pub fn all() -> Self {
        IndexFilter::default()
    }

    pub fn split(split: Split) -> Self {
        IndexFilter { split: Some(split), ..Default::default() }
    }

    pub fn with_methods(mut self, methods: impl IntoIterator<Item = ManipulationMethod>) -> Self {
        self.methods = Some(methods.into_iter().collect());
        self
    }

    pub fn with_compressions(mut self, levels: impl IntoIterator<Item = CompressionLevel>) -> Self {
        self.compressions = Some(levels.into_iter().collect());
        self
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = Some(split);
        self
    }

    pub fn matches(&self, video: &VideoEntry) -> bool {
        let v = &video.video;
        self.methods.as_ref().is_none_or(|m| m.contains(&v.method))
            && self.compressions.as_ref().is_none_or(|c| c.contains(&v.compression))
            && self.split.is_none_or(|s| s == v.split)
    }

    fn describe(&self) -> String {
        let mut s = String::new();
        if let Some(m) = &self.methods {
            let names: Vec<&str> = m.iter().map(|m| m.as_str()).collect();
            let _ = write!(s, "methods={} ", names.join(","));
        }
        if let Some(c) = &self.compressions {
            let names: Vec<&str> = c.iter().map(|c| c.as_str()).collect();
            let _ = write!(s, "compressions={} ", names.join(","));
        }
        if let Some(split) = self.split {
            let _ = write!(s, "split={}", split.as_str());
        }
        if s.is_empty() {
            s.push_str("<all>");
        }
        s.trim_end().to_string()
    }
}

pub trait Labeled {
    fn label(&self) -> Label;
    fn video_id(&self) -> &str;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSample {
    pub crop_path: PathBuf,
    pub label: Label,
    pub method: ManipulationMethod,
    pub compression: CompressionLevel,
    pub video_id: String,
    pub frame_index: usize,
}

/// `2t+1` consecutive crops of one video; the decision belongs to the
/// middle one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSample {
    pub crop_paths: Vec<PathBuf>,
    pub center_index: usize,
    pub label: Label,
    pub method: ManipulationMethod,
    pub compression: CompressionLevel,
    pub video_id: String,
}

impl WindowSample {
    pub fn window_size(&self) -> usize {
        self.crop_paths.len()
    }

    pub fn middle_path(&self) -> &Path {
        &self.crop_paths[self.crop_paths.len() / 2]
    }
}

impl From<FrameSample> for WindowSample {
    fn from(s: FrameSample) -> Self {
        WindowSample {
            crop_paths: vec![s.crop_path],
            center_index: s.frame_index,
            label: s.label,
            method: s.method,
            compression: s.compression,
            video_id: s.video_id,
        }
    }
}

impl Labeled for FrameSample {
    fn label(&self) -> Label {
        self.label
    }
    fn video_id(&self) -> &str {
        &self.video_id
    }
}

impl Labeled for WindowSample {
    fn label(&self) -> Label {
        self.label
    }
    fn video_id(&self) -> &str {
        &self.video_id
    }
}

fn selected<'a>(
    sources: &'a [DatasetManifest],
    filter: &'a IndexFilter,
) -> impl Iterator<Item = (&'a DatasetManifest, &'a VideoEntry)> + 'a {
    sources
        .iter()
        .flat_map(|src| src.manifest.videos.iter().map(move |v| (src, v)))
        .filter(move |(_, v)| filter.matches(v))
}

/// One sample per detected face in the selected videos.
pub fn build_frame_index(sources: &[DatasetManifest], filter: &IndexFilter) -> Result<Vec<FrameSample>> {
    let mut out = Vec::new();
    for (src, entry) in selected(sources, filter) {
        let v = &entry.video;
        for f in &entry.frames {
            if let Some(face) = &f.face {
                out.push(FrameSample {
                    crop_path: src.crop_path(&face.crop_path),
                    label: v.label(),
                    method: v.method,
                    compression: v.compression,
                    video_id: v.video_id.clone(),
                    frame_index: f.frame_index,
                });
            }
        }
    }
    if out.is_empty() {
        return Err(Error::EmptySelection(filter.describe()));
    }
    Ok(out)
}

/// Start offsets (into `entry.frames`) of every window of `w` consecutive
/// detected frames, stepping `stride` within each unbroken run.
fn window_starts(entry: &VideoEntry, w: usize, stride: usize) -> Vec<usize> {
    let frames = &entry.frames;
    let mut starts = Vec::new();
    let mut run_start = 0;
    for i in 0..=frames.len() {
        let continues = i < frames.len()
            && frames[i].face_found()
            && (i == run_start || frames[i].frame_index == frames[i - 1].frame_index + 1);
        if continues {
            continue;
        }
        // run is frames[run_start..i]
        if i - run_start >= w {
            starts.extend((run_start..=i - w).step_by(stride));
        }
        run_start = if i < frames.len() && frames[i].face_found() { i } else { i + 1 };
    }
    starts
}

fn window_at(src: &DatasetManifest, entry: &VideoEntry, start: usize, w: usize) -> WindowSample {
    let v = &entry.video;
    let frames = &entry.frames[start..start + w];
    WindowSample {
        crop_paths: frames
            .iter()
            .map(|f| src.crop_path(&f.face.as_ref().expect("detected").crop_path))
            .collect(),
        center_index: frames[w / 2].frame_index,
        label: v.label(),
        method: v.method,
        compression: v.compression,
        video_id: v.video_id.clone(),
    }
}

/// Every window of `w` consecutive detected frames. Missing detections
/// break windows; windows never span videos.
pub fn build_window_index(
    sources: &[DatasetManifest],
    w: usize,
    stride: usize,
    filter: &IndexFilter,
) -> Result<Vec<WindowSample>> {
    check_window(w)?;
    if stride == 0 {
        return Err(Error::Config("window stride must be positive".into()));
    }
    let mut any = false;
    let mut out = Vec::new();
    for (src, entry) in selected(sources, filter) {
        any = true;
        for start in window_starts(entry, w, stride) {
            out.push(window_at(src, entry, start, w));
        }
    }
    if !any {
        return Err(Error::EmptySelection(filter.describe()));
    }
    Ok(out)
}

const CACHE_MAGIC: &str = "#forgeguard-windows";

fn manifest_digest(manifest: &Manifest) -> Result<String> {
    let text = manifest.to_text()?;
    Ok(Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect())
}

fn cache_path(src: &DatasetManifest, w: usize, stride: usize) -> PathBuf {
    src.root.join(format!("windows-w{w}-s{stride}.tsv"))
}

/// Like [`build_window_index`] but keeps `<video_id>\t<start_frame_index>`
/// lists next to each manifest. A cache whose recorded manifest hash no
/// longer matches is rebuilt.
pub fn build_window_index_cached(
    sources: &[DatasetManifest],
    w: usize,
    stride: usize,
    filter: &IndexFilter,
) -> Result<Vec<WindowSample>> {
    check_window(w)?;
    if stride == 0 {
        return Err(Error::Config("window stride must be positive".into()));
    }
    let mut any = false;
    let mut out = Vec::new();
    for src in sources {
        let starts = cached_starts(src, w, stride)?;
        for entry in &src.manifest.videos {
            if !filter.matches(entry) {
                continue;
            }
            any = true;
            let Some(list) = starts.get(entry.video.video_id.as_str()) else { continue };
            for &first in list {
                let pos = entry
                    .frames
                    .iter()
                    .position(|f| f.frame_index == first)
                    .ok_or_else(|| Error::parse("window cache", format!("no frame {first} in {}", entry.video.video_id)))?;
                out.push(window_at(src, entry, pos, w));
            }
        }
    }
    if !any {
        return Err(Error::EmptySelection(filter.describe()));
    }
    Ok(out)
}

fn cached_starts(src: &DatasetManifest, w: usize, stride: usize) -> Result<BTreeMap<String, Vec<usize>>> {
    let digest = manifest_digest(&src.manifest)?;
    let header = format!("{CACHE_MAGIC} v1 w={w} stride={stride} manifest={digest}");
    let path = cache_path(src, w, stride);
    if let Ok(text) = std::fs::read_to_string(&path) {
        let mut lines = text.lines();
        if lines.next() == Some(header.as_str()) {
            let mut map: BTreeMap<String, Vec<usize>> = BTreeMap::new();
            for line in lines {
                let (id, idx) = line
                    .split_once('\t')
                    .ok_or_else(|| Error::parse(path.display().to_string(), format!("bad line {line:?}")))?;
                let idx = idx
                    .parse()
                    .map_err(|_| Error::parse(path.display().to_string(), format!("bad index {idx:?}")))?;
                map.entry(id.to_string()).or_default().push(idx);
            }
            return Ok(map);
        }
    }
    let mut map: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut text = header;
    text.push('\n');
    for entry in &src.manifest.videos {
        for start in window_starts(entry, w, stride) {
            let first = entry.frames[start].frame_index;
            let _ = writeln!(text, "{}\t{first}", entry.video.video_id);
            map.entry(entry.video.video_id.clone()).or_default().push(first);
        }
    }
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(map)
}

/// Down-samples the majority class to the size of the minority class.
/// Survivors keep their original relative order.
pub fn balance_classes<T: Labeled>(samples: Vec<T>, seed: u64) -> Result<Vec<T>> {
    let tampered = samples.iter().filter(|s| s.label() == Label::Tampered).count();
    let pristine = samples.len() - tampered;
    if tampered == 0 || pristine == 0 {
        let only = if tampered == 0 { "pristine" } else { "tampered" };
        return Err(Error::SingleClass(format!("{} samples, all {only}", samples.len())));
    }
    if tampered == pristine {
        return Ok(samples);
    }
    let (major, keep) = if tampered > pristine {
        (Label::Tampered, pristine)
    } else {
        (Label::Pristine, tampered)
    };
    let major_count = tampered.max(pristine);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = rand::seq::index::sample(&mut rng, major_count, keep).into_vec();
    chosen.sort_unstable();
    let mut chosen = chosen.into_iter().peekable();
    let mut rank = 0;
    let mut out = Vec::with_capacity(2 * keep);
    for s in samples {
        if s.label() != major {
            out.push(s);
            continue;
        }
        if chosen.peek() == Some(&rank) {
            chosen.next();
            out.push(s);
        }
        rank += 1;
    }
    Ok(out)
}

/// Keeps at most `cap` evenly spaced samples per video, in order.
pub fn cap_per_video<T: Labeled>(samples: Vec<T>, cap: usize) -> Vec<T> {
    let mut per_video: BTreeMap<String, usize> = BTreeMap::new();
    for s in &samples {
        *per_video.entry(s.video_id().to_string()).or_default() += 1;
    }
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    samples
        .into_iter()
        .filter(|s| {
            let n = per_video[s.video_id()];
            let i = seen.entry(s.video_id().to_string()).or_default();
            let pos = *i;
            *i += 1;
            if n <= cap {
                return true;
            }
            // keep position p when it is the first to reach slot k·n/cap
            (0..cap).any(|k| k * n / cap == pos)
        })
        .collect()
}
