//! Accuracy reports, accuracy matrices and benchmark export.
//!
//! Accuracies are percentages. "Avg" is the mean of the two per-class
//! accuracies, not the sample-weighted accuracy. Rendered numbers use one
//! decimal, rounded half up from the exact count ratio.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;

use crate::dataset::{CompressionLevel, Label, ManipulationMethod, Split};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::frames::FrameStore;
use crate::models::{Classifier, Decision, Variant};
use crate::sampling::{build_frame_index, build_window_index, cap_per_video, DatasetManifest, IndexFilter, WindowSample};

/// Exact percentage `100 · num / den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Percent {
    num: u128,
    den: u128,
}

impl Percent {
    pub fn ratio(num: u64, den: u64) -> Option<Percent> {
        (den > 0).then_some(Percent { num: num.into(), den: den.into() })
    }

    /// A value given in tenths of a percent, e.g. 753 for 75.3.
    pub fn from_tenths(tenths: u64) -> Percent {
        Percent { num: tenths.into(), den: 1000 }
    }

    pub fn mean(a: Percent, b: Percent) -> Percent {
        Percent {
            num: a.num * b.den + b.num * a.den,
            den: 2 * a.den * b.den,
        }
    }

    pub fn value(self) -> f64 {
        100.0 * self.num as f64 / self.den as f64
    }

    /// Rounded half up to tenths of a percent.
    pub fn tenths(self) -> u128 {
        (2 * 1000 * self.num + self.den) / (2 * self.den)
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = self.tenths();
        f.pad(&format!("{}.{}", t / 10, t % 10))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub correct: u64,
    pub total: u64,
}

impl ClassCounts {
    pub fn percent(&self) -> Option<Percent> {
        Percent::ratio(self.correct, self.total)
    }

    pub fn accuracy(&self) -> Option<f64> {
        self.percent().map(Percent::value)
    }

    fn add(&mut self, correct: bool) {
        self.total += 1;
        self.correct += u64::from(correct);
    }
}

/// What a report was computed on.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Descriptor {
    pub methods: Vec<ManipulationMethod>,
    pub compressions: Vec<CompressionLevel>,
    pub split: Option<Split>,
    pub window: usize,
}

impl Descriptor {
    pub fn from_filter(filter: &IndexFilter, window: usize) -> Self {
        Descriptor {
            methods: filter.methods.iter().flatten().copied().collect(),
            compressions: filter.compressions.iter().flatten().copied().collect(),
            split: filter.split,
            window,
        }
    }

    /// Column header for the tampered class, e.g. "NT" or "DF+FS".
    pub fn tampered_header(&self) -> String {
        let names: Vec<&str> = self
            .methods
            .iter()
            .filter(|m| m.label() == Label::Tampered)
            .map(|m| m.abbreviation())
            .collect();
        if names.is_empty() {
            "Tampered".to_string()
        } else {
            names.join("+")
        }
    }
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: Vec<&str>| if v.is_empty() { "all".to_string() } else { v.join(",") };
        write!(
            f,
            "methods={} compressions={} split={} w={}",
            join(self.methods.iter().map(|m| m.as_str()).collect()),
            join(self.compressions.iter().map(|c| c.as_str()).collect()),
            self.split.map_or("all", |s| s.as_str()),
            self.window
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EvalReport {
    pub descriptor: Descriptor,
    pub tampered: ClassCounts,
    pub pristine: ClassCounts,
}

impl EvalReport {
    pub fn from_counts(tampered: ClassCounts, pristine: ClassCounts) -> Self {
        EvalReport { descriptor: Descriptor::default(), tampered, pristine }
    }

    pub fn from_decisions(descriptor: Descriptor, decisions: &[SampleDecision]) -> Self {
        let mut report = EvalReport { descriptor, ..Default::default() };
        for d in decisions {
            let correct = d.truth == d.predicted;
            match d.truth {
                Label::Tampered => report.tampered.add(correct),
                Label::Pristine => report.pristine.add(correct),
            }
        }
        report
    }

    pub fn tampered_acc(&self) -> Option<f64> {
        self.tampered.accuracy()
    }

    pub fn pristine_acc(&self) -> Option<f64> {
        self.pristine.accuracy()
    }

    /// Balanced average; only defined when both classes were evaluated.
    pub fn avg(&self) -> Option<f64> {
        Some((self.tampered_acc()? + self.pristine_acc()?) / 2.0)
    }

    pub fn avg_percent(&self) -> Option<Percent> {
        Some(Percent::mean(self.tampered.percent()?, self.pristine.percent()?))
    }

    /// Fraction correct over all samples, ignoring class.
    pub fn overall(&self) -> Option<f64> {
        let total = self.tampered.total + self.pristine.total;
        (total > 0).then(|| (self.tampered.correct + self.pristine.correct) as f64 / total as f64)
    }

    /// Balanced average as a fraction, or overall accuracy when one class
    /// is absent. Used for model selection.
    pub fn score(&self) -> f64 {
        self.avg().map(|a| a / 100.0).or(self.overall()).unwrap_or(0.0)
    }
}

/// One persisted decision, enough to recount any report.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDecision {
    pub video_id: String,
    pub center_index: usize,
    pub method: ManipulationMethod,
    pub compression: CompressionLevel,
    pub truth: Label,
    pub predicted: Label,
    pub probability: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    /// Sorted by (video_id, center_index).
    pub decisions: Vec<SampleDecision>,
}

/// Raw decisions for every sample, in input order.
pub fn decide_samples(
    model: &Classifier,
    samples: &[WindowSample],
    frames: &FrameStore,
    mode: ExecMode,
) -> Result<Vec<Decision>> {
    exec::map(mode, samples, |s| {
        let inputs = s
            .crop_paths
            .iter()
            .map(|p| frames.get(p))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
        model.decide(&refs)
    })
    .into_iter()
    .collect()
}

fn check_windows(model: &Classifier, samples: &[WindowSample]) -> Result<()> {
    let expect = match model.variant() {
        Variant::SingleFrame => return Ok(()),
        _ => model.window_size(),
    };
    match samples.iter().find(|s| s.window_size() != expect) {
        Some(s) => Err(Error::WindowSizeMismatch { expected: expect, found: s.window_size() }),
        None => Ok(()),
    }
}

/// Scores `model` on `samples`; single-frame models see the middle frame of
/// each sample, window models and majority votes the whole window.
pub fn evaluate(
    model: &Classifier,
    samples: &[WindowSample],
    frames: &FrameStore,
    mode: ExecMode,
    descriptor: Descriptor,
) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::EmptySelection(descriptor.to_string()));
    }
    check_windows(model, samples)?;
    let raw = decide_samples(model, samples, frames, mode)?;
    let mut decisions: Vec<SampleDecision> = samples
        .iter()
        .zip(raw)
        .map(|(s, d)| SampleDecision {
            video_id: s.video_id.clone(),
            center_index: s.center_index,
            method: s.method,
            compression: s.compression,
            truth: s.label,
            predicted: d.label,
            probability: d.probability,
        })
        .collect();
    decisions.sort_by(|a, b| (&a.video_id, a.center_index).cmp(&(&b.video_id, b.center_index)));
    let report = EvalReport::from_decisions(descriptor, &decisions);
    Ok(Evaluation { report, decisions })
}

/// [`evaluate`] for window models: every sample must have exactly the
/// model's window size.
pub fn evaluate_window(
    model: &Classifier,
    samples: &[WindowSample],
    frames: &FrameStore,
    mode: ExecMode,
    descriptor: Descriptor,
) -> Result<Evaluation> {
    if let Some(s) = samples.iter().find(|s| s.window_size() != model.window_size()) {
        return Err(Error::WindowSizeMismatch { expected: model.window_size(), found: s.window_size() });
    }
    evaluate(model, samples, frames, mode, descriptor)
}

const DECISIONS_HEADER: &str = "video_id\tcenter_index\tmethod\tcompression\ttruth\tpredicted\tprobability";

pub fn decisions_to_text(decisions: &[SampleDecision]) -> String {
    let mut out = String::from(DECISIONS_HEADER);
    out.push('\n');
    for d in decisions {
        let p = d.probability.map_or("-".to_string(), |p| format!("{p}"));
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{p}",
            d.video_id, d.center_index, d.method, d.compression, d.truth, d.predicted
        );
    }
    out
}

pub fn decisions_from_text(text: &str, origin: &str) -> Result<Vec<SampleDecision>> {
    let mut lines = text.lines();
    if lines.next() != Some(DECISIONS_HEADER) {
        return Err(Error::parse(origin, "missing decisions header"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            let bad = |what: &str| Error::parse(format!("{origin}:{}", i + 2), format!("{what} in {line:?}"));
            if f.len() != 7 {
                return Err(bad("expected 7 fields"));
            }
            Ok(SampleDecision {
                video_id: f[0].to_string(),
                center_index: f[1].parse().map_err(|_| bad("bad center index"))?,
                method: f[2].parse()?,
                compression: f[3].parse()?,
                truth: f[4].parse()?,
                predicted: f[5].parse()?,
                probability: match f[6] {
                    "-" => None,
                    p => Some(p.parse().map_err(|_| bad("bad probability"))?),
                },
            })
        })
        .collect()
}

/// One rendered table row; `None` cells print as `n/a`.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub name: String,
    pub cells: Vec<Option<Percent>>,
}

const MISSING: &str = "n/a";

/// Plain-text table: a left-aligned name column, then right-aligned
/// numeric columns separated by two spaces.
pub fn render_table(corner: &str, headers: &[String], rows: &[TableRow]) -> String {
    let name_w = rows.iter().map(|r| r.name.chars().count()).chain([corner.chars().count()]).max().unwrap_or(0);
    let widths: Vec<usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| {
            rows.iter()
                .map(|r| r.cells.get(i).copied().flatten().map_or(MISSING.len(), |p| p.to_string().len()))
                .chain([h.chars().count(), 4])
                .max()
                .unwrap_or(4)
        })
        .collect();
    let mut out = String::new();
    let _ = write!(out, "{corner:<name_w$}");
    for (h, w) in headers.iter().zip(&widths) {
        let _ = write!(out, "  {h:>w$}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{:<name_w$}", r.name);
        for (i, w) in widths.iter().enumerate() {
            match r.cells.get(i).copied().flatten() {
                Some(p) => {
                    let _ = write!(out, "  {p:>w$}");
                }
                None => {
                    let _ = write!(out, "  {MISSING:>w$}");
                }
            }
        }
        out.push('\n');
    }
    out
}

fn report_row(name: &str, r: &EvalReport) -> TableRow {
    TableRow {
        name: name.to_string(),
        cells: vec![r.tampered.percent(), r.pristine.percent(), r.avg_percent()],
    }
}

/// Per-model accuracy table with columns `<tampered>`, `Orig.`, `Avg`.
pub fn render_report_table(rows: &[(String, EvalReport)]) -> String {
    let tampered = rows
        .first()
        .map_or_else(|| "Tampered".to_string(), |(_, r)| r.descriptor.tampered_header());
    let headers = vec![tampered, ManipulationMethod::Original.abbreviation().to_string(), "Avg".to_string()];
    let table_rows: Vec<TableRow> = rows.iter().map(|(n, r)| report_row(n, r)).collect();
    render_table("Model", &headers, &table_rows)
}

const SIDECAR_HEADER: &str = "row\tcolumn\taccuracy\tn";

fn sidecar_line(out: &mut String, row: &str, column: &str, acc: Option<f64>, n: u64) {
    let acc = acc.map_or(MISSING.to_string(), |a| format!("{a:.4}"));
    let _ = writeln!(out, "{row}\t{column}\t{acc}\t{n}");
}

/// Machine-readable companion of [`render_report_table`].
pub fn report_sidecar(rows: &[(String, EvalReport)]) -> String {
    let mut out = format!("{SIDECAR_HEADER}\n");
    for (name, r) in rows {
        let tampered = r.descriptor.tampered_header();
        sidecar_line(&mut out, name, &tampered, r.tampered_acc(), r.tampered.total);
        sidecar_line(&mut out, name, "Orig.", r.pristine_acc(), r.pristine.total);
        sidecar_line(&mut out, name, "Avg", r.avg(), r.tampered.total + r.pristine.total);
    }
    out
}

/// Accuracy per (data category, compression level). Cells with no samples
/// stay `None` and render as `n/a`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccuracyMatrix {
    pub rows: Vec<ManipulationMethod>,
    pub columns: Vec<CompressionLevel>,
    pub cells: Vec<Vec<Option<ClassCounts>>>,
}

impl AccuracyMatrix {
    pub fn new(rows: Vec<ManipulationMethod>, columns: Vec<CompressionLevel>) -> Self {
        let cells = vec![vec![None; columns.len()]; rows.len()];
        AccuracyMatrix { rows, columns, cells }
    }

    pub fn cell(&self, row: ManipulationMethod, column: CompressionLevel) -> Option<ClassCounts> {
        let r = self.rows.iter().position(|m| *m == row)?;
        let c = self.columns.iter().position(|l| *l == column)?;
        self.cells[r][c]
    }

    pub fn render(&self) -> String {
        let headers: Vec<String> = self.columns.iter().map(|c| c.as_str().to_string()).collect();
        let rows: Vec<TableRow> = self
            .rows
            .iter()
            .zip(&self.cells)
            .map(|(m, cells)| TableRow {
                name: m.display_name().to_string(),
                cells: cells.iter().map(|c| c.and_then(|c| c.percent())).collect(),
            })
            .collect();
        render_table("Data", &headers, &rows)
    }

    pub fn sidecar(&self) -> String {
        let mut out = format!("{SIDECAR_HEADER}\n");
        for (m, cells) in self.rows.iter().zip(&self.cells) {
            for (c, cell) in self.columns.iter().zip(cells) {
                let cell = cell.unwrap_or_default();
                sidecar_line(&mut out, m.display_name(), c.as_str(), cell.accuracy(), cell.total);
            }
        }
        out
    }
}

/// Evaluation grid settings for [`evaluate_matrix`].
#[derive(Debug, Clone)]
pub struct MatrixSpec {
    pub rows: Vec<ManipulationMethod>,
    pub columns: Vec<CompressionLevel>,
    pub split: Option<Split>,
    pub window: usize,
    pub per_video_cap: Option<usize>,
}

/// Plain accuracy of `model` on every (method, compression) cell.
pub fn evaluate_matrix(
    model: &Classifier,
    sources: &[DatasetManifest],
    spec: &MatrixSpec,
    frames: &FrameStore,
    mode: ExecMode,
) -> Result<AccuracyMatrix> {
    let mut matrix = AccuracyMatrix::new(spec.rows.clone(), spec.columns.clone());
    for (ri, &method) in spec.rows.iter().enumerate() {
        for (ci, &level) in spec.columns.iter().enumerate() {
            let mut filter = IndexFilter::all().with_methods([method]).with_compressions([level]);
            filter.split = spec.split;
            let samples: Vec<WindowSample> = if spec.window == 1 {
                match build_frame_index(sources, &filter) {
                    Ok(s) => s.into_iter().map(Into::into).collect(),
                    Err(Error::EmptySelection(_)) => continue,
                    Err(e) => return Err(e),
                }
            } else {
                match build_window_index(sources, spec.window, 1, &filter) {
                    Ok(s) => s,
                    Err(Error::EmptySelection(_)) => continue,
                    Err(e) => return Err(e),
                }
            };
            let samples = match spec.per_video_cap {
                Some(cap) => cap_per_video(samples, cap),
                None => samples,
            };
            if samples.is_empty() {
                continue;
            }
            let eval = evaluate(model, &samples, frames, mode, Descriptor::from_filter(&filter, spec.window))?;
            let r = eval.report;
            matrix.cells[ri][ci] = Some(ClassCounts {
                correct: r.tampered.correct + r.pristine.correct,
                total: r.tampered.total + r.pristine.total,
            });
        }
    }
    Ok(matrix)
}

/// `frame_id,label` CSV sorted by frame id; `fake` iff p > 0.5.
pub fn benchmark_csv(predictions: &BTreeMap<String, f64>) -> String {
    let mut out = String::from("frame_id,label\n");
    for (id, &p) in predictions {
        let label = if Label::from_probability(p) == Label::Tampered { "fake" } else { "real" };
        let _ = writeln!(out, "{id},{label}");
    }
    out
}

pub fn export_benchmark(predictions: &BTreeMap<String, f64>, path: &Path) -> Result<()> {
    std::fs::write(path, benchmark_csv(predictions)).map_err(|e| Error::io(path, e))
}
