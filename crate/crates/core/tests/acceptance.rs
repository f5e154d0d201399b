//! Acceptance suite: twelve criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the summary is always printed.
//! Exits non-zero when any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use forgeguard::dataset::{
    read_manifest, write_manifest, CropBox, FaceCrop, FrameRecord, Manifest, ManifestHeader, VideoEntry, VideoRecord,
};
use forgeguard::evaluation::{
    benchmark_csv, decisions_to_text, evaluate, evaluate_window, export_benchmark, render_report_table,
    render_table, report_sidecar, AccuracyMatrix, ClassCounts, Descriptor, EvalReport, Percent, TableRow,
};
use forgeguard::frames::FrameStore;
use forgeguard::models::{majority_vote, Classifier, EncoderMode, ModelConfig, Variant, EMBEDDING_DIM};
use forgeguard::nn::bce_with_logits;
use forgeguard::sampling::{
    build_frame_index, build_window_index, cap_per_video, DatasetManifest, IndexFilter, WindowSample,
};
use forgeguard::synthgen::{generate, separability_certificate, SynthConfig, TamperMode};
use forgeguard::training::{
    adam_step, compute_loss, preload_samples, train, AdamState, Precision, RunDir, TrainConfig, HISTORY_FILE,
};
use forgeguard::{CompressionLevel, ExecMode, Label, ManipulationMethod, Split};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 1 -------------------------------------------------------------------------

fn report_with(tampered: (u64, u64), pristine: (u64, u64), methods: Vec<ManipulationMethod>) -> EvalReport {
    let mut r = EvalReport::from_counts(
        ClassCounts { correct: tampered.0, total: tampered.1 },
        ClassCounts { correct: pristine.0, total: pristine.1 },
    );
    r.descriptor.methods = methods;
    r
}

fn formatting_fixtures() -> Outcome {
    let nt = vec![ManipulationMethod::NeuralTextures, ManipulationMethod::Original];
    let t1 = render_report_table(&[("InceptionResNet pretrained".into(), report_with((753, 1000), (742, 1000), nt.clone()))]);
    let g1 = "Model                         NT  Orig.   Avg\n\
              InceptionResNet pretrained  75.3   74.2  74.8\n";
    let t2 = render_report_table(&[("Majority Vote baseline".into(), report_with((766, 1000), (752, 1000), nt))]);
    let g2 = "Model                     NT  Orig.   Avg\n\
              Majority Vote baseline  76.6   75.2  75.9\n";
    let mut m = AccuracyMatrix::new(vec![ManipulationMethod::Original], CompressionLevel::ALL.to_vec());
    m.cells[0] = vec![
        Some(ClassCounts { correct: 616, total: 1000 }),
        Some(ClassCounts { correct: 796, total: 1000 }),
        Some(ClassCounts { correct: 742, total: 1000 }),
    ];
    let t3 = m.render();
    let g3 = "Data       raw   c23   c40\n\
              Pristine  61.6  79.6  74.2\n";
    let stable = t1 == render_report_table(&[("InceptionResNet pretrained".into(), report_with((753, 1000), (742, 1000), vec![ManipulationMethod::NeuralTextures, ManipulationMethod::Original]))]);
    let generic = render_table(
        "Model",
        &["NT".into(), "Orig.".into(), "Avg".into()],
        &[TableRow {
            name: "x".into(),
            cells: vec![Some(Percent::from_tenths(753)), None, Some(Percent::from_tenths(748))],
        }],
    );
    check(
        t1 == g1 && t2 == g2 && t3 == g3 && stable && generic.contains(" n/a "),
        format!("report, window and matrix fixture rows render byte-exact\n{t1}{t2}{t3}"),
    )
}

// 2 -------------------------------------------------------------------------

fn majority_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut cases = 0;
    for w in [1usize, 3, 5, 7, 9] {
        for pattern in 0u32..(1 << w) {
            let votes: Vec<Label> = (0..w)
                .map(|i| if pattern >> i & 1 == 1 { Label::Tampered } else { Label::Pristine })
                .collect();
            let ones = pattern.count_ones() as usize;
            let expected = if ones > w - ones { Label::Tampered } else { Label::Pristine };
            let got = majority_vote(&votes).map_err(|e| e.to_string())?;
            if got != expected {
                return Err(format!("w={w} pattern={pattern:b}: got {got:?}, oracle {expected:?}"));
            }
            cases += 1;
        }
    }
    let dt = t0.elapsed();
    check(dt < Duration::from_secs(1), format!("{cases} patterns agree in {dt:?}"))
}

// 3 -------------------------------------------------------------------------

fn balanced_average() -> Outcome {
    let mut runner = TestRunner::new(PropConfig { cases: 1000, failure_persistence: None, ..PropConfig::default() });
    let strategy = (1u64..5000, 1u64..5000)
        .prop_flat_map(|(tt, pt)| (0..=tt, Just(tt), 0..=pt, Just(pt)));
    runner
        .run(&strategy, |(tc, tt, pc, pt)| {
            let r = report_with((tc, tt), (pc, pt), vec![]);
            let t = r.tampered_acc().unwrap();
            let p = r.pristine_acc().unwrap();
            prop_assert_eq!(r.avg().unwrap(), (t + p) / 2.0);
            let exact = r.avg_percent().unwrap();
            // a/b + c/d over 2, compared as exact rationals
            let lhs = (tc as u128 * pt as u128 + pc as u128 * tt as u128) * 100;
            let rhs = 2 * tt as u128 * pt as u128;
            prop_assert_eq!(exact, Percent::mean(Percent::ratio(tc, tt).unwrap(), Percent::ratio(pc, pt).unwrap()));
            prop_assert!((exact.value() - lhs as f64 / rhs as f64).abs() < 1e-9);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let fixture = Percent::mean(Percent::from_tenths(580), Percent::from_tenths(748));
    check(fixture.to_string() == "66.4", format!("1000 cases hold; (58.0 + 74.8)/2 renders {fixture}"))
}

// 4 -------------------------------------------------------------------------

fn random_manifest(rng: &mut ChaCha8Rng, case: usize) -> Manifest {
    let mut m = Manifest::new(ManifestHeader::new("oracle", 0.3));
    for v in 0..rng.random_range(1..=3) {
        let id = format!("{case:03}_{v}");
        let n = rng.random_range(0..=50);
        let gap_rate = rng.random_range(0.0..0.4);
        let mut frames = Vec::new();
        for i in 0..n {
            if rng.random_bool(0.05) {
                continue; // frame record absent altogether
            }
            if rng.random_bool(gap_rate) {
                frames.push(FrameRecord::missing(id.clone(), i));
            } else {
                frames.push(FrameRecord {
                    video_id: id.clone(),
                    frame_index: i,
                    face: Some(FaceCrop {
                        crop_box: CropBox { x: 0, y: 0, w: 8, h: 8 },
                        crop_path: PathBuf::from(format!("{id}/{i:06}.png")),
                    }),
                });
            }
        }
        let method = if v % 2 == 0 { ManipulationMethod::Original } else { ManipulationMethod::FaceSwap };
        m.videos.push(VideoEntry {
            video: VideoRecord {
                video_id: id.clone(),
                method,
                compression: CompressionLevel::C23,
                split: Split::Train,
                source_path: PathBuf::from(format!("v/{id}")),
                frame_count: n,
            },
            frames,
        });
    }
    m
}

type WindowKey = (String, usize, Vec<PathBuf>, Label);

fn brute_force_windows(src: &DatasetManifest, w: usize) -> BTreeSet<WindowKey> {
    let t = w / 2;
    let mut out = BTreeSet::new();
    for e in &src.manifest.videos {
        let found: BTreeMap<usize, &Path> = e
            .frames
            .iter()
            .filter_map(|f| f.face.as_ref().map(|c| (f.frame_index, c.crop_path.as_path())))
            .collect();
        let max = e.frames.iter().map(|f| f.frame_index).max();
        for c in t..=max.unwrap_or(0) {
            let paths: Option<Vec<PathBuf>> = (c - t..=c + t).map(|i| found.get(&i).map(|p| src.root.join(p))).collect();
            if let Some(paths) = paths {
                out.insert((e.video.video_id.clone(), c, paths, e.video.label()));
            }
        }
    }
    out
}

fn window_index_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut windows = 0;
    for case in 0..500 {
        let src = DatasetManifest { root: PathBuf::from("/data/root"), manifest: random_manifest(&mut rng, case) };
        let w = [1, 3, 5, 7][case % 4];
        let got: Vec<WindowSample> = build_window_index(std::slice::from_ref(&src), w, 1, &IndexFilter::all())
            .map_err(|e| format!("case {case}: {e}"))?;
        let got_set: BTreeSet<WindowKey> = got
            .iter()
            .map(|s| (s.video_id.clone(), s.center_index, s.crop_paths.clone(), s.label))
            .collect();
        if got_set.len() != got.len() {
            return Err(format!("case {case}: duplicate windows"));
        }
        let expected = brute_force_windows(&src, w);
        if got_set != expected {
            return Err(format!("case {case} (w={w}): {} windows, oracle {}", got_set.len(), expected.len()));
        }
        windows += expected.len();
    }
    Ok(format!("500 manifests, {windows} windows, exact set equality"))
}

// 5 -------------------------------------------------------------------------

fn random_frames(model: &Classifier, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let len = model.encoder().input_len();
    (0..n).map(|_| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn refs(frames: &[Vec<f64>]) -> Vec<&[f64]> {
    frames.iter().map(Vec::as_slice).collect()
}

fn gradient_check() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut lines = Vec::new();
    let mut ok = true;
    for (variant, w) in [(Variant::SingleFrame, 1), (Variant::Conv3d, 7), (Variant::BiRecurrent, 7)] {
        let model = Classifier::new(ModelConfig::toy(variant, w)).map_err(|e| e.to_string())?;
        let frames = random_frames(&model, w, &mut rng);
        let fr = refs(&frames);
        let label = if rng.random_bool(0.5) { Label::Tampered } else { Label::Pristine };
        let params = model.params().values().to_vec();
        let mut grads = vec![0.0; params.len()];
        model.loss_and_grad(&fr, label, &mut grads).map_err(|e| e.to_string())?;
        let loss = |p: &[f64]| bce_with_logits(model.logit_with(p, &fr).unwrap(), label.target()).0;
        let n = 256;
        let h = 1e-5;
        let mut good = 0;
        for i in sample(&mut rng, params.len(), n) {
            let (mut a, mut b) = (params.clone(), params.clone());
            a[i] += h;
            b[i] -= h;
            let fd = (loss(&a) - loss(&b)) / (2.0 * h);
            let rel = (fd - grads[i]).abs() / fd.abs().max(grads[i].abs()).max(1e-8);
            if rel < 1e-3 {
                good += 1;
            }
        }
        let frac = good as f64 / n as f64;
        ok &= frac >= 0.95;
        lines.push(format!("{variant}: {good}/{n}"));
    }
    let dt = t0.elapsed();
    check(ok && dt < Duration::from_secs(300), format!("{} within 1e-3 in {dt:?}", lines.join(", ")))
}

// 6 -------------------------------------------------------------------------

fn adam_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = TrainConfig {
        learning_rate: rng.random_range(1e-4..1e-1),
        adam_beta1: rng.random_range(0.5..0.95),
        adam_beta2: rng.random_range(0.9..0.9999),
        epsilon: 1e-8,
        precision: Precision::High,
        ..TrainConfig::default()
    };
    let mut p = [rng.random_range(-1.0..1.0)];
    let mut state = AdamState::new(1);
    let (mut m, mut v, mut q) = (0.0f64, 0.0f64, p[0]);
    let mut worst = 0.0f64;
    for t in 1..=1000 {
        let g: f64 = rng.random_range(-5.0..5.0);
        adam_step(&mut p, &[g], &mut state, &cfg).map_err(|e| e.to_string())?;
        m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
        v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g * g;
        let m_hat = m / (1.0 - cfg.adam_beta1.powi(t));
        let v_hat = v / (1.0 - cfg.adam_beta2.powi(t));
        q -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        worst = worst.max((p[0] - q).abs() / q.abs().max(f64::MIN_POSITIVE));
    }
    let ln2 = compute_loss(&[0.0], &[Label::Tampered]).map_err(|e| e.to_string())?;
    let sat_t = compute_loss(&[40.0], &[Label::Tampered]).map_err(|e| e.to_string())?;
    let sat_p = compute_loss(&[-40.0], &[Label::Pristine]).map_err(|e| e.to_string())?;
    check(
        worst <= 1e-12 && (ln2 - std::f64::consts::LN_2).abs() < 1e-15 && sat_t < 1e-9 && sat_p < 1e-9,
        format!("1000 steps, worst relative error {worst:.2e}; loss(0) = {ln2}, saturated {sat_t:.1e}/{sat_p:.1e}"),
    )
}

// 7-10 ----------------------------------------------------------------------

fn frame_samples(srcs: &[DatasetManifest], split: Split) -> Vec<WindowSample> {
    build_frame_index(srcs, &IndexFilter::split(split)).unwrap().into_iter().map(Into::into).collect()
}

fn open_all(paths: &[PathBuf]) -> Vec<DatasetManifest> {
    paths.iter().map(|p| DatasetManifest::open(p).unwrap()).collect()
}

/// Everything a run leaves behind that must be reproducible.
#[derive(PartialEq)]
struct Artifacts {
    files: BTreeMap<String, Vec<u8>>,
}

impl Artifacts {
    fn new() -> Self {
        Artifacts { files: BTreeMap::new() }
    }

    fn add_run(&mut self, tag: &str, run: &RunDir) {
        for f in [HISTORY_FILE, "best.ckpt"] {
            self.files.insert(format!("{tag}/{f}"), std::fs::read(run.file(f)).unwrap());
        }
    }

    fn add_eval(&mut self, tag: &str, e: &forgeguard::evaluation::Evaluation) {
        let rows = [(tag.to_string(), e.report.clone())];
        let text = render_report_table(&rows) + &report_sidecar(&rows) + &decisions_to_text(&e.decisions);
        self.files.insert(format!("{tag}/report"), text.into_bytes());
    }
}

fn spatial_config() -> SynthConfig {
    SynthConfig { n_videos: 200, frames_per_video: 20, seed: 7, ..SynthConfig::default() }
}

fn spatial_train_config() -> TrainConfig {
    TrainConfig { learning_rate: 1e-3, max_epochs: 5, early_stop_patience: 2, seed: 1, ..TrainConfig::default() }
}

struct SpatialRun {
    outcome: Outcome,
    artifacts: Artifacts,
}

fn spatial_run(work: &Path, mode: ExecMode) -> SpatialRun {
    let t0 = Instant::now();
    let mut artifacts = Artifacts::new();
    let cfg = spatial_config();
    let cert = separability_certificate(&cfg, CompressionLevel::Raw, mode).unwrap();
    if cert.accuracy < 0.99 {
        return SpatialRun {
            outcome: Err(format!("separability certificate {:.4} < 0.99", cert.accuracy)),
            artifacts,
        };
    }
    let ds = generate(&cfg, &work.join("data"), mode).unwrap();
    let srcs = open_all(&ds.manifests);
    let (tr, va, te) = (frame_samples(&srcs, Split::Train), frame_samples(&srcs, Split::Val), frame_samples(&srcs, Split::Test));
    let mut model = Classifier::new(ModelConfig::toy(Variant::SingleFrame, 1)).unwrap();
    let mut store = FrameStore::new(model.encoder().input_size() as u32);
    let run = RunDir::create(&work.join("run")).unwrap();
    let h = train(&mut model, &tr, &va, &mut store, &spatial_train_config(), Some(&run), mode).unwrap();
    preload_samples(&mut store, &te, mode).unwrap();
    let e = evaluate(&model, &te, &store, mode, Descriptor::default()).unwrap();
    artifacts.add_run("spatial", &run);
    artifacts.add_eval("spatial", &e);
    let acc = e.report.overall().unwrap();
    let dt = t0.elapsed();
    SpatialRun {
        outcome: check(
            acc >= 0.95 && dt < Duration::from_secs(600),
            format!(
                "certificate {:.4}; {} epochs; test accuracy {:.4} on {} frames in {dt:.1?}",
                cert.accuracy,
                h.epochs.len(),
                acc,
                te.len()
            ),
        ),
        artifacts,
    }
}

const TEMPORAL_WINDOW: usize = 7;

struct TemporalRun {
    outcome: Outcome,
    artifacts: Artifacts,
    recurrent: Classifier,
    test_windows: Vec<WindowSample>,
    store: FrameStore,
}

fn temporal_run(work: &Path, mode: ExecMode) -> TemporalRun {
    let t0 = Instant::now();
    let mut artifacts = Artifacts::new();
    let cfg = SynthConfig {
        n_videos: 200,
        frames_per_video: 20,
        seed: 11,
        tamper_mode: TamperMode::TemporalFlicker,
        ..SynthConfig::default()
    };
    let ds = generate(&cfg, &work.join("data"), mode).unwrap();
    let srcs = open_all(&ds.manifests);
    let windows = |s| build_window_index(&srcs, TEMPORAL_WINDOW, 1, &IndexFilter::split(s)).unwrap();
    let (trw, vaw, tew) = (windows(Split::Train), windows(Split::Val), windows(Split::Test));
    let mut store = FrameStore::new(32);
    let base = TrainConfig { learning_rate: 1e-3, seed: 1, ..TrainConfig::default() };

    let mut single = Classifier::new(ModelConfig::toy(Variant::SingleFrame, 1)).unwrap();
    let run = RunDir::create(&work.join("single")).unwrap();
    let tc = TrainConfig { max_epochs: 5, early_stop_patience: 2, ..base.clone() };
    train(&mut single, &frame_samples(&srcs, Split::Train), &frame_samples(&srcs, Split::Val), &mut store, &tc, Some(&run), mode)
        .unwrap();
    artifacts.add_run("single", &run);
    preload_samples(&mut store, &tew, mode).unwrap();
    let vote = single.as_majority_vote(TEMPORAL_WINDOW).unwrap();
    let baseline = evaluate_window(&vote, &tew, &store, mode, Descriptor::default()).unwrap();
    artifacts.add_eval("majority", &baseline);
    let base_avg = baseline.report.avg().unwrap();

    let mut parts = vec![format!("majority vote Avg {base_avg:.1}")];
    let mut ok = true;
    let mut recurrent = None;
    for (tag, variant, train_set, epochs, patience) in [
        ("conv3d", Variant::Conv3d, cap_per_video(trw.clone(), 4), 8, 2),
        ("birecurrent", Variant::BiRecurrent, trw.clone(), 10, 4),
    ] {
        let mut m = Classifier::new(ModelConfig::toy(variant, TEMPORAL_WINDOW)).unwrap();
        let run = RunDir::create(&work.join(tag)).unwrap();
        let tc = TrainConfig { max_epochs: epochs, early_stop_patience: patience, ..base.clone() };
        let h = train(&mut m, &train_set, &vaw, &mut store, &tc, Some(&run), mode).unwrap();
        artifacts.add_run(tag, &run);
        let e = evaluate_window(&m, &tew, &store, mode, Descriptor::default()).unwrap();
        artifacts.add_eval(tag, &e);
        let avg = e.report.avg().unwrap();
        ok &= avg >= base_avg + 5.0;
        parts.push(format!("{tag} Avg {avg:.1} ({} epochs)", h.epochs.len()));
        if variant == Variant::BiRecurrent {
            recurrent = Some(m);
        }
    }
    let dt = t0.elapsed();
    parts.push(format!("{} test windows in {dt:.1?}", tew.len()));
    TemporalRun {
        outcome: check(ok && dt < Duration::from_secs(1800), parts.join("; ")),
        artifacts,
        recurrent: recurrent.unwrap(),
        test_windows: tew,
        store,
    }
}

fn freeze_contract(work: &Path) -> Outcome {
    let ds = generate(&spatial_config(), &work.join("data"), ExecMode::Parallel).map_err(|e| e.to_string())?;
    let srcs = open_all(&ds.manifests);
    let mut model = Classifier::new(ModelConfig::toy(Variant::SingleFrame, 1)).map_err(|e| e.to_string())?;
    model.freeze_encoder(true);
    let (enc0, head0) = (model.encoder_hash(), model.head_hash());
    let mut store = FrameStore::new(model.encoder().input_size() as u32);
    let tc = TrainConfig { max_epochs: 2, ..spatial_train_config() };
    train(&mut model, &frame_samples(&srcs, Split::Train), &frame_samples(&srcs, Split::Val), &mut store, &tc, None, ExecMode::Parallel)
        .map_err(|e| e.to_string())?;
    let (enc1, head1) = (model.encoder_hash(), model.head_hash());
    check(
        enc0 == enc1 && head0 != head1,
        format!("encoder {} -> {}, head {} -> {}", &enc0[..12], &enc1[..12], &head0[..12], &head1[..12]),
    )
}

// 11 ------------------------------------------------------------------------

fn format_goldens(work: &Path) -> Outcome {
    let mut preds = BTreeMap::new();
    preds.insert("b/000001.png".to_string(), 0.5);
    preds.insert("a/000010.png".to_string(), 0.93);
    preds.insert("a/000002.png".to_string(), 0.5000001);
    preds.insert("c.png".to_string(), 0.0);
    let csv_path = work.join("bench.csv");
    export_benchmark(&preds, &csv_path).map_err(|e| e.to_string())?;
    let csv = std::fs::read(&csv_path).map_err(|e| e.to_string())?;
    let csv_golden = b"frame_id,label\na/000002.png,fake\na/000010.png,fake\nb/000001.png,real\nc.png,real\n";
    let parsed: BTreeMap<String, String> = std::str::from_utf8(&csv)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let (id, label) = l.split_once(',').unwrap();
            (id.to_string(), label.to_string())
        })
        .collect();
    let csv_round_trip = parsed.len() == preds.len()
        && preds.iter().all(|(id, p)| parsed[id] == if *p > 0.5 { "fake" } else { "real" })
        && benchmark_csv(&preds).as_bytes() == csv;

    let mut m = Manifest::new(ManifestHeader::new("skin-tone", 0.3));
    let face = |i: usize, path: &str| FrameRecord {
        video_id: "017".into(),
        frame_index: i,
        face: Some(FaceCrop { crop_box: CropBox { x: 4, y: 6, w: 30, h: 33 }, crop_path: PathBuf::from(path) }),
    };
    m.videos.push(VideoEntry {
        video: VideoRecord {
            video_id: "017".into(),
            method: ManipulationMethod::Original,
            compression: CompressionLevel::C40,
            split: Split::Val,
            source_path: PathBuf::from("videos/017.mp4"),
            frame_count: 3,
        },
        frames: vec![face(0, "017/000000.png"), FrameRecord::missing("017", 1), face(2, "017/000002.png")],
    });
    let man_path = work.join("manifest.tsv");
    write_manifest(&m, &man_path).map_err(|e| e.to_string())?;
    let bytes = std::fs::read(&man_path).map_err(|e| e.to_string())?;
    let man_golden = "#forgeguard-manifest v1 detector=skin-tone margin=0.3\n\
                      @video\t017\toriginal\tc40\tval\t3\tvideos/017.mp4\n\
                      017\t0\ttrue\t4,6,30,33\t017/000000.png\n\
                      017\t1\tfalse\t-\t-\n\
                      017\t2\ttrue\t4,6,30,33\t017/000002.png\n";
    let back = read_manifest(&man_path).map_err(|e| e.to_string())?;
    let man_round_trip = back == m && back.to_text().map_err(|e| e.to_string())?.as_bytes() == bytes;
    check(
        csv == csv_golden && csv_round_trip && bytes == man_golden.as_bytes() && man_round_trip,
        format!(
            "csv golden {}, csv round trip {}, manifest golden {}, manifest round trip {}",
            csv == csv_golden,
            csv_round_trip,
            bytes == man_golden.as_bytes(),
            man_round_trip
        ),
    )
}

// 12 ------------------------------------------------------------------------

fn shape_contracts(temporal: &TemporalRun) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let rnn = Classifier::new(ModelConfig::toy(Variant::BiRecurrent, 5)).map_err(|e| e.to_string())?;
    let s = rnn.encoder().input_size() as u32;
    let images: Vec<image::RgbImage> = (0..4)
        .map(|_| image::RgbImage::from_fn(s, s, |_, _| image::Rgb([rng.random(), rng.random(), rng.random()])))
        .collect();
    assert_eq!(rnn.encoder().mode(), EncoderMode::Embedding);
    let emb = rnn.encoder().encode_images(rnn.params().values(), &images).map_err(|e| e.to_string())?;
    let emb_ok = emb.len() == 4 && emb.iter().all(|e| e.len() == EMBEDDING_DIM);

    let c3 = Classifier::new(ModelConfig::toy(Variant::Conv3d, 5)).map_err(|e| e.to_string())?;
    let frames = random_frames(&c3, 5, &mut rng);
    let (vol, shape) = c3.conv3d_input(&refs(&frames)).map_err(|e| e.to_string())?;
    let fmap = c3.encoder().output_shape();
    let c3_ok = shape == [fmap[0], 5, fmap[1], fmap[2]] && vol.len() == shape.iter().product::<usize>();

    let single = Classifier::new(ModelConfig::toy(Variant::SingleFrame, 1)).map_err(|e| e.to_string())?;
    let mut middle_ok = true;
    for trial in 0..50 {
        let w = [3, 5, 7][trial % 3];
        let mut frames = random_frames(&single, w, &mut rng);
        let z0 = single.logit(&refs(&frames)).map_err(|e| e.to_string())?;
        for i in (0..w).filter(|i| *i != w / 2) {
            frames[i] = random_frames(&single, 1, &mut rng).remove(0);
        }
        middle_ok &= single.logit(&refs(&frames)).map_err(|e| e.to_string())?.to_bits() == z0.to_bits();
    }

    let mut changed = 0;
    for s in &temporal.test_windows {
        let mut frames: Vec<Vec<f64>> = s.crop_paths.iter().map(|p| temporal.store.get(p).unwrap()).collect();
        let z0 = temporal.recurrent.logit(&refs(&frames)).map_err(|e| e.to_string())?;
        frames[0] = frames[1].clone();
        if temporal.recurrent.logit(&refs(&frames)).map_err(|e| e.to_string())? != z0 {
            changed += 1;
        }
    }
    check(
        emb_ok && c3_ok && middle_ok && changed > 0,
        format!(
            "embeddings (4, {}), conv3d input {shape:?}, single-frame logit fixed under 50 edits {middle_ok}, \
             trained recurrent logit moved on {changed}/{} windows",
            emb.first().map_or(0, Vec::len),
            temporal.test_windows.len()
        ),
    )
}

// ---------------------------------------------------------------------------

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    })
}

fn report(n: usize, name: &str, outcome: &Outcome) -> bool {
    let (tag, detail) = match outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("criterion {n:>2} [{tag}] {name}: {}", detail.trim_end().replace('\n', "\n    "));
    outcome.is_ok()
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let work = tmp.path();
    let mut all = true;
    all &= report(1, "report formatting fixtures", &guarded(formatting_fixtures));
    all &= report(2, "majority vote oracle", &guarded(majority_oracle));
    all &= report(3, "balanced average identity", &guarded(balanced_average));
    all &= report(4, "window index oracle", &guarded(window_index_oracle));
    all &= report(5, "gradient check", &guarded(gradient_check));
    all &= report(6, "adam oracle and loss fixtures", &guarded(adam_oracle));

    let spatial = catch_unwind(|| spatial_run(&work.join("spatial-a"), ExecMode::Parallel));
    let spatial_outcome = match &spatial {
        Ok(r) => r.outcome.clone(),
        Err(_) => Err("spatial run panicked".into()),
    };
    all &= report(7, "spatial synthetic end-to-end", &spatial_outcome);

    let temporal = catch_unwind(|| temporal_run(&work.join("temporal-a"), ExecMode::Parallel));
    let temporal_outcome = match &temporal {
        Ok(r) => r.outcome.clone(),
        Err(_) => Err("temporal run panicked".into()),
    };
    all &= report(8, "temporal advantage over majority vote", &temporal_outcome);

    let determinism = guarded(|| {
        let (Ok(s1), Ok(t1)) = (&spatial, &temporal) else {
            return Err("first runs did not complete".into());
        };
        let s2 = spatial_run(&work.join("spatial-b"), ExecMode::Sequential);
        let t2 = temporal_run(&work.join("temporal-b"), ExecMode::Sequential);
        let differing: Vec<&String> = s1
            .artifacts
            .files
            .iter()
            .chain(&t1.artifacts.files)
            .filter(|(k, v)| s2.artifacts.files.get(*k).or(t2.artifacts.files.get(*k)) != Some(v))
            .map(|(k, _)| k)
            .collect();
        let n = s1.artifacts.files.len() + t1.artifacts.files.len();
        let same_keys = s1.artifacts.files.len() == s2.artifacts.files.len()
            && t1.artifacts.files.len() == t2.artifacts.files.len();
        check(
            n > 0 && same_keys && differing.is_empty(),
            format!("{n} history/checkpoint/report files compared across a sequential rerun; differing: {differing:?}"),
        )
    });
    all &= report(9, "determinism of criteria 7-8", &determinism);

    all &= report(10, "freeze contract", &guarded(|| freeze_contract(&work.join("freeze"))));
    all &= report(11, "format goldens", &guarded(|| format_goldens(work)));
    let shapes = match &temporal {
        Ok(t) => guarded(|| shape_contracts(t)),
        Err(_) => Err("needs the criterion 8 models".into()),
    };
    all &= report(12, "shape and middle-frame contracts", &shapes);

    if !all {
        println!("acceptance: FAILED");
        std::process::exit(1);
    }
    println!("acceptance: all 12 criteria passed");
}
