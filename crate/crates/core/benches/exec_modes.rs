//! Sequential vs parallel execution of the two hot paths: batch gradient
//! accumulation and synthetic video rendering.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use forgeguard::exec::{self, ExecMode};
use forgeguard::models::{Classifier, ModelConfig, Variant};
use forgeguard::synthgen::{render_video, video_specs, SynthConfig};
use forgeguard::{CompressionLevel, Label};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn batch_gradients(c: &mut Criterion) {
    let model = Classifier::new(ModelConfig::toy(Variant::SingleFrame, 1)).unwrap();
    let n = model.encoder().input_len();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batch: Vec<(Vec<f64>, Label)> = (0..32)
        .map(|i| {
            let x = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            (x, if i % 2 == 0 { Label::Tampered } else { Label::Pristine })
        })
        .collect();
    let len = model.params().len();
    let mut group = c.benchmark_group("batch_gradients");
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                exec::chunked_sum(mode, &batch, 4, len, |(x, y), acc| {
                    model.loss_and_grad(&[x.as_slice()], *y, acc).unwrap();
                })
            })
        });
    }
    group.finish();
}

fn synth_render(c: &mut Criterion) {
    let config = SynthConfig { n_videos: 16, frames_per_video: 8, ..Default::default() };
    let specs = video_specs(&config);
    let mut group = c.benchmark_group("synth_render");
    group.sample_size(20);
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| exec::map(mode, &specs, |s| black_box(render_video(&config, s, CompressionLevel::C23)).len()))
        });
    }
    group.finish();
}

criterion_group!(benches, batch_gradients, synth_render);
criterion_main!(benches);
