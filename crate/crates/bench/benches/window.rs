use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use evstack::classifier::{normalize, Architecture, CnnModel};
use evstack::events::{build_simil_frames, PolarityPolicy, SimilFrame};
use evstack::pipeline::{Classifier, PipelineConfig, WindowEvaluator};
use evstack::synth::generate_frames;
use evstack::{
    generate_scene, make_hex_pool, stack, stack_all, ClassifierKind, SceneConfig, TrialVector,
};

const DT: u64 = 80_000;

fn noise(width: u32, height: u32, frames: u64) -> SceneConfig {
    SceneConfig {
        width,
        height,
        duration_us: frames * DT,
        background_rate: evstack::DEFAULT_BACKGROUND_RATE,
        rng_seed: 1,
        frame_dt_us: DT,
        sources: Vec::new(),
    }
}

fn window() -> Vec<SimilFrame> {
    generate_frames(&noise(80, 60, 16), DT).unwrap().0
}

fn stacking(c: &mut Criterion) {
    let frames = window();
    let pool = make_hex_pool(1.0);
    c.bench_function("stack one vector 80x60 n16", |b| {
        b.iter(|| stack(black_box(&frames), TrialVector::new(0.5, 0.5)).unwrap())
    });
    c.bench_function("stack_all 36 vectors 80x60 n16", |b| {
        b.iter(|| stack_all(black_box(&frames), &pool, false).unwrap())
    });
}

fn cnn(c: &mut Criterion) {
    let frames = window();
    let input = normalize(&stack(&frames, TrialVector::new(0.5, 0.0)).unwrap());
    let model = CnnModel::init(Architecture::standard(80, 60), 1).unwrap();
    c.bench_function("cnn logit 80x60", |b| {
        b.iter(|| model.logit(black_box(&input)).unwrap())
    });
}

fn full_window(c: &mut Criterion) {
    let frames = window();
    let refs: Vec<&SimilFrame> = frames.iter().collect();
    let mf = PipelineConfig {
        classifier: ClassifierKind::MatchedFilter,
        ..PipelineConfig::default()
    };
    let eval = WindowEvaluator::new(mf, Classifier::MatchedFilter, (80, 60)).unwrap();
    c.bench_function("window matched filter", |b| {
        b.iter(|| eval.evaluate(black_box(&refs)).unwrap())
    });

    let model = CnnModel::init(Architecture::standard(80, 60), 1).unwrap();
    let eval =
        WindowEvaluator::new(PipelineConfig::default(), Classifier::Cnn(model), (80, 60)).unwrap();
    let mut group = c.benchmark_group("window cnn");
    group.sample_size(20);
    group.bench_function("36 vectors 80x60 n16", |b| {
        b.iter(|| eval.evaluate(black_box(&refs)).unwrap())
    });
    group.finish();
}

fn accumulation(c: &mut Criterion) {
    let scene = generate_scene(&noise(80, 60, 4)).unwrap();
    c.bench_function("accumulate 4 frames 80x60", |b| {
        b.iter(|| {
            build_simil_frames(
                &scene.header,
                black_box(&scene.events),
                DT,
                PolarityPolicy::Both,
            )
            .unwrap()
        })
    });
}

criterion_group!(benches, stacking, cnn, full_window, accumulation);
criterion_main!(benches);
