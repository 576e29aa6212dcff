use super::*;
use crate::classifier::{Architecture, CnnModel};
use crate::events::{build_simil_frames, EventFormat, EventReader, ReadOptions};
use crate::synth::{generate_scene, SceneConfig, SourceSpec};

fn mf_config() -> PipelineConfig {
    PipelineConfig {
        n: 8,
        classifier: ClassifierKind::MatchedFilter,
        ..PipelineConfig::default()
    }
}

fn trig(vx: f64, vy: f64, rank: f64, peak: (usize, usize)) -> Trigger {
    Trigger {
        vector: TrialVector::new(vx, vy),
        score: Score {
            value: rank,
            threshold: 0.0,
        },
        rank,
        peak,
        matched_sigma: None,
        index: 0,
    }
}

#[test]
fn merge_single_and_argmax() {
    let one = merge_triggers(&[trig(1.0, 0.0, 0.3, (5, 5))], 3.0);
    assert_eq!(one.len(), 1);
    assert_eq!(one[0].vector, TrialVector::new(1.0, 0.0));
    let two = merge_triggers(
        &[
            trig(1.0, 0.0, 0.7, (5, 5)),
            trig(2.0 / 3.0, 0.0, 0.9, (6, 5)),
        ],
        3.0,
    );
    assert_eq!(two.len(), 1);
    assert_eq!(two[0].rank, 0.9);
}

#[test]
fn merge_tie_breaks() {
    let tied = merge_triggers(
        &[trig(1.0, 0.0, 0.8, (5, 5)), trig(-1.0, 0.0, 0.8, (5, 5))],
        3.0,
    );
    assert_eq!(tied[0].vector, TrialVector::new(-1.0, 0.0));
    let by_norm = merge_triggers(
        &[
            trig(-1.0, 0.0, 0.8, (5, 5)),
            trig(1.0 / 3.0, 0.0, 0.8, (5, 5)),
        ],
        3.0,
    );
    assert_eq!(by_norm[0].vector, TrialVector::new(1.0 / 3.0, 0.0));
}

#[test]
fn merge_keeps_distinct_peaks() {
    let out = merge_triggers(
        &[trig(1.0, 0.0, 0.5, (5, 5)), trig(1.0, 0.0, 0.9, (30, 5))],
        3.0,
    );
    assert_eq!(out.len(), 2);
    assert_eq!(out[0].peak, (30, 5));
    assert!(merge_triggers(&[], 3.0).is_empty());
}

#[test]
fn config_validation() {
    for bad in [
        PipelineConfig {
            dt_us: 0,
            ..PipelineConfig::default()
        },
        PipelineConfig {
            n: 1,
            ..PipelineConfig::default()
        },
        PipelineConfig {
            stride: 0,
            ..PipelineConfig::default()
        },
        PipelineConfig {
            downsample: 0,
            ..PipelineConfig::default()
        },
    ] {
        assert!(bad.validate().is_err());
    }
    let text = "n = 4\nclassifier = \"matched_filter\"\n";
    let cfg = PipelineConfig::from_toml(text).unwrap();
    assert_eq!(cfg.n, 4);
    assert!(PipelineConfig::from_toml("nn = 4").is_err());
}

#[test]
fn model_dimension_mismatch() {
    let model = CnnModel::zeros(Architecture::standard(80, 60)).unwrap();
    let err = Detector::new(
        PipelineConfig::default(),
        Classifier::Cnn(model.clone()),
        240,
        180,
    );
    assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    let ok = PipelineConfig {
        downsample: 3,
        ..PipelineConfig::default()
    };
    assert!(Detector::new(ok, Classifier::Cnn(model), 240, 180).is_ok());
}

#[test]
fn empty_stream_gives_nothing() {
    let mut out = Vec::new();
    let det = run_detection(
        std::iter::empty(),
        40,
        30,
        None,
        &mf_config(),
        Classifier::MatchedFilter,
        &mut out,
    )
    .unwrap();
    assert!(out.is_empty());
    assert_eq!(det.frames_seen(), 0);
}

fn bright_scene(seed: u64) -> SceneConfig {
    SceneConfig {
        width: 40,
        height: 30,
        duration_us: 12 * 80_000,
        background_rate: 100.0,
        rng_seed: seed,
        frame_dt_us: 80_000,
        sources: vec![SourceSpec {
            start: [10.0, 10.0],
            velocity: [12.5, 0.0],
            event_rate: 2000.0,
            t_enter_us: 0,
            t_exit_us: 12 * 80_000,
            psf_sigma: 0.0,
        }],
    }
}

#[test]
fn warm_up_stride_and_recovery() {
    let scene = generate_scene(&bright_scene(4)).unwrap();
    let frames =
        build_simil_frames(&scene.header, &scene.events, 80_000, PolarityPolicy::Both).unwrap();
    assert_eq!(frames.len(), 12);

    let mut times = Vec::new();
    let mut sink = CallbackSink(|d: &Detection| times.push(d.t_end_us));
    let det = run_detection_on_frames(
        frames.clone(),
        40,
        30,
        &mf_config(),
        Classifier::MatchedFilter,
        &mut sink,
    )
    .unwrap();
    assert_eq!(det.windows_evaluated(), 5);
    assert!(times.iter().all(|&t| t >= 8 * 80_000));

    let stride = PipelineConfig {
        stride: 2,
        ..mf_config()
    };
    let mut out: Vec<Detection> = Vec::new();
    let det = run_detection_on_frames(frames, 40, 30, &stride, Classifier::MatchedFilter, &mut out)
        .unwrap();
    assert_eq!(det.windows_evaluated(), 3);
    let first = &out[0];
    assert_eq!(first.t_end_us, 8 * 80_000);
    assert_eq!(first.vector, TrialVector::new(1.0, 0.0));
    assert!(first.peak.0.abs_diff(17) <= 1 && first.peak.1.abs_diff(10) <= 1);
    assert!(first.score >= 5.0);
}

#[test]
fn streaming_matches_batch_and_parallel() {
    let scene = generate_scene(&bright_scene(7)).unwrap();
    let mut bytes = Vec::new();
    crate::events::write_events(
        &mut bytes,
        &scene.header,
        &scene.events,
        EventFormat::Binary,
    )
    .unwrap();
    let reader = EventReader::new(&bytes[..], EventFormat::Binary, ReadOptions::default()).unwrap();
    let mut streamed = Vec::new();
    run_detection(
        reader,
        40,
        30,
        Some(scene.header.duration),
        &mf_config(),
        Classifier::MatchedFilter,
        &mut streamed,
    )
    .unwrap();

    let frames =
        build_simil_frames(&scene.header, &scene.events, 80_000, PolarityPolicy::Both).unwrap();
    for parallel in [false, true] {
        let cfg = PipelineConfig {
            parallel,
            ..mf_config()
        };
        let mut batch = Vec::new();
        run_detection_on_frames(
            frames.clone(),
            40,
            30,
            &cfg,
            Classifier::MatchedFilter,
            &mut batch,
        )
        .unwrap();
        assert_eq!(streamed, batch);
    }
    assert!(!streamed.is_empty());
}

#[test]
fn detection_emitted_when_window_closes() {
    let scene = generate_scene(&bright_scene(2)).unwrap();
    let cfg = mf_config();
    let mut det = Detector::new(cfg, Classifier::MatchedFilter, 40, 30).unwrap();
    let mut out: Vec<Detection> = Vec::new();
    for e in &scene.events {
        det.push_event(e, &mut out).unwrap();
        if let Some(d) = out.last() {
            assert!(e.t < d.t_end_us + 80_000);
        }
    }
}

#[test]
fn cnn_path_runs_with_zero_model() {
    let scene = generate_scene(&bright_scene(1)).unwrap();
    let frames =
        build_simil_frames(&scene.header, &scene.events, 80_000, PolarityPolicy::Both).unwrap();
    let model = CnnModel::zeros(Architecture::standard(40, 30)).unwrap();
    let cfg = PipelineConfig {
        n: 8,
        ..PipelineConfig::default()
    };
    let mut out: Vec<Detection> = Vec::new();
    run_detection_on_frames(frames, 40, 30, &cfg, Classifier::Cnn(model), &mut out).unwrap();
    // a zero model scores exactly 0.5 everywhere, which meets the threshold
    assert!(!out.is_empty());
    assert!(out
        .iter()
        .all(|d| d.score == 0.5 && d.classifier_kind == ClassifierKind::Cnn));
}

struct FakeClock(u64);

impl Clock for FakeClock {
    fn now_ns(&mut self) -> u64 {
        self.0 += 1_000_000;
        self.0
    }
}

#[test]
fn latency_report() {
    let cfg = PipelineConfig {
        n: 4,
        ..mf_config()
    };
    let mut clock = FakeClock(0);
    let r = benchmark_window(
        &cfg,
        Classifier::MatchedFilter,
        20,
        16,
        100.0,
        10,
        1,
        &mut clock,
    )
    .unwrap();
    assert_eq!(r.latency.samples, 10);
    assert_eq!(r.latency.p99_ms, 1.0);
    assert_eq!(r.vectors, 36);
    assert!(r.realtime);
    assert_eq!(WindowLatencyReport::from_json(&r.to_json()).unwrap(), r);
}

#[test]
fn percentile_nearest_rank() {
    let v: Vec<u64> = (1..=100).map(|k| k * 1_000_000).collect();
    let s = LatencyStats::from_ns(&v).unwrap();
    assert_eq!(
        (s.p50_ms, s.p90_ms, s.p99_ms, s.max_ms),
        (50.0, 90.0, 99.0, 100.0)
    );
    assert_eq!(s.mean_ms, 50.5);
    assert!(LatencyStats::from_ns(&[]).is_none());
}

#[test]
fn report_csv_layout() {
    let d = Detection {
        t_end_us: 1_280_000,
        vector: TrialVector::new(1.0 / 3.0, -0.5),
        score: 0.75,
        peak: (12, 7),
        classifier_kind: ClassifierKind::Cnn,
        matched_sigma: Some(6.5),
    };
    let mut buf = Vec::new();
    write_report_csv(&mut buf, &[d]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(
        text,
        format!("{REPORT_HEADER}\n1280000,0.3333333333333333,-0.5,0.75,12,7,cnn,6.5\n")
    );
}
