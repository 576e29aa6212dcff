use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use evstack::classifier::{
    read_model, run_recipe, write_model, Architecture, ClassifierKind, CnnModel, TrainingRecipe,
};
use evstack::events::{read_events, write_events, EventFormat, EventReader, ReadOptions};
use evstack::geometry::GeometryParams;
use evstack::pipeline::{
    benchmark_window, run_detection, write_report_csv, Classifier, Detection, DetectionSink,
    LatencyStats, MonotonicClock, PipelineConfig, RunSummary,
};
use evstack::stacking::{write_pgm, PgmKind};
use evstack::synth::{generate_scene, SceneConfig};
use evstack::StackedImage;

use crate::exit::Usage;
use crate::{
    BenchArgs, ClassifierArg, ConvertArgs, DetectArgs, FormatArg, GeomArgs, PipelineArgs,
    SynthArgs, TrainArgs,
};

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn open_events(path: &Path) -> Result<(BufReader<File>, EventFormat)> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut reader = BufReader::new(file);
    let prefix = reader.fill_buf()?;
    let format = EventFormat::sniff(prefix).unwrap_or_else(|| {
        // unrecognized: report text as a bad CSV header, anything else as a bad magic
        let head = &prefix[..prefix.len().min(64)];
        let utf8 = match std::str::from_utf8(head) {
            Ok(_) => true,
            // a multi-byte character cut off by the 64-byte window
            Err(e) => e.error_len().is_none(),
        };
        let text = !head.contains(&0) && utf8;
        if text {
            EventFormat::Csv
        } else {
            EventFormat::Binary
        }
    });
    Ok((reader, format))
}

fn event_format(f: FormatArg) -> EventFormat {
    match f {
        FormatArg::Csv => EventFormat::Csv,
        FormatArg::Binary => EventFormat::Binary,
    }
}

fn load_model(path: &Path) -> Result<CnnModel> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_model(BufReader::new(file)).with_context(|| format!("loading model {}", path.display()))
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut config = SceneConfig::from_toml(&read_text(&a.config)?)
        .with_context(|| format!("scene config {}", a.config.display()))?;
    if let Some(seed) = a.seed {
        config.rng_seed = seed;
    }
    let scene = generate_scene(&config)?;
    let mut out = create(&a.out)?;
    write_events(
        &mut out,
        &scene.header,
        &scene.events,
        event_format(a.format),
    )?;
    out.flush()?;
    fs::write(&a.truth, scene.truth.to_json() + "\n")
        .with_context(|| format!("writing {}", a.truth.display()))?;
    println!(
        "{} events, {}x{} sensor, {} us, {} source(s) -> {}",
        scene.events.len(),
        scene.header.width,
        scene.header.height,
        config.duration_us,
        config.sources.len(),
        a.out.display()
    );
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut recipe = match &a.config {
        Some(p) => TrainingRecipe::from_toml(&read_text(p)?)
            .with_context(|| format!("training recipe {}", p.display()))?,
        None => TrainingRecipe::default(),
    };
    if let Some(v) = a.seed {
        recipe.seed = v;
    }
    if let Some(v) = a.epochs {
        recipe.hyperparams.epochs = v;
    }
    if let Some(v) = a.samples {
        recipe.corpus.samples = v;
    }
    if let Some(v) = a.validation_samples {
        recipe.validation_samples = v;
    }
    if let Some(v) = a.learning_rate {
        recipe.hyperparams.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        recipe.hyperparams.batch_size = v;
    }
    if let Some(v) = a.weight_decay {
        recipe.hyperparams.weight_decay = v;
    }
    recipe.validate()?;
    let (model, report) = run_recipe(&recipe)?;
    let mut out = create(&a.out)?;
    write_model(&mut out, &model)?;
    out.flush()?;
    if let Some(path) = &a.metrics {
        fs::write(path, report.to_json() + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "trained {} parameters, {} epochs, {} samples",
        report.parameters, recipe.hyperparams.epochs, recipe.corpus.samples
    );
    if let Some(last) = report.loss_curve.last() {
        println!("final training loss      {last:.4}");
    }
    println!("validation accuracy      {:.4}", report.validation_accuracy);
    for k in &report.by_kind {
        println!(
            "  {:<22} {:.4} ({} samples)",
            format!("{:?}", k.kind),
            k.accuracy,
            k.samples
        );
    }
    if let Some(c) = &report.calibration {
        println!(
            "operating threshold      {} ({} noise windows, false alarms {:.4})",
            c.threshold, c.windows, c.observed_false_alarm
        );
    }
    println!("model -> {}", a.out.display());
    Ok(())
}

fn pipeline_config(p: &PipelineArgs, parallel: bool) -> Result<PipelineConfig> {
    let mut cfg = match &p.config {
        Some(path) => PipelineConfig::from_toml(&read_text(path)?)
            .with_context(|| format!("pipeline config {}", path.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(c) = p.classifier {
        cfg.classifier = match c {
            ClassifierArg::Cnn => ClassifierKind::Cnn,
            ClassifierArg::MatchedFilter => ClassifierKind::MatchedFilter,
        };
    }
    if let Some(t) = p.threshold {
        match cfg.classifier {
            ClassifierKind::Cnn => cfg.cnn_threshold = Some(t),
            ClassifierKind::MatchedFilter => cfg.sigma_threshold = t,
        }
    }
    if let Some(v) = p.n {
        cfg.n = v;
    }
    if let Some(v) = p.dt_us {
        cfg.dt_us = v;
    }
    if let Some(v) = p.stride {
        cfg.stride = v;
    }
    if let Some(v) = p.downsample {
        cfg.downsample = v;
    }
    if let Some(v) = p.max_displacement {
        cfg.max_displacement = v;
    }
    cfg.parallel = parallel;
    cfg.validate()?;
    Ok(cfg)
}

struct ReportSink {
    detections: Vec<Detection>,
    dump_dir: Option<PathBuf>,
    error: Option<anyhow::Error>,
}

impl DetectionSink for ReportSink {
    fn on_detection(&mut self, d: &Detection) {
        self.detections.push(d.clone());
    }

    fn wants_stacks(&self) -> bool {
        self.dump_dir.is_some()
    }

    fn on_stack(&mut self, d: &Detection, stack: &StackedImage) {
        let Some(dir) = &self.dump_dir else { return };
        if self.error.is_some() {
            return;
        }
        let name = format!("stack_{:012}_{:03}.pgm", d.t_end_us, self.detections.len());
        let path = dir.join(name);
        let result = create(&path)
            .and_then(|mut out| {
                write_pgm(&mut out, &stack.values, PgmKind::P5)?;
                out.flush()?;
                Ok(())
            })
            .with_context(|| format!("dumping {}", path.display()));
        if let Err(e) = result {
            self.error = Some(e);
        }
    }
}

pub fn detect(a: DetectArgs, parallel: bool) -> Result<()> {
    let cfg = pipeline_config(&a.pipeline, parallel)?;
    let classifier = match cfg.classifier {
        ClassifierKind::Cnn => {
            let path = a.model.as_ref().ok_or_else(|| {
                Usage(
                    "the cnn classifier needs --model (or use --classifier matched-filter)".into(),
                )
            })?;
            Classifier::Cnn(load_model(path)?)
        }
        ClassifierKind::MatchedFilter => Classifier::MatchedFilter,
    };
    if let Some(dir) = &a.dump_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let (source, format) = open_events(&a.events)?;
    let reader = EventReader::from_buf_read(source, format, ReadOptions::default())
        .with_context(|| format!("reading {}", a.events.display()))?;
    let (width, height) = (reader.width() as usize, reader.height() as usize);
    let mut sink = ReportSink {
        detections: Vec::new(),
        dump_dir: a.dump_dir.clone(),
        error: None,
    };
    let detector = run_detection(reader, width, height, None, &cfg, classifier, &mut sink)
        .with_context(|| format!("processing {}", a.events.display()))?;
    if let Some(e) = sink.error {
        return Err(e);
    }

    let mut out = create(&a.out)?;
    write_report_csv(&mut out, &sink.detections)?;
    out.flush()?;
    let summary = RunSummary {
        config: cfg.clone(),
        input: a.events.display().to_string(),
        model: a.model.as_ref().map(|p| p.display().to_string()),
        sensor: (width, height),
        frame_dims: cfg.frame_dims(width, height),
        frames: detector.frames_seen(),
        windows_evaluated: detector.windows_evaluated(),
        detections: detector.detections_emitted(),
        threshold: detector.evaluator().threshold(),
        latency: LatencyStats::from_ns(detector.window_latencies_ns()),
    };
    if let Some(path) = &a.summary {
        fs::write(path, summary.to_json() + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }

    println!(
        "{} frames, {} windows, {} detections ({} classifier, threshold {})",
        summary.frames,
        summary.windows_evaluated,
        summary.detections,
        cfg.classifier,
        summary.threshold
    );
    for d in sink.detections.iter().take(20) {
        println!(
            "  t_end {:>10} us  v ({:+.3}, {:+.3})  peak ({}, {})  score {:.4}",
            d.t_end_us, d.vector.vx, d.vector.vy, d.peak.0, d.peak.1, d.score
        );
    }
    if sink.detections.len() > 20 {
        println!(
            "  ... {} more in {}",
            sink.detections.len() - 20,
            a.out.display()
        );
    }
    Ok(())
}

pub fn bench(a: BenchArgs, parallel: bool) -> Result<()> {
    let cfg = pipeline_config(&a.pipeline, parallel)?;
    let classifier = match cfg.classifier {
        ClassifierKind::Cnn => Classifier::Cnn(match &a.model {
            Some(p) => load_model(p)?,
            None => CnnModel::init(Architecture::standard(a.width, a.height), a.seed)?,
        }),
        ClassifierKind::MatchedFilter => Classifier::MatchedFilter,
    };
    let mut clock = MonotonicClock::default();
    let report = benchmark_window(
        &cfg,
        classifier,
        a.width,
        a.height,
        a.background_rate,
        a.windows,
        a.seed,
        &mut clock,
    )?;
    if let Some(path) = &a.out {
        fs::write(path, report.to_json() + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let l = &report.latency;
    println!(
        "{} windows of {}x{}, n = {}, {} vectors, {} classifier",
        l.samples, report.width, report.height, report.n, report.vectors, report.classifier
    );
    println!(
        "latency ms: mean {:.3}  p50 {:.3}  p90 {:.3}  p99 {:.3}  max {:.3}",
        l.mean_ms, l.p50_ms, l.p90_ms, l.p99_ms, l.max_ms
    );
    println!(
        "real time (p99 < {} ms): {}",
        report.dt_ms,
        if report.realtime { "yes" } else { "no" }
    );
    Ok(())
}

const DEFAULT_DISTANCES: [f64; 10] = [5e3, 10e3, 15e3, 20e3, 25e3, 30e3, 40e3, 50e3, 75e3, 100e3];

pub fn geom(a: GeomArgs) -> Result<()> {
    let g = GeometryParams::new(a.fov, a.matrix, a.speed, a.dt)?;
    if !(a.max_disp > 0.0) {
        return Err(Usage("--max-disp must be positive".into()).into());
    }
    let distances = a
        .distances
        .clone()
        .unwrap_or_else(|| DEFAULT_DISTANCES.to_vec());
    if distances.iter().any(|&d| !(d > 0.0)) {
        return Err(Usage("--distances must all be positive".into()).into());
    }
    let rows = g.table(&distances);
    let d_min = g.min_detectable_distance(a.max_disp);
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    if a.csv {
        writeln!(
            out,
            "distance_m,footprint_m,px_per_frame,px_per_frame_small_angle"
        )?;
        for r in &rows {
            writeln!(
                out,
                "{},{},{},{}",
                r.distance_m, r.footprint_m, r.px_per_frame, r.px_per_frame_small_angle
            )?;
        }
        return Ok(());
    }
    writeln!(
        out,
        "fov {} deg, {}x{} pixels, {} m/s, dt {} s",
        a.fov, a.matrix, a.matrix, a.speed, a.dt
    )?;
    writeln!(
        out,
        "{:>12} {:>14} {:>10} {:>14}",
        "distance_m", "m_per_pixel", "px/frame", "small-angle"
    )?;
    for r in &rows {
        writeln!(
            out,
            "{:>12.0} {:>14.2} {:>10.4} {:>14.4}",
            r.distance_m, r.footprint_m, r.px_per_frame, r.px_per_frame_small_angle
        )?;
    }
    writeln!(
        out,
        "objects closer than {:.1} m move more than {} px/frame",
        d_min, a.max_disp
    )?;
    Ok(())
}

pub fn convert(a: ConvertArgs) -> Result<()> {
    let (source, format) = open_events(&a.input)?;
    let (header, events) = read_events(source, format, ReadOptions::default())
        .with_context(|| format!("reading {}", a.input.display()))?;
    let mut out = create(&a.output)?;
    write_events(&mut out, &header, &events, event_format(a.to))?;
    out.flush()?;
    println!("{} events -> {}", events.len(), a.output.display());
    Ok(())
}
