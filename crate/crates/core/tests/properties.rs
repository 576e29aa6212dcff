use evstack::classifier::{normalize, MatchedFilter};
use evstack::events::{
    build_simil_frames, downsample, read_events, write_events, EventFormat, EventReader,
    ReadOptions,
};
use evstack::grid::Grid;
use evstack::stacking::{make_hex_pool, stack, TrialVector};
use evstack::synth::generate_frames;
use evstack::{Event, Polarity, PolarityPolicy, SceneConfig, SensorHeader, SimilFrame};
use proptest::prelude::*;

fn events_strategy() -> impl Strategy<Value = (u32, u32, Vec<Event>)> {
    (1u32..40, 1u32..40).prop_flat_map(|(w, h)| {
        let event =
            (0u64..2_000_000, 0..w as u16, 0..h as u16, any::<bool>()).prop_map(|(t, x, y, on)| {
                Event::new(t, x, y, if on { Polarity::On } else { Polarity::Off })
            });
        prop::collection::vec(event, 0..300).prop_map(move |mut v| {
            v.sort_by_key(|e| e.t);
            (w, h, v)
        })
    })
}

fn frames_strategy() -> impl Strategy<Value = Vec<SimilFrame>> {
    (1usize..20, 1usize..20, 2usize..7).prop_flat_map(|(w, h, n)| {
        prop::collection::vec(prop::collection::vec(0u32..6, w * h), n).prop_map(move |planes| {
            planes
                .into_iter()
                .enumerate()
                .map(|(i, data)| SimilFrame {
                    counts: Grid::from_vec(w, h, data),
                    t_start: i as u64 * 10,
                    dt: 10,
                    padded: false,
                })
                .collect()
        })
    })
}

proptest! {
    #[test]
    fn event_files_round_trip((w, h, events) in events_strategy()) {
        let header = SensorHeader::for_events(w, h, &events);
        for format in [EventFormat::Csv, EventFormat::Binary] {
            let mut buf = Vec::new();
            write_events(&mut buf, &header, &events, format).unwrap();
            prop_assert_eq!(EventFormat::sniff(&buf), Some(format));
            let (back_header, back) = read_events(buf.as_slice(), format, ReadOptions::default()).unwrap();
            prop_assert_eq!(&back, &events);
            prop_assert_eq!(back_header, header);
            let streamed: Vec<Event> = EventReader::new(buf.as_slice(), format, ReadOptions::default())
                .unwrap()
                .collect::<Result<_, _>>()
                .unwrap();
            prop_assert_eq!(&streamed, &events);
        }
    }

    #[test]
    fn frames_conserve_accepted_events((w, h, events) in events_strategy(), dt in 1u64..500_000) {
        let header = SensorHeader::for_events(w, h, &events);
        for policy in [PolarityPolicy::Both, PolarityPolicy::PositiveOnly] {
            let frames = build_simil_frames(&header, &events, dt, policy).unwrap();
            let total: u64 = frames.iter().map(SimilFrame::total).sum();
            let accepted = events.iter().filter(|e| policy.accepts(e.polarity)).count() as u64;
            prop_assert_eq!(total, accepted);
            for (k, f) in frames.iter().enumerate() {
                prop_assert_eq!(f.t_start, k as u64 * dt);
            }
            prop_assert!(frames.len() as u64 * dt >= header.duration);
        }
    }

    #[test]
    fn downsampling_conserves_counts(frames in frames_strategy(), factor in 1usize..5) {
        for f in &frames {
            let d = downsample(f, factor).unwrap();
            let (w, h) = f.counts.dims();
            prop_assert_eq!(d.total(), f.total());
            prop_assert_eq!(d.counts.dims(), (w.div_ceil(factor), h.div_ceil(factor)));
            prop_assert_eq!(d.padded, w % factor != 0 || h % factor != 0);
        }
    }

    #[test]
    fn stacking_commutes_with_translation(frames in frames_strategy(), vi in 0usize..36, ox in 0usize..4, oy in 0usize..4) {
        // embed every frame at (ox, oy) inside a larger canvas; the stack must move with it
        let v = make_hex_pool(1.0).vectors()[vi];
        let (w, h) = frames[0].counts.dims();
        let moved: Vec<SimilFrame> = frames
            .iter()
            .map(|f| {
                let mut g = Grid::<u32>::new(w + 8, h + 8);
                for y in 0..h {
                    for x in 0..w {
                        *g.get_mut(x + ox + 4, y + oy + 4) = *f.counts.get(x, y);
                    }
                }
                SimilFrame { counts: g, ..f.clone() }
            })
            .collect();
        let a = stack(&frames, v).unwrap();
        let b = stack(&moved, v).unwrap();
        // cells of the small stack that only received in-bounds contributions
        for (x, y) in a.coverage.iter() {
            prop_assert_eq!(a.values.get(x, y), b.values.get(x + ox + 4, y + oy + 4));
        }
    }

    #[test]
    fn zero_vector_stack_is_the_plain_sum(frames in frames_strategy()) {
        let s = stack(&frames, TrialVector::new(0.0, 0.0)).unwrap();
        prop_assert_eq!(s.total(), frames.iter().map(SimilFrame::total).sum::<u64>());
        prop_assert_eq!(s.coverage, frames[0].counts.full_rect());
    }

    #[test]
    fn coherent_track_piles_up_on_the_newest_position(vi in 0usize..36, n in 2usize..12, x0 in 12usize..20, y0 in 12usize..20) {
        let v = make_hex_pool(1.0).vectors()[vi];
        let (w, h) = (32, 32);
        let frames: Vec<SimilFrame> = (0..n)
            .map(|i| {
                let lag = (n - 1 - i) as f64;
                let mut f = SimilFrame::empty(w, h, i as u64 * 10, 10);
                let x = x0 as i64 - (v.vx * lag + 0.5).floor() as i64;
                let y = y0 as i64 - (v.vy * lag + 0.5).floor() as i64;
                *f.counts.get_mut(x as usize, y as usize) = 1;
                f
            })
            .collect();
        let s = stack(&frames, v).unwrap();
        prop_assert_eq!(s.peak(), Some(((x0, y0), n as u32)));
    }

    #[test]
    fn normalized_covered_region_has_zero_mean_unit_variance(frames in frames_strategy(), vi in 0usize..36) {
        let v = make_hex_pool(1.0).vectors()[vi];
        let s = stack(&frames, v).unwrap();
        let z = normalize(&s);
        let cells: Vec<f64> = s.coverage.iter().map(|(x, y)| *z.grid.get(x, y)).collect();
        let raw: Vec<u32> = s.coverage.iter().map(|(x, y)| *s.values.get(x, y)).collect();
        let constant = raw.windows(2).all(|p| p[0] == p[1]);
        if !cells.is_empty() && !constant {
            let mean = cells.iter().sum::<f64>() / cells.len() as f64;
            let var = cells.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / cells.len() as f64;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((var - 1.0).abs() < 1e-9);
        }
        for (i, val) in z.grid.as_slice().iter().enumerate() {
            let (x, y) = (i % z.grid.width(), i / z.grid.width());
            if !s.coverage.contains(x, y) {
                prop_assert_eq!(*val, 0.0);
            }
        }
    }
}

#[test]
fn pure_noise_stacks_stay_below_five_sigma() {
    let filter = MatchedFilter::default();
    let v = make_hex_pool(1.0).vectors()[7];
    let mut below = 0;
    for seed in 0..1000 {
        let scene = SceneConfig {
            width: 80,
            height: 60,
            duration_us: 16 * 80_000,
            background_rate: evstack::DEFAULT_BACKGROUND_RATE,
            rng_seed: seed,
            frame_dt_us: 80_000,
            sources: Vec::new(),
        };
        let (frames, _) = generate_frames(&scene, 80_000).unwrap();
        let s = stack(&frames, v).unwrap();
        below += usize::from(filter.score(&s).is_none_or(|m| !m.score.decision()));
    }
    assert!(below >= 990, "{below} of 1000 noise stacks below threshold");
}
