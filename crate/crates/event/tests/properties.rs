//! Property tests: quantizer symmetry, accumulation laws, oracle reversal,
//! window additivity, and file round-trips.

use evhand_event::{
    accumulate_histograms, events_to_histogram, io, oracle_simulate_events, quantize_change_map,
    EventHistogram, Image, ReferenceMode, NEGATIVE, POSITIVE,
};
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn random_image(rng: &mut ChaCha12Rng, h: usize, w: usize, scale: f64) -> Image<f64> {
    let data = (0..h * w).map(|_| rng.gen_range(-scale..scale)).collect();
    Image::from_vec(h, w, data).unwrap()
}

#[test]
fn quantize_matches_scalar_loop_oracle() {
    let mut rng = ChaCha12Rng::seed_from_u64(100);
    for _ in 0..20 {
        let (h, w) = (rng.gen_range(2..9), rng.gen_range(2..9));
        let c: f64 = rng.gen_range(0.05..0.5);
        let delta = random_image(&mut rng, h, w, 2.0);
        let hist = quantize_change_map(&delta, c).unwrap();
        for y in 0..h {
            for x in 0..w {
                // independent scalar arithmetic
                let d = delta.get(y, x);
                let n = (d.abs() / c).floor() as u32;
                let (pos, neg) = if d > 0.0 { (n, 0) } else { (0, n) };
                assert_eq!(hist.get(y, x, POSITIVE), pos);
                assert_eq!(hist.get(y, x, NEGATIVE), neg);
            }
        }
    }
}

proptest! {
    #[test]
    fn negated_delta_swaps_polarity(values in prop::collection::vec(-3.0f64..3.0, 12), c in 0.05f64..0.8) {
        let delta = Image::from_vec(3, 4, values).unwrap();
        let neg = delta.map(|v| -v);
        let a = quantize_change_map(&delta, c).unwrap();
        let b = quantize_change_map(&neg, c).unwrap();
        prop_assert_eq!(a.polarity_swap(), b);
    }

    #[test]
    fn total_count_nonincreasing_in_threshold(values in prop::collection::vec(-3.0f64..3.0, 12), c in 0.05f64..0.5, factor in 1.0f64..4.0) {
        let delta = Image::from_vec(4, 3, values).unwrap();
        let lo = quantize_change_map(&delta, c).unwrap();
        let hi = quantize_change_map(&delta, c * factor).unwrap();
        prop_assert!(hi.total() <= lo.total());
    }

    #[test]
    fn polarity_swap_is_involutive(pos in prop::collection::vec(0u32..5, 6), neg in prop::collection::vec(0u32..5, 6)) {
        let mut h = EventHistogram::zeros(2, 3);
        for (i, (&p, &n)) in pos.iter().zip(&neg).enumerate() {
            h.add(i / 3, i % 3, POSITIVE, p);
            h.add(i / 3, i % 3, NEGATIVE, n);
        }
        prop_assert_eq!(h.polarity_swap().polarity_swap(), h);
    }

    #[test]
    fn accumulation_is_permutation_invariant(seed in 0u64..1000) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let frames: Vec<EventHistogram> = (0..4)
            .map(|_| {
                quantize_change_map(&random_image(&mut rng, 3, 3, 1.5), 0.2).unwrap()
            })
            .collect();
        let forward = accumulate_histograms(&frames).unwrap();
        let mut rev = frames.clone();
        rev.reverse();
        prop_assert_eq!(accumulate_histograms(&rev).unwrap(), forward);
    }
}

#[test]
fn oracle_time_reversal_swaps_polarity_in_reset_mode() {
    let mut rng = ChaCha12Rng::seed_from_u64(200);
    for trial in 0..30 {
        let (h, w) = (rng.gen_range(3..8), rng.gen_range(3..8));
        let n_frames = rng.gen_range(2..6);
        let frames: Vec<Image<f64>> = (0..n_frames)
            .map(|_| random_image(&mut rng, h, w, 1.0))
            .collect();
        let fwd =
            oracle_simulate_events(&frames, 0.2, 0, 1000, ReferenceMode::ResetPerPair).unwrap();
        let mut rev_frames = frames.clone();
        rev_frames.reverse();
        let rev =
            oracle_simulate_events(&rev_frames, 0.2, 0, 1000, ReferenceMode::ResetPerPair)
                .unwrap();
        let hf = events_to_histogram(&fwd, 0, u64::MAX).unwrap();
        let hr = events_to_histogram(&rev, 0, u64::MAX).unwrap();
        assert_eq!(hf.polarity_swap(), hr, "trial {trial}");
    }
}

#[test]
fn oracle_carry_mode_accumulates_residual() {
    // three +0.15 steps with C = 0.2: carry mode crosses the threshold twice,
    // reset mode never does
    let frames: Vec<Image<f64>> = (0..4).map(|i| Image::full(1, 1, 0.15 * i as f64)).collect();
    let carry = oracle_simulate_events(&frames, 0.2, 0, 1000, ReferenceMode::Carry).unwrap();
    assert_eq!(carry.len(), 2);
    let reset =
        oracle_simulate_events(&frames, 0.2, 0, 1000, ReferenceMode::ResetPerPair).unwrap();
    assert_eq!(reset.len(), 0);
}

#[test]
fn window_histogram_matches_filter_loop_and_is_additive() {
    let mut rng = ChaCha12Rng::seed_from_u64(300);
    let frames: Vec<Image<f64>> = (0..6).map(|_| random_image(&mut rng, 6, 6, 1.2)).collect();
    let stream = oracle_simulate_events(&frames, 0.2, 100, 1000, ReferenceMode::Carry).unwrap();
    assert!(!stream.is_empty());
    let mid = 100 + 2500;
    let left = events_to_histogram(&stream, 0, mid).unwrap();
    let right = events_to_histogram(&stream, mid, 10_000).unwrap();
    let both = events_to_histogram(&stream, 0, 10_000).unwrap();
    assert_eq!(accumulate_histograms(&[left.clone(), right]).unwrap(), both);

    // brute-force filter-then-count for the left window
    let mut expect = EventHistogram::zeros(6, 6);
    for e in stream.events() {
        if e.t < mid {
            let ch = match e.polarity {
                evhand_event::Polarity::Positive => POSITIVE,
                evhand_event::Polarity::Negative => NEGATIVE,
            };
            expect.add(e.y as usize, e.x as usize, ch, 1);
        }
    }
    assert_eq!(left, expect);
}

#[test]
fn event_file_round_trip() {
    let mut rng = ChaCha12Rng::seed_from_u64(400);
    let frames: Vec<Image<f64>> = (0..4).map(|_| random_image(&mut rng, 5, 7, 1.0)).collect();
    let stream = oracle_simulate_events(&frames, 0.15, 50, 2000, ReferenceMode::Carry).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.evst");
    io::write_event_file(&path, &stream).unwrap();
    let back = io::read_event_file(&path).unwrap();
    assert_eq!(back, stream);
    // 16-byte header + 16 bytes per record, exactly
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(bytes.len(), 16 + 16 * stream.len());
    assert_eq!(&bytes[0..4], b"EVST");
}

#[test]
fn dense_array_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pose.darr");
    let t = evhand_tensor::Tensor::<f64>::from_f64_slice(&[2, 3], &[1.5, -2.0, 0.25, 3.0, 0.0, -1.0])
        .unwrap();
    io::write_array(&path, "pose", &t).unwrap();
    let (name, back) = io::read_array::<f64>(&path).unwrap();
    assert_eq!(name, "pose");
    assert_eq!(back.shape(), &[2, 3]);
    assert_eq!(back.data(), t.data());
}
