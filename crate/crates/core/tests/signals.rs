use std::f64::consts::PI;

use corenet_core::corruption::*;
use corenet_core::metrics::snr_db;
use corenet_core::signal::{normalize_channel, normalize_segment, ComplexSignal};
use corenet_core::waveform::*;
use corenet_core::SEGMENT_LEN;
use proptest::prelude::*;

/// Phase of sample `n` after removing the carrier, wrapped to (-π, π].
fn baseband_phase(s: &ComplexSignal, f0: f64, n: usize) -> f64 {
    let (i, q) = (s.i()[n] as f64, s.q()[n] as f64);
    let c = -2.0 * PI * f0 * n as f64;
    let (re, im) = (i * c.cos() - q * c.sin(), i * c.sin() + q * c.cos());
    im.atan2(re)
}

fn wrapped_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

#[test]
fn barker13_flips_at_chip_boundaries() {
    let f0 = 0.1;
    let spec =
        WaveformSpec { modulation: Modulation::Bpsk, start_freq: f0, params: WaveformParams::Barker { length: 13 }, seed: 0 };
    let s = generate_waveform(&spec).unwrap();
    let code = [1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1];
    // Chip k spans samples with k·1024 <= 13·n < (k+1)·1024.
    let chip = |n: usize| (0..13).rev().find(|&k| 13 * n >= k * SEGMENT_LEN).unwrap();
    let mut flips = Vec::new();
    for n in 0..SEGMENT_LEN {
        let want = if code[chip(n)] < 0 { PI } else { 0.0 };
        assert!(wrapped_diff(baseband_phase(&s, f0, n), want) < 1e-5, "sample {n}");
        if n > 0 && wrapped_diff(baseband_phase(&s, f0, n), baseband_phase(&s, f0, n - 1)) > 3.0 {
            flips.push(n);
        }
    }
    let want_flips: Vec<usize> =
        (1..SEGMENT_LEN).filter(|&n| chip(n) != chip(n - 1) && code[chip(n)] != code[chip(n - 1)]).collect();
    assert_eq!(flips, want_flips);
    assert_eq!(flips.len(), 6);
}

#[test]
fn frank_order4_phase_table() {
    let f0 = 0.2;
    let m = 4;
    let spec = WaveformSpec {
        modulation: Modulation::Frank,
        start_freq: f0,
        params: WaveformParams::Polyphase { order: m },
        seed: 0,
    };
    let s = generate_waveform(&spec).unwrap();
    let per = SEGMENT_LEN / (m * m);
    for n in 0..SEGMENT_LEN {
        let e = n / per;
        let (i, j) = (e / m, e % m);
        let want = 2.0 * PI * (i * j) as f64 / m as f64;
        assert!(wrapped_diff(baseband_phase(&s, f0, n), want) < 1e-5, "sample {n}");
    }
}

#[test]
fn specs_are_deterministic() {
    for m in Modulation::ALL {
        for seed in [0, 1, 99, u64::MAX] {
            assert_eq!(random_spec(m, seed), random_spec(m, seed));
            assert_eq!(generate_waveform(&random_spec(m, seed)).unwrap(), generate_waveform(&random_spec(m, seed)).unwrap());
        }
    }
}

#[test]
fn lfm_instantaneous_frequency_stays_inside_nyquist() {
    let (mut lo, mut hi) = (f64::MAX, f64::MIN);
    for seed in 0..10_000u64 {
        let s = generate_waveform(&random_spec(Modulation::Lfm, seed)).unwrap();
        for n in 1..SEGMENT_LEN {
            let (a, b) = ((s.i()[n - 1] as f64, s.q()[n - 1] as f64), (s.i()[n] as f64, s.q()[n] as f64));
            let re = b.0 * a.0 + b.1 * a.1;
            let im = b.1 * a.0 - b.0 * a.1;
            let f = im.atan2(re) / (2.0 * PI);
            lo = lo.min(f);
            hi = hi.max(f);
        }
    }
    assert!(lo > 0.0 && hi < 0.5, "[{lo}, {hi}]");
}

#[test]
fn costas_hops_have_distinct_differences() {
    for seed in 0..2_000u64 {
        let spec = random_spec(Modulation::Costas, seed);
        let WaveformParams::Hopping { hops, .. } = &spec.params else { panic!("not a hopping spec") };
        let m = hops.len();
        let mut sorted = hops.clone();
        sorted.sort();
        assert_eq!(sorted, (0..m as u8).collect::<Vec<_>>());
        for shift in 1..m {
            let mut seen = std::collections::HashSet::new();
            for k in 0..m - shift {
                assert!(seen.insert(hops[k + shift] as i32 - hops[k] as i32), "seed {seed}");
            }
        }
    }
}

#[test]
fn every_family_validates_and_stays_in_band() {
    for m in Modulation::ALL {
        for seed in 0..200u64 {
            let spec = random_spec(m, seed);
            spec.validate().unwrap();
            let (lo, hi) = spec.frequency_band();
            assert!(lo > 0.0 && hi < 0.5, "{m} seed {seed}");
        }
    }
}

fn tone() -> ComplexSignal {
    generate_waveform(&random_spec(Modulation::P3, 5)).unwrap()
}

#[test]
fn echo_only_disturbance_is_delayed_copy() {
    let s = tone();
    let recipe = CorruptionRecipe {
        active: ArtifactSet::ECHO,
        weights: [0.0, 0.7, 0.0],
        echo_delay: Some(100),
        interference: None,
        target_snr_db: 10.0,
        rng_seed: 1,
    };
    let raw = corrupt(&s, &recipe).unwrap();
    let k = raw.scale * 0.7;
    for c in 0..2 {
        let (r, x) = (raw.corrupted.channel(c), s.channel(c));
        for n in 0..SEGMENT_LEN {
            let d = r[n] as f64 - x[n] as f64;
            if n < 100 {
                assert_eq!(r[n], x[n]);
            } else {
                assert!((d - k * x[n - 100] as f64).abs() < 1e-6, "sample {n}");
            }
        }
    }
    assert!((raw.achieved_snr_db - 10.0).abs() < 1e-3);
}

#[test]
fn awgn_at_zero_db_balances_powers() {
    let s = tone();
    let recipe = CorruptionRecipe {
        active: ArtifactSet::AWGN,
        weights: [0.5, 0.0, 0.0],
        echo_delay: None,
        interference: None,
        target_snr_db: 0.0,
        rng_seed: 3,
    };
    let raw = corrupt(&s, &recipe).unwrap();
    let d: f64 = (0..2)
        .flat_map(|c| {
            let (r, x) = (raw.corrupted.channel(c).to_vec(), s.channel(c).to_vec());
            (0..SEGMENT_LEN).map(move |n| (r[n] as f64 - x[n] as f64).powi(2))
        })
        .sum();
    assert!((10.0 * (s.power() / d).log10()).abs() < 1e-3);
}

#[test]
fn all_three_at_minus_fourteen() {
    let s = tone();
    let recipe = CorruptionRecipe {
        active: ArtifactSet::ALL_SUBSETS[6],
        weights: [0.3, 0.5, 0.9],
        echo_delay: Some(40),
        interference: Some(random_spec(Modulation::Lfm, 8)),
        target_snr_db: -14.0,
        rng_seed: 4,
    };
    assert_eq!(recipe.active.len(), 3);
    let pair = compose_corruption(&s, Modulation::P3, &recipe).unwrap();
    assert!((pair.achieved_snr_db + 14.0).abs() < 1e-3);
    let raw = corrupt(&s, &recipe).unwrap();
    assert!((snr_db(&s, &raw.corrupted) + 14.0).abs() < 1e-3);
}

#[test]
fn recipe_subset_frequencies_are_uniform() {
    let mut counts = [0usize; 8];
    let n = 70_000;
    for seed in 0..n as u64 {
        let r = sample_recipe(seed);
        counts[r.active.bits() as usize] += 1;
        for (k, a) in [ArtifactSet::AWGN, ArtifactSet::ECHO, ArtifactSet::INTERFERENCE].into_iter().enumerate() {
            if !r.active.contains(a) {
                assert_eq!(r.weights[k], 0.0);
            }
        }
        assert_eq!(r, sample_recipe(seed));
    }
    assert_eq!(counts[0], 0);
    for &c in &counts[1..] {
        let f = c as f64 / n as f64;
        assert!((f * 7.0 - 1.0).abs() < 0.02, "subset frequency {f}");
    }
}

#[test]
fn normalization_examples() {
    assert_eq!(normalize_channel(&[0.0, 2.0, 4.0]), (vec![-1.0, 0.0, 1.0], false));
    assert_eq!(normalize_channel(&[-1.0, 0.3, 1.0]), (vec![-1.0, 0.3, 1.0], false));
    assert_eq!(normalize_channel(&[5.0, 5.0, 5.0]), (vec![0.0, 0.0, 0.0], true));
}

fn channel() -> impl Strategy<Value = Vec<f32>> {
    prop_oneof![
        prop::collection::vec(-1e4f32..1e4, SEGMENT_LEN),
        prop::collection::vec(-1e-3f32..1e-3, SEGMENT_LEN),
        (-100f32..100.0).prop_map(|c| vec![c; SEGMENT_LEN]),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn normalized_channels_hit_both_rails(i in channel(), q in channel()) {
        let x = ComplexSignal::new(i.clone(), q.clone()).unwrap();
        let out = normalize_segment(&x);
        for (c, raw) in [i, q].iter().enumerate() {
            let y = out.signal.channel(c);
            let constant = raw.iter().all(|&v| v == raw[0]);
            prop_assert_eq!(out.degenerate[c], constant);
            if constant {
                prop_assert!(y.iter().all(|&v| v == 0.0));
            } else {
                let lo = y.iter().copied().fold(f32::INFINITY, f32::min);
                let hi = y.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                prop_assert_eq!(lo.to_bits(), (-1.0f32).to_bits());
                prop_assert_eq!(hi.to_bits(), 1.0f32.to_bits());
                let amin = raw.iter().position(|&v| v == raw.iter().copied().fold(f32::INFINITY, f32::min)).unwrap();
                let amax = raw.iter().position(|&v| v == raw.iter().copied().fold(f32::NEG_INFINITY, f32::max)).unwrap();
                prop_assert_eq!(y[amin], -1.0);
                prop_assert_eq!(y[amax], 1.0);
            }
        }
    }

    #[test]
    fn corruption_hits_target_snr(seed in any::<u64>(), subset in 0usize..7, snr in -14.0f64..10.0) {
        let policy = RecipePolicy { subsets: vec![ArtifactSet::ALL_SUBSETS[subset]], snr: SnrChoice::Fixed(snr) };
        let recipe = sample_recipe_with(seed, &policy);
        let m = Modulation::ALL[(seed % 12) as usize];
        let clean = generate_waveform(&random_spec(m, seed ^ 0x5a5a)).unwrap();
        let raw = corrupt(&clean, &recipe).unwrap();
        prop_assert!((snr_db(&clean, &raw.corrupted) - snr).abs() < 1e-3);
        let pair = compose_corruption(&clean, m, &recipe).unwrap();
        prop_assert!((pair.achieved_snr_db - snr).abs() < 1e-3);
        prop_assert!(pair.clean.i().iter().chain(pair.corrupted.q()).all(|v| (-1.0..=1.0).contains(v)));
    }
}
