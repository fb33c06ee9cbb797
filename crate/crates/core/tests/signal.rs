mod common;

use common::oracles;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semgkit::signal::*;

#[test]
fn window_starts_match_enumeration_everywhere() {
    // For each (W, S) the oracle grows T one sample at a time: a new window
    // appears exactly when T - W lands on a multiple of S.
    for window in 1..=200usize {
        for stride in 1..=window {
            let mut starts: Vec<usize> = Vec::new();
            for total in 0..=1000usize {
                if total >= window && (total - window) % stride == 0 {
                    starts.push(total - window);
                }
                assert_eq!(
                    window_count(total, window, stride),
                    starts.len(),
                    "T={total} W={window} S={stride}"
                );
                assert!(
                    window_starts(total, window, stride).eq(starts.iter().copied()),
                    "T={total} W={window} S={stride}"
                );
            }
        }
    }
}

#[test]
fn segment_windows_match_enumeration_on_a_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for total in (0..=1000).step_by(37) {
        let samples: Vec<f64> = (0..2 * total).map(|_| rng.random_range(-1.0..1.0)).collect();
        let signal = RawSignal::new(2, 1000.0, samples).unwrap();
        for window in (1..=200).step_by(13) {
            for stride in (1..=window).step_by(7) {
                let spec = WindowSpec {
                    window_ms: window as f64,
                    overlap_ms: (window - stride) as f64,
                };
                let got = segment_windows(&signal, &spec).unwrap();
                let want = oracles::window_starts(total, window, stride);
                assert_eq!(got.len(), want.len());
                for (w, &s) in got.iter().zip(&want) {
                    assert_eq!(w.start, s);
                    for c in 0..2 {
                        assert_eq!(w.data.channel(c), &signal.channel(c)[s..s + window]);
                    }
                }
            }
        }
    }
}

#[test]
fn five_second_gesture_yields_98_windows() {
    let signal = RawSignal::zeros(10, 5000, 1000.0);
    let spec = WindowSpec {
        window_ms: 150.0,
        overlap_ms: 100.0,
    };
    assert_eq!(segment_windows(&signal, &spec).unwrap().len(), 98);
}

#[test]
fn bandpass_matches_analytic_butterworth() {
    let spec = FilterSpec::default();
    let coeffs = design_bandpass(&spec).unwrap();
    let oracle =
        |f: f64| oracles::butterworth_bandpass_gain(f, spec.low_cut, spec.high_cut, spec.order, spec.sample_rate);
    let at_250 = coeffs.gain_at(250.0);
    assert!((at_250 - 1.0).abs() < 0.01, "gain at 250 Hz {at_250}");
    assert!((at_250 - oracle(250.0)).abs() < 1e-9);
    assert!(coeffs.gain_at(0.0) <= 1e-6);
    for i in 1..500 {
        let f = i as f64;
        let (got, want) = (coeffs.gain_at(f), oracle(f));
        assert!((got - want).abs() < 1e-9, "{f} Hz: {got} vs {want}");
    }
}

#[test]
fn bandpass_matches_oracle_for_other_designs() {
    for (low, high, order, fs) in [(10.0, 100.0, 2, 500.0), (5.0, 40.0, 3, 200.0), (20.0, 450.0, 6, 1000.0)] {
        let spec = FilterSpec {
            low_cut: low,
            high_cut: high,
            order,
            sample_rate: fs,
        };
        let coeffs = design_bandpass(&spec).unwrap();
        for i in 1..100 {
            let f = fs / 2.0 * i as f64 / 100.0;
            let want = oracles::butterworth_bandpass_gain(f, low, high, order, fs);
            assert!((coeffs.gain_at(f) - want).abs() < 1e-8, "{spec:?} at {f} Hz");
        }
    }
}

#[test]
fn filtering_is_causal() {
    let coeffs = design_bandpass(&FilterSpec::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = (0..400).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut y = x.clone();
    for v in &mut y[250..] {
        *v += 5.0;
    }
    let (fx, fy) = (filter_channel(&coeffs, &x), filter_channel(&coeffs, &y));
    assert_eq!(fx[..250], fy[..250]);
    assert_ne!(fx[250], fy[250]);
}

fn cloud(seed: u64, n: usize, d: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mix: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            (0..d)
                .map(|i| (0..d).map(|j| mix[i][j] * z[j]).sum::<f64>() + 3.0)
                .collect()
        })
        .collect()
}

#[test]
fn msa_matches_jacobi_oracle() {
    for seed in 0..40 {
        let d = 1 + seed as usize % 10;
        let rows = cloud(seed, d + 1 + seed as usize * 3, d);
        let got = msa(&rows).unwrap();
        assert!(!got.degenerate);
        let want = oracles::msa(&rows);
        assert!(
            (got.value - want).abs() <= 1e-9 * want.max(1.0),
            "seed {seed}: {} vs {want}",
            got.value
        );
    }
}

#[test]
fn msa_flags_rank_deficient_clouds() {
    // every point on a line in 3-D
    let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 2.0 * i as f64, -(i as f64)]).collect();
    let m = msa(&rows).unwrap();
    assert!(m.degenerate);
    assert_eq!(m.value, 0.0);
    assert!(msa(&rows[..3]).is_err());
}

proptest! {
    #[test]
    fn mav_is_scale_equivariant(seed in 0u64..1000, factor in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<f64> = (0..3 * 50).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = RawSignal::new(3, 1000.0, samples).unwrap();
        let base = mav(&s).unwrap();
        let scaled = mav(&s.scaled(factor)).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            prop_assert!((b - factor * a).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn msa_scales_linearly(seed in 0u64..1000, factor in 0.1f64..10.0) {
        let rows = cloud(seed, 30, 4);
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * factor).collect()).collect();
        let (a, b) = (msa(&rows).unwrap().value, msa(&scaled).unwrap().value);
        prop_assert!((b - factor * a).abs() <= 1e-9 * b);
    }

    #[test]
    fn msa_ignores_translation(seed in 0u64..1000, shift in -100.0f64..100.0) {
        let rows = cloud(seed, 25, 3);
        let moved: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v + shift).collect()).collect();
        let (a, b) = (msa(&rows).unwrap().value, msa(&moved).unwrap().value);
        prop_assert!((a - b).abs() <= 1e-8 * a);
    }
}
