mod common;

use common::oracles;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semgkit::evaluation::*;

const TOL: f64 = 1e-12;

/// Paired samples on a coarse grid so ties and zero differences occur.
fn paired(rng: &mut ChaCha8Rng, n: usize, coarse: bool) -> (Vec<f64>, Vec<f64>) {
    let mut draw = || {
        if coarse {
            rng.random_range(0..6) as f64 * 0.25
        } else {
            rng.random_range(0.0..1.0)
        }
    };
    let a: Vec<f64> = (0..n).map(|_| draw()).collect();
    let b: Vec<f64> = (0..n).map(|_| draw()).collect();
    (a, b)
}

#[test]
fn wilcoxon_matches_enumeration_for_small_n() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for n in 1..=12 {
        for case in 0..60 {
            let (a, b) = paired(&mut rng, n, case % 2 == 0);
            let oracle = oracles::wilcoxon(&a, &b);
            match wilcoxon_signed_rank(&a, &b) {
                Ok(w) => {
                    assert!(w.exact);
                    assert_eq!(w.n, oracle.n);
                    assert!((w.w_plus - oracle.w_plus).abs() < TOL);
                    assert!((w.w_minus - oracle.w_minus).abs() < TOL);
                    assert!((w.statistic - oracle.w_plus.min(oracle.w_minus)).abs() < TOL);
                    assert!(
                        (w.p_value - oracle.p_value).abs() < TOL,
                        "{a:?} {b:?}: {} vs {}",
                        w.p_value,
                        oracle.p_value
                    );
                    checked += 1;
                }
                // too few non-zero differences for the test to be defined
                Err(_) => assert!(oracle.n < 5),
            }
        }
    }
    assert!(checked > 300);
}

#[test]
fn wilcoxon_all_positive_five() {
    let w = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5]).unwrap();
    assert_eq!(w.w_plus, 15.0);
    assert_eq!(w.statistic, 0.0);
    assert!((w.p_value - 0.0625).abs() < TOL);
}

#[test]
fn cohens_dz_matches_pairwise_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for n in 2..=12 {
        for case in 0..50 {
            let (a, b) = paired(&mut rng, n, case % 3 == 0);
            let want = oracles::cohens_dz(&a, &b);
            match cohens_dz(&a, &b) {
                Ok(got) => assert!((got - want).abs() <= TOL * want.abs().max(1.0), "{got} vs {want}"),
                Err(_) => assert!(!want.is_finite()),
            }
        }
    }
}

#[test]
fn pearson_matches_pairwise_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for n in 2..=12 {
        for case in 0..50 {
            let (x, y) = paired(&mut rng, n, case % 3 == 0);
            let want = oracles::pearson_r(&x, &y);
            match pearson_r(&x, &y) {
                Ok(got) => assert!((got - want).abs() <= TOL, "{got} vs {want}"),
                Err(_) => assert!(!want.is_finite()),
            }
        }
    }
}

#[test]
fn normal_approximation_beyond_exact_range() {
    let n = WILCOXON_EXACT_MAX_N + 5;
    let a: Vec<f64> = (0..n).map(|i| i as f64 + 1.0).collect();
    let w = wilcoxon_signed_rank(&a, &vec![0.0; n]).unwrap();
    assert!(!w.exact);
    assert!(w.p_value < 1e-5);
}

proptest! {
    #[test]
    fn cohens_dz_is_antisymmetric(a in prop::collection::vec(0.0f64..1.0, 3..20), seed in 0u64..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = a.iter().map(|_| rng.random_range(0.0..1.0)).collect();
        let (ab, ba) = (cohens_dz(&a, &b).unwrap(), cohens_dz(&b, &a).unwrap());
        prop_assert!((ab + ba).abs() < 1e-12 * ab.abs().max(1.0));
    }

    #[test]
    fn wilcoxon_is_symmetric_under_swap(a in prop::collection::vec(0.0f64..1.0, 6..15), seed in 0u64..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = a.iter().map(|_| rng.random_range(0.0..1.0)).collect();
        let (ab, ba) = (wilcoxon_signed_rank(&a, &b).unwrap(), wilcoxon_signed_rank(&b, &a).unwrap());
        prop_assert_eq!(ab.w_plus, ba.w_minus);
        prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
        prop_assert!(ab.p_value > 0.0 && ab.p_value <= 1.0);
    }

    #[test]
    fn pearson_is_bounded_and_scale_free(x in prop::collection::vec(-5.0f64..5.0, 3..30), k in 0.1f64..10.0) {
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v * v + i as f64).collect();
        if let Ok(r) = pearson_r(&x, &y) {
            prop_assert!((-1.0..=1.0).contains(&r));
            let scaled: Vec<f64> = x.iter().map(|v| v * k + 3.0).collect();
            prop_assert!((pearson_r(&scaled, &y).unwrap() - r).abs() < 1e-9);
        }
    }

    #[test]
    fn mid_ranks_sum_to_triangle(v in prop::collection::vec(0u8..5, 1..40)) {
        let values: Vec<f64> = v.iter().map(|&x| x as f64).collect();
        let n = values.len() as f64;
        prop_assert!((mid_ranks(&values).iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
    }
}
