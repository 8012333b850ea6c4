use marginflow::metrics::*;
use proptest::prelude::*;

fn matrix_strategy() -> impl Strategy<Value = (usize, Vec<u64>)> {
    (2usize..6)
        .prop_flat_map(|c| (Just(c), prop::collection::vec(0u64..50, c * c)))
        .prop_filter("needs defined kappa", |(c, counts)| {
            ConfusionMatrix::from_counts(*c, counts.clone()).is_ok_and(|m| cohen_kappa(&m).is_ok())
        })
}

proptest! {
    #[test]
    fn permutation_invariance((c, counts) in matrix_strategy(), shift in 1usize..5) {
        let m = ConfusionMatrix::from_counts(c, counts.clone()).unwrap();
        let perm: Vec<usize> = (0..c).map(|k| (k + shift) % c).collect();
        let mut permuted = vec![0; c * c];
        for i in 0..c {
            for j in 0..c {
                permuted[perm[i] * c + perm[j]] = counts[i * c + j];
            }
        }
        let p = ConfusionMatrix::from_counts(c, permuted).unwrap();
        let (a, b) = (cohen_kappa(&m).unwrap(), cohen_kappa(&p).unwrap());
        prop_assert!((a.kappa - b.kappa).abs() < 1e-12);
        prop_assert!((a.variance - b.variance).abs() <= 1e-12 * a.variance.max(1e-300));
        prop_assert_eq!(accuracy_and_per_class_recall(&m).accuracy, accuracy_and_per_class_recall(&p).accuracy);
    }

    #[test]
    fn scaling_divides_variance((c, counts) in matrix_strategy(), k in 2u64..20) {
        let m = ConfusionMatrix::from_counts(c, counts.clone()).unwrap();
        let s = ConfusionMatrix::from_counts(c, counts.iter().map(|v| v * k).collect()).unwrap();
        let (a, b) = (cohen_kappa(&m).unwrap(), cohen_kappa(&s).unwrap());
        prop_assert!((a.kappa - b.kappa).abs() < 1e-12);
        prop_assert!((a.p_observed - b.p_observed).abs() < 1e-15);
        prop_assert!((a.p_chance - b.p_chance).abs() < 1e-15);
        prop_assert!((a.variance / k as f64 - b.variance).abs() <= 1e-12 * a.variance.max(1e-300));
    }

    #[test]
    fn ci_matches_variance((c, counts) in matrix_strategy()) {
        let r = cohen_kappa(&ConfusionMatrix::from_counts(c, counts).unwrap()).unwrap();
        if r.variance > 0.0 {
            prop_assert!((r.ci95_half_width.powi(2) / r.variance - 1.96f64.powi(2)).abs() < 1e-12);
        }
        prop_assert!(r.kappa <= 1.0 && r.kappa >= -1.0);
        prop_assert_eq!(r.kappa == 1.0, r.p_observed == 1.0);
    }

    #[test]
    fn z_test_antisymmetry(k1 in -1.0f64..1.0, k2 in -1.0f64..1.0, v1 in 1e-8f64..1e-2, v2 in 1e-8f64..1e-2) {
        let a = kappa_z_test((k1, v1), (k2, v2), 0.05).unwrap();
        let b = kappa_z_test((k2, v2), (k1, v1), 0.05).unwrap();
        prop_assert_eq!(a.z, -b.z);
        prop_assert_eq!(a.significant, b.significant);
    }

    #[test]
    fn confusion_conserves_count(pairs in prop::collection::vec((0usize..7, 0usize..7), 1..1000)) {
        let (t, p): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let m = build_confusion(&t, &p, 7).unwrap();
        prop_assert_eq!(m.total() as usize, t.len());
    }
}

#[test]
fn thousand_label_tally() {
    let truth: Vec<usize> = (0..1000).map(|i| i % 4).collect();
    let pred: Vec<usize> = (0..1000).map(|i| (i * 7 / 3) % 4).collect();
    let m = build_confusion(&truth, &pred, 4).unwrap();
    assert_eq!(m.total(), 1000);
    assert_eq!((0..4).map(|k| m.row_total(k)).sum::<u64>(), 1000);
}

#[test]
fn inverse_normal_matches_bisection_of_erf_free_cdf() {
    // reference CDF from a high-order Simpson integration of the density
    fn cdf(z: f64) -> f64 {
        let n = 20_000;
        let (a, b) = (-12.0, z);
        let h = (b - a) / n as f64;
        let f = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }
    for &p in &[0.001, 0.01, 0.025, 0.1, 0.3, 0.5, 0.8, 0.95, 0.975, 0.999] {
        let z = inverse_normal_cdf(p);
        assert!((cdf(z) - p).abs() < 1e-8, "p = {p}: cdf(z) = {}", cdf(z));
    }
}
