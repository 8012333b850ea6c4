mod common;

use common::*;
use marginflow::svm::{smo_solve, smo_train};
use marginflow::{KernelSpec, SmoConfig};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::Rng;

fn kernel_for(rng: &mut rand_chacha::ChaCha8Rng, gaussian: bool) -> KernelSpec {
    if gaussian {
        KernelSpec::gaussian(rng.random_range(0.1..2.0)).unwrap()
    } else {
        KernelSpec::Linear
    }
}

fn reference_gram(xs: &[Vec<f64>], kernel: KernelSpec) -> Vec<Vec<f64>> {
    match kernel {
        KernelSpec::Linear => gram_matrix(xs, kernel_linear),
        KernelSpec::Gaussian { sigma2 } => gram_matrix(xs, |a, b| kernel_gauss(a, b, sigma2)),
        KernelSpec::Polynomial { .. } => unreachable!(),
    }
}

#[test]
fn smo_matches_projected_gradient_oracle() {
    let mut rng = seeded(2024);
    for case in 0..30 {
        let (xs, ys) = random_binary_set(&mut rng, 10);
        let kernel = kernel_for(&mut rng, case % 2 == 1);
        let c = 10f64.powf(rng.random_range(-1.0..1.0));
        let config = SmoConfig::new(c, kernel).with_seed(case as u64);
        let sol = smo_solve(&xs, &ys, &config).unwrap();
        let y: Vec<f64> = ys.iter().map(|&v| v as f64).collect();
        let oracle = projected_gradient_dual(&reference_gram(&xs, kernel), &y, c, 20_000);
        assert!(
            (sol.dual_objective - oracle.dual_objective).abs() < 1e-4,
            "case {case}: smo {} oracle {}",
            sol.dual_objective,
            oracle.dual_objective
        );
        let model = smo_train(&xs, &ys, &config).unwrap();
        assert!(model.kkt_audit(&xs, &ys, 1e-3).unwrap().passed(), "case {case}");
    }
}

#[test]
fn gram_matrices_are_positive_semidefinite() {
    let mut rng = seeded(5);
    for _ in 0..10 {
        let n = rng.random_range(3..12);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        for kernel in [KernelSpec::Linear, KernelSpec::gaussian(0.7).unwrap(), KernelSpec::polynomial(3, 1.0).unwrap()]
        {
            let g = DMatrix::from_fn(n, n, |i, j| kernel.eval(&xs[i], &xs[j]).unwrap());
            let scale = g.abs().max().max(1.0);
            let min = SymmetricEigen::new(g).eigenvalues.min();
            assert!(min > -1e-9 * scale, "{kernel}: min eigenvalue {min}");
        }
    }
}

#[test]
fn separable_blobs_are_classified_and_sparse() {
    let mut rng = seeded(77);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 0..60 {
        let y = if k % 2 == 0 { 1 } else { -1 };
        xs.push(vec![y as f64 * 2.0 + rng.random_range(-0.5..0.5), rng.random_range(-1.0..1.0)]);
        ys.push(y);
    }
    for kernel in [KernelSpec::Linear, KernelSpec::gaussian(1.0).unwrap()] {
        let model = smo_train(&xs, &ys, &SmoConfig::new(10.0, kernel)).unwrap();
        assert!(model.kkt_audit(&xs, &ys, 1e-3).unwrap().passed());
        for (x, &y) in xs.iter().zip(&ys) {
            assert_eq!(model.decide(x).unwrap(), y);
        }
        assert!(model.support_vector_count() < xs.len() / 2, "{kernel}: {} SVs", model.support_vector_count());
    }
}

#[test]
fn overlapping_classes_respect_box_constraint() {
    let mut rng = seeded(3);
    let xs: Vec<Vec<f64>> = (0..80).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let ys: Vec<i32> = xs.iter().map(|x| if x[0] + 0.3 * rng.random_range(-1.0..1.0) > 0.0 { 1 } else { -1 }).collect();
    let c = 0.5;
    let model = smo_train(&xs, &ys, &SmoConfig::new(c, KernelSpec::gaussian(0.5).unwrap())).unwrap();
    let audit = model.kkt_audit(&xs, &ys, 1e-3).unwrap();
    assert!(audit.passed(), "{audit:?}");
    assert!(model.coefficients().iter().all(|a| a.abs() <= c + 1e-12));
    assert!(model.coefficients().iter().sum::<f64>().abs() < 1e-9);
}

#[test]
fn training_is_deterministic() {
    let mut rng = seeded(11);
    let (xs, ys) = random_binary_set(&mut rng, 10);
    let cfg = SmoConfig::new(1.0, KernelSpec::gaussian(0.5).unwrap()).with_seed(4);
    assert_eq!(smo_train(&xs, &ys, &cfg).unwrap(), smo_train(&xs, &ys, &cfg).unwrap());
}

#[test]
fn flat_ridge_exhausts_default_budget_then_converges() {
    // Four 2-D points under a linear kernel: the rank-2 Gram matrix leaves a
    // ridge whose slope sits just above the tolerance, so pair updates creep.
    let xs = vec![
        vec![0.3774346990245747, 0.773813584782352],
        vec![-0.45753635046586183, -0.7469705434951561],
        vec![-0.22770202758990576, 0.2867218026410696],
        vec![0.7712460365889675, 0.24013356854051215],
    ];
    let ys = vec![-1, 1, -1, 1];
    let cfg = SmoConfig::new(63.117, KernelSpec::Linear);
    match smo_solve(&xs, &ys, &cfg) {
        Err(marginflow::Error::NotConverged { passes, best_objective }) => {
            assert_eq!(passes, 40);
            assert!(best_objective.is_finite());
        }
        other => panic!("expected NotConverged, got {other:?}"),
    }
    let cfg = cfg.with_max_passes(10_000);
    let sol = smo_solve(&xs, &ys, &cfg).unwrap();
    let y: Vec<f64> = ys.iter().map(|&v| v as f64).collect();
    let oracle = projected_gradient_dual(&gram_matrix(&xs, kernel_linear), &y, 63.117, 200_000);
    // KKT within 1e-3 does not pin the objective on a ridge: the gap is the
    // sub-tolerance slope times the ridge length, about 1.5e-3 here.
    let gap = oracle.dual_objective - sol.dual_objective;
    assert!(
        gap > -1e-6 && gap < 1e-3 * oracle.dual_objective,
        "smo {} oracle {}",
        sol.dual_objective,
        oracle.dual_objective
    );
    assert!(smo_train(&xs, &ys, &cfg).unwrap().kkt_audit(&xs, &ys, 1e-3).unwrap().passed());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn solver_invariants(seed in 0u64..10_000, gaussian in any::<bool>(), log_c in -1.0f64..2.0) {
        let mut rng = seeded(seed);
        let (xs, ys) = random_binary_set(&mut rng, 12);
        let kernel = kernel_for(&mut rng, gaussian);
        let c = 10f64.powf(log_c);
        // flat dual ridges in 2-D linear problems can outlast the default budget
        let cfg = SmoConfig::new(c, kernel).with_max_passes(100_000);
        let sol = smo_solve(&xs, &ys, &cfg).unwrap();
        let eq: f64 = sol.alphas.iter().zip(&ys).map(|(a, &y)| a * y as f64).sum();
        prop_assert!(eq.abs() < 1e-9 * c.max(1.0));
        prop_assert!(sol.alphas.iter().all(|&a| (0.0..=c).contains(&a)));
        // dual ascent never decreases the objective
        for w in sol.objective_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0));
        }
        let model = smo_train(&xs, &ys, &cfg).unwrap();
        prop_assert!(model.kkt_audit(&xs, &ys, 1e-3).unwrap().passed());
    }

    #[test]
    fn compact_form_matches_expansion(seed in 0u64..10_000) {
        let mut rng = seeded(seed);
        let (xs, ys) = random_binary_set(&mut rng, 12);
        let model = smo_train(&xs, &ys, &SmoConfig::new(1.0, KernelSpec::Linear)).unwrap();
        let compact = model.compact_linear().unwrap();
        for _ in 0..20 {
            let p = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let (a, b) = (model.output(&p).unwrap(), compact.output(&p).unwrap());
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn text_round_trip_preserves_outputs(seed in 0u64..10_000) {
        let mut rng = seeded(seed);
        let (xs, ys) = random_binary_set(&mut rng, 10);
        let model = smo_train(&xs, &ys, &SmoConfig::new(2.0, KernelSpec::gaussian(0.8).unwrap())).unwrap();
        let back = marginflow::BinarySvmModel::from_text(&model.to_text()).unwrap();
        for x in &xs {
            prop_assert_eq!(model.output(x).unwrap(), back.output(x).unwrap());
        }
    }
}
