//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use marginflow::neural::{backprop_gradient, batch_mse, init_uniform, Activation};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn kernel_linear(x: &[f64], z: &[f64]) -> f64 {
    x.iter().zip(z).map(|(a, b)| a * b).sum()
}

pub fn kernel_gauss(x: &[f64], z: &[f64], sigma2: f64) -> f64 {
    let d: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d / (2.0 * sigma2)).exp()
}

pub struct QpSolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
    /// `Σα − ½ Σ α_i α_j y_i y_j K_ij`
    pub dual_objective: f64,
}

/// `argmin_a ‖a − v‖` over `{0 ≤ a ≤ c, yᵀa = 0}` by bisection on the
/// multiplier of the equality constraint.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lambda: f64| -> Vec<f64> { v.iter().zip(y).map(|(vi, yi)| (vi - lambda * yi).clamp(0.0, c)).collect() };
    let residual = |lambda: f64| -> f64 { at(lambda).iter().zip(y).map(|(a, yi)| a * yi).sum() };
    let span = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    // residual is nonincreasing in lambda
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Dual soft-margin QP solved by accelerated projected gradient with
/// adaptive restart, using a Gram matrix built here from scratch.
pub fn projected_gradient_dual(gram: &[Vec<f64>], y: &[f64], c: f64, iterations: usize) -> QpSolution {
    let n = y.len();
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * gram[i][j]);
    let lipschitz = SymmetricEigen::new(q.clone()).eigenvalues.max().max(1e-12);
    let step = 1.0 / lipschitz;
    let objective = |a: &[f64]| -> f64 {
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += a[i] * a[j] * q[(i, j)];
            }
        }
        a.iter().sum::<f64>() - 0.5 * quad
    };
    let grad =
        |a: &[f64]| -> Vec<f64> { (0..n).map(|i| (0..n).map(|j| q[(i, j)] * a[j]).sum::<f64>() - 1.0).collect() };

    let mut x = vec![0.0; n];
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut best = objective(&x);
    for _ in 0..iterations {
        let g = grad(&z);
        let v: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - step * gi).collect();
        let next = project(&v, y, c);
        let value = objective(&next);
        if value < best - 1e-15 {
            // restart momentum when the objective decreases
            t = 1.0;
            z = x.clone();
            continue;
        }
        best = value;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = next.iter().zip(&x).map(|(a, b)| a + (t - 1.0) / t_next * (a - b)).collect();
        x = next;
        t = t_next;
    }

    let f: Vec<f64> = (0..n).map(|i| (0..n).map(|j| x[j] * y[j] * gram[i][j]).sum()).collect();
    let eps = 1e-6 * c.max(1.0);
    let free: Vec<usize> = (0..n).filter(|&i| x[i] > eps && x[i] < c - eps).collect();
    let bias = if !free.is_empty() {
        free.iter().map(|&i| y[i] - f[i]).sum::<f64>() / free.len() as f64
    } else {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..n {
            let target = y[i] - f[i];
            let at_upper = x[i] >= c - eps;
            // α = 0 needs y(f+b) ≥ 1; α = C needs y(f+b) ≤ 1
            if (y[i] > 0.0) != at_upper {
                lo = lo.max(target);
            } else {
                hi = hi.min(target);
            }
        }
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo,
            (false, true) => hi,
            _ => 0.0,
        }
    };
    QpSolution { dual_objective: objective(&x), alphas: x, bias }
}

pub fn gram_matrix(samples: &[Vec<f64>], k: impl Fn(&[f64], &[f64]) -> f64) -> Vec<Vec<f64>> {
    samples.iter().map(|a| samples.iter().map(|b| k(a, b)).collect()).collect()
}

/// Small 2-D binary dataset with both labels present.
pub fn random_binary_set(rng: &mut ChaCha8Rng, max_points: usize) -> (Vec<Vec<f64>>, Vec<i32>) {
    let n = rng.random_range(2..=max_points);
    loop {
        let xs: Vec<Vec<f64>> =
            (0..n).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let ys: Vec<i32> = (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
        if ys.contains(&1) && ys.contains(&-1) {
            return (xs, ys);
        }
    }
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Between-class variance maximizer by exhaustive search in exact rationals.
/// Threshold `t` splits the histogram into `≤ t` and `> t`.
pub fn otsu_brute_force(hist: &[u64; 256]) -> Option<u8> {
    use num_bigint::BigInt;
    let total: u64 = hist.iter().sum();
    let mut best: Option<(u8, BigInt, BigInt)> = None;
    for t in 0..=255usize {
        let n0: u64 = hist[..=t].iter().sum();
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let s0: u64 = (0..=t).map(|v| v as u64 * hist[v]).sum();
        let s1: u64 = (t + 1..256).map(|v| v as u64 * hist[v]).sum();
        // w0 w1 (μ0 − μ1)² = (s0 n1 − s1 n0)² / (N² n0 n1); N² is common to all t
        let diff = BigInt::from(s0) * n1 - BigInt::from(s1) * n0;
        let num = &diff * &diff;
        let den = BigInt::from(n0) * n1;
        let better = match &best {
            None => true,
            Some((_, bn, bd)) => &num * bd > bn * &den,
        };
        if better {
            best = Some((t as u8, num, den));
        }
    }
    best.map(|(t, _, _)| t)
}

/// Direct bilinear sample of `img` (row-major, `side × side`) at output pixel
/// `(r, c)` of a 32×32 grid, pixel-center aligned.
pub fn bilinear_reference(img: &[u8], side: usize, r: usize, c: usize) -> f64 {
    let map = |d: usize| -> f64 {
        let p = (d as f64 + 0.5) * side as f64 / 32.0 - 0.5;
        p.max(0.0).min((side - 1) as f64)
    };
    let (y, x) = (map(r), map(c));
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(side - 1), (x0 + 1).min(side - 1));
    let (wy, wx) = (y - y0 as f64, x - x0 as f64);
    let p = |yy: usize, xx: usize| img[yy * side + xx] as f64;
    (1.0 - wy) * ((1.0 - wx) * p(y0, x0) + wx * p(y0, x1)) + wy * ((1.0 - wx) * p(y1, x0) + wx * p(y1, x1))
}

/// Every machine of a trained bank passes the KKT audit at `1e-3`.
pub fn assert_bank_kkt(model: &marginflow::multiclass::MulticlassSvmModel, data: &marginflow::harness::Dataset) {
    for ((i, j), audit) in model.kkt_audit(data.samples(), data.labels(), 1e-3).unwrap() {
        assert!(audit.passed(), "machine ({i}, {j}): {audit:?}");
    }
}

pub fn random_mlp_problem(seed: u64) -> (marginflow::neural::MlpModel, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = seeded(seed);
    let (n, h, m) = (rng.random_range(1..5), rng.random_range(1..6), rng.random_range(1..4));
    let activation = if seed.is_multiple_of(2) { Activation::Sigmoid } else { Activation::BipolarSigmoid };
    let (lo, hi) = activation.range();
    let model = init_uniform((n, h, m), 1.0, activation, seed).unwrap();
    let batch = rng.random_range(1..6);
    let xs = (0..batch).map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let ts = (0..batch).map(|_| (0..m).map(|_| rng.random_range(lo..=hi)).collect()).collect();
    (model, xs, ts)
}

/// Backprop against central differences of the batch MSE.
pub fn finite_difference_check(seed: u64) -> Result<(), String> {
    let (model, xs, ts) = random_mlp_problem(seed);
    let grad = backprop_gradient(&model, &xs, &ts).unwrap();
    let w = model.flat_weights();
    let h = 1e-5;
    for k in 0..w.len() {
        let mut probe = model.clone();
        let mut wp = w.clone();
        wp[k] += h;
        probe.set_flat_weights(&wp).unwrap();
        let up = batch_mse(&probe, &xs, &ts).unwrap();
        wp[k] -= 2.0 * h;
        probe.set_flat_weights(&wp).unwrap();
        let down = batch_mse(&probe, &xs, &ts).unwrap();
        let numeric = (up - down) / (2.0 * h);
        if grad[k].abs() > 1e-8 {
            let rel = (grad[k] - numeric).abs() / grad[k].abs();
            if rel >= 1e-4 {
                return Err(format!("seed {seed} weight {k}: backprop {} numeric {numeric}", grad[k]));
            }
        }
    }
    Ok(())
}
