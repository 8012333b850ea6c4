//! Sequential Minimal Optimization for the soft-margin dual
//!
//! ```text
//! max  Σ αᵢ - ½ Σᵢⱼ αᵢ αⱼ yᵢ yⱼ k(xᵢ, xⱼ)
//! s.t. 0 ≤ αᵢ ≤ C,  Σ αᵢ yᵢ = 0
//! ```
//!
//! The outer loop alternates a sweep over all samples with sweeps over the
//! unbounded multipliers, as in Platt's SMO. Optimality uses two thresholds
//! (Keerthi et al.) instead of a single running bias: `b_up` is the smallest
//! `fᵢ - yᵢ` over points that may move up and `b_low` the largest over points
//! that may move down. The partner of an examined point is whichever threshold
//! point it violates most, with seeded random scans as the fallback. The bias
//! is set between the thresholds once they agree within `2·tol`. The solver
//! keeps `fᵢ = Σⱼ αⱼ yⱼ k(xⱼ, xᵢ)` for every sample, so residuals and the dual
//! objective are available in O(n).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cache::KernelRows;
use super::{BinarySvmModel, TrainingStats};
use crate::error::{check_dim, check_finite, Error, Result};
use crate::kernels::KernelSpec;

pub const DEFAULT_KKT_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_CACHE_ROWS: usize = 1024;

/// Relative size below which a multiplier update counts as no progress.
const STEP_EPS: f64 = 1e-10;
/// Second-stage tolerance relative to the requested one.
const POLISH_FACTOR: f64 = 1e-3;
/// Multipliers this close (relative to C) to a bound are snapped onto it.
const BOUND_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SmoConfig {
    /// Regularization weight C.
    pub c_reg: f64,
    pub kernel: KernelSpec,
    pub kkt_tolerance: f64,
    /// Outer-loop pass budget; `None` means `10·n`.
    pub max_passes: Option<usize>,
    pub seed: u64,
    /// Row cache size used when the training set is too large for a full Gram matrix.
    pub cache_rows: usize,
}

impl SmoConfig {
    pub fn new(c_reg: f64, kernel: KernelSpec) -> Self {
        SmoConfig {
            c_reg,
            kernel,
            kkt_tolerance: DEFAULT_KKT_TOLERANCE,
            max_passes: None,
            seed: 0,
            cache_rows: DEFAULT_CACHE_ROWS,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.kkt_tolerance = tol;
        self
    }

    pub fn with_max_passes(mut self, passes: usize) -> Self {
        self.max_passes = Some(passes);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_reg.is_finite() && self.c_reg > 0.0) {
            return Err(Error::param("c_reg", format!("must be finite and > 0, got {}", self.c_reg)));
        }
        if !(self.kkt_tolerance > 0.0 && self.kkt_tolerance < 1.0) {
            return Err(Error::param("kkt_tolerance", "must lie in (0, 1)"));
        }
        if self.max_passes == Some(0) {
            return Err(Error::param("max_passes", "must be positive"));
        }
        self.kernel.validate()
    }
}

/// Raw solver output over all training points.
#[derive(Debug, Clone)]
pub struct SmoSolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    pub passes: usize,
    /// Dual objective recorded at the end of every outer pass.
    pub objective_trace: Vec<f64>,
}

/// Trains a binary soft-margin SVM. Labels must be exactly `-1` or `+1`.
pub fn smo_train<S: AsRef<[f64]>>(samples: &[S], labels: &[i32], config: &SmoConfig) -> Result<BinarySvmModel> {
    let solution = smo_solve(samples, labels, config)?;
    Ok(solution_to_model(samples, labels, config, solution))
}

pub(crate) fn solution_to_model<S: AsRef<[f64]>>(
    samples: &[S],
    labels: &[i32],
    config: &SmoConfig,
    sol: SmoSolution,
) -> BinarySvmModel {
    let dimension = samples[0].as_ref().len();
    let mut support_vectors = Vec::new();
    let mut coefficients = Vec::new();
    let mut support_indices = Vec::new();
    for (i, &a) in sol.alphas.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(samples[i].as_ref().to_vec());
            coefficients.push(a * labels[i] as f64);
            support_indices.push(i);
        }
    }
    let stats = TrainingStats {
        iterations: sol.iterations,
        passes: sol.passes,
        dual_objective: sol.dual_objective,
        objective_trace: sol.objective_trace,
        c_reg: config.c_reg,
        kkt_tolerance: config.kkt_tolerance,
        support_indices,
    };
    BinarySvmModel {
        support_vectors,
        coefficients,
        bias: sol.bias,
        kernel: config.kernel,
        dimension,
        training: Some(stats),
    }
}

/// Runs the solver and returns the full multiplier vector.
pub fn smo_solve<S: AsRef<[f64]>>(samples: &[S], labels: &[i32], config: &SmoConfig) -> Result<SmoSolution> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidInput("no training samples".into()));
    }
    check_dim(samples.len(), labels.len())?;
    let dim = samples[0].as_ref().len();
    if dim == 0 {
        return Err(Error::InvalidInput("samples must have dimension >= 1".into()));
    }
    for s in samples {
        check_dim(dim, s.as_ref().len())?;
        check_finite(s.as_ref())?;
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 1 && y != -1) {
        return Err(Error::InvalidInput(format!("binary labels must be -1 or +1, got {bad}")));
    }
    let has_pos = labels.contains(&1);
    let has_neg = labels.contains(&-1);
    if !(has_pos && has_neg) {
        return Err(Error::SingleClass);
    }

    let mut solver = Solver::new(samples, labels, config);
    solver.run()
}

struct Solver<'a, S> {
    rows: KernelRows<'a, S>,
    y: Vec<f64>,
    alpha: Vec<f64>,
    f: Vec<f64>,
    b: f64,
    c: f64,
    tol: f64,
    max_passes: usize,
    rng: ChaCha8Rng,
    iterations: usize,
}

impl<'a, S: AsRef<[f64]>> Solver<'a, S> {
    fn new(samples: &'a [S], labels: &[i32], config: &SmoConfig) -> Self {
        let n = samples.len();
        Solver {
            rows: KernelRows::new(samples, config.kernel, config.cache_rows),
            y: labels.iter().map(|&l| l as f64).collect(),
            alpha: vec![0.0; n],
            f: vec![0.0; n],
            b: 0.0,
            c: config.c_reg,
            tol: config.kkt_tolerance,
            max_passes: config.max_passes.unwrap_or(10 * n),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            iterations: 0,
        }
    }

    #[inline]
    fn is_free(&self, i: usize) -> bool {
        self.alpha[i] > 0.0 && self.alpha[i] < self.c
    }

    fn objective(&self) -> f64 {
        let mut sum_alpha = 0.0;
        let mut quad = 0.0;
        for i in 0..self.alpha.len() {
            sum_alpha += self.alpha[i];
            quad += self.alpha[i] * self.y[i] * self.f[i];
        }
        sum_alpha - 0.5 * quad
    }

    fn run(&mut self) -> Result<SmoSolution> {
        let mut trace = Vec::new();
        let mut passes = 0;
        let tol = self.tol;
        if !self.converge(&mut passes, &mut trace) {
            return Err(Error::NotConverged { passes, best_objective: self.objective() });
        }

        // Tolerance-level KKT leaves the objective loose on flat ridges of the
        // dual. Polish with a much tighter tolerance while budget remains and
        // keep the result only if it still meets the requested one.
        let snapshot = (self.alpha.clone(), self.f.clone(), self.b, self.iterations);
        self.tol = tol * POLISH_FACTOR;
        let polished = self.converge(&mut passes, &mut trace);
        self.tol = tol;
        if !polished {
            self.b = self.midpoint_bias();
            if self.max_violation(self.b) > tol {
                (self.alpha, self.f, self.b, self.iterations) = snapshot;
            }
        }

        Ok(SmoSolution {
            dual_objective: self.objective(),
            alphas: self.alpha.clone(),
            bias: self.b,
            iterations: self.iterations,
            passes,
            objective_trace: trace,
        })
    }

    fn midpoint_bias(&self) -> f64 {
        let (b_up, _, b_low, _) = self.thresholds();
        -0.5 * (b_up + b_low)
    }

    /// Alternates full and unbounded sweeps until a full sweep finds no
    /// violator at the current tolerance. False when the pass budget runs out.
    fn converge(&mut self, passes: &mut usize, trace: &mut Vec<f64>) -> bool {
        let n = self.alpha.len();
        let mut examine_all = true;
        let mut num_changed = 0;
        loop {
            if num_changed == 0 && !examine_all {
                self.b = self.midpoint_bias();
                if self.max_violation(self.b) <= self.tol {
                    return true;
                }
                examine_all = true;
            }
            if *passes >= self.max_passes {
                return false;
            }
            *passes += 1;

            num_changed = 0;
            for i in 0..n {
                if examine_all || self.is_free(i) {
                    num_changed += self.examine(i) as usize;
                }
            }
            trace.push(self.objective());

            if examine_all {
                examine_all = false;
            } else if num_changed == 0 {
                examine_all = true;
            }
        }
    }

    /// Largest KKT violation over all samples for a given bias.
    fn max_violation(&self, b: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.alpha.len() {
            let r = self.y[i] * (self.f[i] + b) - 1.0;
            if self.alpha[i] < self.c {
                worst = worst.max(-r);
            }
            if self.alpha[i] > 0.0 {
                worst = worst.max(r);
            }
        }
        worst
    }

    /// `f(x_i) - y_i` without the bias term.
    #[inline]
    fn residual(&self, i: usize) -> f64 {
        self.f[i] - self.y[i]
    }

    /// Points whose multiplier may still move so as to raise `y_i f(x_i)`.
    #[inline]
    fn in_up(&self, i: usize) -> bool {
        if self.y[i] > 0.0 {
            self.alpha[i] < self.c
        } else {
            self.alpha[i] > 0.0
        }
    }

    #[inline]
    fn in_low(&self, i: usize) -> bool {
        if self.y[i] > 0.0 {
            self.alpha[i] > 0.0
        } else {
            self.alpha[i] < self.c
        }
    }

    /// `(b_up, i_up, b_low, i_low)`: the smallest residual over the up set and
    /// the largest over the low set. The multipliers are optimal within `tol`
    /// exactly when `b_low <= b_up + 2 tol`. Ties go to the lower index.
    fn thresholds(&self) -> (f64, usize, f64, usize) {
        let (mut b_up, mut i_up) = (f64::INFINITY, usize::MAX);
        let (mut b_low, mut i_low) = (f64::NEG_INFINITY, usize::MAX);
        for i in 0..self.alpha.len() {
            let r = self.residual(i);
            if self.in_up(i) && r < b_up {
                b_up = r;
                i_up = i;
            }
            if self.in_low(i) && r > b_low {
                b_low = r;
                i_low = i;
            }
        }
        (b_up, i_up, b_low, i_low)
    }

    /// Tries to make progress on `i2`. The partner is the threshold point that
    /// violates optimality with `i2` the most; Platt's scans are the fallback.
    fn examine(&mut self, i2: usize) -> bool {
        let r2 = self.residual(i2);
        let (b_up, i_up, b_low, i_low) = self.thresholds();
        let low_gap = if self.in_up(i2) { b_low - r2 } else { f64::NEG_INFINITY };
        let up_gap = if self.in_low(i2) { r2 - b_up } else { f64::NEG_INFINITY };
        if low_gap.max(up_gap) <= 2.0 * self.tol {
            return false;
        }
        let partner = if low_gap >= up_gap { i_low } else { i_up };
        if self.take_step(partner, i2) {
            return true;
        }

        let n = self.alpha.len();
        let free: Vec<usize> = (0..n).filter(|&i| i != i2 && self.is_free(i)).collect();
        if !free.is_empty() {
            let start = self.rng.random_range(0..free.len());
            for k in 0..free.len() {
                if self.take_step(free[(start + k) % free.len()], i2) {
                    return true;
                }
            }
        }
        let start = self.rng.random_range(0..n);
        for k in 0..n {
            if self.take_step((start + k) % n, i2) {
                return true;
            }
        }
        false
    }

    fn snap(&self, a: f64) -> f64 {
        let eps = BOUND_EPS * self.c.max(1.0);
        if a < eps {
            0.0
        } else if a > self.c - eps {
            self.c
        } else {
            a
        }
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1_old, a2_old) = (self.alpha[i1], self.alpha[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (e1, e2) = (self.residual(i1), self.residual(i2));
        let s = y1 * y2;
        let c = self.c;

        let (lo, hi) = if s < 0.0 {
            ((a2_old - a1_old).max(0.0), (c + a2_old - a1_old).min(c))
        } else {
            ((a1_old + a2_old - c).max(0.0), (a1_old + a2_old).min(c))
        };
        if lo >= hi {
            return false;
        }

        let row1 = self.rows.row(i1);
        let row2 = self.rows.row(i2);
        let k11 = self.rows.diag(i1);
        let k22 = self.rows.diag(i2);
        let k12 = row1[i2];
        let eta = k11 + k22 - 2.0 * k12;

        let a2 = if eta > 0.0 {
            (a2_old + y2 * (e1 - e2) / eta).clamp(lo, hi)
        } else {
            // Objective along the constraint line is convex here; take the better end.
            let slope = y2 * (e1 - e2);
            let gain = |t: f64| slope * t - 0.5 * eta * t * t;
            if gain(hi - a2_old) > gain(lo - a2_old) {
                hi
            } else {
                lo
            }
        };
        let a2 = self.snap(a2);
        if (a2 - a2_old).abs() < STEP_EPS * (a2 + a2_old + STEP_EPS) {
            return false;
        }
        let a1 = self.snap((a1_old + s * (a2_old - a2)).clamp(0.0, c));

        let d1 = y1 * (a1 - a1_old);
        let d2 = y2 * (a2 - a2_old);
        for (i, fi) in self.f.iter_mut().enumerate() {
            *fi += d1 * row1[i] + d2 * row2[i];
        }
        self.alpha[i1] = a1;
        self.alpha[i2] = a2;
        self.iterations += 1;
        true
    }
}
