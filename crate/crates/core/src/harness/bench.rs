//! Side-by-side cost and accuracy of the decision schemes of one bank.

use std::fmt::{self, Write as _};

use super::dataset::Dataset;
use super::evaluate_bank;
use crate::error::Result;
use crate::metrics::KappaReport;
use crate::multiclass::{EvalOptions, MulticlassSvmModel, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountingMode {
    /// Every machine evaluates its own support-vector expansion.
    PerMachine,
    /// Kernel values of support vectors shared between machines are reused.
    Shared,
    /// Linear machines collapsed to `θ·x + b`.
    Compact,
}

impl fmt::Display for CountingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CountingMode::PerMachine => "per-machine",
            CountingMode::Shared => "shared",
            CountingMode::Compact => "compact",
        })
    }
}

impl CountingMode {
    fn options(self) -> EvalOptions {
        match self {
            CountingMode::PerMachine => EvalOptions::default(),
            CountingMode::Shared => EvalOptions::shared(),
            CountingMode::Compact => EvalOptions::compact(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SchemeBenchmark {
    pub scheme: Scheme,
    pub kappa: Option<KappaReport>,
    pub accuracy: f64,
    pub avg_machine_evaluations: f64,
    /// Average vector evaluations per decision for each counting mode.
    pub avg_vector_evaluations: Vec<(CountingMode, f64)>,
    pub predictions: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub classes: usize,
    pub test_samples: usize,
    pub unique_sv_total: usize,
    pub total_sv: usize,
    pub schemes: Vec<SchemeBenchmark>,
}

impl BenchmarkReport {
    pub fn scheme(&self, scheme: Scheme) -> Option<&SchemeBenchmark> {
        self.schemes.iter().find(|s| s.scheme == scheme)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "classes = {}", self.classes);
        let _ = writeln!(out, "test_samples = {}", self.test_samples);
        let _ = writeln!(out, "unique_sv_total = {}", self.unique_sv_total);
        let _ = writeln!(out, "total_sv = {}", self.total_sv);
        for s in &self.schemes {
            let p = format!("{}.", s.scheme);
            match &s.kappa {
                Some(k) => {
                    let _ = writeln!(out, "{p}kappa = {}", k.kappa);
                    let _ = writeln!(out, "{p}kappa_ci = {}", k.ci95_half_width);
                    let _ = writeln!(out, "{p}kappa_variance = {}", k.variance);
                }
                None => {
                    let _ = writeln!(out, "{p}kappa = undefined");
                }
            }
            let _ = writeln!(out, "{p}accuracy = {}", s.accuracy);
            let _ = writeln!(out, "{p}avg_machine_evaluations = {}", s.avg_machine_evaluations);
            for (mode, v) in &s.avg_vector_evaluations {
                let _ = writeln!(out, "{p}avg_vector_evaluations.{mode} = {v}");
            }
        }
        out
    }
}

/// Evaluates every test point under each scheme the bank supports, counting
/// vector evaluations per machine, shared, and (for linear banks) compact.
pub fn benchmark_decision_schemes(model: &MulticlassSvmModel, test: &Dataset) -> Result<BenchmarkReport> {
    crate::error::check_dim(model.dimension(), test.dimension())?;
    let schemes: &[Scheme] = if model.is_one_vs_all() { &[Scheme::OneVsAll] } else { &[Scheme::Ddag, Scheme::Voting] };
    let linear = model.machines().iter().all(|m| m.kernel().is_linear());
    let mut modes = vec![CountingMode::PerMachine, CountingMode::Shared];
    if linear {
        modes.push(CountingMode::Compact);
    }
    let mut out = Vec::new();
    for &scheme in schemes {
        let base = evaluate_bank(model, test, scheme, CountingMode::PerMachine.options())?;
        let mut vectors = vec![(CountingMode::PerMachine, base.avg_vector_evaluations)];
        for &mode in &modes[1..] {
            let e = evaluate_bank(model, test, scheme, mode.options())?;
            debug_assert_eq!(e.predictions, base.predictions);
            vectors.push((mode, e.avg_vector_evaluations));
        }
        out.push(SchemeBenchmark {
            scheme,
            kappa: base.kappa,
            accuracy: base.recall.accuracy,
            avg_machine_evaluations: base.avg_machine_evaluations,
            avg_vector_evaluations: vectors,
            predictions: base.predictions,
        });
    }
    Ok(BenchmarkReport {
        classes: model.class_count(),
        test_samples: test.len(),
        unique_sv_total: model.unique_support_vectors(),
        total_sv: model.total_support_vectors(),
        schemes: out,
    })
}
