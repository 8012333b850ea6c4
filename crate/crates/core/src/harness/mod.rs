//! Experiment orchestration: datasets, grid search, MLP sweeps, decision
//! scheme benchmarks and configuration.

mod bench;
mod config;
mod dataset;
mod grid;
mod sweep;

pub use bench::{benchmark_decision_schemes, BenchmarkReport, CountingMode, SchemeBenchmark};
pub use config::{ConfigValues, ENV_PREFIX};
pub use dataset::{
    load_csv_dataset, make_synthetic_blobs, make_xor, preprocess_directory, read_csv_dataset, split_half,
    split_half_indices, Dataset,
};
pub use grid::{
    default_c_ladder, evaluate_cell, grid_search_svm, surface_csv, write_surface_csv, GridSpec, GridSurfaceRow,
    Sigma2Axis, SURFACE_HEADER,
};
pub use sweep::{
    evaluate_mlp, hidden_size_sweep, InitScheme, SweepConfig, SweepReport, SweepRun, SweepSummary, RUN_HEADER,
    SUMMARY_HEADER,
};

use crate::error::{Error, Result};
use crate::metrics::{
    accuracy_and_per_class_recall, build_confusion, cohen_kappa, ConfusionMatrix, KappaReport, RecallReport,
};
use crate::multiclass::{EvalOptions, MulticlassSvmModel, Scheme};

/// Predictions of one model over a dataset together with their scores.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub predictions: Vec<usize>,
    pub confusion: ConfusionMatrix,
    /// `None` when κ is undefined for the confusion matrix.
    pub kappa: Option<KappaReport>,
    pub recall: RecallReport,
    pub avg_machine_evaluations: f64,
    pub avg_vector_evaluations: f64,
}

pub(crate) fn score(truth: &[usize], predictions: Vec<usize>, classes: usize) -> Result<Evaluation> {
    let confusion = build_confusion(truth, &predictions, classes)?;
    let kappa = match cohen_kappa(&confusion) {
        Ok(k) => Some(k),
        Err(Error::KappaUndefined) => None,
        Err(e) => return Err(e),
    };
    let recall = accuracy_and_per_class_recall(&confusion);
    Ok(Evaluation { predictions, confusion, kappa, recall, avg_machine_evaluations: 0.0, avg_vector_evaluations: 0.0 })
}

/// Decides every sample with `scheme` and scores the predictions.
pub fn evaluate_bank(
    model: &MulticlassSvmModel,
    data: &Dataset,
    scheme: Scheme,
    opts: EvalOptions,
) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::InvalidInput("evaluation set is empty".into()));
    }
    if data.classes() > model.class_count() {
        return Err(Error::InvalidInput(format!(
            "data has {} classes, model knows {}",
            data.classes(),
            model.class_count()
        )));
    }
    let mut predictions = Vec::with_capacity(data.len());
    let (mut machines, mut vectors) = (0usize, 0usize);
    for x in data.samples() {
        let (class, stats) = model.decide_with(scheme, x, opts)?;
        predictions.push(class);
        machines += stats.machine_evaluations;
        vectors += stats.vector_evaluations;
    }
    let mut eval = score(data.labels(), predictions, model.class_count())?;
    eval.avg_machine_evaluations = machines as f64 / data.len() as f64;
    eval.avg_vector_evaluations = vectors as f64 / data.len() as f64;
    Ok(eval)
}
