//! Hidden-layer size sweeps over initialization schemes and seeds.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;

use super::dataset::Dataset;
use super::{score, Evaluation};
use crate::error::{check_dim, Error, Result};
use crate::neural::{
    init_nguyen_widrow, init_uniform, one_of_c_targets, rprop_train, Activation, MlpModel, RpropConfig, TargetEncoding,
};

pub const RUN_HEADER: &str =
    "hidden,init,seed,kappa,kappa_ci,accuracy,zero_recall_classes,final_mse,epochs,converged,error";
pub const SUMMARY_HEADER: &str =
    "algorithm,init,kappa,kappa_ci,hidden,best_seed,mean_kappa,zero_recall_classes,mean_zero_recall,runs,failed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitScheme {
    Uniform,
    NguyenWidrow,
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitScheme::Uniform => "uniform",
            InitScheme::NguyenWidrow => "nguyen-widrow",
        })
    }
}

impl FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "uniform" => Ok(InitScheme::Uniform),
            "nguyen-widrow" | "nw" => Ok(InitScheme::NguyenWidrow),
            other => Err(Error::InvalidInput(format!("unknown init scheme `{other}`"))),
        }
    }
}

impl InitScheme {
    pub fn build(
        self,
        dims: (usize, usize, usize),
        activation: Activation,
        uniform_range: f64,
        seed: u64,
    ) -> Result<MlpModel> {
        match self {
            InitScheme::Uniform => init_uniform(dims, uniform_range, activation, seed),
            InitScheme::NguyenWidrow => init_nguyen_widrow(dims, activation, seed),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    pub inits: Vec<InitScheme>,
    pub seeds: Vec<u64>,
    pub rprop: RpropConfig,
    pub activation: Activation,
    pub encoding: TargetEncoding,
    pub uniform_range: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            sizes: vec![300, 400, 500, 600, 700],
            inits: vec![InitScheme::Uniform, InitScheme::NguyenWidrow],
            seeds: vec![0, 1, 2],
            rprop: RpropConfig::default(),
            activation: Activation::Sigmoid,
            encoding: TargetEncoding::Softened,
            uniform_range: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub hidden: usize,
    pub init: InitScheme,
    pub seed: u64,
    pub kappa: Option<f64>,
    pub kappa_ci: Option<f64>,
    pub accuracy: Option<f64>,
    pub zero_recall_classes: Option<usize>,
    pub final_mse: Option<f64>,
    pub epochs: usize,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub init: InitScheme,
    pub hidden: usize,
    /// κ and CI of the best seed.
    pub kappa: Option<f64>,
    pub kappa_ci: Option<f64>,
    pub best_seed: Option<u64>,
    pub mean_kappa: Option<f64>,
    pub zero_recall_classes: Option<usize>,
    pub mean_zero_recall: Option<f64>,
    pub runs: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub runs: Vec<SweepRun>,
    pub summaries: Vec<SweepSummary>,
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

impl SweepReport {
    pub fn runs_csv(&self) -> String {
        let mut out = format!("{RUN_HEADER}\n");
        for r in &self.runs {
            let error = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.hidden,
                r.init,
                r.seed,
                opt(&r.kappa),
                opt(&r.kappa_ci),
                opt(&r.accuracy),
                opt(&r.zero_recall_classes),
                opt(&r.final_mse),
                r.epochs,
                r.converged,
                error
            );
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = format!("{SUMMARY_HEADER}\n");
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "ANN,{},{},{},{},{},{},{},{},{},{}",
                s.init,
                opt(&s.kappa),
                opt(&s.kappa_ci),
                s.hidden,
                opt(&s.best_seed),
                opt(&s.mean_kappa),
                opt(&s.zero_recall_classes),
                opt(&s.mean_zero_recall),
                s.runs,
                s.failed
            );
        }
        out
    }
}

/// Classifies every sample by output argmax and scores the predictions.
pub fn evaluate_mlp(model: &MlpModel, data: &Dataset) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::InvalidInput("evaluation set is empty".into()));
    }
    let classes = model.output_dim();
    if data.classes() > classes {
        return Err(Error::InvalidInput(format!("data has {} classes, network has {classes} outputs", data.classes())));
    }
    let predictions = data.samples().iter().map(|x| model.classify(x, classes)).collect::<Result<Vec<_>>>()?;
    score(data.labels(), predictions, classes)
}

fn run_one(
    train: &Dataset,
    validation: &Dataset,
    targets: &[Vec<f64>],
    cfg: &SweepConfig,
    hidden: usize,
    init: InitScheme,
    seed: u64,
) -> SweepRun {
    let mut run = SweepRun {
        hidden,
        init,
        seed,
        kappa: None,
        kappa_ci: None,
        accuracy: None,
        zero_recall_classes: None,
        final_mse: None,
        epochs: 0,
        converged: false,
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let dims = (train.dimension(), hidden, train.classes());
        let start = init.build(dims, cfg.activation, cfg.uniform_range, seed)?;
        let rprop = RpropConfig { seed, ..cfg.rprop.clone() };
        let (model, report) = rprop_train(&start, train.samples(), targets, &rprop)?;
        run.final_mse = Some(report.final_mse);
        run.epochs = report.epochs_run;
        run.converged = report.converged;
        let eval = evaluate_mlp(&model, validation)?;
        run.kappa = eval.kappa.as_ref().map(|k| k.kappa);
        run.kappa_ci = eval.kappa.as_ref().map(|k| k.ci95_half_width);
        run.accuracy = Some(eval.recall.accuracy);
        run.zero_recall_classes = Some(eval.recall.zero_recall_classes());
        Ok(())
    })();
    if let Err(e) = outcome {
        run.error = Some(e.to_string());
    }
    run
}

fn summarize(runs: &[&SweepRun], init: InitScheme, hidden: usize) -> SweepSummary {
    let scored: Vec<&SweepRun> = runs.iter().copied().filter(|r| r.kappa.is_some()).collect();
    let best = scored.iter().copied().fold(None::<&SweepRun>, |acc, r| match acc {
        Some(b) if b.kappa >= r.kappa => Some(b),
        _ => Some(r),
    });
    let mean = |f: &dyn Fn(&SweepRun) -> f64| -> Option<f64> {
        (!scored.is_empty()).then(|| scored.iter().map(|r| f(r)).sum::<f64>() / scored.len() as f64)
    };
    SweepSummary {
        init,
        hidden,
        kappa: best.and_then(|b| b.kappa),
        kappa_ci: best.and_then(|b| b.kappa_ci),
        best_seed: best.map(|b| b.seed),
        mean_kappa: mean(&|r| r.kappa.unwrap_or(0.0)),
        zero_recall_classes: best.and_then(|b| b.zero_recall_classes),
        mean_zero_recall: mean(&|r| r.zero_recall_classes.unwrap_or(0) as f64),
        runs: runs.len(),
        failed: runs.iter().filter(|r| r.error.is_some()).count(),
    }
}

/// Trains one network per (size, init, seed) in parallel. Failed runs are
/// recorded with their error and the sweep continues. Rows are ordered by
/// size, then init, then seed.
pub fn hidden_size_sweep(train: &Dataset, validation: &Dataset, cfg: &SweepConfig) -> Result<SweepReport> {
    if cfg.sizes.is_empty() || cfg.sizes.contains(&0) {
        return Err(Error::param("sizes", "must be nonempty and >= 1"));
    }
    if cfg.inits.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::param("seeds", "need at least one init scheme and one seed"));
    }
    if train.is_empty() || validation.is_empty() {
        return Err(Error::InvalidInput("train and validation sets must be nonempty".into()));
    }
    check_dim(train.dimension(), validation.dimension())?;
    cfg.rprop.validate()?;
    let targets = one_of_c_targets(train.labels(), train.classes(), cfg.activation, cfg.encoding)?;

    let jobs: Vec<(usize, InitScheme, u64)> = cfg
        .sizes
        .iter()
        .flat_map(|&h| cfg.inits.iter().flat_map(move |&i| cfg.seeds.iter().map(move |&s| (h, i, s))))
        .collect();
    let runs: Vec<SweepRun> =
        jobs.par_iter().map(|&(h, i, s)| run_one(train, validation, &targets, cfg, h, i, s)).collect();

    let mut summaries = Vec::new();
    for &h in &cfg.sizes {
        for &init in &cfg.inits {
            let group: Vec<&SweepRun> = runs.iter().filter(|r| r.hidden == h && r.init == init).collect();
            summaries.push(summarize(&group, init, h));
        }
    }
    Ok(SweepReport { runs, summaries })
}
