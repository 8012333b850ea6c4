//! Coarse-to-fine (C, σ²) grid search over one-vs-one Gaussian banks.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::dataset::Dataset;
use super::evaluate_bank;
use crate::error::{Error, Result};
use crate::kernels::{heuristic_sigma2, KernelSpec, DEFAULT_SUBSAMPLE_CAP};
use crate::multiclass::{train_one_vs_one, EvalOptions, Scheme};
use crate::svm::SmoConfig;

pub const SURFACE_HEADER: &str =
    "c_reg,sigma2,kappa,kappa_ci,unique_sv_total,avg_vec_evals_ddag,avg_vec_evals_voting,converged";

#[derive(Debug, Clone, PartialEq)]
pub enum Sigma2Axis {
    Values(Vec<f64>),
    /// `H · 10^k` for `k` in `-decades..=decades`, with `H` from the heuristic.
    AutoCentered {
        decades: i32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub c_values: Vec<f64>,
    pub sigma2: Sigma2Axis,
    pub refine_rounds: usize,
    pub refine_factor: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            c_values: default_c_ladder(),
            sigma2: Sigma2Axis::AutoCentered { decades: 2 },
            refine_rounds: 1,
            refine_factor: 3.0,
        }
    }
}

/// `10^-2, 10^-1, ..., 10^8`.
pub fn default_c_ladder() -> Vec<f64> {
    (-2..=8).map(|e| 10f64.powi(e)).collect()
}

fn check_axis(name: &'static str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::param(name, "must not be empty"));
    }
    if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::param(name, "values must be finite and > 0"));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param(name, "values must be strictly increasing"));
    }
    Ok(())
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        check_axis("c_values", &self.c_values)?;
        match &self.sigma2 {
            Sigma2Axis::Values(v) => check_axis("sigma2_values", v)?,
            Sigma2Axis::AutoCentered { decades } if *decades < 0 => {
                return Err(Error::param("sigma2", "decades must be >= 0"));
            }
            Sigma2Axis::AutoCentered { .. } => {}
        }
        if !(self.refine_factor.is_finite() && self.refine_factor > 1.0) {
            return Err(Error::param("refine_factor", "must be > 1"));
        }
        Ok(())
    }

    pub fn resolve_sigma2(&self, train: &Dataset, seed: u64) -> Result<Vec<f64>> {
        match &self.sigma2 {
            Sigma2Axis::Values(v) => Ok(v.clone()),
            Sigma2Axis::AutoCentered { decades } => {
                let h = heuristic_sigma2(train.samples(), DEFAULT_SUBSAMPLE_CAP, seed)?.sigma2;
                Ok((-decades..=*decades).map(|k| h * 10f64.powi(k)).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSurfaceRow {
    pub c_reg: f64,
    pub sigma2: f64,
    /// Validation κ under DDAG.
    pub kappa: Option<f64>,
    pub kappa_ci: Option<f64>,
    pub kappa_voting: Option<f64>,
    pub unique_sv_total: Option<usize>,
    pub avg_vec_evals_ddag: Option<f64>,
    pub avg_vec_evals_voting: Option<f64>,
    pub converged: bool,
    /// 0 for the coarse pass, then the refinement round.
    pub round: usize,
}

impl GridSurfaceRow {
    pub fn to_csv_row(&self) -> String {
        fn opt<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map(ToString::to_string).unwrap_or_default()
        }
        format!(
            "{},{},{},{},{},{},{},{}",
            self.c_reg,
            self.sigma2,
            opt(&self.kappa),
            opt(&self.kappa_ci),
            opt(&self.unique_sv_total),
            opt(&self.avg_vec_evals_ddag),
            opt(&self.avg_vec_evals_voting),
            self.converged
        )
    }
}

pub fn surface_csv(rows: &[GridSurfaceRow]) -> String {
    let mut out = String::from(SURFACE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.to_csv_row());
    }
    out
}

pub fn write_surface_csv(rows: &[GridSurfaceRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, surface_csv(rows)).map_err(|e| Error::io(path, e))
}

/// Trains and scores one grid cell. Non-convergence is recorded in the row.
pub fn evaluate_cell(
    train: &Dataset,
    validation: &Dataset,
    c_reg: f64,
    sigma2: f64,
    smo: &SmoConfig,
    round: usize,
) -> Result<GridSurfaceRow> {
    let mut config = smo.clone();
    config.c_reg = c_reg;
    config.kernel = KernelSpec::gaussian(sigma2)?;
    let empty = GridSurfaceRow {
        c_reg,
        sigma2,
        kappa: None,
        kappa_ci: None,
        kappa_voting: None,
        unique_sv_total: None,
        avg_vec_evals_ddag: None,
        avg_vec_evals_voting: None,
        converged: false,
        round,
    };
    let model = match train_one_vs_one(train.samples(), train.labels(), train.classes(), &config) {
        Ok(m) => m,
        Err(Error::NotConverged { .. }) => return Ok(empty),
        Err(e) => return Err(e),
    };
    let ddag = evaluate_bank(&model, validation, Scheme::Ddag, EvalOptions::shared())?;
    let voting = evaluate_bank(&model, validation, Scheme::Voting, EvalOptions::shared())?;
    Ok(GridSurfaceRow {
        kappa: ddag.kappa.as_ref().map(|k| k.kappa),
        kappa_ci: ddag.kappa.as_ref().map(|k| k.ci95_half_width),
        kappa_voting: voting.kappa.as_ref().map(|k| k.kappa),
        unique_sv_total: Some(model.unique_support_vectors()),
        avg_vec_evals_ddag: Some(ddag.avg_vector_evaluations),
        avg_vec_evals_voting: Some(voting.avg_vector_evaluations),
        converged: true,
        ..empty
    })
}

/// Log-spacing ratio of an ascending axis around position `at`: the geometric
/// mean of the ratios to its neighbours, or 10 for a single-value axis.
fn local_ratio(axis: &[f64], at: usize) -> f64 {
    let mut ratios = Vec::new();
    if at > 0 {
        ratios.push(axis[at] / axis[at - 1]);
    }
    if at + 1 < axis.len() {
        ratios.push(axis[at + 1] / axis[at]);
    }
    if ratios.is_empty() {
        10.0
    } else {
        (ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64).exp()
    }
}

/// Index of the row with the highest κ; earlier rows win ties.
fn best_row(rows: &[GridSurfaceRow]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in rows.iter().enumerate() {
        if let Some(k) = r.kappa {
            if best.is_none_or(|(_, b)| k > b) {
                best = Some((i, k));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Evaluates every (C, σ²) cell in parallel; rows come back in cell order.
fn run_cells(
    train: &Dataset,
    validation: &Dataset,
    cells: &[(f64, f64)],
    smo: &SmoConfig,
    round: usize,
) -> Result<Vec<GridSurfaceRow>> {
    cells.par_iter().map(|&(c, s)| evaluate_cell(train, validation, c, s, smo, round)).collect()
}

/// Coarse pass over the full grid, then `refine_rounds` passes over a 5×5
/// geometric grid around the best cell so far, with the log spacing divided
/// by `refine_factor` each round. Cells already evaluated are not repeated.
pub fn grid_search_svm(
    train: &Dataset,
    validation: &Dataset,
    grid: &GridSpec,
    smo: &SmoConfig,
) -> Result<Vec<GridSurfaceRow>> {
    grid.validate()?;
    if validation.is_empty() {
        return Err(Error::InvalidInput("validation set is empty".into()));
    }
    if train.dimension() != validation.dimension() {
        return Err(Error::DimensionMismatch { expected: train.dimension(), found: validation.dimension() });
    }
    let sigma2_values = grid.resolve_sigma2(train, smo.seed)?;
    check_axis("sigma2_values", &sigma2_values)?;

    let coarse: Vec<(f64, f64)> =
        grid.c_values.iter().flat_map(|&c| sigma2_values.iter().map(move |&s| (c, s))).collect();
    let mut rows = run_cells(train, validation, &coarse, smo, 0)?;

    let mut c_axis = grid.c_values.clone();
    let mut s_axis = sigma2_values;
    for round in 1..=grid.refine_rounds {
        let Some(best) = best_row(&rows) else { break };
        let (c0, s0) = (rows[best].c_reg, rows[best].sigma2);
        let c_pos = c_axis.iter().position(|&v| v == c0).unwrap_or(0);
        let s_pos = s_axis.iter().position(|&v| v == s0).unwrap_or(0);
        let c_ratio = local_ratio(&c_axis, c_pos).powf(1.0 / grid.refine_factor);
        let s_ratio = local_ratio(&s_axis, s_pos).powf(1.0 / grid.refine_factor);
        c_axis = (-2..=2).map(|k| c0 * c_ratio.powi(k)).collect();
        s_axis = (-2..=2).map(|k| s0 * s_ratio.powi(k)).collect();
        let fine: Vec<(f64, f64)> = c_axis
            .iter()
            .flat_map(|&c| s_axis.iter().map(move |&s| (c, s)))
            .filter(|&(c, s)| !rows.iter().any(|r| r.c_reg == c && r.sigma2 == s))
            .collect();
        rows.extend(run_cells(train, validation, &fine, smo, round)?);
    }
    Ok(rows)
}
