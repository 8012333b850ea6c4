//! Mercer kernels and the Gaussian width heuristic.
//!
//! Three families are supported: linear `x·z`, polynomial `(x·z + offset)^degree`
//! and Gaussian `exp(-‖x - z‖² / (2σ²))`. Kernels are described by a
//! [`KernelSpec`], which also has a compact text form used in model files and
//! on the command line (`linear`, `poly:<degree>:<offset>`, `gauss:<sigma2>`).

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, check_finite, Error, Result};

/// Default number of points kept by [`heuristic_sigma2`].
pub const DEFAULT_SUBSAMPLE_CAP: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    Linear,
    Polynomial { degree: u32, offset: f64 },
    Gaussian { sigma2: f64 },
}

impl KernelSpec {
    pub fn polynomial(degree: u32, offset: f64) -> Result<Self> {
        let spec = KernelSpec::Polynomial { degree, offset };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gaussian(sigma2: f64) -> Result<Self> {
        let spec = KernelSpec::Gaussian { sigma2 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Polynomial { degree, offset } => {
                if degree < 1 {
                    return Err(Error::param("degree", "must be at least 1"));
                }
                if !(offset.is_finite() && offset >= 0.0) {
                    return Err(Error::param("offset", format!("must be finite and >= 0, got {offset}")));
                }
                Ok(())
            }
            KernelSpec::Gaussian { sigma2 } => {
                if !(sigma2.is_finite() && sigma2 > 0.0) {
                    return Err(Error::param("sigma2", format!("must be finite and > 0, got {sigma2}")));
                }
                Ok(())
            }
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, KernelSpec::Linear)
    }

    /// Short family name, used to check that machines share a kernel family.
    pub fn family(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Polynomial { .. } => "poly",
            KernelSpec::Gaussian { .. } => "gauss",
        }
    }

    /// Checked evaluation: rejects mismatched dimensions and non-finite components.
    pub fn eval(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        check_dim(x.len(), z.len())?;
        if x.is_empty() {
            return Err(Error::InvalidInput("kernel arguments must have dimension >= 1".into()));
        }
        check_finite(x)?;
        check_finite(z)?;
        Ok(self.eval_unchecked(x, z))
    }

    /// Evaluation without validation. Callers guarantee equal, finite inputs.
    #[inline]
    pub fn eval_unchecked(&self, x: &[f64], z: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => dot(x, z),
            KernelSpec::Polynomial { degree, offset } => (dot(x, z) + offset).powi(degree as i32),
            KernelSpec::Gaussian { sigma2 } => (-squared_distance(x, z) / (2.0 * sigma2)).exp(),
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::Polynomial { degree, offset } => write!(f, "poly:{degree}:{offset}"),
            KernelSpec::Gaussian { sigma2 } => write!(f, "gauss:{sigma2}"),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.parse::<KernelSetting>()? {
            KernelSetting::Fixed(spec) => Ok(spec),
            KernelSetting::AutoGaussian => {
                Err(Error::InvalidInput("`gauss:auto` needs a dataset to resolve the width".into()))
            }
        }
    }
}

/// A kernel as written in configuration: either fully specified or a Gaussian
/// whose width is resolved from the training data with [`heuristic_sigma2`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSetting {
    Fixed(KernelSpec),
    AutoGaussian,
}

impl FromStr for KernelSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: &str| Error::InvalidInput(format!("kernel `{s}`: {reason}"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["linear"] => Ok(KernelSetting::Fixed(KernelSpec::Linear)),
            ["poly", degree, offset] => {
                let degree = degree.parse::<u32>().map_err(|_| bad("degree must be a positive integer"))?;
                let offset = offset.parse::<f64>().map_err(|_| bad("offset must be a real number"))?;
                Ok(KernelSetting::Fixed(KernelSpec::polynomial(degree, offset)?))
            }
            ["gauss", "auto"] => Ok(KernelSetting::AutoGaussian),
            ["gauss", sigma2] => {
                let sigma2 = sigma2.parse::<f64>().map_err(|_| bad("sigma2 must be a real number"))?;
                Ok(KernelSetting::Fixed(KernelSpec::gaussian(sigma2)?))
            }
            _ => Err(bad("expected linear, poly:<degree>:<offset>, gauss:<sigma2> or gauss:auto")),
        }
    }
}

impl fmt::Display for KernelSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSetting::Fixed(spec) => spec.fmt(f),
            KernelSetting::AutoGaussian => write!(f, "gauss:auto"),
        }
    }
}

#[inline]
pub fn dot(x: &[f64], z: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(z) {
        acc += a * b;
    }
    acc
}

/// `Σ (xᵢ - zᵢ)²`, accumulated left to right.
#[inline]
pub fn squared_distance(x: &[f64], z: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(z) {
        let d = a - b;
        acc += d * d;
    }
    acc
}

/// Result of [`heuristic_sigma2`]: the chosen width and the interquartile band
/// of the pairwise squared-distance distribution it was taken from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaHeuristic {
    pub sigma2: f64,
    pub q1: f64,
    pub q3: f64,
    pub pairs: usize,
}

/// Median pairwise squared Euclidean distance over a seeded subsample of at
/// most `subsample_cap` points. When the cap covers the whole set no sampling
/// happens and the result does not depend on sample order.
pub fn heuristic_sigma2(samples: &[Vec<f64>], subsample_cap: usize, seed: u64) -> Result<SigmaHeuristic> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput("width heuristic needs at least 2 samples".into()));
    }
    if subsample_cap < 2 {
        return Err(Error::param("subsample_cap", "must be at least 2"));
    }
    let dim = samples[0].len();
    for s in samples {
        check_dim(dim, s.len())?;
        check_finite(s)?;
    }

    let chosen: Vec<&[f64]> = if samples.len() <= subsample_cap {
        samples.iter().map(Vec::as_slice).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, samples.len(), subsample_cap).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| samples[i].as_slice()).collect()
    };

    let mut distances = Vec::with_capacity(chosen.len() * (chosen.len() - 1) / 2);
    for (i, a) in chosen.iter().enumerate() {
        for b in &chosen[i + 1..] {
            distances.push(squared_distance(a, b));
        }
    }
    distances.sort_unstable_by(f64::total_cmp);

    let sigma2 = quantile_sorted(&distances, 0.5);
    if sigma2 <= 0.0 {
        return Err(Error::Degenerate(
            "median pairwise distance is zero; the Gaussian width cannot be estimated".into(),
        ));
    }
    Ok(SigmaHeuristic {
        sigma2,
        q1: quantile_sorted(&distances, 0.25),
        q3: quantile_sorted(&distances, 0.75),
        pairs: distances.len(),
    })
}

/// Linear-interpolation quantile at position `p·(len-1)` of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}
