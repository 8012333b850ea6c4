//! Binary soft-margin support vector machines.
//!
//! A trained [`BinarySvmModel`] keeps only the support vectors and their signed
//! coefficients `αⱼyⱼ`; its raw output is `Σⱼ αⱼyⱼ k(xⱼ, x) + b`. Linear
//! machines can be collapsed into a single weight vector with
//! [`BinarySvmModel::compact_linear`].

mod cache;
mod smo;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{check_dim, check_finite, Error, Result};
use crate::kernels::{dot, KernelSpec};

pub use cache::FULL_GRAM_LIMIT;
pub use smo::{smo_solve, smo_train, SmoConfig, SmoSolution, DEFAULT_CACHE_ROWS, DEFAULT_KKT_TOLERANCE};

const MODEL_MAGIC: &str = "marginflow-binary-svm";
const MODEL_VERSION: u32 = 1;

/// Bookkeeping from the solver run. Not persisted.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingStats {
    /// Successful two-multiplier updates.
    pub iterations: usize,
    pub passes: usize,
    pub dual_objective: f64,
    pub objective_trace: Vec<f64>,
    pub c_reg: f64,
    pub kkt_tolerance: f64,
    /// Index of every support vector in the training set.
    pub support_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvmModel {
    support_vectors: Vec<Vec<f64>>,
    coefficients: Vec<f64>,
    bias: f64,
    kernel: KernelSpec,
    dimension: usize,
    training: Option<TrainingStats>,
}

/// `sgn` with `sgn(0) = +1`.
#[inline]
pub fn decide_sign(output: f64) -> i32 {
    if output >= 0.0 {
        1
    } else {
        -1
    }
}

impl BinarySvmModel {
    /// Assembles a model from an explicit expansion. Zero coefficients are rejected
    /// so that every stored vector is a genuine support vector.
    pub fn from_parts(
        support_vectors: Vec<Vec<f64>>,
        coefficients: Vec<f64>,
        bias: f64,
        kernel: KernelSpec,
        dimension: usize,
    ) -> Result<Self> {
        kernel.validate()?;
        check_dim(support_vectors.len(), coefficients.len())?;
        if dimension == 0 {
            return Err(Error::InvalidInput("model dimension must be >= 1".into()));
        }
        for sv in &support_vectors {
            check_dim(dimension, sv.len())?;
            check_finite(sv)?;
        }
        check_finite(&coefficients)?;
        if coefficients.contains(&0.0) {
            return Err(Error::InvalidInput("support vector coefficients must be nonzero".into()));
        }
        if !bias.is_finite() {
            return Err(Error::InvalidInput("bias must be finite".into()));
        }
        Ok(BinarySvmModel { support_vectors, coefficients, bias, kernel, dimension, training: None })
    }

    pub fn support_vectors(&self) -> &[Vec<f64>] {
        &self.support_vectors
    }

    /// Signed coefficients `αⱼyⱼ`, aligned with [`support_vectors`](Self::support_vectors).
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn support_vector_count(&self) -> usize {
        self.support_vectors.len()
    }

    pub fn training_stats(&self) -> Option<&TrainingStats> {
        self.training.as_ref()
    }

    /// Raw signed margin `Σⱼ αⱼyⱼ k(xⱼ, x) + b`.
    pub fn output(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dimension, x.len())?;
        check_finite(x)?;
        Ok(self.output_unchecked(x))
    }

    #[inline]
    pub(crate) fn output_unchecked(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (sv, &coef) in self.support_vectors.iter().zip(&self.coefficients) {
            acc += coef * self.kernel.eval_unchecked(sv, x);
        }
        acc + self.bias
    }

    /// Output from precomputed kernel values, one per support vector.
    #[inline]
    pub(crate) fn output_from_kernel_values(&self, values: impl Iterator<Item = f64>) -> f64 {
        let mut acc = 0.0;
        for (v, &coef) in values.zip(&self.coefficients) {
            acc += coef * v;
        }
        acc + self.bias
    }

    /// Class decision in `{-1, +1}`; an output of exactly zero maps to `+1`.
    pub fn decide(&self, x: &[f64]) -> Result<i32> {
        Ok(decide_sign(self.output(x)?))
    }

    /// Collapses a linear machine into `θ = Σⱼ αⱼyⱼ xⱼ`.
    pub fn compact_linear(&self) -> Result<CompactLinearModel> {
        if !self.kernel.is_linear() {
            return Err(Error::NotLinear { kernel: self.kernel.to_string() });
        }
        let mut theta = vec![0.0; self.dimension];
        for (sv, &coef) in self.support_vectors.iter().zip(&self.coefficients) {
            for (t, v) in theta.iter_mut().zip(sv) {
                *t += coef * v;
            }
        }
        Ok(CompactLinearModel { theta, bias: self.bias })
    }

    /// Checks the three-case KKT conditions on the training set this model was
    /// fitted on. Fails if the model carries no training record.
    pub fn kkt_audit<S: AsRef<[f64]>>(&self, samples: &[S], labels: &[i32], tolerance: f64) -> Result<KktAudit> {
        let stats = self
            .training
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("model has no training record to audit".into()))?;
        check_dim(samples.len(), labels.len())?;
        let c = stats.c_reg;
        let mut alphas = vec![0.0; samples.len()];
        for (&idx, &coef) in stats.support_indices.iter().zip(&self.coefficients) {
            if idx >= samples.len() {
                return Err(Error::InvalidInput("training set does not match the model".into()));
            }
            alphas[idx] = coef.abs();
        }

        let mut audit = KktAudit {
            checked: samples.len(),
            max_violation: 0.0,
            violators: Vec::new(),
            equality_residual: self.coefficients.iter().sum::<f64>().abs(),
            bound_excess: 0.0,
            tolerance,
        };
        for (i, (x, &y)) in samples.iter().zip(labels).enumerate() {
            let margin = y as f64 * self.output(x.as_ref())?;
            let a = alphas[i];
            audit.bound_excess = audit.bound_excess.max(a - c).max(-a);
            let violation = if a == 0.0 {
                (1.0 - margin).max(0.0)
            } else if a >= c {
                (margin - 1.0).max(0.0)
            } else {
                (margin - 1.0).abs()
            };
            audit.max_violation = audit.max_violation.max(violation);
            if violation > tolerance {
                audit.violators.push(i);
            }
        }
        Ok(audit)
    }

    /// Serializes to the versioned text format (17 significant digits per value).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MODEL_MAGIC} {MODEL_VERSION}");
        let _ = writeln!(out, "kernel {}", self.kernel);
        let _ = writeln!(out, "bias {:.16e}", self.bias);
        let _ = writeln!(out, "support_vectors {}", self.support_vectors.len());
        let _ = writeln!(out, "dimension {}", self.dimension);
        for (sv, coef) in self.support_vectors.iter().zip(&self.coefficients) {
            let _ = write!(out, "{coef:.16e}");
            for v in sv {
                let _ = write!(out, " {v:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut next =
            |what: &str| lines.next().map(|(n, l)| (n + 1, l)).ok_or_else(|| Error::Format(format!("missing {what}")));

        let (_, header) = next("header")?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(MODEL_MAGIC) {
            return Err(Error::Format("not a binary SVM model".into()));
        }
        let version: u32 = parse_field(parts.next(), 1, "version")?;
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let kernel: KernelSpec = keyed(next("kernel")?, "kernel")?;
        let bias: f64 = keyed(next("bias")?, "bias")?;
        let count: usize = keyed(next("support_vectors")?, "support_vectors")?;
        let dimension: usize = keyed(next("dimension")?, "dimension")?;

        let mut support_vectors = Vec::with_capacity(count);
        let mut coefficients = Vec::with_capacity(count);
        for _ in 0..count {
            let (line_no, line) = next("support vector line")?;
            let values = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format(format!("line {line_no}: {e}")))?;
            if values.len() != dimension + 1 {
                return Err(Error::Format(format!(
                    "line {line_no}: expected {} values, found {}",
                    dimension + 1,
                    values.len()
                )));
            }
            coefficients.push(values[0]);
            support_vectors.push(values[1..].to_vec());
        }
        if let Some((line_no, _)) = lines.next() {
            return Err(Error::Format(format!("line {line_no}: trailing content")));
        }
        BinarySvmModel::from_parts(support_vectors, coefficients, bias, kernel, dimension)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn parse_field<T: std::str::FromStr>(token: Option<&str>, line: usize, what: &str) -> Result<T> {
    token.and_then(|t| t.parse().ok()).ok_or_else(|| Error::Format(format!("line {line}: bad {what}")))
}

fn keyed<T: std::str::FromStr>((line_no, line): (usize, &str), key: &str) -> Result<T> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(key) {
        return Err(Error::Format(format!("line {line_no}: expected `{key}`")));
    }
    parse_field(parts.next(), line_no, key)
}

/// Result of [`BinarySvmModel::kkt_audit`].
#[derive(Debug, Clone, PartialEq)]
pub struct KktAudit {
    pub checked: usize,
    pub max_violation: f64,
    pub violators: Vec<usize>,
    /// `|Σ αⱼyⱼ|`
    pub equality_residual: f64,
    /// How far any multiplier lies outside `[0, C]` (0 when feasible).
    pub bound_excess: f64,
    pub tolerance: f64,
}

impl KktAudit {
    pub fn passed(&self) -> bool {
        self.violators.is_empty() && self.equality_residual <= self.tolerance && self.bound_excess <= 0.0
    }
}

/// A linear machine in `sgn(θ·x + b)` form.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactLinearModel {
    pub theta: Vec<f64>,
    pub bias: f64,
}

impl CompactLinearModel {
    pub fn output(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.theta.len(), x.len())?;
        Ok(self.output_unchecked(x))
    }

    #[inline]
    pub(crate) fn output_unchecked(&self, x: &[f64]) -> f64 {
        dot(&self.theta, x) + self.bias
    }

    pub fn decide(&self, x: &[f64]) -> Result<i32> {
        Ok(decide_sign(self.output(x)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> (Vec<Vec<f64>>, Vec<i32>, BinarySvmModel) {
        let x = vec![vec![1.0, 0.0], vec![-1.0, 0.0]];
        let y = vec![1, -1];
        let m = smo_train(&x, &y, &SmoConfig::new(10.0, KernelSpec::Linear)).unwrap();
        (x, y, m)
    }

    #[test]
    fn two_point_outputs() {
        let (x, y, m) = two_point();
        assert!((m.output(&[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(m.output(&[0.0, 0.0]).unwrap().abs() < 1e-12);
        assert!((m.output(&[2.0, 0.0]).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(m.output(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(m.kkt_audit(&x, &y, 1e-3).unwrap().passed());
    }

    #[test]
    fn sign_convention() {
        assert_eq!(decide_sign(0.7), 1);
        assert_eq!(decide_sign(0.0), 1);
        assert_eq!(decide_sign(-0.0), 1);
        assert_eq!(decide_sign(-0.3), -1);
        let m = BinarySvmModel::from_parts(vec![], vec![], 0.0, KernelSpec::Linear, 2).unwrap();
        assert_eq!(m.decide(&[5.0, -3.0]).unwrap(), 1);
        let neg = BinarySvmModel::from_parts(vec![], vec![], -0.3, KernelSpec::Linear, 2).unwrap();
        assert_eq!(neg.decide(&[5.0, -3.0]).unwrap(), -1);
    }

    #[test]
    fn compact_form() {
        let (_, _, m) = two_point();
        let c = m.compact_linear().unwrap();
        assert!((c.theta[0] - 1.0).abs() < 1e-12 && c.theta[1].abs() < 1e-12);
        assert!(c.bias.abs() < 1e-12);

        let empty = BinarySvmModel::from_parts(vec![], vec![], 0.25, KernelSpec::Linear, 3).unwrap();
        let ce = empty.compact_linear().unwrap();
        assert_eq!(ce.theta, vec![0.0; 3]);
        assert_eq!(ce.bias, 0.25);

        let g =
            BinarySvmModel::from_parts(vec![vec![1.0]], vec![1.0], 0.0, KernelSpec::gaussian(1.0).unwrap(), 1).unwrap();
        assert!(matches!(g.compact_linear(), Err(Error::NotLinear { .. })));
    }

    #[test]
    fn from_parts_rejects_zero_coefficients() {
        let r = BinarySvmModel::from_parts(vec![vec![1.0]], vec![0.0], 0.0, KernelSpec::Linear, 1);
        assert!(r.is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let x = vec![vec![0.1, 0.7], vec![0.3, -0.2], vec![-0.55, 0.4], vec![0.9, 0.05]];
        let y = vec![1, -1, -1, 1];
        let m = smo_train(&x, &y, &SmoConfig::new(3.0, KernelSpec::gaussian(0.3).unwrap())).unwrap();
        let text = m.to_text();
        let back = BinarySvmModel::from_text(&text).unwrap();
        assert_eq!(back.support_vectors(), m.support_vectors());
        assert_eq!(back.coefficients(), m.coefficients());
        assert_eq!(back.bias().to_bits(), m.bias().to_bits());
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn rejects_malformed_text() {
        assert!(BinarySvmModel::from_text("").is_err());
        assert!(BinarySvmModel::from_text("something-else 1\n").is_err());
        let bad = "marginflow-binary-svm 1\nkernel linear\nbias 0\nsupport_vectors 1\ndimension 2\n1.0 2.0\n";
        assert!(BinarySvmModel::from_text(bad).is_err());
        let v2 = "marginflow-binary-svm 2\nkernel linear\nbias 0\nsupport_vectors 0\ndimension 2\n";
        assert!(BinarySvmModel::from_text(v2).is_err());
    }
}
