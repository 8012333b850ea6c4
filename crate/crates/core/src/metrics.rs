//! Confusion matrices, Cohen's kappa and the two-classifier kappa z-test.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Two-sided standard normal critical value at α = 0.05.
pub const Z_CRITICAL_05: f64 = 1.959964;

/// Multiplier for the reported 95% half-width.
pub const CI95_MULTIPLIER: f64 = 1.96;

pub const CSV_HEADER: &str = "kappa,variance,ci95,p_observed,p_chance,n,c";

/// Rows are true classes, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
    total: u64,
}

impl ConfusionMatrix {
    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if classes == 0 {
            return Err(Error::param("classes", "must be >= 1"));
        }
        crate::error::check_dim(classes * classes, counts.len())?;
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidInput("confusion matrix is empty".into()));
        }
        Ok(ConfusionMatrix { classes, counts, total })
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let c = rows.len();
        if rows.iter().any(|r| r.len() != c) {
            return Err(Error::InvalidInput("confusion matrix must be square".into()));
        }
        Self::from_counts(c, rows.concat())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.classes..(truth + 1) * self.classes]
    }

    pub fn row_total(&self, truth: usize) -> u64 {
        self.row(truth).iter().sum()
    }

    pub fn column_total(&self, predicted: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, predicted)).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|k| self.get(k, k)).sum()
    }
}

pub fn build_confusion(truth: &[usize], predicted: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if truth.is_empty() {
        return Err(Error::InvalidInput("no labels".into()));
    }
    crate::error::check_dim(truth.len(), predicted.len())?;
    let mut counts = vec![0u64; classes * classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= classes || p >= classes {
            return Err(Error::InvalidInput(format!("label pair ({t}, {p}) outside [0, {classes})")));
        }
        counts[t * classes + p] += 1;
    }
    ConfusionMatrix::from_counts(classes, counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceMethod {
    /// `p_o(1 - p_o) / (n (1 - p_e)²)`
    #[default]
    LargeSample,
    /// Full asymptotic variance of Fleiss, Cohen and Everitt (1969).
    FleissCohenEveritt,
}

impl VarianceMethod {
    pub fn name(self) -> &'static str {
        match self {
            VarianceMethod::LargeSample => "large-sample",
            VarianceMethod::FleissCohenEveritt => "fleiss-cohen-everitt",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaReport {
    pub kappa: f64,
    pub p_observed: f64,
    pub p_chance: f64,
    pub variance: f64,
    pub ci95_half_width: f64,
    pub n: u64,
    pub classes: usize,
    pub method: VarianceMethod,
}

impl KappaReport {
    /// Report from summary statistics, using the large-sample variance.
    pub fn from_agreement(p_observed: f64, p_chance: f64, n: u64, classes: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_observed) || !(0.0..=1.0).contains(&p_chance) {
            return Err(Error::InvalidInput("agreement proportions must lie in [0, 1]".into()));
        }
        if n == 0 {
            return Err(Error::InvalidInput("n must be >= 1".into()));
        }
        if p_chance >= 1.0 {
            return Err(Error::KappaUndefined);
        }
        let q = 1.0 - p_chance;
        let variance = p_observed * (1.0 - p_observed) / (n as f64 * q * q);
        Ok(Self::assemble(p_observed, p_chance, variance, n, classes, VarianceMethod::LargeSample))
    }

    fn assemble(p_o: f64, p_e: f64, variance: f64, n: u64, classes: usize, method: VarianceMethod) -> Self {
        let variance = variance.max(0.0);
        KappaReport {
            kappa: (p_o - p_e) / (1.0 - p_e),
            p_observed: p_o,
            p_chance: p_e,
            variance,
            ci95_half_width: CI95_MULTIPLIER * variance.sqrt(),
            n,
            classes,
            method,
        }
    }

    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "kappa = {}", self.kappa);
        let _ = writeln!(s, "variance = {}", self.variance);
        let _ = writeln!(s, "ci95 = {}", self.ci95_half_width);
        let _ = writeln!(s, "p_observed = {}", self.p_observed);
        let _ = writeln!(s, "p_chance = {}", self.p_chance);
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "c = {}", self.classes);
        let _ = writeln!(s, "variance_method = {}", self.method.name());
        s
    }

    /// One CSV row matching [`CSV_HEADER`].
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.kappa, self.variance, self.ci95_half_width, self.p_observed, self.p_chance, self.n, self.classes
        )
    }
}

pub fn cohen_kappa(m: &ConfusionMatrix) -> Result<KappaReport> {
    cohen_kappa_with(m, VarianceMethod::LargeSample)
}

pub fn cohen_kappa_with(m: &ConfusionMatrix, method: VarianceMethod) -> Result<KappaReport> {
    let c = m.classes;
    let n = m.total as f64;
    let rows: Vec<f64> = (0..c).map(|k| m.row_total(k) as f64 / n).collect();
    let cols: Vec<f64> = (0..c).map(|k| m.column_total(k) as f64 / n).collect();
    let p_o = m.trace() as f64 / n;
    let p_e: f64 = rows.iter().zip(&cols).map(|(r, c)| r * c).sum();
    if p_e >= 1.0 {
        return Err(Error::KappaUndefined);
    }
    let q = 1.0 - p_e;
    let variance = match method {
        VarianceMethod::LargeSample => p_o * (1.0 - p_o) / (n * q * q),
        VarianceMethod::FleissCohenEveritt => {
            let mut a = 0.0;
            for k in 0..c {
                let p_kk = m.get(k, k) as f64 / n;
                let t = 1.0 - (rows[k] + cols[k]) * (1.0 - p_o) / q;
                a += p_kk * t * t;
            }
            let mut b = 0.0;
            let s = (1.0 - p_o) / q;
            for i in 0..c {
                for j in 0..c {
                    if i != j {
                        let p_ij = m.get(i, j) as f64 / n;
                        b += p_ij * (cols[i] + rows[j]).powi(2);
                    }
                }
            }
            b *= s * s;
            let kappa = (p_o - p_e) / q;
            let cterm = (kappa - p_e * (1.0 - kappa)).powi(2);
            (a + b - cterm) / (n * q * q)
        }
    };
    Ok(KappaReport::assemble(p_o, p_e, variance, m.total, c, method))
}

/// Confusion-free reconstruction assuming uniform marginals (`p_e = 1/c`).
pub fn uniform_marginal_report(kappa: f64, classes: usize, n: u64) -> Result<KappaReport> {
    if classes < 2 {
        return Err(Error::param("classes", "must be >= 2"));
    }
    let p_e = 1.0 / classes as f64;
    let p_o = kappa * (1.0 - p_e) + p_e;
    KappaReport::from_agreement(p_o, p_e, n, classes)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZTest {
    pub z: f64,
    pub critical: f64,
    pub significant: bool,
}

/// Two-sided z-test for the difference of two independent kappas.
pub fn kappa_z_test(first: (f64, f64), second: (f64, f64), alpha: f64) -> Result<ZTest> {
    let ((k1, v1), (k2, v2)) = (first, second);
    if !(v1 >= 0.0 && v2 >= 0.0) {
        return Err(Error::InvalidInput("variances must be >= 0".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param("alpha", "must lie in (0, 1)"));
    }
    let critical = two_sided_critical(alpha);
    let diff = k1 - k2;
    let spread = v1 + v2;
    let z = if diff == 0.0 {
        0.0
    } else if spread == 0.0 {
        return Err(Error::InvalidInput("kappas differ but both variances are zero".into()));
    } else {
        diff / spread.sqrt()
    };
    Ok(ZTest { z, critical, significant: z.abs() > critical })
}

pub fn two_sided_critical(alpha: f64) -> f64 {
    if alpha == 0.05 {
        Z_CRITICAL_05
    } else {
        inverse_normal_cdf(1.0 - alpha / 2.0)
    }
}

/// Acklam's rational approximation to the standard normal quantile, relative
/// error below 1.15e-9 on (0, 1).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];
    const P_LOW: f64 = 0.02425;

    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - P_LOW {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecallReport {
    pub accuracy: f64,
    pub recalls: Vec<f64>,
    /// Classes with no true samples; their recall is reported as 0.
    pub empty_rows: Vec<usize>,
}

impl RecallReport {
    /// Classes with samples that were never predicted correctly.
    pub fn zero_recall_classes(&self) -> usize {
        self.recalls.iter().enumerate().filter(|(k, &r)| r == 0.0 && !self.empty_rows.contains(k)).count()
    }
}

pub fn accuracy_and_per_class_recall(m: &ConfusionMatrix) -> RecallReport {
    let mut empty_rows = Vec::new();
    let recalls = (0..m.classes)
        .map(|k| {
            let row = m.row_total(k);
            if row == 0 {
                empty_rows.push(k);
                0.0
            } else {
                m.get(k, k) as f64 / row as f64
            }
        })
        .collect();
    RecallReport { accuracy: m.trace() as f64 / m.total as f64, recalls, empty_rows }
}
