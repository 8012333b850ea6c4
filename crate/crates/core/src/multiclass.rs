//! Multiclass banks of binary SVMs.
//!
//! One-vs-one training builds a machine for every class pair `(i, j)`, `i < j`,
//! with class `i` on the positive side. Such a bank can decide by majority
//! voting over all `c(c-1)/2` machines or by DDAG sequential elimination,
//! which visits exactly `c-1` machines. A one-vs-all bank (one machine per
//! class, argmax of raw outputs) is also available.
//!
//! Every decision returns [`EvalStats`] describing its cost: machines visited
//! and kernel evaluations against support vectors, either counted per machine
//! or deduplicated across machines when kernel values are shared.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{check_dim, check_finite, Error, Result};
use crate::svm::{decide_sign, smo_train, BinarySvmModel, CompactLinearModel, KktAudit, SmoConfig};

const MANIFEST_MAGIC: &str = "marginflow-multiclass";
const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Voting,
    Ddag,
    OneVsAll,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Voting => "voting",
            Scheme::Ddag => "ddag",
            Scheme::OneVsAll => "ova",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "voting" | "1-vs-1" => Ok(Scheme::Voting),
            "ddag" => Ok(Scheme::Ddag),
            "ova" | "one-vs-all" => Ok(Scheme::OneVsAll),
            other => Err(Error::InvalidInput(format!("unknown scheme `{other}` (voting|ddag|ova)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalOptions {
    /// Reuse kernel values for support vectors shared between machines.
    pub share_kernel_values: bool,
    /// Evaluate linear machines as `θ·x + b`, skipping the support-vector expansion.
    pub compact_linear: bool,
}

impl EvalOptions {
    pub fn shared() -> Self {
        EvalOptions { share_kernel_values: true, compact_linear: false }
    }

    pub fn compact() -> Self {
        EvalOptions { share_kernel_values: false, compact_linear: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EvalStats {
    pub machine_evaluations: usize,
    /// Kernel evaluations against support vectors performed for this decision.
    pub vector_evaluations: usize,
    pub unique_sv_total: usize,
    /// Machines visited, in order. One-vs-all machines appear as `(k, k)`.
    pub decision_path: Vec<(usize, usize)>,
}

/// Position of machine `(i, j)`, `i < j`, in the pairwise bank.
pub fn pair_index(i: usize, j: usize, classes: usize) -> usize {
    debug_assert!(i < j && j < classes);
    i * classes - i * (i + 1) / 2 + (j - i - 1)
}

pub fn pair_count(classes: usize) -> usize {
    classes * classes.saturating_sub(1) / 2
}

fn pairs(classes: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(pair_count(classes));
    for i in 0..classes {
        for j in i + 1..classes {
            out.push((i, j));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    OneVsOne,
    OneVsAll,
}

/// Support vectors of a bank, deduplicated by exact component equality.
#[derive(Debug, Clone, Default)]
struct SvTable {
    unique: Vec<Vec<f64>>,
    ids: Vec<Vec<usize>>,
}

impl SvTable {
    fn build(machines: &[BinarySvmModel]) -> Self {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut unique = Vec::new();
        let ids = machines
            .iter()
            .map(|m| {
                m.support_vectors()
                    .iter()
                    .map(|sv| {
                        *index.entry(vector_key(sv)).or_insert_with(|| {
                            unique.push(sv.clone());
                            unique.len() - 1
                        })
                    })
                    .collect()
            })
            .collect();
        SvTable { unique, ids }
    }
}

/// Bit pattern key; `-0.0` and `0.0` compare equal, so both map to `0.0`.
fn vector_key(v: &[f64]) -> Vec<u64> {
    v.iter().map(|&x| if x == 0.0 { 0 } else { x.to_bits() }).collect()
}

#[derive(Debug, Clone)]
pub struct MulticlassSvmModel {
    class_count: usize,
    dimension: usize,
    layout: Layout,
    scheme_default: Scheme,
    machines: Vec<BinarySvmModel>,
    table: SvTable,
    compact: Option<Vec<CompactLinearModel>>,
}

impl MulticlassSvmModel {
    /// Builds a one-vs-one bank from machines ordered `(0,1), (0,2), …, (c-2,c-1)`.
    pub fn from_pairwise(class_count: usize, machines: Vec<BinarySvmModel>, scheme_default: Scheme) -> Result<Self> {
        if class_count < 2 {
            return Err(Error::param("classes", "at least 2 classes are required"));
        }
        if machines.len() != pair_count(class_count) {
            return Err(Error::InvalidInput(format!(
                "{} classes need {} pairwise machines, got {}",
                class_count,
                pair_count(class_count),
                machines.len()
            )));
        }
        if scheme_default == Scheme::OneVsAll {
            return Err(Error::SchemeUnavailable(scheme_default.to_string()));
        }
        Self::assemble(class_count, machines, Layout::OneVsOne, scheme_default)
    }

    /// Builds a one-vs-all bank; machine `k` separates class `k` from the rest.
    pub fn from_one_vs_all(class_count: usize, machines: Vec<BinarySvmModel>) -> Result<Self> {
        if class_count < 2 {
            return Err(Error::param("classes", "at least 2 classes are required"));
        }
        check_dim(class_count, machines.len())?;
        Self::assemble(class_count, machines, Layout::OneVsAll, Scheme::OneVsAll)
    }

    fn assemble(class_count: usize, machines: Vec<BinarySvmModel>, layout: Layout, scheme: Scheme) -> Result<Self> {
        let first = &machines[0];
        let dimension = first.dimension();
        for m in &machines {
            check_dim(dimension, m.dimension())?;
            if m.kernel().family() != first.kernel().family() {
                return Err(Error::InvalidInput("all machines must share a kernel family".into()));
            }
        }
        let compact = if first.kernel().is_linear() {
            Some(machines.iter().map(|m| m.compact_linear()).collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        let table = SvTable::build(&machines);
        Ok(MulticlassSvmModel { class_count, dimension, layout, scheme_default: scheme, machines, table, compact })
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn scheme_default(&self) -> Scheme {
        self.scheme_default
    }

    pub fn set_scheme_default(&mut self, scheme: Scheme) -> Result<()> {
        self.check_scheme(scheme)?;
        self.scheme_default = scheme;
        Ok(())
    }

    pub fn is_one_vs_all(&self) -> bool {
        self.layout == Layout::OneVsAll
    }

    /// Machines in bank order: pair order for one-vs-one, class order for one-vs-all.
    pub fn machines(&self) -> &[BinarySvmModel] {
        &self.machines
    }

    /// Pairwise machine `(i, j)`; `None` on a one-vs-all bank or for `i >= j`.
    pub fn machine(&self, i: usize, j: usize) -> Option<&BinarySvmModel> {
        if self.layout != Layout::OneVsOne || i >= j || j >= self.class_count {
            return None;
        }
        self.machines.get(pair_index(i, j, self.class_count))
    }

    /// Size of the union of all machines' support-vector sets.
    pub fn unique_support_vectors(&self) -> usize {
        self.table.unique.len()
    }

    /// Sum of per-machine support-vector counts (shared vectors counted once per machine).
    pub fn total_support_vectors(&self) -> usize {
        self.machines.iter().map(BinarySvmModel::support_vector_count).sum()
    }

    fn check_scheme(&self, scheme: Scheme) -> Result<()> {
        let ok = match self.layout {
            Layout::OneVsOne => scheme != Scheme::OneVsAll,
            Layout::OneVsAll => scheme == Scheme::OneVsAll,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::SchemeUnavailable(scheme.to_string()))
        }
    }

    pub fn decide(&self, x: &[f64]) -> Result<(usize, EvalStats)> {
        self.decide_with(self.scheme_default, x, EvalOptions::default())
    }

    pub fn decide_with(&self, scheme: Scheme, x: &[f64], opts: EvalOptions) -> Result<(usize, EvalStats)> {
        self.check_scheme(scheme)?;
        check_dim(self.dimension, x.len())?;
        check_finite(x)?;
        if opts.compact_linear && self.compact.is_none() {
            return Err(Error::NotLinear { kernel: self.machines[0].kernel().to_string() });
        }
        let mut eval = Evaluator::new(self, opts);
        let class = match scheme {
            Scheme::Voting => self.run_voting(x, &mut eval),
            Scheme::Ddag => self.run_ddag(x, &mut eval),
            Scheme::OneVsAll => self.run_one_vs_all(x, &mut eval),
        };
        Ok((class, eval.stats))
    }

    pub fn decide_voting(&self, x: &[f64]) -> Result<(usize, EvalStats)> {
        self.decide_with(Scheme::Voting, x, EvalOptions::default())
    }

    pub fn decide_ddag(&self, x: &[f64]) -> Result<(usize, EvalStats)> {
        self.decide_with(Scheme::Ddag, x, EvalOptions::default())
    }

    pub fn decide_one_vs_all(&self, x: &[f64]) -> Result<(usize, EvalStats)> {
        self.decide_with(Scheme::OneVsAll, x, EvalOptions::default())
    }

    // Ties on votes go to the larger sum of winning margins, then the lower class index.
    fn run_voting(&self, x: &[f64], eval: &mut Evaluator<'_>) -> usize {
        let c = self.class_count;
        let mut votes = vec![0usize; c];
        let mut margins = vec![0.0f64; c];
        for (i, j) in pairs(c) {
            let out = eval.output(pair_index(i, j, c), x);
            eval.stats.decision_path.push((i, j));
            let winner = if decide_sign(out) > 0 { i } else { j };
            votes[winner] += 1;
            margins[winner] += out.abs();
        }
        let mut best = 0;
        for k in 1..c {
            if votes[k] > votes[best] || (votes[k] == votes[best] && margins[k] > margins[best]) {
                best = k;
            }
        }
        best
    }

    fn run_ddag(&self, x: &[f64], eval: &mut Evaluator<'_>) -> usize {
        let c = self.class_count;
        let (mut lo, mut hi) = (0, c - 1);
        // Candidates are the contiguous range lo..=hi; each test drops one end.
        while lo < hi {
            let out = eval.output(pair_index(lo, hi, c), x);
            eval.stats.decision_path.push((lo, hi));
            if decide_sign(out) > 0 {
                hi -= 1;
            } else {
                lo += 1;
            }
        }
        lo
    }

    fn run_one_vs_all(&self, x: &[f64], eval: &mut Evaluator<'_>) -> usize {
        let mut best = 0;
        let mut best_out = f64::NEG_INFINITY;
        for k in 0..self.class_count {
            let out = eval.output(k, x);
            eval.stats.decision_path.push((k, k));
            if out > best_out {
                best_out = out;
                best = k;
            }
        }
        best
    }

    /// KKT audit of every machine against the data the bank was trained on.
    pub fn kkt_audit<S: AsRef<[f64]>>(
        &self,
        samples: &[S],
        labels: &[usize],
        tolerance: f64,
    ) -> Result<Vec<((usize, usize), KktAudit)>> {
        check_dim(samples.len(), labels.len())?;
        match self.layout {
            Layout::OneVsOne => pairs(self.class_count)
                .into_iter()
                .map(|(i, j)| {
                    let (xs, ys) = pair_subset(samples, labels, i, j);
                    let audit = self.machines[pair_index(i, j, self.class_count)].kkt_audit(&xs, &ys, tolerance)?;
                    Ok(((i, j), audit))
                })
                .collect(),
            Layout::OneVsAll => (0..self.class_count)
                .map(|k| {
                    let xs: Vec<&[f64]> = samples.iter().map(AsRef::as_ref).collect();
                    let ys: Vec<i32> = labels.iter().map(|&l| if l == k { 1 } else { -1 }).collect();
                    Ok(((k, k), self.machines[k].kkt_audit(&xs, &ys, tolerance)?))
                })
                .collect(),
        }
    }

    /// Writes the bank as a directory: a manifest plus one text model per machine.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let names = self.machine_file_names();
        let layout = match self.layout {
            Layout::OneVsOne => "one-vs-one",
            Layout::OneVsAll => "one-vs-all",
        };
        let mut manifest = format!(
            "{MANIFEST_MAGIC} {MANIFEST_VERSION}\nclasses {}\nscheme {}\nlayout {layout}\ndimension {}\nmachines {}\n",
            self.class_count,
            self.scheme_default,
            self.dimension,
            names.len()
        );
        for (name, machine) in names.iter().zip(&self.machines) {
            manifest.push_str(name);
            manifest.push('\n');
            machine.save(dir.join(name))?;
        }
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().unwrap_or_default();
        if header != format!("{MANIFEST_MAGIC} {MANIFEST_VERSION}") {
            return Err(Error::Format(format!("unsupported manifest header `{header}`")));
        }
        let mut field = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| Error::Format(format!("manifest missing `{key}`")))?;
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok(v.trim().to_string()),
                _ => Err(Error::Format(format!("manifest: expected `{key}`, found `{line}`"))),
            }
        };
        let classes: usize = field("classes")?.parse().map_err(|_| Error::Format("bad class count".into()))?;
        let scheme: Scheme = field("scheme")?.parse()?;
        let layout = field("layout")?;
        let dimension: usize = field("dimension")?.parse().map_err(|_| Error::Format("bad dimension".into()))?;
        let count: usize = field("machines")?.parse().map_err(|_| Error::Format("bad machine count".into()))?;
        let names: Vec<&str> = lines.collect();
        check_dim(count, names.len())?;
        let machines = names.iter().map(|name| BinarySvmModel::load(dir.join(name))).collect::<Result<Vec<_>>>()?;
        let model = match layout.as_str() {
            "one-vs-one" => {
                let expected: Vec<String> = pairs(classes).iter().map(|(i, j)| format!("m_{i}_{j}")).collect();
                if names != expected {
                    return Err(Error::Format("machine index does not list the pairs in order".into()));
                }
                Self::from_pairwise(classes, machines, scheme)?
            }
            "one-vs-all" => Self::from_one_vs_all(classes, machines)?,
            other => return Err(Error::Format(format!("unknown layout `{other}`"))),
        };
        check_dim(dimension, model.dimension)?;
        Ok(model)
    }

    fn machine_file_names(&self) -> Vec<String> {
        match self.layout {
            Layout::OneVsOne => pairs(self.class_count).iter().map(|(i, j)| format!("m_{i}_{j}")).collect(),
            Layout::OneVsAll => (0..self.class_count).map(|k| format!("ova_{k}")).collect(),
        }
    }
}

/// Per-decision evaluation state: the kernel-value cache and the running counters.
struct Evaluator<'m> {
    model: &'m MulticlassSvmModel,
    opts: EvalOptions,
    cache: Vec<Option<f64>>,
    stats: EvalStats,
}

impl<'m> Evaluator<'m> {
    fn new(model: &'m MulticlassSvmModel, opts: EvalOptions) -> Self {
        let cache = if opts.share_kernel_values && !opts.compact_linear {
            vec![None; model.table.unique.len()]
        } else {
            Vec::new()
        };
        let stats = EvalStats { unique_sv_total: model.unique_support_vectors(), ..EvalStats::default() };
        Evaluator { model, opts, cache, stats }
    }

    fn output(&mut self, m: usize, x: &[f64]) -> f64 {
        self.stats.machine_evaluations += 1;
        let machine = &self.model.machines[m];
        if self.opts.compact_linear {
            if let Some(compact) = &self.model.compact {
                return compact[m].output_unchecked(x);
            }
        }
        if !self.opts.share_kernel_values {
            self.stats.vector_evaluations += machine.support_vector_count();
            return machine.output_unchecked(x);
        }
        let kernel = machine.kernel();
        let unique = &self.model.table.unique;
        let cache = &mut self.cache;
        let stats = &mut self.stats;
        let values = self.model.table.ids[m].iter().map(|&id| {
            *cache[id].get_or_insert_with(|| {
                stats.vector_evaluations += 1;
                kernel.eval_unchecked(&unique[id], x)
            })
        });
        machine.output_from_kernel_values(values)
    }
}

fn pair_subset<'a, S: AsRef<[f64]>>(
    samples: &'a [S],
    labels: &[usize],
    i: usize,
    j: usize,
) -> (Vec<&'a [f64]>, Vec<i32>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (x, &l) in samples.iter().zip(labels) {
        if l == i {
            xs.push(x.as_ref());
            ys.push(1);
        } else if l == j {
            xs.push(x.as_ref());
            ys.push(-1);
        }
    }
    (xs, ys)
}

fn validate_multiclass<S: AsRef<[f64]>>(samples: &[S], labels: &[usize], classes: usize) -> Result<()> {
    if classes < 2 {
        return Err(Error::param("classes", "at least 2 classes are required"));
    }
    check_dim(samples.len(), labels.len())?;
    let mut counts = vec![0usize; classes];
    for &l in labels {
        if l >= classes {
            return Err(Error::InvalidInput(format!("label {l} outside [0, {classes})")));
        }
        counts[l] += 1;
    }
    if let Some(class) = counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass { class });
    }
    Ok(())
}

/// Trains the `c(c-1)/2` pairwise machines in parallel. Machine `(i, j)` sees
/// only classes `i` (as +1) and `j` (as -1), in their original order.
pub fn train_one_vs_one<S: AsRef<[f64]> + Sync>(
    samples: &[S],
    labels: &[usize],
    classes: usize,
    config: &SmoConfig,
) -> Result<MulticlassSvmModel> {
    validate_multiclass(samples, labels, classes)?;
    let machines = pairs(classes)
        .into_par_iter()
        .map(|(i, j)| {
            let (xs, ys) = pair_subset(samples, labels, i, j);
            smo_train(&xs, &ys, config)
        })
        .collect::<Result<Vec<_>>>()?;
    MulticlassSvmModel::from_pairwise(classes, machines, Scheme::Ddag)
}

/// Trains one machine per class against all others.
pub fn train_one_vs_all<S: AsRef<[f64]> + Sync>(
    samples: &[S],
    labels: &[usize],
    classes: usize,
    config: &SmoConfig,
) -> Result<MulticlassSvmModel> {
    validate_multiclass(samples, labels, classes)?;
    let xs: Vec<&[f64]> = samples.iter().map(AsRef::as_ref).collect();
    let machines = (0..classes)
        .into_par_iter()
        .map(|k| {
            let ys: Vec<i32> = labels.iter().map(|&l| if l == k { 1 } else { -1 }).collect();
            smo_train(&xs, &ys, config)
        })
        .collect::<Result<Vec<_>>>()?;
    MulticlassSvmModel::from_one_vs_all(classes, machines)
}
