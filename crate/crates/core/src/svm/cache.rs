//! Kernel row storage for the SMO solver.

use std::collections::HashMap;
use std::sync::Arc;

use crate::kernels::KernelSpec;

/// Up to this many samples the whole Gram matrix is precomputed.
pub const FULL_GRAM_LIMIT: usize = 4096;

pub(crate) struct KernelRows<'a, S> {
    samples: &'a [S],
    kernel: KernelSpec,
    diag: Vec<f64>,
    storage: Storage,
}

enum Storage {
    Full(Vec<Arc<[f64]>>),
    Lru { rows: HashMap<usize, (Arc<[f64]>, u64)>, capacity: usize, clock: u64 },
}

impl<'a, S: AsRef<[f64]>> KernelRows<'a, S> {
    pub(crate) fn new(samples: &'a [S], kernel: KernelSpec, lru_rows: usize) -> Self {
        let n = samples.len();
        let diag = samples.iter().map(|s| kernel.eval_unchecked(s.as_ref(), s.as_ref())).collect();
        let storage = if n <= FULL_GRAM_LIMIT {
            let mut gram = vec![0.0; n * n];
            for i in 0..n {
                let xi = samples[i].as_ref();
                for j in i..n {
                    let v = kernel.eval_unchecked(xi, samples[j].as_ref());
                    gram[i * n + j] = v;
                    gram[j * n + i] = v;
                }
            }
            Storage::Full(gram.chunks(n.max(1)).map(Arc::from).collect())
        } else {
            Storage::Lru { rows: HashMap::new(), capacity: lru_rows.max(2), clock: 0 }
        };
        KernelRows { samples, kernel, diag, storage }
    }

    #[inline]
    pub(crate) fn diag(&self, i: usize) -> f64 {
        self.diag[i]
    }

    pub(crate) fn row(&mut self, i: usize) -> Arc<[f64]> {
        match &mut self.storage {
            Storage::Full(rows) => rows[i].clone(),
            Storage::Lru { rows, capacity, clock } => {
                *clock += 1;
                if let Some((row, stamp)) = rows.get_mut(&i) {
                    *stamp = *clock;
                    return row.clone();
                }
                if rows.len() >= *capacity {
                    let oldest = rows.iter().min_by_key(|(_, (_, stamp))| *stamp).map(|(k, _)| *k);
                    if let Some(k) = oldest {
                        rows.remove(&k);
                    }
                }
                let xi = self.samples[i].as_ref();
                let row: Arc<[f64]> = self.samples.iter().map(|s| self.kernel.eval_unchecked(xi, s.as_ref())).collect();
                rows.insert(i, (row.clone(), *clock));
                row
            }
        }
    }
}
