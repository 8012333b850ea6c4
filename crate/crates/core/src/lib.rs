//! Multiclass large-margin classification toolkit.
//!
//! * [`kernels`]: Mercer kernels and the Gaussian width heuristic
//! * [`svm`]: binary soft-margin SVMs trained with SMO
//! * [`multiclass`]: one-vs-one / one-vs-all banks with voting and DDAG decisions
//! * [`neural`]: single-hidden-layer perceptrons trained with Rprop
//! * [`metrics`]: confusion matrices, Cohen's kappa and its z-test
//! * [`imageprep`]: Otsu segmentation, crop/center, 32×32 vectorization
//! * [`harness`]: datasets, grid search, sweeps and benchmarks

pub mod error;
pub mod harness;
pub mod imageprep;
pub mod kernels;
pub mod metrics;
pub mod multiclass;
pub mod neural;
pub mod svm;

pub use error::{Error, Result};
pub use kernels::{KernelSetting, KernelSpec};
pub use svm::{BinarySvmModel, CompactLinearModel, SmoConfig};
