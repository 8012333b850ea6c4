//! C ABI over the marginflow classifiers.
//!
//! Every fallible function returns an [`MfStatus`]. On failure the message is
//! kept per thread and can be read with [`mf_last_error`]. Models are opaque
//! handles released with their `_free` function. Sample matrices are row-major
//! `n × dim` arrays of `double`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use marginflow::harness::InitScheme;
use marginflow::imageprep::{otsu_threshold, preprocess_image, GrayImage, Polarity, VECTOR_LEN};
use marginflow::kernels::{heuristic_sigma2, DEFAULT_SUBSAMPLE_CAP};
use marginflow::metrics::{cohen_kappa, kappa_z_test, ConfusionMatrix};
use marginflow::multiclass::{train_one_vs_all, train_one_vs_one, EvalOptions, MulticlassSvmModel, Scheme};
use marginflow::neural::{one_of_c_targets, rprop_train, Activation, MlpModel, RpropConfig, TargetEncoding};
use marginflow::svm::smo_train;
use marginflow::{BinarySvmModel, Error, KernelSetting, KernelSpec, SmoConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    /// Training data unusable: one class, empty class, degenerate set.
    BadData = 4,
    NotConverged = 5,
    /// Kappa undefined or a decision scheme the model cannot run.
    Undefined = 6,
    Io = 7,
    Parse = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfScheme {
    /// The scheme the model was trained or saved with.
    Default = 0,
    Voting = 1,
    Ddag = 2,
    OneVsAll = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfInit {
    Uniform = 0,
    NguyenWidrow = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MfKappa {
    pub kappa: f64,
    pub variance: f64,
    pub ci95: f64,
    pub p_observed: f64,
    pub p_chance: f64,
    pub n: u64,
}

pub struct MfBinarySvm {
    inner: BinarySvmModel,
}

pub struct MfMulticlassSvm {
    inner: MulticlassSvmModel,
}

pub struct MfMlp {
    inner: MlpModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn mf_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

enum Failure {
    Null(&'static str),
    Arg(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type FfiResult<T> = Result<T, Failure>;

fn status_of(e: &Error) -> MfStatus {
    match e {
        Error::DimensionMismatch { .. } => MfStatus::DimensionMismatch,
        Error::NonFinite { .. } | Error::InvalidParameter { .. } | Error::InvalidInput(_) | Error::NotLinear { .. } => {
            MfStatus::InvalidArgument
        }
        Error::SingleClass | Error::EmptyClass { .. } | Error::ClassTooSmall { .. } | Error::Degenerate(_) => {
            MfStatus::BadData
        }
        Error::NotConverged { .. } | Error::NonFiniteLoss { .. } => MfStatus::NotConverged,
        Error::KappaUndefined | Error::SchemeUnavailable(_) => MfStatus::Undefined,
        Error::Parse { .. } | Error::Format(_) => MfStatus::Parse,
        Error::Io { .. } => MfStatus::Io,
    }
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> MfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MfStatus::Ok,
        Ok(Err(Failure::Null(name))) => {
            set_last_error(&format!("`{name}` is NULL"));
            MfStatus::NullPointer
        }
        Ok(Err(Failure::Arg(message))) => {
            set_last_error(&message);
            MfStatus::InvalidArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(&e.to_string());
            status_of(&e)
        }
        Err(panic) => {
            let what = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("internal panic: {what}"));
            MfStatus::Panic
        }
    }
}

unsafe fn slice_in<'a, T>(p: *const T, len: usize, name: &'static str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out_ref<'a, T>(p: *mut T, name: &'static str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or(Failure::Null(name))
}

unsafe fn handle<'a, T>(p: *const T, name: &'static str) -> FfiResult<&'a T> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn c_str<'a>(p: *const c_char, name: &'static str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Arg(format!("`{name}` is not valid UTF-8")))
}

unsafe fn rows(samples: *const f64, n: usize, dim: usize) -> FfiResult<Vec<Vec<f64>>> {
    if dim == 0 {
        return Err(Failure::Arg("dim must be positive".into()));
    }
    let flat =
        slice_in(samples, n.checked_mul(dim).ok_or_else(|| Failure::Arg("n * dim overflows".into()))?, "samples")?;
    Ok(flat.chunks(dim).map(<[f64]>::to_vec).collect())
}

fn resolve_kernel(text: &str, samples: &[Vec<f64>], seed: u64) -> FfiResult<KernelSpec> {
    Ok(match text.parse::<KernelSetting>()? {
        KernelSetting::Fixed(k) => k,
        KernelSetting::AutoGaussian => {
            KernelSpec::gaussian(heuristic_sigma2(samples, DEFAULT_SUBSAMPLE_CAP, seed)?.sigma2)?
        }
    })
}

fn into_handle<T>(value: T, out: &mut *mut T) {
    *out = Box::into_raw(Box::new(value));
}

unsafe fn free_handle<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

// ---- kernels ----

/// Evaluates a kernel given in text form (`linear`, `poly:3:1`, `gauss:0.5`).
///
/// # Safety
/// `spec` is a NUL-terminated string; `x` and `z` point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn mf_kernel_eval(
    spec: *const c_char,
    x: *const f64,
    z: *const f64,
    dim: usize,
    out: *mut f64,
) -> MfStatus {
    guard(|| {
        let kernel: KernelSpec = c_str(spec, "spec")?.parse()?;
        *out_ref(out, "out")? = kernel.eval(slice_in(x, dim, "x")?, slice_in(z, dim, "z")?)?;
        Ok(())
    })
}

// ---- binary SVM ----

/// Trains a binary SVM on labels in {-1, +1}. `kernel` accepts `gauss:auto`.
///
/// # Safety
/// `samples` holds `n * dim` doubles, `labels` holds `n` ints, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mf_svm_train(
    samples: *const f64,
    labels: *const i32,
    n: usize,
    dim: usize,
    kernel: *const c_char,
    c_reg: f64,
    seed: u64,
    out: *mut *mut MfBinarySvm,
) -> MfStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let xs = rows(samples, n, dim)?;
        let ys = slice_in(labels, n, "labels")?;
        let kernel = resolve_kernel(c_str(kernel, "kernel")?, &xs, seed)?;
        let model = smo_train(&xs, ys, &SmoConfig::new(c_reg, kernel).with_seed(seed))?;
        into_handle(MfBinarySvm { inner: model }, out);
        Ok(())
    })
}

/// Raw decision value `f(x)`.
///
/// # Safety
/// `model` is a live handle, `x` holds `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn mf_svm_output(
    model: *const MfBinarySvm,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> MfStatus {
    guard(|| {
        *out_ref(out, "out")? = handle(model, "model")?.inner.output(slice_in(x, dim, "x")?)?;
        Ok(())
    })
}

/// Label in {-1, +1}.
///
/// # Safety
/// `model` is a live handle, `x` holds `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn mf_svm_decide(
    model: *const MfBinarySvm,
    x: *const f64,
    dim: usize,
    out: *mut i32,
) -> MfStatus {
    guard(|| {
        *out_ref(out, "out")? = handle(model, "model")?.inner.decide(slice_in(x, dim, "x")?)?;
        Ok(())
    })
}

/// # Safety
/// `model` is a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn mf_svm_support_vector_count(model: *const MfBinarySvm) -> usize {
    model.as_ref().map_or(0, |m| m.inner.support_vector_count())
}

/// # Safety
/// `model` is a live handle, `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mf_svm_save(model: *const MfBinarySvm, path: *const c_char) -> MfStatus {
    guard(|| Ok(handle(model, "model")?.inner.save(c_str(path, "path")?)?))
}

/// # Safety
/// `path` is a NUL-terminated string, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mf_svm_load(path: *const c_char, out: *mut *mut MfBinarySvm) -> MfStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let model = BinarySvmModel::load(c_str(path, "path")?)?;
        into_handle(MfBinarySvm { inner: model }, out);
        Ok(())
    })
}

/// # Safety
/// `model` came from this library and is not used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn mf_svm_free(model: *mut MfBinarySvm) {
    free_handle(model)
}

// ---- multiclass SVM banks ----

fn scheme_of(s: MfScheme, model: &MulticlassSvmModel) -> Scheme {
    match s {
        MfScheme::Default => model.scheme_default(),
        MfScheme::Voting => Scheme::Voting,
        MfScheme::Ddag => Scheme::Ddag,
        MfScheme::OneVsAll => Scheme::OneVsAll,
    }
}

/// Trains a bank on labels `0..classes`. `scheme` picks one-vs-all
/// (`MF_SCHEME_ONE_VS_ALL`) or pairwise machines with the given default.
///
/// # Safety
/// `samples` holds `n * dim` doubles, `labels` holds `n` values, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mf_bank_train(
    samples: *const f64,
    labels: *const usize,
    n: usize,
    dim: usize,
    classes: usize,
    kernel: *const c_char,
    c_reg: f64,
    scheme: MfScheme,
    seed: u64,
    out: *mut *mut MfMulticlassSvm,
) -> MfStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let xs = rows(samples, n, dim)?;
        let ys = slice_in(labels, n, "labels")?;
        let kernel = resolve_kernel(c_str(kernel, "kernel")?, &xs, seed)?;
        let cfg = SmoConfig::new(c_reg, kernel).with_seed(seed);
        let bank = match scheme {
            MfScheme::OneVsAll => train_one_vs_all(&xs, ys, classes, &cfg)?,
            other => {
                let mut bank = train_one_vs_one(&xs, ys, classes, &cfg)?;
                if other != MfScheme::Default {
                    bank.set_scheme_default(scheme_of(other, &bank))?;
                }
                bank
            }
        };
        into_handle(MfMulticlassSvm { inner: bank }, out);
        Ok(())
    })
}

/// Decides the class of `x`. `machine_evaluations` may be NULL.
///
/// # Safety
/// `model` is a live handle, `x` holds `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn mf_bank_decide(
    model: *const MfMulticlassSvm,
    x: *const f64,
    dim: usize,
    scheme: MfScheme,
    class_out: *mut usize,
    machine_evaluations: *mut usize,
) -> MfStatus {
    guard(|| {
        let bank = &handle(model, "model")?.inner;
        let out = out_ref(class_out, "class_out")?;
        let (class, stats) =
            bank.decide_with(scheme_of(scheme, bank), slice_in(x, dim, "x")?, EvalOptions::default())?;
        *out = class;
        if let Some(m) = machine_evaluations.as_mut() {
            *m = stats.machine_evaluations;
        }
        Ok(())
    })
}

/// # Safety
/// `model` is a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn mf_bank_class_count(model: *const MfMulticlassSvm) -> usize {
    model.as_ref().map_or(0, |m| m.inner.class_count())
}

/// # Safety
/// `model` is a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn mf_bank_unique_support_vectors(model: *const MfMulticlassSvm) -> usize {
    model.as_ref().map_or(0, |m| m.inner.unique_support_vectors())
}

/// Writes the bank as a directory of machine files.
///
/// # Safety
/// `model` is a live handle, `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mf_bank_save(model: *const MfMulticlassSvm, dir: *const c_char) -> MfStatus {
    guard(|| Ok(handle(model, "model")?.inner.save_dir(PathBuf::from(c_str(dir, "dir")?))?))
}

/// # Safety
/// `dir` is a NUL-terminated string, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mf_bank_load(dir: *const c_char, out: *mut *mut MfMulticlassSvm) -> MfStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let bank = MulticlassSvmModel::load_dir(c_str(dir, "dir")?)?;
        into_handle(MfMulticlassSvm { inner: bank }, out);
        Ok(())
    })
}

/// # Safety
/// `model` came from this library and is not used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn mf_bank_free(model: *mut MfMulticlassSvm) {
    free_handle(model)
}

// ---- MLP ----

/// Trains a sigmoid `dim-hidden-classes` network with Rprop on softened
/// one-of-c targets for labels `0..classes`.
///
/// # Safety
/// `samples` holds `n * dim` doubles, `labels` holds `n` values, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mf_mlp_train(
    samples: *const f64,
    labels: *const usize,
    n: usize,
    dim: usize,
    classes: usize,
    hidden: usize,
    init: MfInit,
    max_epochs: usize,
    seed: u64,
    out: *mut *mut MfMlp,
) -> MfStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let xs = rows(samples, n, dim)?;
        let ys = slice_in(labels, n, "labels")?;
        let act = Activation::Sigmoid;
        let scheme = match init {
            MfInit::Uniform => InitScheme::Uniform,
            MfInit::NguyenWidrow => InitScheme::NguyenWidrow,
        };
        let start = scheme.build((dim, hidden, classes), act, 0.5, seed)?;
        let targets = one_of_c_targets(ys, classes, act, TargetEncoding::Softened)?;
        let cfg = RpropConfig { max_epochs, seed, ..RpropConfig::default() };
        let (model, _) = rprop_train(&start, &xs, &targets, &cfg)?;
        into_handle(MfMlp { inner: model }, out);
        Ok(())
    })
}

/// Writes the `out_len` network outputs for `x`.
///
/// # Safety
/// `model` is a live handle, `x` holds `dim` doubles, `out` holds `out_len`.
#[no_mangle]
pub unsafe extern "C" fn mf_mlp_forward(
    model: *const MfMlp,
    x: *const f64,
    dim: usize,
    out: *mut f64,
    out_len: usize,
) -> MfStatus {
    guard(|| {
        let y = handle(model, "model")?.inner.forward(slice_in(x, dim, "x")?)?;
        if out_len != y.len() {
            return Err(Error::DimensionMismatch { expected: y.len(), found: out_len }.into());
        }
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        slice::from_raw_parts_mut(out, out_len).copy_from_slice(&y);
        Ok(())
    })
}

/// Index of the largest output.
///
/// # Safety
/// `model` is a live handle, `x` holds `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn mf_mlp_classify(
    model: *const MfMlp,
    x: *const f64,
    dim: usize,
    class_out: *mut usize,
) -> MfStatus {
    guard(|| {
        let m = &handle(model, "model")?.inner;
        *out_ref(class_out, "class_out")? = m.classify(slice_in(x, dim, "x")?, m.output_dim())?;
        Ok(())
    })
}

/// Writes input, hidden and output sizes; any pointer may be NULL.
///
/// # Safety
/// `model` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn mf_mlp_dims(
    model: *const MfMlp,
    inputs: *mut usize,
    hidden: *mut usize,
    outputs: *mut usize,
) -> MfStatus {
    guard(|| {
        let m = &handle(model, "model")?.inner;
        for (p, v) in [(inputs, m.input_dim()), (hidden, m.hidden_count()), (outputs, m.output_dim())] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `model` is a live handle, `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mf_mlp_save(model: *const MfMlp, path: *const c_char) -> MfStatus {
    guard(|| Ok(handle(model, "model")?.inner.save(c_str(path, "path")?)?))
}

/// # Safety
/// `path` is a NUL-terminated string, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mf_mlp_load(path: *const c_char, out: *mut *mut MfMlp) -> MfStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        into_handle(MfMlp { inner: MlpModel::load(c_str(path, "path")?)? }, out);
        Ok(())
    })
}

/// # Safety
/// `model` came from this library and is not used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn mf_mlp_free(model: *mut MfMlp) {
    free_handle(model)
}

// ---- metrics ----

/// Cohen's kappa of a row-major `classes × classes` confusion matrix
/// (rows = truth, columns = prediction).
///
/// # Safety
/// `counts` holds `classes * classes` values, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mf_kappa(counts: *const u64, classes: usize, out: *mut MfKappa) -> MfStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let len = classes.checked_mul(classes).ok_or_else(|| Failure::Arg("classes too large".into()))?;
        let m = ConfusionMatrix::from_counts(classes, slice_in(counts, len, "counts")?.to_vec())?;
        let k = cohen_kappa(&m)?;
        *out = MfKappa {
            kappa: k.kappa,
            variance: k.variance,
            ci95: k.ci95_half_width,
            p_observed: k.p_observed,
            p_chance: k.p_chance,
            n: k.n,
        };
        Ok(())
    })
}

/// Two-sided z-test between two independent kappa estimates.
///
/// # Safety
/// `z_out` is writable; `significant_out` is writable or NULL.
#[no_mangle]
pub unsafe extern "C" fn mf_kappa_z_test(
    kappa1: f64,
    variance1: f64,
    kappa2: f64,
    variance2: f64,
    alpha: f64,
    z_out: *mut f64,
    significant_out: *mut bool,
) -> MfStatus {
    guard(|| {
        let z = out_ref(z_out, "z_out")?;
        let t = kappa_z_test((kappa1, variance1), (kappa2, variance2), alpha)?;
        *z = t.z;
        if let Some(s) = significant_out.as_mut() {
            *s = t.significant;
        }
        Ok(())
    })
}

// ---- image preprocessing ----

unsafe fn gray(pixels: *const u8, width: usize, height: usize) -> FfiResult<GrayImage> {
    let len = width.checked_mul(height).ok_or_else(|| Failure::Arg("image too large".into()))?;
    Ok(GrayImage::new(width, height, slice_in(pixels, len, "pixels")?.to_vec())?)
}

/// Otsu threshold of an 8-bit image; foreground pixels are those `> threshold`.
///
/// # Safety
/// `pixels` holds `width * height` bytes, row-major.
#[no_mangle]
pub unsafe extern "C" fn mf_otsu_threshold(pixels: *const u8, width: usize, height: usize, out: *mut u8) -> MfStatus {
    guard(|| {
        *out_ref(out, "out")? = otsu_threshold(&gray(pixels, width, height)?)?;
        Ok(())
    })
}

/// Threshold, crop, resize to 32×32 and write the 1024 features to `out`.
/// `invert` selects a foreground darker than the background.
///
/// # Safety
/// `pixels` holds `width * height` bytes, `out` holds `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mf_preprocess_image(
    pixels: *const u8,
    width: usize,
    height: usize,
    invert: bool,
    out: *mut f64,
    out_len: usize,
) -> MfStatus {
    guard(|| {
        if out_len != VECTOR_LEN {
            return Err(Error::DimensionMismatch { expected: VECTOR_LEN, found: out_len }.into());
        }
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let polarity = if invert { Polarity::DarkForeground } else { Polarity::BrightForeground };
        let v = preprocess_image(&gray(pixels, width, height)?, polarity)?;
        slice::from_raw_parts_mut(out, out_len).copy_from_slice(&v);
        Ok(())
    })
}

/// Number of features produced by [`mf_preprocess_image`].
#[no_mangle]
pub extern "C" fn mf_vector_len() -> usize {
    VECTOR_LEN
}
