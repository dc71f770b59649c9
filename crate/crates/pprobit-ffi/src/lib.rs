//! C ABI over the pprobit library.
//!
//! Conventions: objects cross the boundary as opaque handles created and
//! freed here; every fallible call returns a `PprobitStatus`; outputs go
//! through caller-supplied buffers whose sizes are queried first. The last
//! error message is kept per thread and read with
//! `pprobit_last_error_message`.

use pprobit::data::{fold_labels, load_csv, load_libsvm, make_synthetic, LabelColumn, SyntheticSpec};
use pprobit::objective::{estimate_mu_lower, FoldedDesignMatrix, Weights};
use pprobit::pipeline::{
    online_coreset_stream, two_pass_coreset, uniform_coreset_stream, PipelineOptions,
    ReductionMethod,
};
use pprobit::sampling::{l2_leverage_coreset, WeightedCoreset};
use pprobit::solver::{fit, fit_on_coreset, FitResult, Method, SolverConfig};
use pprobit::stream::MatrixSource;
use pprobit::{Error, ShapeP};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PprobitStatus {
    Ok = 0,
    InvalidArgument = 1,
    DomainError = 2,
    DimensionMismatch = 3,
    RankDeficient = 4,
    NumericFailure = 5,
    IoError = 6,
    ParseError = 7,
    NullPointer = 8,
    Panic = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = Some(CString::new(sanitized).unwrap());
    });
}

fn status_of(err: &Error) -> PprobitStatus {
    match err {
        Error::Domain(_) => PprobitStatus::DomainError,
        Error::Dimension(_) => PprobitStatus::DimensionMismatch,
        Error::InvalidArgument(_) => PprobitStatus::InvalidArgument,
        Error::RankDeficient(_) => PprobitStatus::RankDeficient,
        Error::Numeric(_) => PprobitStatus::NumericFailure,
        Error::Parse { .. } => PprobitStatus::ParseError,
        Error::Io(_) => PprobitStatus::IoError,
    }
}

fn run_guarded<F: FnOnce() -> Result<(), (PprobitStatus, String)>>(f: F) -> PprobitStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PprobitStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("panic crossed the C boundary".to_string());
            PprobitStatus::Panic
        }
    }
}

fn lib_err(err: Error) -> (PprobitStatus, String) {
    (status_of(&err), err.to_string())
}

fn invalid(message: &str) -> (PprobitStatus, String) {
    (PprobitStatus::InvalidArgument, message.to_string())
}

fn null_err() -> (PprobitStatus, String) {
    (PprobitStatus::NullPointer, "null pointer argument".to_string())
}

/// Message describing the most recent error on this thread, or NULL. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pprobit_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|s| s.as_ptr())
            .unwrap_or(std::ptr::null())
    })
}

/// Folded design matrix handle (labels already folded into rows).
pub struct PprobitDataset {
    matrix: FoldedDesignMatrix,
}

/// Weighted coreset handle.
pub struct PprobitCoreset {
    coreset: WeightedCoreset,
}

/// Fit result handle.
pub struct PprobitFit {
    result: FitResult,
}

unsafe fn slice_arg<'a>(ptr: *const f64, len: usize) -> Option<&'a [f64]> {
    if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(ptr, len))
    }
}

unsafe fn path_arg<'a>(ptr: *const c_char) -> Result<&'a Path, (PprobitStatus, String)> {
    if ptr.is_null() {
        return Err(null_err());
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map(Path::new)
        .map_err(|_| invalid("path is not valid UTF-8"))
}

/// Build a dataset handle from a dense row-major feature matrix and 0/1
/// labels; rows are folded as x_i = −(2y_i−1)·z_i, with an optional leading
/// intercept column.
///
/// # Safety
/// `features` must point to n·d doubles; `labels` to n bytes; `out` must be
/// a valid destination pointer.
#[no_mangle]
pub unsafe extern "C" fn pprobit_dataset_from_dense(
    features: *const f64,
    labels: *const u8,
    n: usize,
    d: usize,
    add_intercept: bool,
    out: *mut *mut PprobitDataset,
) -> PprobitStatus {
    run_guarded(|| {
        if out.is_null() || features.is_null() || labels.is_null() {
            return Err(null_err());
        }
        let feature_slice = std::slice::from_raw_parts(features, n * d);
        let label_slice = std::slice::from_raw_parts(labels, n);
        if label_slice.iter().any(|&l| l > 1) {
            return Err(invalid("labels must be 0 or 1"));
        }
        let features = ndarray::Array2::from_shape_vec((n, d), feature_slice.to_vec())
            .map_err(|e| invalid(&e.to_string()))?;
        let ds = pprobit::data::LabeledDataset {
            features,
            labels: label_slice.to_vec(),
            feature_names: None,
            label_mapping: "0/1".to_string(),
        };
        let matrix = fold_labels(&ds, add_intercept).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(PprobitDataset { matrix }));
        Ok(())
    })
}

/// Load a dataset from a CSV file (label in the last column unless
/// `label_col` ≥ 0) or a LIBSVM file when `libsvm` is true.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` a valid destination.
#[no_mangle]
pub unsafe extern "C" fn pprobit_dataset_load(
    path: *const c_char,
    libsvm: bool,
    csv_header: bool,
    label_col: i64,
    add_intercept: bool,
    out: *mut *mut PprobitDataset,
) -> PprobitStatus {
    run_guarded(|| {
        if out.is_null() {
            return Err(null_err());
        }
        let path = path_arg(path)?;
        let ds = if libsvm {
            load_libsvm(path).map_err(lib_err)?
        } else {
            let label = if label_col >= 0 {
                LabelColumn::Index(label_col as usize)
            } else {
                LabelColumn::Last
            };
            load_csv(path, label, csv_header).map_err(lib_err)?
        };
        let matrix = fold_labels(&ds, add_intercept).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(PprobitDataset { matrix }));
        Ok(())
    })
}

/// Generate the synthetic two-cluster instance with planted outliers.
///
/// # Safety
/// `out` must be a valid destination pointer.
#[no_mangle]
pub unsafe extern "C" fn pprobit_dataset_synthetic(
    n: usize,
    d: usize,
    seed: u64,
    outlier_fraction: f64,
    outlier_scale: f64,
    separation: f64,
    add_intercept: bool,
    out: *mut *mut PprobitDataset,
) -> PprobitStatus {
    run_guarded(|| {
        if out.is_null() {
            return Err(null_err());
        }
        let spec = SyntheticSpec {
            n,
            d,
            seed,
            outlier_fraction,
            outlier_scale,
            target_separation: separation,
        };
        let ds = make_synthetic(&spec).map_err(lib_err)?;
        let matrix = fold_labels(&ds, add_intercept).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(PprobitDataset { matrix }));
        Ok(())
    })
}

/// Number of rows.
///
/// # Safety
/// `dataset` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pprobit_dataset_rows(dataset: *const PprobitDataset) -> usize {
    if dataset.is_null() {
        return 0;
    }
    (*dataset).matrix.n()
}

/// Number of (folded) columns.
///
/// # Safety
/// `dataset` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pprobit_dataset_dim(dataset: *const PprobitDataset) -> usize {
    if dataset.is_null() {
        return 0;
    }
    (*dataset).matrix.dim()
}

/// # Safety
/// `dataset` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pprobit_dataset_free(dataset: *mut PprobitDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Maximum-likelihood fit on the full dataset (damped Newton, or gradient
/// descent when `gradient_descent`).
///
/// # Safety
/// `dataset` must be a live handle; `out` a valid destination.
#[no_mangle]
pub unsafe extern "C" fn pprobit_fit(
    dataset: *const PprobitDataset,
    p: f64,
    gradient_descent: bool,
    out: *mut *mut PprobitFit,
) -> PprobitStatus {
    run_guarded(|| {
        if dataset.is_null() || out.is_null() {
            return Err(null_err());
        }
        let matrix = &(*dataset).matrix;
        let shape = ShapeP::new(p).map_err(lib_err)?;
        let method = if gradient_descent {
            Method::GradientDescent
        } else {
            Method::Newton
        };
        let config = SolverConfig::for_problem(matrix.n(), method);
        let result = fit(matrix, Weights::Uniform, &shape, &config, None).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(PprobitFit { result }));
        Ok(())
    })
}

/// Fit on a coreset (same solver contract, weighted rows).
///
/// # Safety
/// `coreset` must be a live handle; `out` a valid destination.
#[no_mangle]
pub unsafe extern "C" fn pprobit_fit_on_coreset(
    coreset: *const PprobitCoreset,
    p: f64,
    out: *mut *mut PprobitFit,
) -> PprobitStatus {
    run_guarded(|| {
        if coreset.is_null() || out.is_null() {
            return Err(null_err());
        }
        let coreset = &(*coreset).coreset;
        let shape = ShapeP::new(p).map_err(lib_err)?;
        let config = SolverConfig::for_problem(coreset.k(), Method::Newton);
        let result = fit_on_coreset(coreset, &shape, &config, None).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(PprobitFit { result }));
        Ok(())
    })
}

/// Coefficient count of a fit.
///
/// # Safety
/// `fit` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pprobit_fit_dim(fit: *const PprobitFit) -> usize {
    if fit.is_null() {
        return 0;
    }
    (*fit).result.beta_hat.len()
}

/// Copy β̂ into `buffer` (length `len` ≥ the fit dimension).
///
/// # Safety
/// `fit` must be a live handle; `buffer` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pprobit_fit_beta(
    fit: *const PprobitFit,
    buffer: *mut f64,
    len: usize,
) -> PprobitStatus {
    run_guarded(|| {
        if fit.is_null() || buffer.is_null() {
            return Err(null_err());
        }
        let beta = &(*fit).result.beta_hat;
        if len < beta.len() {
            return Err(invalid("buffer too small for beta"));
        }
        std::ptr::copy_nonoverlapping(beta.as_ptr(), buffer, beta.len());
        Ok(())
    })
}

/// # Safety
/// `fit` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pprobit_fit_loss(fit: *const PprobitFit) -> f64 {
    if fit.is_null() {
        return f64::NAN;
    }
    (*fit).result.final_loss
}

/// # Safety
/// `fit` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pprobit_fit_iterations(fit: *const PprobitFit) -> usize {
    if fit.is_null() {
        return 0;
    }
    (*fit).result.iterations
}

/// # Safety
/// `fit` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pprobit_fit_converged(fit: *const PprobitFit) -> bool {
    if fit.is_null() {
        return false;
    }
    (*fit).result.converged
}

/// # Safety
/// `fit` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pprobit_fit_gradient_norm(fit: *const PprobitFit) -> f64 {
    if fit.is_null() {
        return f64::NAN;
    }
    (*fit).result.gradient_norm
}

/// # Safety
/// `fit` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pprobit_fit_free(fit: *mut PprobitFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Reduction methods exposed over the ABI.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PprobitMethod {
    Pprobit = 0,
    Uniform = 1,
    L2 = 2,
    SqrtL2 = 3,
    OnlineL2 = 4,
}

/// Build a weighted coreset of k rows with the given method and seed.
///
/// # Safety
/// `dataset` must be a live handle; `out` a valid destination.
#[no_mangle]
pub unsafe extern "C" fn pprobit_coreset_build(
    dataset: *const PprobitDataset,
    method: PprobitMethod,
    p: f64,
    k: usize,
    seed: u64,
    rounding: bool,
    out: *mut *mut PprobitCoreset,
) -> PprobitStatus {
    run_guarded(|| {
        if dataset.is_null() || out.is_null() {
            return Err(null_err());
        }
        let matrix = &(*dataset).matrix;
        let shape = ShapeP::new(p).map_err(lib_err)?;
        let options = PipelineOptions {
            seed,
            rounding,
            allow_jl: true,
        };
        let method = match method {
            PprobitMethod::Pprobit => ReductionMethod::Pprobit,
            PprobitMethod::Uniform => ReductionMethod::Uniform,
            PprobitMethod::L2 => ReductionMethod::L2,
            PprobitMethod::SqrtL2 => ReductionMethod::SqrtL2,
            PprobitMethod::OnlineL2 => ReductionMethod::OnlineL2,
        };
        let coreset = match method {
            ReductionMethod::Pprobit => {
                let mut src = MatrixSource::new(matrix);
                two_pass_coreset(&mut src, &shape, k, &options)
                    .map_err(lib_err)?
                    .0
            }
            ReductionMethod::Uniform => {
                let mut src = MatrixSource::new(matrix);
                uniform_coreset_stream(&mut src, &shape, k, &options)
                    .map_err(lib_err)?
                    .0
            }
            ReductionMethod::L2 => l2_leverage_coreset(matrix, k, seed, false).map_err(lib_err)?,
            ReductionMethod::SqrtL2 => {
                l2_leverage_coreset(matrix, k, seed, true).map_err(lib_err)?
            }
            ReductionMethod::OnlineL2 => {
                let mut src = MatrixSource::new(matrix);
                online_coreset_stream(&mut src, &shape, k, &options)
                    .map_err(lib_err)?
                    .0
            }
        };
        *out = Box::into_raw(Box::new(PprobitCoreset { coreset }));
        Ok(())
    })
}

/// # Safety
/// `coreset` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pprobit_coreset_rows(coreset: *const PprobitCoreset) -> usize {
    if coreset.is_null() {
        return 0;
    }
    (*coreset).coreset.k()
}

/// # Safety
/// `coreset` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pprobit_coreset_dim(coreset: *const PprobitCoreset) -> usize {
    if coreset.is_null() {
        return 0;
    }
    (*coreset).coreset.dim()
}

/// Copy the coreset into caller buffers: `rows` gets k·d doubles
/// (row-major), `weights` k doubles, `source_indices` k entries.
/// Any of the buffers may be NULL to skip it.
///
/// # Safety
/// Non-NULL buffers must have the advertised capacities.
#[no_mangle]
pub unsafe extern "C" fn pprobit_coreset_copy(
    coreset: *const PprobitCoreset,
    rows: *mut f64,
    weights: *mut f64,
    source_indices: *mut usize,
) -> PprobitStatus {
    run_guarded(|| {
        if coreset.is_null() {
            return Err(null_err());
        }
        let coreset = &(*coreset).coreset;
        if !rows.is_null() {
            let flat = coreset
                .rows
                .as_slice()
                .ok_or_else(|| invalid("coreset rows not contiguous"))?;
            std::ptr::copy_nonoverlapping(flat.as_ptr(), rows, flat.len());
        }
        if !weights.is_null() {
            std::ptr::copy_nonoverlapping(coreset.weights.as_ptr(), weights, coreset.weights.len());
        }
        if !source_indices.is_null() {
            std::ptr::copy_nonoverlapping(
                coreset.source_indices.as_ptr(),
                source_indices,
                coreset.source_indices.len(),
            );
        }
        Ok(())
    })
}

/// # Safety
/// `coreset` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pprobit_coreset_free(coreset: *mut PprobitCoreset) {
    if !coreset.is_null() {
        drop(Box::from_raw(coreset));
    }
}

/// Evaluate the weighted loss f_w(Xβ) of an arbitrary coefficient vector on
/// the dataset.
///
/// # Safety
/// `beta` must point to `len` doubles matching the dataset dimension.
#[no_mangle]
pub unsafe extern "C" fn pprobit_loss(
    dataset: *const PprobitDataset,
    p: f64,
    beta: *const f64,
    len: usize,
    out: *mut f64,
) -> PprobitStatus {
    run_guarded(|| {
        if dataset.is_null() || out.is_null() {
            return Err(null_err());
        }
        let beta = slice_arg(beta, len).ok_or_else(null_err)?;
        let shape = ShapeP::new(p).map_err(lib_err)?;
        let matrix = &(*dataset).matrix;
        let value = pprobit::objective::loss(
            matrix,
            Weights::Uniform,
            &ndarray::ArrayView1::from(beta),
            &shape,
        )
        .map_err(lib_err)?;
        *out = value;
        Ok(())
    })
}

/// Sampled lower bound on the complexity parameter μ_p. `out` receives the
/// bound (+∞ when a direction with empty negative part was found).
///
/// # Safety
/// `dataset` must be a live handle; `out` a valid destination.
#[no_mangle]
pub unsafe extern "C" fn pprobit_mu_lower_bound(
    dataset: *const PprobitDataset,
    p: f64,
    num_directions: usize,
    seed: u64,
    out: *mut f64,
) -> PprobitStatus {
    run_guarded(|| {
        if dataset.is_null() || out.is_null() {
            return Err(null_err());
        }
        let shape = ShapeP::new(p).map_err(lib_err)?;
        let estimate =
            estimate_mu_lower(&(*dataset).matrix, &shape, num_directions, seed).map_err(lib_err)?;
        *out = estimate.mu_lower;
        Ok(())
    })
}
