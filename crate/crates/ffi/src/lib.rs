//! C ABI for `chg-shapley`.
//!
//! Every function returns a [`ChgStatus`]. On failure the message is kept per
//! thread and can be read with [`chg_last_error_message`]. Handles are opaque
//! and must be released with their `*_free` function. Panics never cross the
//! boundary; they are reported as [`ChgStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use chg_shapley::model::{Dataset, TrainingSetup};
use chg_shapley::shapley::{self, exact_shapley, ChgGame};
use chg_shapley::utility::{hardness_shapley, scheme_shapley, GradientSet, UtilityKind};
use chg_shapley::valuation::{run_valuation, ValuationConfig, ValuationRun};
use chg_shapley::{Error, Matrix};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Domain = 3,
    TooLarge = 4,
    Numeric = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChgScheme {
    Chg = 0,
    Hardness = 1,
    Gradient = 2,
}

impl From<ChgScheme> for UtilityKind {
    fn from(s: ChgScheme) -> Self {
        match s {
            ChgScheme::Chg => UtilityKind::Chg,
            ChgScheme::Hardness => UtilityKind::Hardness,
            ChgScheme::Gradient => UtilityKind::Gradient,
        }
    }
}

/// Training and valuation settings for [`chg_valuation_run`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ChgValuationOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Width of a frozen random tanh layer; 0 for none.
    pub hidden: usize,
    pub seed: u64,
    pub scheme: ChgScheme,
    pub per_class: bool,
    pub skip_first_epochs: usize,
}

/// Opaque set of per-datum gradients and losses.
pub struct ChgGradientSet(GradientSet);

/// Opaque result of a valuation run.
pub struct ChgValuationRun(ValuationRun);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> ChgStatus {
    match err {
        Error::Domain(_) => ChgStatus::Domain,
        Error::Input(_) | Error::Csv(_) | Error::Json(_) => ChgStatus::InvalidInput,
        Error::TooLarge { .. } => ChgStatus::TooLarge,
        Error::Numeric(_) | Error::Diverged { .. } | Error::Audit { .. } => ChgStatus::Numeric,
        Error::Io { .. } => ChgStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

/// Runs `f`, records any failure, and maps it to a status.
fn guard<F>(f: F) -> ChgStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            ChgStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("{what} is null"));
            ChgStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("panic: {msg}"));
            ChgStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &'static str) -> Result<*const T, Failure> {
    if p.is_null() {
        Err(Failure::Null(what))
    } else {
        Ok(p)
    }
}

/// # Safety
/// `p` must be null or point to `len` readable values.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    let p = non_null(p, what)?;
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or point to `len` writable values.
unsafe fn slice_mut<'a, T>(
    p: *mut T,
    len: usize,
    what: &'static str,
) -> Result<&'a mut [T], Failure> {
    non_null(p as *const T, what)?;
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn path<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    let p = non_null(p, "path")?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Core(Error::Input("path is not valid UTF-8".into())))
}

fn matrix(data: &[f64], n: usize, d: usize) -> Result<Matrix, Failure> {
    Ok(Matrix::from_vec(n, d, data.to_vec())?)
}

fn copy_out(values: &[f64], out: &mut [f64]) {
    out.copy_from_slice(values);
}

fn checked_len(n: usize, d: usize) -> Result<usize, Failure> {
    n.checked_mul(d)
        .ok_or_else(|| Failure::Core(Error::Input(format!("{n}×{d} overflows"))))
}

/// The last error message on this thread, or null. Valid until the next
/// call into this library from the same thread.
#[no_mangle]
pub extern "C" fn chg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn chg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Closed-form Shapley values of the CHG game with row-major `x` (`n × d`)
/// and reference vector `alpha` (`d`). Writes `n` values to `out`.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn chg_closed_form_shapley(
    x: *const f64,
    n: usize,
    d: usize,
    alpha: *const f64,
    out: *mut f64,
) -> ChgStatus {
    guard(|| {
        let x = matrix(slice(x, checked_len(n, d)?, "x")?, n, d)?;
        let alpha = slice(alpha, d, "alpha")?;
        let out = slice_mut(out, n, "out")?;
        copy_out(&shapley::chg_closed_form_shapley(&x, alpha)?.values, out);
        Ok(())
    })
}

/// Exact Shapley values of the same game by enumerating all coalitions.
/// Fails with `TOO_LARGE` above `limit` players.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn chg_exact_shapley(
    x: *const f64,
    n: usize,
    d: usize,
    alpha: *const f64,
    limit: usize,
    out: *mut f64,
) -> ChgStatus {
    guard(|| {
        let x = matrix(slice(x, checked_len(n, d)?, "x")?, n, d)?;
        let alpha = slice(alpha, d, "alpha")?;
        let out = slice_mut(out, n, "out")?;
        if alpha.iter().any(|a| !a.is_finite()) || !x.is_finite() {
            return Err(Error::Input("non-finite input".into()).into());
        }
        let game = ChgGame { x: &x, alpha };
        copy_out(&exact_shapley(&game, limit)?.values, out);
        Ok(())
    })
}

/// Shapley values of the hardness utility `U(S) = Σ_{i∈S} l_i / |S|`.
///
/// # Safety
/// Pointers must be valid for `n` values.
#[no_mangle]
pub unsafe extern "C" fn chg_hardness_shapley(
    losses: *const f64,
    n: usize,
    out: *mut f64,
) -> ChgStatus {
    guard(|| {
        let losses = slice(losses, n, "losses")?;
        let out = slice_mut(out, n, "out")?;
        copy_out(&hardness_shapley(losses)?.values, out);
        Ok(())
    })
}

/// Builds a gradient set from row-major gradients (`n × d`) and `n` losses.
/// Set `weighted` when the rows already include the loss factor.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out` receives a handle to
/// free with [`chg_gradient_set_free`].
#[no_mangle]
pub unsafe extern "C" fn chg_gradient_set_new(
    gradients: *const f64,
    losses: *const f64,
    n: usize,
    d: usize,
    weighted: bool,
    out: *mut *mut ChgGradientSet,
) -> ChgStatus {
    guard(|| {
        let out = slice_mut(out, 1, "out")?;
        let vectors = matrix(slice(gradients, checked_len(n, d)?, "gradients")?, n, d)?;
        let losses = slice(losses, n, "losses")?.to_vec();
        let gs = GradientSet::new(vectors, losses, weighted)?;
        out[0] = Box::into_raw(Box::new(ChgGradientSet(gs)));
        Ok(())
    })
}

/// Loads a gradient set file (binary when the name ends in `.bin`).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn chg_gradient_set_load(
    path_ptr: *const c_char,
    out: *mut *mut ChgGradientSet,
) -> ChgStatus {
    guard(|| {
        let out = slice_mut(out, 1, "out")?;
        let gs = GradientSet::load(path(path_ptr)?)?;
        out[0] = Box::into_raw(Box::new(ChgGradientSet(gs)));
        Ok(())
    })
}

/// Writes the set to `path` in the format chosen by its extension.
///
/// # Safety
/// `set` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn chg_gradient_set_save(
    set: *const ChgGradientSet,
    path_ptr: *const c_char,
) -> ChgStatus {
    guard(|| {
        let set = &*non_null(set, "set")?;
        set.0.save(path(path_ptr)?)?;
        Ok(())
    })
}

/// Number of data in the set, or 0 for a null handle.
///
/// # Safety
/// `set` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chg_gradient_set_len(set: *const ChgGradientSet) -> usize {
    set.as_ref().map_or(0, |s| s.0.len())
}

/// Gradient dimension, or 0 for a null handle.
///
/// # Safety
/// `set` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chg_gradient_set_dim(set: *const ChgGradientSet) -> usize {
    set.as_ref().map_or(0, |s| s.0.dim())
}

/// Shapley value of every datum under `scheme`. `out` holds
/// `chg_gradient_set_len(set)` values.
///
/// # Safety
/// `set` must be a live handle and `out` valid for the set's length.
#[no_mangle]
pub unsafe extern "C" fn chg_gradient_set_shapley(
    set: *const ChgGradientSet,
    scheme: ChgScheme,
    out: *mut f64,
) -> ChgStatus {
    guard(|| {
        let set = &*non_null(set, "set")?;
        let out = slice_mut(out, set.0.len(), "out")?;
        copy_out(&scheme_shapley(&set.0, scheme.into())?.values, out);
        Ok(())
    })
}

/// # Safety
/// `set` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn chg_gradient_set_free(set: *mut ChgGradientSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Defaults matching the command-line tool.
#[no_mangle]
pub extern "C" fn chg_valuation_options_default() -> ChgValuationOptions {
    let setup = TrainingSetup::default();
    ChgValuationOptions {
        epochs: setup.epochs,
        learning_rate: setup.lr,
        batch_size: setup.batch_size,
        hidden: setup.hidden.unwrap_or(0),
        seed: setup.seed,
        scheme: ChgScheme::Chg,
        per_class: false,
        skip_first_epochs: 0,
    }
}

/// Trains on the CSV at `path` (features then integer label) and values
/// every row at every epoch.
///
/// # Safety
/// `path` must be a NUL-terminated string, `options` null (for defaults) or
/// readable, and `out` writable. Free the handle with
/// [`chg_valuation_run_free`].
#[no_mangle]
pub unsafe extern "C" fn chg_valuation_run(
    path_ptr: *const c_char,
    options: *const ChgValuationOptions,
    out: *mut *mut ChgValuationRun,
) -> ChgStatus {
    guard(|| {
        let out = slice_mut(out, 1, "out")?;
        let opts = options
            .as_ref()
            .copied()
            .unwrap_or_else(|| chg_valuation_options_default());
        let data = Dataset::load_csv(path(path_ptr)?)?;
        let cfg = ValuationConfig {
            setup: TrainingSetup {
                epochs: opts.epochs,
                lr: opts.learning_rate,
                batch_size: opts.batch_size,
                hidden: (opts.hidden > 0).then_some(opts.hidden),
                seed: opts.seed,
                ..TrainingSetup::default()
            },
            scheme: opts.scheme.into(),
            per_class: opts.per_class,
            skip_first_epochs: opts.skip_first_epochs,
        };
        let run = run_valuation(&data, &cfg)?;
        out[0] = Box::into_raw(Box::new(ChgValuationRun(run)));
        Ok(())
    })
}

/// Number of valued data, or 0 for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chg_valuation_run_len(run: *const ChgValuationRun) -> usize {
    run.as_ref().map_or(0, |r| r.0.mean_values.len())
}

/// Number of recorded epochs, or 0 for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chg_valuation_run_epochs(run: *const ChgValuationRun) -> usize {
    run.as_ref().map_or(0, |r| r.0.epochs())
}

/// Epoch-averaged values.
///
/// # Safety
/// `run` must be a live handle and `out` valid for its length.
#[no_mangle]
pub unsafe extern "C" fn chg_valuation_run_mean_values(
    run: *const ChgValuationRun,
    out: *mut f64,
) -> ChgStatus {
    guard(|| {
        let run = &*non_null(run, "run")?;
        let out = slice_mut(out, run.0.mean_values.len(), "out")?;
        copy_out(&run.0.mean_values, out);
        Ok(())
    })
}

/// Values measured at the start of `epoch`.
///
/// # Safety
/// `run` must be a live handle and `out` valid for its length.
#[no_mangle]
pub unsafe extern "C" fn chg_valuation_run_epoch_values(
    run: *const ChgValuationRun,
    epoch: usize,
    out: *mut f64,
) -> ChgStatus {
    guard(|| {
        let run = &*non_null(run, "run")?;
        if epoch >= run.0.epochs() {
            return Err(Error::Input(format!(
                "epoch {epoch} out of range ({} recorded)",
                run.0.epochs()
            ))
            .into());
        }
        let row = run.0.per_epoch_values.row(epoch);
        let out = slice_mut(out, row.len(), "out")?;
        copy_out(row, out);
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn chg_valuation_run_free(run: *mut ChgValuationRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
