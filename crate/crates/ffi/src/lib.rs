//! C ABI for `banach-sd`.
//!
//! Objects are opaque handles created by `bsd_*_new*` and released by the
//! matching `bsd_*_free`. Every fallible function returns a [`BsdStatus`];
//! on failure a description is kept per thread and can be read with
//! [`bsd_last_error_message`]. Panics never cross the boundary.
//!
//! Vectors are passed as a pointer plus a length. Matrices are row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use banach_sd::error::Error;
use banach_sd::geometry::{Data, DataSpace, Primal, SpaceGeometry};
use banach_sd::models::{ForwardModel, LinearModel, ModelConstants, NoisyData, QuadraticModel};
use banach_sd::run::{execute_file, Overrides};
use banach_sd::sets::ConvexSet;
use banach_sd::solver::{run_projected_descent, Problem, SolverConfig, StopReason};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BsdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NotConverged = 4,
    Io = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BsdStopReason {
    DiscrepancyMet = 0,
    MaxIterations = 1,
    StepDegenerate = 2,
}

/// Outcome of [`bsd_solve`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BsdRunResult {
    pub stop_reason: BsdStopReason,
    /// Index `K` of the last iterate.
    pub iterations: usize,
    pub final_residual: f64,
    pub monotonicity_violations: usize,
    /// Whether the starting point had to be projected into the set.
    pub projected_start: bool,
}

pub struct BsdSpace(SpaceGeometry);
pub struct BsdSet(ConvexSet);
pub struct BsdModel(Box<dyn ForwardModel>);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_last_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Failure(BsdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::DimensionMismatch { .. } => BsdStatus::DimensionMismatch,
            Error::NonConvergence(_) => BsdStatus::NotConverged,
            Error::Io(_) => BsdStatus::Io,
            _ => BsdStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(BsdStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, records any failure or panic, and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BsdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BsdStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            BsdStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or point to `len` readable doubles.
unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or point to `len` writable doubles.
unsafe fn write_out(p: *mut f64, len: usize, values: &[f64], what: &str) -> Result<(), Failure> {
    if values.len() != len {
        return Err(Failure(
            BsdStatus::DimensionMismatch,
            format!("{what} has room for {len} values, {} needed", values.len()),
        ));
    }
    if len > 0 {
        if p.is_null() {
            return Err(null(what));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), p, len);
    }
    Ok(())
}

/// # Safety
/// `p` must be null or a live handle created by this library.
unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    // SAFETY: checked non-null above; the caller provides a writable slot.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the buffer size the full message needs.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn bsd_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bsd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Weighted `ℓ^r` space with gauge `p`. Pass `p <= 0` for the default
/// `max(r, 2)`, `weights = NULL` for unit weights, and `cp <= 0`, `gq <= 0`
/// to use the built-in constants for `r` in {1.5, 2, 3, 4}.
///
/// # Safety
/// `weights` must be null or point to `dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bsd_space_new(
    dim: usize,
    r: f64,
    p: f64,
    weights: *const f64,
    cp: f64,
    gq: f64,
    out: *mut *mut BsdSpace,
) -> BsdStatus {
    guard(|| {
        let w = if weights.is_null() { None } else { Some(slice(weights, dim, "weights")?.to_vec()) };
        let pos = |v: f64| (v > 0.0).then_some(v);
        let space = SpaceGeometry::new(dim, r, pos(p), w, pos(cp), pos(gq))?;
        store(out, BsdSpace(space))
    })
}

/// # Safety
/// `space` must be null or a handle from [`bsd_space_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bsd_space_free(space: *mut BsdSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// `‖x‖`.
///
/// # Safety
/// `x` must point to `n` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bsd_space_norm(space: *const BsdSpace, x: *const f64, n: usize, out: *mut f64) -> BsdStatus {
    guard(|| {
        let s = handle(space, "space")?;
        let v = s.0.norm(&Primal::new(slice(x, n, "x")?.to_vec())?)?;
        write_out(out, 1, &[v], "out")
    })
}

/// `J_p(x)`, written to `out` (length `n`).
///
/// # Safety
/// `x` and `out` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn bsd_space_duality_map(
    space: *const BsdSpace,
    x: *const f64,
    n: usize,
    out: *mut f64,
) -> BsdStatus {
    guard(|| {
        let s = handle(space, "space")?;
        let j = s.0.duality_map(&Primal::new(slice(x, n, "x")?.to_vec())?)?;
        write_out(out, n, &j, "out")
    })
}

/// `Δ_p(x, xt)`, with the duality map evaluated at `x`.
///
/// # Safety
/// `x` and `xt` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bsd_space_bregman_distance(
    space: *const BsdSpace,
    x: *const f64,
    xt: *const f64,
    n: usize,
    out: *mut f64,
) -> BsdStatus {
    guard(|| {
        let s = handle(space, "space")?;
        let a = Primal::new(slice(x, n, "x")?.to_vec())?;
        let b = Primal::new(slice(xt, n, "xt")?.to_vec())?;
        write_out(out, 1, &[s.0.bregman_distance(&a, &b)?], "out")
    })
}

/// The whole space of dimension `dim`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bsd_set_new_whole(dim: usize, out: *mut *mut BsdSet) -> BsdStatus {
    guard(|| store(out, BsdSet(ConvexSet::whole(dim)?)))
}

/// Coordinate box `[lower, upper]`; bounds may be infinite.
///
/// # Safety
/// `lower` and `upper` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bsd_set_new_box(
    lower: *const f64,
    upper: *const f64,
    n: usize,
    out: *mut *mut BsdSet,
) -> BsdStatus {
    guard(|| {
        let set = ConvexSet::boxed(slice(lower, n, "lower")?.to_vec(), slice(upper, n, "upper")?.to_vec())?;
        store(out, BsdSet(set))
    })
}

/// Ball of `radius` around `center` in the norm of the space it is used with.
///
/// # Safety
/// `center` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bsd_set_new_ball(
    center: *const f64,
    n: usize,
    radius: f64,
    out: *mut *mut BsdSet,
) -> BsdStatus {
    guard(|| {
        let set = ConvexSet::ball(Primal::new(slice(center, n, "center")?.to_vec())?, radius)?;
        store(out, BsdSet(set))
    })
}

/// Vectors of dimension `dim` that vanish outside `support`.
///
/// # Safety
/// `support` must point to `m` indices; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bsd_set_new_subspace(
    dim: usize,
    support: *const usize,
    m: usize,
    out: *mut *mut BsdSet,
) -> BsdStatus {
    guard(|| {
        if m > 0 && support.is_null() {
            return Err(null("support"));
        }
        let idx = if m == 0 { Vec::new() } else { std::slice::from_raw_parts(support, m).to_vec() };
        store(out, BsdSet(ConvexSet::subspace(dim, idx)?))
    })
}

/// # Safety
/// `set` must be null or a handle from a `bsd_set_new_*` call not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bsd_set_free(set: *mut BsdSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Bregman projection of `x` onto `set`, written to `out`.
///
/// # Safety
/// `x` and `out` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn bsd_set_project(
    set: *const BsdSet,
    space: *const BsdSpace,
    x: *const f64,
    n: usize,
    out: *mut f64,
) -> BsdStatus {
    guard(|| {
        let (z, s) = (handle(set, "set")?, handle(space, "space")?);
        let p = z.0.bregman_project(&s.0, &Primal::new(slice(x, n, "x")?.to_vec())?)?;
        write_out(out, n, &p, "out")
    })
}

unsafe fn rows_of(a: *const f64, rows: usize, cols: usize) -> Result<Vec<Vec<f64>>, Failure> {
    let n = rows.checked_mul(cols).ok_or_else(|| Failure(BsdStatus::InvalidArgument, "matrix too large".into()))?;
    Ok(slice(a, n, "matrix")?.chunks(cols.max(1)).map(<[f64]>::to_vec).collect())
}

/// `F(x) = A x` with a row-major `rows × cols` matrix.
///
/// # Safety
/// `a` must point to `rows * cols` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bsd_model_new_linear(
    a: *const f64,
    rows: usize,
    cols: usize,
    out: *mut *mut BsdModel,
) -> BsdStatus {
    guard(|| store(out, BsdModel(Box::new(LinearModel::from_rows(&rows_of(a, rows, cols)?)?))))
}

/// `F_i(x) = (A x)_i + eps x_i²` for `i < min(rows, cols)`, `(A x)_i` beyond.
///
/// # Safety
/// `a` must point to `rows * cols` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bsd_model_new_quadratic(
    a: *const f64,
    rows: usize,
    cols: usize,
    eps: f64,
    out: *mut *mut BsdModel,
) -> BsdStatus {
    guard(|| store(out, BsdModel(Box::new(QuadraticModel::from_rows(&rows_of(a, rows, cols)?, eps)?))))
}

/// # Safety
/// `model` must be null or a handle from a `bsd_model_new_*` call not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bsd_model_free(model: *mut BsdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// `F(x)`, written to `out` (length `m`, the output dimension).
///
/// # Safety
/// `x` must point to `n` doubles and `out` to `m` doubles.
#[no_mangle]
pub unsafe extern "C" fn bsd_model_eval(
    model: *const BsdModel,
    x: *const f64,
    n: usize,
    out: *mut f64,
    m: usize,
) -> BsdStatus {
    guard(|| {
        let f = handle(model, "model")?;
        let y = f.0.eval(&Primal::new(slice(x, n, "x")?.to_vec())?)?;
        write_out(out, m, &y, "out")
    })
}

/// Runs projected steepest descent from `x0` on data `y` (length `m`) with
/// model constants `lhat`, `lip`, `stability`, stopping once the residual is
/// at most `eta_hat`. The last iterate is written to `x_out` (length `n`).
///
/// # Safety
/// `y` must point to `m` doubles, `x0` and `x_out` to `n` doubles, and
/// `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bsd_solve(
    space: *const BsdSpace,
    set: *const BsdSet,
    model: *const BsdModel,
    y: *const f64,
    m: usize,
    eta: f64,
    eta_hat: f64,
    lhat: f64,
    lip: f64,
    stability: f64,
    x0: *const f64,
    n: usize,
    max_iterations: usize,
    x_out: *mut f64,
    result: *mut BsdRunResult,
) -> BsdStatus {
    guard(|| {
        let (space, set, model) = (handle(space, "space")?, handle(set, "set")?, handle(model, "model")?);
        if result.is_null() {
            return Err(null("result"));
        }
        let data = NoisyData::new(Data::new(slice(y, m, "y")?.to_vec())?, eta, false)?;
        let constants = ModelConstants::new(lhat, lip, stability)?;
        let problem = Problem {
            space: &space.0,
            data_space: DataSpace::default(),
            set: &set.0,
            model: model.0.as_ref(),
            constants,
            data: &data,
        };
        let cfg = SolverConfig::new(eta, eta_hat)?.with_max_iterations(max_iterations);
        let report = run_projected_descent(&problem, &Primal::new(slice(x0, n, "x0")?.to_vec())?, &cfg)?;
        write_out(x_out, n, &report.final_x, "x_out")?;
        *result = BsdRunResult {
            stop_reason: match report.stop_reason {
                StopReason::DiscrepancyMet => BsdStopReason::DiscrepancyMet,
                StopReason::MaxIterations => BsdStopReason::MaxIterations,
                StopReason::StepDegenerate => BsdStopReason::StepDegenerate,
            },
            iterations: report.stopped_at,
            final_residual: report.final_residual,
            monotonicity_violations: report.monotonicity_violations,
            projected_start: report.projected_start,
        };
        if let Some(e) = report.failure {
            set_last_error(e.to_string());
        }
        Ok(())
    })
}

/// Executes a TOML run configuration like the command-line tool and stores
/// its exit code (0 success, 2 solver stop, 3 invalid input, 4 I/O) in
/// `exit_code`. `trace_path` and `summary_path` may be null.
///
/// # Safety
/// The paths must be null or NUL-terminated UTF-8; `exit_code` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bsd_run_config_file(
    config_path: *const c_char,
    trace_path: *const c_char,
    summary_path: *const c_char,
    exit_code: *mut i32,
) -> BsdStatus {
    guard(|| {
        let path = |p: *const c_char, what: &str| -> Result<Option<PathBuf>, Failure> {
            if p.is_null() {
                return Ok(None);
            }
            let s = CStr::from_ptr(p)
                .to_str()
                .map_err(|_| Failure(BsdStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
            Ok(Some(PathBuf::from(s)))
        };
        let config = path(config_path, "config_path")?.ok_or_else(|| null("config_path"))?;
        if exit_code.is_null() {
            return Err(null("exit_code"));
        }
        let overrides = Overrides {
            trace: path(trace_path, "trace_path")?,
            summary: path(summary_path, "summary_path")?,
            seed: None,
            quiet: true,
        };
        *exit_code = execute_file(&config, &overrides);
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        let mut buf = vec![0 as c_char; 256];
        unsafe { bsd_last_error_message(buf.as_mut_ptr(), buf.len()) };
        unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
    }

    #[test]
    fn space_round_trip() {
        let mut s = ptr::null_mut();
        assert_eq!(unsafe { bsd_space_new(3, 3.0, 0.0, ptr::null(), 0.0, 0.0, &mut s) }, BsdStatus::Ok);
        let x = [1.0, -2.0, 0.5];
        let mut j = [0.0; 3];
        assert_eq!(unsafe { bsd_space_duality_map(s, x.as_ptr(), 3, j.as_mut_ptr()) }, BsdStatus::Ok);
        let mut d = -1.0;
        assert_eq!(unsafe { bsd_space_bregman_distance(s, x.as_ptr(), x.as_ptr(), 3, &mut d) }, BsdStatus::Ok);
        assert!(d.abs() < 1e-14);
        unsafe { bsd_space_free(s) };
    }

    #[test]
    fn errors_are_reported() {
        let mut s = ptr::null_mut();
        assert_eq!(unsafe { bsd_space_new(3, 0.5, 0.0, ptr::null(), 0.0, 0.0, &mut s) }, BsdStatus::InvalidArgument);
        assert!(s.is_null());
        assert!(last_error().contains("geometry"));
        assert_eq!(unsafe { bsd_space_norm(ptr::null(), ptr::null(), 0, ptr::null_mut()) }, BsdStatus::NullPointer);
        assert_eq!(last_error(), "space is null");
        let needed = unsafe { bsd_last_error_message(ptr::null_mut(), 0) };
        assert_eq!(needed, "space is null".len() + 1);
    }

    #[test]
    fn dimension_mismatch_is_its_own_code() {
        let mut s = ptr::null_mut();
        let mut z = ptr::null_mut();
        unsafe {
            bsd_space_new(2, 2.0, 0.0, ptr::null(), 0.0, 0.0, &mut s);
            bsd_set_new_whole(3, &mut z);
            let x = [1.0, 2.0];
            let mut out = [0.0; 2];
            assert_eq!(bsd_set_project(z, s, x.as_ptr(), 2, out.as_mut_ptr()), BsdStatus::DimensionMismatch);
            bsd_set_free(z);
            bsd_space_free(s);
        }
    }

    #[test]
    fn solve_identity_problem() {
        unsafe {
            let (mut s, mut z, mut f) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
            assert_eq!(bsd_space_new(2, 2.0, 0.0, ptr::null(), 0.0, 0.0, &mut s), BsdStatus::Ok);
            let lower = [-1.0, -1.0];
            let upper = [1.0, 1.0];
            assert_eq!(bsd_set_new_box(lower.as_ptr(), upper.as_ptr(), 2, &mut z), BsdStatus::Ok);
            let a = [1.0, 0.0, 0.0, 2.0];
            assert_eq!(bsd_model_new_linear(a.as_ptr(), 2, 2, &mut f), BsdStatus::Ok);
            let y = [0.5, -1.0];
            let x0 = [0.0, 0.0];
            let mut x = [0.0; 2];
            let mut r = BsdRunResult {
                stop_reason: BsdStopReason::StepDegenerate,
                iterations: 0,
                final_residual: 0.0,
                monotonicity_violations: 0,
                projected_start: true,
            };
            let st = bsd_solve(s, z, f, y.as_ptr(), 2, 0.0, 1e-8, 2.0, 0.0, 1.0, x0.as_ptr(), 2, 10_000, x.as_mut_ptr(), &mut r);
            assert_eq!(st, BsdStatus::Ok, "{}", last_error());
            assert_eq!(r.stop_reason, BsdStopReason::DiscrepancyMet);
            assert!(r.final_residual <= 1e-8);
            assert!((x[0] - 0.5).abs() < 1e-7 && (x[1] + 0.5).abs() < 1e-7);
            bsd_model_free(f);
            bsd_set_free(z);
            bsd_space_free(s);
        }
    }

    #[test]
    fn free_accepts_null() {
        unsafe {
            bsd_space_free(ptr::null_mut());
            bsd_set_free(ptr::null_mut());
            bsd_model_free(ptr::null_mut());
        }
    }

    #[test]
    fn version_is_nul_terminated() {
        let v = unsafe { CStr::from_ptr(bsd_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
