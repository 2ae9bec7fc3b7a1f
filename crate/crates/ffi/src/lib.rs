//! C ABI over `resolvent-core`.
//!
//! Problems and runs are opaque handles owned by the caller and released with
//! the matching `*_free`. Every fallible call returns an [`RvStatus`]; on
//! failure `rv_last_error_message` describes the error for the calling thread.
//! Output buffers follow one convention: the caller passes a capacity, the
//! library writes the required length to `*written` and returns
//! `RV_STATUS_BUFFER_TOO_SMALL` if the capacity is short.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use resolvent_core::{
    averaged_resolvent, emit_plot_data, generate_random_hyperplanes, iterate_averaged_resolvent,
    iterate_heuristic, iterate_product, normal_equation_solve, run_experiment, Error, ExperimentConfig,
    HyperplaneSystem, Outcome, ProductOptions, ProductProblem, ProductVector, StoppingRule, Vector, Weights,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Parse = 4,
    Numerical = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RvAlgorithm {
    /// Iterate the averaged resolvent on X.
    AveragedResolvent = 0,
    /// Iterate the parallel product-space map.
    Parallel = 1,
    /// Iterate the sequential sweep (heuristic).
    Sweep = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RvOutcome {
    Converged = 0,
    MaxIters = 1,
    Diverged = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RvStoppingRule {
    pub max_iters: usize,
    pub step_tol: f64,
    pub divergence_threshold: f64,
}

/// Opaque problem handle.
pub struct RvProblem {
    inner: ProductProblem,
}

/// Opaque handle to a finished run.
pub struct RvRun {
    outcome: RvOutcome,
    iterations: usize,
    final_point: Vec<f64>,
    projected_final: Vec<f64>,
    db_curve: Vec<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RvStatus {
    match e {
        Error::DimensionMismatch { .. } | Error::LengthMismatch { .. } => RvStatus::DimensionMismatch,
        Error::Parse(_) => RvStatus::Parse,
        Error::SolveFailed(_) | Error::ZeroInitialResidual => RvStatus::Numerical,
        Error::Io(_) => RvStatus::Io,
        _ => RvStatus::InvalidArgument,
    }
}

fn fail(status: RvStatus, msg: impl Into<String>) -> RvStatus {
    set_last_error(msg.into());
    status
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard<F: FnOnce() -> Result<(), RvStatus>>(f: F) -> RvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RvStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(RvStatus::Panic, "internal panic"),
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, RvStatus>;
}

impl<T> OrStatus<T> for resolvent_core::Result<T> {
    fn or_status(self) -> Result<T, RvStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, RvStatus> {
    if p.is_null() {
        return Err(fail(RvStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(RvStatus::Parse, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], RvStatus> {
    if p.is_null() {
        return Err(fail(RvStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out(src: &[f64], out: *mut f64, cap: usize, written: *mut usize) -> Result<(), RvStatus> {
    if written.is_null() {
        return Err(fail(RvStatus::NullPointer, "written is null"));
    }
    *written = src.len();
    if cap < src.len() {
        return Err(fail(
            RvStatus::BufferTooSmall,
            format!("buffer holds {cap} values, {} needed", src.len()),
        ));
    }
    if src.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(fail(RvStatus::NullPointer, "out is null"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

unsafe fn problem_ref<'a>(p: *const RvProblem) -> Result<&'a ProductProblem, RvStatus> {
    p.as_ref().map(|p| &p.inner).ok_or_else(|| fail(RvStatus::NullPointer, "problem is null"))
}

unsafe fn run_ref<'a>(r: *const RvRun) -> Result<&'a RvRun, RvStatus> {
    r.as_ref().ok_or_else(|| fail(RvStatus::NullPointer, "run is null"))
}

fn store<T>(out: *mut *mut T, value: T) -> Result<(), RvStatus> {
    if out.is_null() {
        return Err(fail(RvStatus::NullPointer, "out handle is null"));
    }
    // SAFETY: checked non-null; the caller provides a writable slot.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Message for the most recent failure on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library defaults: 10000 iterations, step tolerance 1e-10, divergence at 1e12.
#[no_mangle]
pub extern "C" fn rv_default_stopping_rule() -> RvStoppingRule {
    let d = StoppingRule::default();
    RvStoppingRule { max_iters: d.max_iters, step_tol: d.step_tol, divergence_threshold: d.divergence_threshold }
}

/// Parses a problem from JSON `{"weights": [...], "models": [...], "dim": n}`.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rv_problem_from_json(json: *const c_char, out: *mut *mut RvProblem) -> RvStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let inner: ProductProblem =
            serde_json::from_str(text).map_err(|e| fail(RvStatus::Parse, e.to_string()))?;
        store(out, RvProblem { inner })
    })
}

/// Builds an equally weighted problem over `m` seeded random hyperplanes in `R^n`.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rv_problem_random_hyperplanes(
    n: usize,
    m: usize,
    seed: u64,
    out: *mut *mut RvProblem,
) -> RvStatus {
    guard(|| {
        let sys = generate_random_hyperplanes(n, m, seed).or_status()?;
        let w = Weights::equal(m).or_status()?;
        let inner = ProductProblem::new(sys.to_models(), w, n).or_status()?;
        store(out, RvProblem { inner })
    })
}

/// # Safety
/// `problem` must come from an `rv_problem_*` constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rv_problem_free(problem: *mut RvProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Dimension `n`, or 0 for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rv_problem_dim(problem: *const RvProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.inner.dim())
}

/// Number of operators `m`, or 0 for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rv_problem_num_sets(problem: *const RvProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.inner.num_sets())
}

/// Evaluates the averaged resolvent at `x` (length `n`).
///
/// # Safety
/// `x` must hold `len` values; `out` must hold `cap` values; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rv_averaged_resolvent(
    problem: *const RvProblem,
    x: *const f64,
    len: usize,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> RvStatus {
    guard(|| {
        let p = problem_ref(problem)?;
        let x = Vector::new(slice_arg(x, len, "x")?.to_vec()).or_status()?;
        let y = averaged_resolvent(p.models(), p.weights(), &x).or_status()?;
        write_out(y.as_slice(), out, cap, written)
    })
}

fn lift(p: &ProductProblem, x0: &[f64]) -> resolvent_core::Result<ProductVector> {
    let (m, n) = (p.num_sets(), p.dim());
    if x0.len() == n {
        Ok(ProductVector::diagonal(&Vector::new(x0.to_vec())?, m))
    } else if x0.len() == m * n {
        ProductVector::new(x0.chunks(n).map(|c| Vector::new(c.to_vec())).collect::<Result<_, _>>()?)
    } else {
        Err(Error::DimensionMismatch { expected: m * n, found: x0.len() })
    }
}

fn outcome(o: Outcome) -> RvOutcome {
    match o {
        Outcome::Converged => RvOutcome::Converged,
        Outcome::MaxIters => RvOutcome::MaxIters,
        Outcome::Diverged => RvOutcome::Diverged,
    }
}

/// Runs one algorithm from `x0`.
///
/// For the averaged resolvent `x0` has length `n`. For the product-space
/// algorithms it has length `m*n` (blocks back to back) or `n`, in which case
/// it is copied into every block. `allow_two_sets` permits `m = 2` for the
/// parallel iteration.
///
/// # Safety
/// `x0` must hold `len` values and `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rv_run(
    problem: *const RvProblem,
    algorithm: RvAlgorithm,
    x0: *const f64,
    len: usize,
    rule: RvStoppingRule,
    allow_two_sets: bool,
    out: *mut *mut RvRun,
) -> RvStatus {
    guard(|| {
        let p = problem_ref(problem)?;
        let x0 = slice_arg(x0, len, "x0")?;
        let rule = StoppingRule::new(rule.max_iters, rule.step_tol, rule.divergence_threshold).or_status()?;
        let run = match algorithm {
            RvAlgorithm::AveragedResolvent => {
                let x0 = Vector::new(x0.to_vec()).or_status()?;
                let t = iterate_averaged_resolvent(p.models(), p.weights(), &x0, &rule).or_status()?;
                RvRun {
                    outcome: outcome(t.outcome),
                    iterations: t.iterations(),
                    db_curve: t.db_curve(),
                    projected_final: t.final_point.as_slice().to_vec(),
                    final_point: t.final_point.into_inner(),
                }
            }
            RvAlgorithm::Parallel | RvAlgorithm::Sweep => {
                let x0 = lift(p, x0).or_status()?;
                let opts = ProductOptions { allow_two_sets, keep_iterates: false };
                let r = if algorithm == RvAlgorithm::Parallel {
                    iterate_product(p, &x0, &rule, opts)
                } else {
                    iterate_heuristic(p, &x0, &rule, opts)
                }
                .or_status()?;
                RvRun {
                    outcome: outcome(r.trace.outcome),
                    iterations: r.trace.iterations(),
                    db_curve: r.trace.db_curve(),
                    projected_final: r.projected.last().map(|v| v.as_slice().to_vec()).unwrap_or_default(),
                    final_point: r.trace.final_point.blocks().iter().flat_map(|b| b.as_slice().to_vec()).collect(),
                }
            }
        };
        store(out, run)
    })
}

/// # Safety
/// `run` must come from `rv_run` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rv_run_free(run: *mut RvRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rv_run_outcome(run: *const RvRun, out: *mut RvOutcome) -> RvStatus {
    guard(|| {
        let r = run_ref(run)?;
        if out.is_null() {
            return Err(fail(RvStatus::NullPointer, "out is null"));
        }
        *out = r.outcome;
        Ok(())
    })
}

/// Steps taken, or 0 for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rv_run_iterations(run: *const RvRun) -> usize {
    run.as_ref().map_or(0, |r| r.iterations)
}

/// Final iterate: `n` values, or `m*n` for product-space runs.
///
/// # Safety
/// `run` must be a live handle; `out` must hold `cap` values; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rv_run_final_point(
    run: *const RvRun,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> RvStatus {
    guard(|| write_out(&run_ref(run)?.final_point, out, cap, written))
}

/// Final iterate mapped back to `X` (the weighted block combination), `n` values.
///
/// # Safety
/// As for `rv_run_final_point`.
#[no_mangle]
pub unsafe extern "C" fn rv_run_projected_final(
    run: *const RvRun,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> RvStatus {
    guard(|| write_out(&run_ref(run)?.projected_final, out, cap, written))
}

/// Relative error in dB per iteration, starting with 0 at iteration 0.
///
/// # Safety
/// As for `rv_run_final_point`.
#[no_mangle]
pub unsafe extern "C" fn rv_run_db_curve(
    run: *const RvRun,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> RvStatus {
    guard(|| write_out(&run_ref(run)?.db_curve, out, cap, written))
}

/// Minimum-norm least-squares solution of a system given as JSON
/// `{"rows": [[...]], "rhs": [...]}`.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must hold `cap` values; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rv_least_squares_json(
    json: *const c_char,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> RvStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let sys: HyperplaneSystem =
            serde_json::from_str(text).map_err(|e| fail(RvStatus::Parse, e.to_string()))?;
        let x = normal_equation_solve(&sys).or_status()?;
        write_out(x.as_slice(), out, cap, written)
    })
}

/// Runs an experiment described by a JSON config and writes the CSV and
/// columns files. `out_path` overrides the config's `output_path` when non-null.
///
/// # Safety
/// `config_json` must be NUL-terminated; `out_path` must be null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rv_experiment_run_json(config_json: *const c_char, out_path: *const c_char) -> RvStatus {
    guard(|| {
        let text = str_arg(config_json, "config_json")?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| fail(RvStatus::Parse, e.to_string()))?;
        if !out_path.is_null() {
            cfg.output_path = Path::new(str_arg(out_path, "out_path")?).to_path_buf();
        }
        let table = run_experiment(&cfg).or_status()?;
        emit_plot_data(&table, &cfg.output_path).or_status()?;
        Ok(())
    })
}
