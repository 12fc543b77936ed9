//! C ABI over the `pgap` library.
//!
//! Every fallible function returns a [`PgapStatus`] and writes its result
//! through an out-pointer. On failure the message is kept per thread and read
//! back with [`pgap_last_error_message`]. Densities and trig tables are opaque
//! handles released with their `_free` function. Panics never cross the
//! boundary; they are reported as [`PgapStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufWriter;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pgap::density::{
    mcp_validate_with, random_density_with, read_density, write_density, LogDensity, MCPDensity, ModelDensity,
    ModelKind,
};
use pgap::gap::{GapResult, GapSolver, Method};
use pgap::geometry::diameter_bound;
use pgap::oracle::{minimize_gap, DiscreteProblem};
use pgap::ptrig::pi_p;
use pgap::{Error, McpSpace, PExponent, PTrig, Params, Tolerances};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgapStatus {
    Ok = 0,
    /// Null pointer or malformed string argument.
    NullArgument = 1,
    /// Parameters, density or file contents were rejected.
    InvalidInput = 2,
    /// A solver failed to converge or to bracket the eigenvalue.
    SolverFailure = 3,
    Io = 4,
    Panic = 5,
}

/// Which model density [`pgap_density_model`] samples.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgapModelKind {
    Model = 0,
    H1 = 1,
    H2 = 2,
}

/// How a [`PgapGap`] was obtained.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgapMethod {
    Shooting = 0,
    Matching = 1,
    InfimumScan = 2,
}

/// Exponent, model space and bracket tolerance of a gap computation.
/// A diameter `<= 0` selects the Bonnet–Myers bound (`K > 0` only), and
/// `eigen_rel <= 0` the default tolerance.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PgapParams {
    pub p: f64,
    pub curvature: f64,
    pub dimension: f64,
    pub diameter: f64,
    pub eigen_rel: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PgapGap {
    pub lambda: f64,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    pub iterations: usize,
    pub method: PgapMethod,
    /// Minimizing `D'` of the `K > 0` scan; NaN otherwise.
    pub minimizing_diameter: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PgapOracle {
    pub value: f64,
    pub spread: f64,
    pub constraint_residual: f64,
    pub gradient_ratio: f64,
    pub converged: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PgapValidation {
    pub passed: bool,
    pub ratio_violation: f64,
    pub derivative_violation: f64,
}

/// Interpolation tables for `sin_p` and `cos_p` at one exponent.
pub struct PgapTrig(PTrig);

/// A density sampled on a grid.
pub struct PgapDensity(MCPDensity);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type FfiResult<T> = Result<T, Failure>;

fn status_of(e: &Error) -> PgapStatus {
    match e {
        Error::Io(_) => PgapStatus::Io,
        e if e.exit_code() == 3 => PgapStatus::SolverFailure,
        _ => PgapStatus::InvalidInput,
    }
}

/// Runs `f`, catching panics and recording the error message.
fn guard<F>(f: F) -> PgapStatus
where
    F: FnOnce() -> FfiResult<()>,
{
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PgapStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null or invalid argument: {what}"));
            PgapStatus::NullArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            PgapStatus::Panic
        }
    }
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &'static str) -> FfiResult<()> {
    if out.is_null() {
        return Err(Failure::Null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> FfiResult<&'a T> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> FfiResult<String> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p).to_str().map(str::to_owned).map_err(|_| Failure::Null(what))
}

fn space_of(curvature: f64, dimension: f64, diameter: f64) -> pgap::Result<McpSpace> {
    if diameter <= 0.0 {
        McpSpace::maximal(curvature, dimension)
    } else {
        McpSpace::new(curvature, dimension, diameter)
    }
}

fn params_of(p: &PgapParams) -> pgap::Result<Params> {
    let mut tol = Tolerances::default();
    if p.eigen_rel > 0.0 {
        tol.eigen_rel = p.eigen_rel;
    }
    Ok(Params { p: PExponent::new(p.p)?, space: space_of(p.curvature, p.dimension, p.diameter)?, tol })
}

fn gap_of(r: &GapResult) -> PgapGap {
    PgapGap {
        lambda: r.lambda,
        bracket_lo: r.bracket.0,
        bracket_hi: r.bracket.1,
        iterations: r.iterations,
        method: match r.method {
            Method::Shooting => PgapMethod::Shooting,
            Method::Matching => PgapMethod::Matching,
            Method::InfimumScan => PgapMethod::InfimumScan,
        },
        minimizing_diameter: r.minimizing_diameter.unwrap_or(f64::NAN),
    }
}

fn into_handle<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn pgap_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// `π_p = 2π / (p sin(π/p))`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pgap_pi_p(p: f64, out: *mut f64) -> PgapStatus {
    guard(|| write_out(out, pi_p(PExponent::new(p)?), "out"))
}

/// `D_{K,N}`; infinite for `K <= 0`.
#[no_mangle]
pub extern "C" fn pgap_diameter_bound(curvature: f64, dimension: f64) -> f64 {
    diameter_bound(curvature, dimension)
}

/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pgap_trig_new(p: f64, out: *mut *mut PgapTrig) -> PgapStatus {
    guard(|| {
        let trig = PTrig::new(PExponent::new(p)?);
        write_out(out, into_handle(PgapTrig(trig)), "out")
    })
}

/// # Safety
/// `trig` must be null or a handle from [`pgap_trig_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pgap_trig_free(trig: *mut PgapTrig) {
    if !trig.is_null() {
        drop(Box::from_raw(trig));
    }
}

/// `sin_p(t)` and `cos_p(t)`; either out-pointer may be null.
///
/// # Safety
/// `trig` must be a live handle; non-null out-pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pgap_trig_eval(trig: *const PgapTrig, t: f64, sin: *mut f64, cos: *mut f64) -> PgapStatus {
    guard(|| {
        let trig = &deref(trig, "trig")?.0;
        let terms = trig.phase_terms(t);
        if !sin.is_null() {
            sin.write(terms.sin);
        }
        if !cos.is_null() {
            cos.write(terms.cos);
        }
        Ok(())
    })
}

/// Model gap `λ̂` at exactly the given diameter.
///
/// # Safety
/// `params` must be readable and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pgap_lambda_hat(params: *const PgapParams, out: *mut PgapGap) -> PgapStatus {
    guard(|| {
        let params = params_of(deref(params, "params")?)?;
        write_out(out, gap_of(&GapSolver::new(params).lambda_hat()?), "out")
    })
}

/// Sharp gap: `λ̂` for `K <= 0`, the infimum over `D' <= D` for `K > 0`.
///
/// # Safety
/// `params` must be readable and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pgap_lambda_sharp(params: *const PgapParams, out: *mut PgapGap) -> PgapStatus {
    guard(|| {
        let params = params_of(deref(params, "params")?)?;
        write_out(out, gap_of(&GapSolver::new(params).lambda_sharp()?), "out")
    })
}

/// Random MCP density from generator stream `stream` of `seed`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pgap_density_random(
    curvature: f64,
    dimension: f64,
    diameter: f64,
    seed: u64,
    stream: u64,
    degree: usize,
    nodes: usize,
    out: *mut *mut PgapDensity,
) -> PgapStatus {
    guard(|| {
        let space = space_of(curvature, dimension, diameter)?;
        let h = random_density_with(space, seed, stream, degree, nodes)?;
        write_out(out, into_handle(PgapDensity(h)), "out")
    })
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pgap_density_model(
    curvature: f64,
    dimension: f64,
    diameter: f64,
    kind: PgapModelKind,
    nodes: usize,
    out: *mut *mut PgapDensity,
) -> PgapStatus {
    guard(|| {
        let space = space_of(curvature, dimension, diameter)?;
        let kind = match kind {
            PgapModelKind::Model => ModelKind::Model,
            PgapModelKind::H1 => ModelKind::H1,
            PgapModelKind::H2 => ModelKind::H2,
        };
        let h = MCPDensity::sample(&ModelDensity::new(space, kind), nodes)?;
        write_out(out, into_handle(PgapDensity(h)), "out")
    })
}

/// Reads an `x,log_h,log_deriv` file for the given space.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pgap_density_read(
    path: *const c_char,
    curvature: f64,
    dimension: f64,
    diameter: f64,
    out: *mut *mut PgapDensity,
) -> PgapStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        let space = space_of(curvature, dimension, diameter)?;
        let h = read_density(File::open(path).map_err(Error::from)?, &space)?;
        write_out(out, into_handle(PgapDensity(h)), "out")
    })
}

/// # Safety
/// `density` must be a live handle and `path` a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn pgap_density_write(density: *const PgapDensity, path: *const c_char) -> PgapStatus {
    guard(|| {
        let h = &deref(density, "density")?.0;
        let path = path_arg(path, "path")?;
        write_density(h, BufWriter::new(File::create(path).map_err(Error::from)?))?;
        Ok(())
    })
}

/// Number of grid nodes; 0 for a null handle.
///
/// # Safety
/// `density` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pgap_density_len(density: *const PgapDensity) -> usize {
    density.as_ref().map_or(0, |h| h.0.len())
}

/// # Safety
/// `density` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pgap_density_free(density: *mut PgapDensity) {
    if !density.is_null() {
        drop(Box::from_raw(density));
    }
}

/// Checks the MCP bounds of the density's own space. A failed check is
/// reported through `out.passed`, not the status.
///
/// # Safety
/// `density` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pgap_density_validate(
    density: *const PgapDensity,
    tol: f64,
    out: *mut PgapValidation,
) -> PgapStatus {
    guard(|| {
        let h = &deref(density, "density")?.0;
        let r = mcp_validate_with(h, &h.space(), tol)?;
        write_out(
            out,
            PgapValidation {
                passed: r.passed,
                ratio_violation: r.ratio_violation,
                derivative_violation: r.derivative_violation,
            },
            "out",
        )
    })
}

/// Gap of a validated density on its own space.
///
/// # Safety
/// `density` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pgap_lambda_of_density(
    p: f64,
    eigen_rel: f64,
    density: *const PgapDensity,
    out: *mut PgapGap,
) -> PgapStatus {
    guard(|| {
        let h = &deref(density, "density")?.0;
        let s = h.space();
        let params = params_of(&PgapParams {
            p,
            curvature: s.curvature(),
            dimension: s.dimension(),
            diameter: s.diameter(),
            eigen_rel,
        })?;
        write_out(out, gap_of(&GapSolver::new(params).lambda_of_density(h)?), "out")
    })
}

/// Rayleigh-quotient minimum on `cells` uniform cells. A null density
/// selects the model density of `params`.
///
/// # Safety
/// `params` must be readable, `density` null or live, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pgap_oracle(
    params: *const PgapParams,
    density: *const PgapDensity,
    cells: usize,
    restarts: usize,
    out: *mut PgapOracle,
) -> PgapStatus {
    guard(|| {
        let params = params_of(deref(params, "params")?)?;
        let model = ModelDensity::new(params.space, ModelKind::Model);
        let h: &dyn LogDensity = match density.as_ref() {
            Some(d) => &d.0,
            None => &model,
        };
        let r = minimize_gap(&DiscreteProblem::from_density(h, params.p, cells)?, restarts)?;
        write_out(
            out,
            PgapOracle {
                value: r.value,
                spread: r.spread,
                constraint_residual: r.constraint_residual,
                gradient_ratio: r.gradient_ratio,
                converged: r.converged,
            },
            "out",
        )
    })
}
