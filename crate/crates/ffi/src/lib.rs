//! C ABI over the `dlac` library.
//!
//! Objects cross the boundary as opaque handles created by `*_load`,
//! `*_solve*` or `*_new` functions and released with the matching `*_free`.
//! Every fallible call returns a [`DlacStatus`]; on failure the thread's last
//! error message is available from [`dlac_last_error_message`]. Array
//! getters copy into caller-owned buffers of at least the reported count;
//! any output pointer may be null to skip that series.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use dlac::ac_solver::{solve_ac, AcError, AcOptions, AcSolution};
use dlac::case_io::{load_case, save_case, CaseError, CaseFormat};
use dlac::linear_models::{solve_linear, LinearError, LinearModel, LinearSolution, ModelCoefficients};
use dlac::network::Network;
use dlac::regression::{fit_model_coefficients, RegressionError, Snapshot};
use dlac::scenarios::scale_case;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlacStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    InvalidNetwork = 5,
    /// Newton-Raphson did not converge.
    Divergence = 6,
    /// Singular Jacobian or linear system.
    Singular = 7,
    /// Input the models cannot represent, such as phase shifters.
    Unsupported = 8,
    /// Regression failure: rank deficiency, too few observations.
    Regression = 9,
    /// A Rust panic was caught at the boundary.
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlacCaseFormat {
    /// `.m` files are MATPOWER, anything else native JSON.
    Auto = 0,
    Matpower = 1,
    Native = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlacModel {
    Dc = 0,
    Ddc = 1,
    Lac = 2,
    Dlac = 3,
}

impl From<DlacModel> for LinearModel {
    fn from(m: DlacModel) -> Self {
        match m {
            DlacModel::Dc => LinearModel::Dc,
            DlacModel::Ddc => LinearModel::Ddc,
            DlacModel::Lac => LinearModel::Lac,
            DlacModel::Dlac => LinearModel::Dlac,
        }
    }
}

/// Opaque power network.
pub struct DlacNetwork(Network);

/// Opaque AC power-flow solution.
pub struct DlacAcSolution(AcSolution);

/// Opaque linear-model solution.
pub struct DlacLinearSolution(LinearSolution);

/// Opaque DDC/DLAC coefficient set.
pub struct DlacCoefficients(ModelCoefficients);

type Failure = (DlacStatus, String);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DlacStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            DlacStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            DlacStatus::Panic
        }
    }
}

fn case_failure(e: CaseError) -> Failure {
    let status = match &e {
        CaseError::Io { .. } => DlacStatus::Io,
        CaseError::Parse { .. } => DlacStatus::Parse,
        CaseError::Unsupported(_) => DlacStatus::Unsupported,
        CaseError::Invalid(_) => DlacStatus::InvalidNetwork,
    };
    (status, e.to_string())
}

fn ac_failure(e: AcError) -> Failure {
    let status = match &e {
        AcError::Divergence { .. } => DlacStatus::Divergence,
        AcError::SingularJacobian { .. } => DlacStatus::Singular,
        AcError::Network(_) => DlacStatus::InvalidNetwork,
    };
    (status, e.to_string())
}

fn linear_failure(e: LinearError) -> Failure {
    let status = match &e {
        LinearError::SingularSystem => DlacStatus::Singular,
        LinearError::UnsupportedPhaseShift { .. } => DlacStatus::Unsupported,
        LinearError::InvalidBranch { .. } | LinearError::Network(_) => DlacStatus::InvalidNetwork,
        LinearError::InvalidCoefficients(_) => DlacStatus::InvalidArgument,
        LinearError::CoefficientFile { .. } => DlacStatus::Io,
    };
    (status, e.to_string())
}

fn regression_failure(e: RegressionError) -> Failure {
    match e {
        RegressionError::Linear(l) => linear_failure(l),
        other => (DlacStatus::Regression, other.to_string()),
    }
}

fn null(what: &str) -> Failure {
    (DlacStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| (DlacStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Copies `values` into `dst` if it is non-null.
unsafe fn copy_out(
    values: impl ExactSizeIterator<Item = f64>,
    dst: *mut f64,
    len: usize,
) -> Result<(), Failure> {
    if dst.is_null() {
        return Ok(());
    }
    let n = values.len();
    if len < n {
        return Err((
            DlacStatus::InvalidArgument,
            format!("buffer holds {len} values, {n} needed"),
        ));
    }
    for (i, v) in values.enumerate() {
        *dst.add(i) = v;
    }
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn dlac_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dlac_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads and validates a case file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dlac_network_load(
    path: *const c_char,
    format: DlacCaseFormat,
    out: *mut *mut DlacNetwork,
) -> DlacStatus {
    guard(|| {
        let path = path_arg(path)?;
        let fmt = match format {
            DlacCaseFormat::Auto => CaseFormat::from_path(&path),
            DlacCaseFormat::Matpower => CaseFormat::Matpower,
            DlacCaseFormat::Native => CaseFormat::Native,
        };
        let net = load_case(&path, fmt).map_err(case_failure)?;
        put(out, DlacNetwork(net))
    })
}

/// Writes the network in the native JSON format.
///
/// # Safety
/// `net` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dlac_network_save(net: *const DlacNetwork, path: *const c_char) -> DlacStatus {
    guard(|| {
        let net = handle(net, "network")?;
        save_case(&net.0, &path_arg(path)?).map_err(case_failure)
    })
}

/// Copy of `net` with every load scaled by `lambda` and non-slack
/// generation redispatched to match.
///
/// # Safety
/// `net` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dlac_network_scale_load(
    net: *const DlacNetwork,
    lambda: f64,
    out: *mut *mut DlacNetwork,
) -> DlacStatus {
    guard(|| {
        let net = handle(net, "network")?;
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err((DlacStatus::InvalidArgument, format!("lambda must be positive, got {lambda}")));
        }
        put(out, DlacNetwork(scale_case(&net.0, lambda)))
    })
}

/// # Safety
/// `net` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dlac_network_free(net: *mut DlacNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Number of buses; 0 for a null handle.
///
/// # Safety
/// `net` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dlac_network_bus_count(net: *const DlacNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.n_buses())
}

/// Number of branches, in service or not; 0 for a null handle.
///
/// # Safety
/// `net` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dlac_network_branch_count(net: *const DlacNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.branches.len())
}

/// # Safety
/// `net` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dlac_network_base_mva(net: *const DlacNetwork) -> f64 {
    net.as_ref().map_or(f64::NAN, |n| n.0.base_mva)
}

/// Newton-Raphson from a flat start. `tol <= 0` and `max_iter == 0` select
/// the defaults (1e-8 p.u., 30 iterations).
///
/// # Safety
/// `net` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dlac_solve_ac(
    net: *const DlacNetwork,
    tol: f64,
    max_iter: usize,
    out: *mut *mut DlacAcSolution,
) -> DlacStatus {
    guard(|| {
        let net = handle(net, "network")?;
        let mut opts = AcOptions::default();
        if tol > 0.0 {
            opts.tol = tol;
        }
        if max_iter > 0 {
            opts.max_iter = max_iter;
        }
        let sol = solve_ac(&net.0, &opts).map_err(ac_failure)?;
        put(out, DlacAcSolution(sol))
    })
}

/// # Safety
/// `sol` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dlac_ac_solution_free(sol: *mut DlacAcSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// # Safety
/// `sol` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dlac_ac_solution_iterations(sol: *const DlacAcSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.0.iterations)
}

/// # Safety
/// `sol` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dlac_ac_solution_max_mismatch(sol: *const DlacAcSolution) -> f64 {
    sol.as_ref().map_or(f64::NAN, |s| s.0.max_mismatch)
}

/// Number of bus values returned by the voltage getter.
///
/// # Safety
/// `sol` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dlac_ac_solution_bus_count(sol: *const DlacAcSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.0.vm.len())
}

/// Number of in-service branch flows.
///
/// # Safety
/// `sol` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dlac_ac_solution_flow_count(sol: *const DlacAcSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.0.flows.len())
}

/// Voltage magnitudes (p.u.) and angles (rad) in bus order.
///
/// # Safety
/// `sol` must come from this library; non-null buffers must hold `len`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn dlac_ac_solution_voltages(
    sol: *const DlacAcSolution,
    vm: *mut f64,
    va: *mut f64,
    len: usize,
) -> DlacStatus {
    guard(|| {
        let s = &handle(sol, "solution")?.0;
        copy_out(s.vm.iter().copied(), vm, len)?;
        copy_out(s.va.iter().copied(), va, len)
    })
}

/// Branch flows in p.u. on the system base, one entry per in-service
/// branch. `branch` receives the 0-based branch index.
///
/// # Safety
/// `sol` must come from this library; non-null buffers must hold `len`
/// values.
#[no_mangle]
pub unsafe extern "C" fn dlac_ac_solution_flows(
    sol: *const DlacAcSolution,
    branch: *mut usize,
    p_from: *mut f64,
    q_from: *mut f64,
    p_to: *mut f64,
    q_to: *mut f64,
    len: usize,
) -> DlacStatus {
    guard(|| {
        let s = &handle(sol, "solution")?.0;
        let f = &s.flows;
        if !branch.is_null() {
            if len < f.len() {
                return Err((DlacStatus::InvalidArgument, format!("buffer holds {len} values, {} needed", f.len())));
            }
            for (i, fl) in f.iter().enumerate() {
                *branch.add(i) = fl.branch;
            }
        }
        copy_out(f.iter().map(|x| x.p_from), p_from, len)?;
        copy_out(f.iter().map(|x| x.q_from), q_from, len)?;
        copy_out(f.iter().map(|x| x.p_to), p_to, len)?;
        copy_out(f.iter().map(|x| x.q_to), q_to, len)
    })
}

/// All-ones coefficients (DC and LAC).
#[no_mangle]
pub extern "C" fn dlac_coefficients_identity() -> *mut DlacCoefficients {
    Box::into_raw(Box::new(DlacCoefficients(ModelCoefficients::identity())))
}

/// Coefficients from `k_d` and the five `k_a` values.
///
/// # Safety
/// `k_a` must point to 5 doubles and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dlac_coefficients_new(
    k_d: f64,
    k_a: *const f64,
    out: *mut *mut DlacCoefficients,
) -> DlacStatus {
    guard(|| {
        if k_a.is_null() {
            return Err(null("k_a"));
        }
        let mut a = [0.0; 5];
        a.copy_from_slice(std::slice::from_raw_parts(k_a, 5));
        let c = ModelCoefficients {
            k_d,
            k_a: a,
            ..ModelCoefficients::identity()
        };
        c.validate().map_err(linear_failure)?;
        put(out, DlacCoefficients(c))
    })
}

/// # Safety
/// `path` must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dlac_coefficients_load(
    path: *const c_char,
    out: *mut *mut DlacCoefficients,
) -> DlacStatus {
    guard(|| {
        let c = ModelCoefficients::load(&path_arg(path)?).map_err(linear_failure)?;
        put(out, DlacCoefficients(c))
    })
}

/// # Safety
/// `c` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dlac_coefficients_save(
    c: *const DlacCoefficients,
    path: *const c_char,
) -> DlacStatus {
    guard(|| {
        let c = handle(c, "coefficients")?;
        c.0.save(&path_arg(path)?).map_err(linear_failure)
    })
}

/// Reads `k_d` and the five `k_a` values; either pointer may be null.
///
/// # Safety
/// `c` must come from this library; `k_a`, if non-null, must hold 5 doubles.
#[no_mangle]
pub unsafe extern "C" fn dlac_coefficients_get(
    c: *const DlacCoefficients,
    k_d: *mut f64,
    k_a: *mut f64,
) -> DlacStatus {
    guard(|| {
        let c = &handle(c, "coefficients")?.0;
        if !k_d.is_null() {
            *k_d = c.k_d;
        }
        copy_out(c.k_a.iter().copied(), k_a, 5)
    })
}

/// # Safety
/// `c` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dlac_coefficients_free(c: *mut DlacCoefficients) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Fits DDC/DLAC coefficients on AC solutions of `net` (or of cases sharing
/// its branch data).
///
/// # Safety
/// `net` must come from this library; `solutions` must point to `count`
/// solution handles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dlac_fit_coefficients(
    net: *const DlacNetwork,
    solutions: *const *const DlacAcSolution,
    count: usize,
    out: *mut *mut DlacCoefficients,
) -> DlacStatus {
    guard(|| {
        let net = handle(net, "network")?;
        if solutions.is_null() {
            return Err(null("solutions"));
        }
        let sols = std::slice::from_raw_parts(solutions, count)
            .iter()
            .map(|&p| handle(p, "solution").map(|s| &s.0))
            .collect::<Result<Vec<_>, _>>()?;
        let ids: Vec<String> = (1..=count).map(|i| format!("snapshot_{i}")).collect();
        let snaps: Vec<Snapshot<'_>> = ids
            .iter()
            .zip(&sols)
            .map(|(id, solution)| Snapshot { id, solution })
            .collect();
        let fit = fit_model_coefficients(&net.0, &snaps).map_err(regression_failure)?;
        put(out, DlacCoefficients(fit.coefficients))
    })
}

/// Solves a linear model. `coeffs` may be null for unit coefficients.
///
/// # Safety
/// `net` (and `coeffs` if non-null) must come from this library; `out` must
/// be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dlac_solve_linear(
    net: *const DlacNetwork,
    model: DlacModel,
    coeffs: *const DlacCoefficients,
    out: *mut *mut DlacLinearSolution,
) -> DlacStatus {
    guard(|| {
        let net = handle(net, "network")?;
        let identity = ModelCoefficients::identity();
        let c = coeffs.as_ref().map_or(&identity, |c| &c.0);
        let sol = solve_linear(&net.0, model.into(), c).map_err(linear_failure)?;
        put(out, DlacLinearSolution(sol))
    })
}

/// # Safety
/// `sol` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dlac_linear_solution_free(sol: *mut DlacLinearSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// # Safety
/// `sol` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dlac_linear_solution_bus_count(sol: *const DlacLinearSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.0.vm.len())
}

/// # Safety
/// `sol` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dlac_linear_solution_flow_count(sol: *const DlacLinearSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.0.flows.len())
}

/// Whether the model produces reactive flows (LAC family).
///
/// # Safety
/// `sol` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dlac_linear_solution_has_reactive(sol: *const DlacLinearSolution) -> bool {
    sol.as_ref()
        .is_some_and(|s| s.0.flows.first().is_some_and(|f| f.q_from.is_some()))
}

/// # Safety
/// `sol` must come from this library; non-null buffers must hold `len`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn dlac_linear_solution_voltages(
    sol: *const DlacLinearSolution,
    vm: *mut f64,
    va: *mut f64,
    len: usize,
) -> DlacStatus {
    guard(|| {
        let s = &handle(sol, "solution")?.0;
        copy_out(s.vm.iter().copied(), vm, len)?;
        copy_out(s.va.iter().copied(), va, len)
    })
}

/// Branch flows in p.u.; reactive entries are NaN for the DC family.
///
/// # Safety
/// `sol` must come from this library; non-null buffers must hold `len`
/// values.
#[no_mangle]
pub unsafe extern "C" fn dlac_linear_solution_flows(
    sol: *const DlacLinearSolution,
    p_from: *mut f64,
    q_from: *mut f64,
    p_to: *mut f64,
    q_to: *mut f64,
    len: usize,
) -> DlacStatus {
    guard(|| {
        let f = &handle(sol, "solution")?.0.flows;
        copy_out(f.iter().map(|x| x.p_from), p_from, len)?;
        copy_out(f.iter().map(|x| x.q_from.unwrap_or(f64::NAN)), q_from, len)?;
        copy_out(f.iter().map(|x| x.p_to), p_to, len)?;
        copy_out(f.iter().map(|x| x.q_to.unwrap_or(f64::NAN)), q_to, len)
    })
}
