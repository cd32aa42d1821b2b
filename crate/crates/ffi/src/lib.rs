//! C ABI over `monofem`.
//!
//! Every object crosses the boundary as an opaque pointer created by a `mf_*_new`-style
//! function and released with the matching `mf_*_free`. Fallible functions return an
//! [`MfStatus`]; on failure the message is available from [`mf_last_error`] on the same
//! thread. Panics are caught and reported as [`MfStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use monofem::adapt::{adaptive_solve, AdaptConfig, AdaptReport};
use monofem::estimator::local_indicators;
use monofem::mesh::{read_mesh_text, Mesh};
use monofem::problems::{builtin, true_error, ProblemDef};
use monofem::solver::{contraction_constant, IterationState};
use monofem::space::{build_space, CoefVector, FeSpace};
use monofem::Error;

/// Result of a fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MfStatus {
    Ok = 0,
    InvalidArgument = 1,
    Numeric = 2,
    Solver = 3,
    Io = 4,
    NullPointer = 5,
    Panic = 6,
}

/// Opaque mesh handle.
pub struct MfMesh(Mesh);
/// Opaque problem handle.
pub struct MfProblem(Arc<ProblemDef>);
/// Opaque finite element space handle.
pub struct MfSpace(Arc<FeSpace>);
/// Opaque fixed-point iteration handle.
pub struct MfState(IterationState);
/// Opaque adaptive run handle.
pub struct MfReport(AdaptReport);

/// Settings of [`mf_adaptive_solve`]; start from [`mf_adapt_default_options`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct MfAdaptOptions {
    pub theta: f64,
    pub refine_fraction: f64,
    pub derefine_fraction: f64,
    pub max_meshes: usize,
    pub max_iterations_per_mesh: usize,
    pub target_bound: f64,
}

/// Per-mesh summary of an adaptive run. Unknown errors are NaN.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct MfAdaptRecord {
    pub mesh_index: usize,
    pub elements: usize,
    pub dofs: usize,
    pub iterations: usize,
    pub e_fem: f64,
    pub e_fp: f64,
    pub bound: f64,
    pub true_error: f64,
    pub effectivity: f64,
    pub flagged: c_int,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> MfStatus {
    match err {
        Error::InvalidArgument(_) | Error::Parse { .. } => MfStatus::InvalidArgument,
        Error::Numeric { .. } => MfStatus::Numeric,
        Error::Solver { .. } => MfStatus::Solver,
        Error::Io(_) => MfStatus::Io,
    }
}

/// Runs `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), MfStatusError>) -> MfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MfStatus::Ok,
        Ok(Err(MfStatusError(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&msg);
            MfStatus::Panic
        }
    }
}

struct MfStatusError(MfStatus, String);

impl From<Error> for MfStatusError {
    fn from(e: Error) -> Self {
        MfStatusError(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> MfStatusError {
    MfStatusError(MfStatus::NullPointer, format!("{what} is null"))
}

fn bad(msg: impl Into<String>) -> MfStatusError {
    MfStatusError(MfStatus::InvalidArgument, msg.into())
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, MfStatusError> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, MfStatusError> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), MfStatusError> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn c_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, MfStatusError> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|_| bad(format!("{what} is not valid UTF-8")))
}

unsafe fn write_slice(buf: *mut f64, len: usize, values: &[f64]) -> Result<(), MfStatusError> {
    if buf.is_null() {
        return Err(null("buffer"));
    }
    if len < values.len() {
        return Err(bad(format!("buffer holds {len} values, need {}", values.len())));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread; empty if none. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn mf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Uniform mesh of the unit square with `n x n` cells; `quad` nonzero selects quadrilaterals.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn mf_mesh_unit_square(n: usize, quad: c_int, out: *mut *mut MfMesh) -> MfStatus {
    guard(|| {
        let mesh = if quad != 0 { Mesh::unit_square_quad(n)? } else { Mesh::unit_square_tri(n)? };
        put(out, MfMesh(mesh))
    })
}

/// Reads a mesh in the plain-text format.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for one handle.
#[no_mangle]
pub unsafe extern "C" fn mf_mesh_read(path: *const c_char, out: *mut *mut MfMesh) -> MfStatus {
    guard(|| {
        let path = c_str(path, "path")?;
        let file = std::fs::File::open(path).map_err(Error::from)?;
        put(out, MfMesh(read_mesh_text(BufReader::new(file))?))
    })
}

/// Refines the listed elements (with conformity closure) into a new mesh.
///
/// # Safety
/// `marked` must point to `n_marked` ids (or be null when `n_marked` is 0).
#[no_mangle]
pub unsafe extern "C" fn mf_mesh_refine(
    mesh: *const MfMesh,
    marked: *const usize,
    n_marked: usize,
    out: *mut *mut MfMesh,
) -> MfStatus {
    guard(|| {
        let mesh = deref(mesh, "mesh")?;
        let ids: &[usize] = if n_marked == 0 {
            &[]
        } else if marked.is_null() {
            return Err(null("marked"));
        } else {
            std::slice::from_raw_parts(marked, n_marked)
        };
        put(out, MfMesh(mesh.0.refine(ids)?))
    })
}

/// Number of elements, or 0 for a null handle.
///
/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mf_mesh_n_elements(mesh: *const MfMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.n_elements())
}

/// Number of vertices, or 0 for a null handle.
///
/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mf_mesh_n_vertices(mesh: *const MfMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.n_vertices())
}

/// # Safety
/// `mesh` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mf_mesh_free(mesh: *mut MfMesh) {
    free(mesh)
}

/// Built-in problem `apriori`, `ex1`, `ex2` or `ex3`. A non-positive or NaN `eps` keeps the
/// problem default.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` valid for one handle.
#[no_mangle]
pub unsafe extern "C" fn mf_problem_builtin(name: *const c_char, eps: f64, out: *mut *mut MfProblem) -> MfStatus {
    guard(|| {
        let name = c_str(name, "name")?;
        let eps = (eps > 0.0).then_some(eps);
        put(out, MfProblem(Arc::new(builtin(name, eps)?)))
    })
}

/// Writes the Lipschitz constant `L`, the contraction constant `k` and the default `θ`.
/// Any output pointer may be null.
///
/// # Safety
/// Non-null pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mf_problem_constants(
    problem: *const MfProblem,
    lipschitz: *mut f64,
    contraction: *mut f64,
    theta: *mut f64,
) -> MfStatus {
    guard(|| {
        let p = &deref(problem, "problem")?.0;
        let l = p.lipschitz()?;
        let k = contraction_constant(1.0, l)?;
        for (dst, v) in [(lipschitz, l), (contraction, k), (theta, p.theta)] {
            if !dst.is_null() {
                *dst = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `problem` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mf_problem_free(problem: *mut MfProblem) {
    free(problem)
}

/// Continuous degree-`p` Lagrange space with zero boundary values on a copy of `mesh`.
///
/// # Safety
/// `mesh` must be a live handle and `out` valid for one handle.
#[no_mangle]
pub unsafe extern "C" fn mf_space_new(mesh: *const MfMesh, p: usize, out: *mut *mut MfSpace) -> MfStatus {
    guard(|| {
        let mesh = deref(mesh, "mesh")?;
        put(out, MfSpace(Arc::new(build_space(Arc::new(mesh.0.clone()), p)?)))
    })
}

/// Number of free DOFs, or 0 for a null handle.
///
/// # Safety
/// `space` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mf_space_n_free(space: *const MfSpace) -> usize {
    space.as_ref().map_or(0, |s| s.0.n_free())
}

/// # Safety
/// `space` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mf_space_free(space: *mut MfSpace) {
    free(space)
}

/// Starts the fixed-point iteration from zero; assembles and factors the iteration matrix.
///
/// # Safety
/// Handles must be live and `out` valid for one handle.
#[no_mangle]
pub unsafe extern "C" fn mf_state_new(space: *const MfSpace, problem: *const MfProblem, out: *mut *mut MfState) -> MfStatus {
    guard(|| {
        let space = deref(space, "space")?.0.clone();
        let problem = deref(problem, "problem")?.0.clone();
        let u0 = CoefVector::zeros(&space);
        put(out, MfState(IterationState::new(space, problem, u0)?))
    })
}

/// Performs one step; writes `|||uⁿ − uⁿ⁻¹|||` to `increment` unless it is null.
///
/// # Safety
/// `state` must be a live handle; `increment` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mf_state_step(state: *mut MfState, increment: *mut f64) -> MfStatus {
    guard(|| {
        let rec = deref_mut(state, "state")?.0.step()?;
        if !increment.is_null() {
            *increment = rec.increment;
        }
        Ok(())
    })
}

/// Steps taken so far, or 0 for a null handle.
///
/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mf_state_iteration(state: *const MfState) -> usize {
    state.as_ref().map_or(0, |s| s.0.iteration())
}

/// Copies the free-DOF coefficients of the current iterate into `buf`.
///
/// # Safety
/// `buf` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn mf_state_coefficients(state: *const MfState, buf: *mut f64, len: usize) -> MfStatus {
    guard(|| write_slice(buf, len, &deref(state, "state")?.0.current().values))
}

/// `|||u* − uⁿ|||` for problems with a known solution.
///
/// # Safety
/// `state` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mf_state_true_error(state: *const MfState, out: *mut f64) -> MfStatus {
    guard(|| {
        let s = &deref(state, "state")?.0;
        let e = true_error(s.space(), s.current(), s.problem())?;
        *deref_mut(out, "out")? = e;
        Ok(())
    })
}

/// Error indicators of the last step: `η_K` per element into `eta` (length at least the
/// element count), and the totals `E_FEM`, `E_FP` unless null.
///
/// # Safety
/// `eta` must be valid for `len` writes; the totals null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mf_state_indicators(
    state: *const MfState,
    eta: *mut f64,
    len: usize,
    e_fem: *mut f64,
    e_fp: *mut f64,
) -> MfStatus {
    guard(|| {
        let s = &deref(state, "state")?.0;
        let l = s.constants().lipschitz;
        let field = local_indicators(s.space(), s.current(), s.previous(), s.problem(), l)?;
        write_slice(eta, len, &field.eta)?;
        if !e_fem.is_null() {
            *e_fem = field.e_fem;
        }
        if !e_fp.is_null() {
            *e_fp = field.e_fp;
        }
        Ok(())
    })
}

/// # Safety
/// `state` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mf_state_free(state: *mut MfState) {
    free(state)
}

/// Default adaptive settings for steering parameter `theta`.
#[no_mangle]
pub extern "C" fn mf_adapt_default_options(theta: f64) -> MfAdaptOptions {
    let c = AdaptConfig::new(theta);
    MfAdaptOptions {
        theta: c.theta,
        refine_fraction: c.refine_fraction,
        derefine_fraction: c.derefine_fraction,
        max_meshes: c.max_meshes,
        max_iterations_per_mesh: c.max_iterations_per_mesh,
        target_bound: c.target_bound,
    }
}

/// Runs the adaptive loop from a zero initial guess on a copy of `mesh`.
///
/// # Safety
/// Handles and `options` must be valid; `out` valid for one handle.
#[no_mangle]
pub unsafe extern "C" fn mf_adaptive_solve(
    problem: *const MfProblem,
    mesh: *const MfMesh,
    p: usize,
    options: *const MfAdaptOptions,
    out: *mut *mut MfReport,
) -> MfStatus {
    guard(|| {
        let problem = deref(problem, "problem")?.0.clone();
        let mesh = deref(mesh, "mesh")?.0.clone();
        let o = deref(options, "options")?;
        let config = AdaptConfig {
            theta: o.theta,
            refine_fraction: o.refine_fraction,
            derefine_fraction: o.derefine_fraction,
            max_meshes: o.max_meshes,
            max_iterations_per_mesh: o.max_iterations_per_mesh,
            target_bound: o.target_bound,
        };
        put(out, MfReport(adaptive_solve(problem, mesh, p, &config)?))
    })
}

/// Number of meshes visited, or 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mf_report_len(report: *const MfReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.records.len())
}

/// Iteration matrices assembled during the run, or 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mf_report_assemblies(report: *const MfReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.assemblies)
}

/// Copies record `index` into `out`.
///
/// # Safety
/// `report` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mf_report_record(report: *const MfReport, index: usize, out: *mut MfAdaptRecord) -> MfStatus {
    guard(|| {
        let records = &deref(report, "report")?.0.records;
        let r = records
            .get(index)
            .ok_or_else(|| bad(format!("record {index} out of range (have {})", records.len())))?;
        *deref_mut(out, "out")? = MfAdaptRecord {
            mesh_index: r.mesh_index,
            elements: r.elements,
            dofs: r.dofs,
            iterations: r.iterations,
            e_fem: r.e_fem,
            e_fp: r.e_fp,
            bound: r.bound,
            true_error: r.true_error.unwrap_or(f64::NAN),
            effectivity: r.effectivity.unwrap_or(f64::NAN),
            flagged: r.flagged as c_int,
        };
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mf_report_free(report: *mut MfReport) {
    free(report)
}
