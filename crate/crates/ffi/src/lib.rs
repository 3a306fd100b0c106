//! C interface to the hompop solver.
//!
//! Objects cross the boundary as opaque handles created by `*_parse` /
//! `*_solve` calls and released with the matching `*_free`. Every fallible
//! call returns a [`HompopStatus`]; the message of the last failure on the
//! calling thread is available from [`hompop_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hompop::cli::parse::{parse_problem_file, ProblemFile};
use hompop::driver::{minimizers_at_infinity, solve_pop, DriverOptions, HierarchyReport, InfinityReport, KindChoice};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HompopStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    InvalidArgument = 4,
    SolverError = 5,
    /// The requested value is not available (no bound, index out of range).
    NoValue = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HompopKind {
    Homogenized = 0,
    HomogenizedEven = 1,
    Denominator = 2,
    PowerX0 = 3,
    StandardLasserre = 4,
}

/// Solver settings. Orders equal to 0 select the defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HompopOptions {
    pub kind: HompopKind,
    /// Power of `x0` for `HOMPOP_KIND_POWER_X0`.
    pub power: u32,
    pub min_order: u32,
    pub max_order: u32,
    pub rank_tol: f64,
    pub tau_tol: f64,
    pub gap_tol: f64,
    pub verify: bool,
    pub seed: u64,
}

/// Parsed problem.
pub struct HompopProblem {
    file: ProblemFile,
}

enum ReportBody {
    Hierarchy(HierarchyReport),
    Infinity(InfinityReport),
}

/// Result of a solve.
pub struct HompopReport {
    body: ReportBody,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

fn guard(f: impl FnOnce() -> HompopStatus) -> HompopStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            HompopStatus::Panic
        }
    }
}

/// Message describing the last failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hompop_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn hompop_options_default() -> HompopOptions {
    let d = DriverOptions::default();
    HompopOptions {
        kind: HompopKind::Homogenized,
        power: 1,
        min_order: 0,
        max_order: 0,
        rank_tol: d.rank_tol,
        tau_tol: d.tau_tol,
        gap_tol: d.sdp.gap_tol,
        verify: d.verify,
        seed: d.sdp.seed,
    }
}

fn driver_options(o: &HompopOptions) -> DriverOptions {
    let kind = match o.kind {
        HompopKind::Homogenized => KindChoice::Homogenized,
        HompopKind::HomogenizedEven => KindChoice::HomogenizedEven,
        HompopKind::Denominator => KindChoice::Denominator,
        HompopKind::PowerX0 => KindChoice::PowerX0(o.power),
        HompopKind::StandardLasserre => KindChoice::StandardLasserre,
    };
    let mut d = DriverOptions {
        kind,
        k_min: (o.min_order > 0).then_some(o.min_order),
        k_max: (o.max_order > 0).then_some(o.max_order),
        rank_tol: o.rank_tol,
        tau_tol: o.tau_tol,
        verify: o.verify,
        ..DriverOptions::default()
    };
    d.sdp.gap_tol = o.gap_tol;
    d.sdp.seed = o.seed;
    d
}

/// Parse a problem in the text format into `*out`.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hompop_problem_parse(text: *const c_char, out: *mut *mut HompopProblem) -> HompopStatus {
    guard(|| {
        if text.is_null() || out.is_null() {
            set_error("null pointer");
            return HompopStatus::NullPointer;
        }
        *out = ptr::null_mut();
        let Ok(s) = CStr::from_ptr(text).to_str() else {
            set_error("problem text is not UTF-8");
            return HompopStatus::InvalidUtf8;
        };
        match parse_problem_file(s) {
            Ok(file) => {
                *out = Box::into_raw(Box::new(HompopProblem { file }));
                HompopStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                HompopStatus::ParseError
            }
        }
    })
}

/// # Safety
/// `p` must come from [`hompop_problem_parse`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hompop_problem_free(p: *mut HompopProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Number of variables, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live problem handle.
#[no_mangle]
pub unsafe extern "C" fn hompop_problem_nvars(p: *const HompopProblem) -> usize {
    p.as_ref().map_or(0, |p| p.file.problem.nvars)
}

/// Run the hierarchy. `opts` may be null for the defaults.
///
/// Returns `HOMPOP_STATUS_SOLVER_ERROR` (with `*out` still set) when every
/// order failed, so the report can be inspected.
///
/// # Safety
/// `p` must be a live problem handle, `opts` null or valid, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn hompop_solve(
    p: *const HompopProblem,
    opts: *const HompopOptions,
    out: *mut *mut HompopReport,
) -> HompopStatus {
    guard(|| {
        if p.is_null() || out.is_null() {
            set_error("null pointer");
            return HompopStatus::NullPointer;
        }
        *out = ptr::null_mut();
        let o = opts.as_ref().copied().unwrap_or_else(|| hompop_options_default());
        match solve_pop(&(*p).file.problem, &driver_options(&o)) {
            Ok(r) => {
                let ok = r.any_success();
                if !ok {
                    set_error(r.summary.diagnosis.clone());
                }
                *out = Box::into_raw(Box::new(HompopReport {
                    body: ReportBody::Hierarchy(r),
                }));
                if ok {
                    HompopStatus::Ok
                } else {
                    HompopStatus::SolverError
                }
            }
            Err(e) => {
                set_error(e.to_string());
                HompopStatus::InvalidArgument
            }
        }
    })
}

/// Compute minimizers at infinity at relaxation order `order`.
///
/// # Safety
/// As [`hompop_solve`].
#[no_mangle]
pub unsafe extern "C" fn hompop_minimizers_at_infinity(
    p: *const HompopProblem,
    order: u32,
    opts: *const HompopOptions,
    out: *mut *mut HompopReport,
) -> HompopStatus {
    guard(|| {
        if p.is_null() || out.is_null() {
            set_error("null pointer");
            return HompopStatus::NullPointer;
        }
        *out = ptr::null_mut();
        let o = opts.as_ref().copied().unwrap_or_else(|| hompop_options_default());
        match minimizers_at_infinity(&(*p).file.problem, order, &driver_options(&o)) {
            Ok(r) => {
                let ok = r.bound.is_some();
                if !ok {
                    set_error(format!("solver ended {}", r.status.as_str()));
                }
                *out = Box::into_raw(Box::new(HompopReport {
                    body: ReportBody::Infinity(r),
                }));
                if ok {
                    HompopStatus::Ok
                } else {
                    HompopStatus::SolverError
                }
            }
            Err(e) => {
                set_error(e.to_string());
                HompopStatus::InvalidArgument
            }
        }
    })
}

/// # Safety
/// `r` must come from a solve call and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hompop_report_free(r: *mut HompopReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

impl HompopReport {
    fn bound(&self) -> Option<f64> {
        match &self.body {
            ReportBody::Hierarchy(h) => h.summary.best_bound,
            ReportBody::Infinity(i) => i.bound,
        }
    }

    /// Regular minimizers of the converged order, else of the last order.
    fn minimizers(&self) -> Vec<&[f64]> {
        match &self.body {
            ReportBody::Hierarchy(h) => {
                let rec = h
                    .summary
                    .convergence_order
                    .and_then(|k| h.records.iter().find(|r| r.k == k))
                    .or(h.records.last());
                rec.map_or(Vec::new(), |r| r.minimizers.iter().map(|m| m.point.as_slice()).collect())
            }
            ReportBody::Infinity(_) => Vec::new(),
        }
    }

    fn at_infinity(&self) -> Vec<&[f64]> {
        match &self.body {
            ReportBody::Hierarchy(h) => {
                let rec = h
                    .summary
                    .convergence_order
                    .and_then(|k| h.records.iter().find(|r| r.k == k))
                    .or(h.records.last());
                rec.map_or(Vec::new(), |r| {
                    r.minimizers_at_infinity.iter().map(|m| m.point.as_slice()).collect()
                })
            }
            ReportBody::Infinity(i) => i.points.iter().map(|m| m.point.as_slice()).collect(),
        }
    }
}

/// Best lower bound found.
///
/// # Safety
/// `r` must be a live report handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn hompop_report_bound(r: *const HompopReport, out: *mut f64) -> HompopStatus {
    let (Some(r), false) = (r.as_ref(), out.is_null()) else {
        set_error("null pointer");
        return HompopStatus::NullPointer;
    };
    match r.bound() {
        Some(b) => {
            *out = b;
            HompopStatus::Ok
        }
        None => {
            set_error("no bound available");
            HompopStatus::NoValue
        }
    }
}

/// Whether the hierarchy reached certified convergence.
///
/// # Safety
/// `r` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn hompop_report_converged(r: *const HompopReport) -> bool {
    matches!(r.as_ref().map(|r| &r.body), Some(ReportBody::Hierarchy(h)) if h.summary.converged)
}

/// # Safety
/// `r` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn hompop_report_num_minimizers(r: *const HompopReport) -> usize {
    r.as_ref().map_or(0, |r| r.minimizers().len())
}

/// # Safety
/// `r` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn hompop_report_num_at_infinity(r: *const HompopReport) -> usize {
    r.as_ref().map_or(0, |r| r.at_infinity().len())
}

unsafe fn copy_point(points: &[&[f64]], i: usize, buf: *mut f64, len: usize) -> HompopStatus {
    let Some(p) = points.get(i) else {
        set_error(format!("index {} out of range ({} points)", i, points.len()));
        return HompopStatus::NoValue;
    };
    if len < p.len() {
        set_error(format!("buffer holds {} values, point has {}", len, p.len()));
        return HompopStatus::BufferTooSmall;
    }
    ptr::copy_nonoverlapping(p.as_ptr(), buf, p.len());
    HompopStatus::Ok
}

/// Copy regular minimizer `i` into `buf` (at least `nvars` entries).
///
/// # Safety
/// `r` must be a live report handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn hompop_report_minimizer(
    r: *const HompopReport,
    i: usize,
    buf: *mut f64,
    len: usize,
) -> HompopStatus {
    let (Some(r), false) = (r.as_ref(), buf.is_null()) else {
        set_error("null pointer");
        return HompopStatus::NullPointer;
    };
    copy_point(&r.minimizers(), i, buf, len)
}

/// Copy minimizer at infinity `i` (a unit vector) into `buf`.
///
/// # Safety
/// As [`hompop_report_minimizer`].
#[no_mangle]
pub unsafe extern "C" fn hompop_report_at_infinity(
    r: *const HompopReport,
    i: usize,
    buf: *mut f64,
    len: usize,
) -> HompopStatus {
    let (Some(r), false) = (r.as_ref(), buf.is_null()) else {
        set_error("null pointer");
        return HompopStatus::NullPointer;
    };
    copy_point(&r.at_infinity(), i, buf, len)
}

/// Full report as JSON, or null on failure. Release with [`hompop_string_free`].
///
/// # Safety
/// `r` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn hompop_report_json(r: *const HompopReport) -> *mut c_char {
    let Some(r) = r.as_ref() else {
        set_error("null pointer");
        return ptr::null_mut();
    };
    let s = match &r.body {
        ReportBody::Hierarchy(h) => serde_json::to_string(h),
        ReportBody::Infinity(i) => serde_json::to_string(i),
    };
    match s.map(CString::new) {
        Ok(Ok(c)) => c.into_raw(),
        _ => {
            set_error("report could not be serialized");
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `s` must come from [`hompop_report_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hompop_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
