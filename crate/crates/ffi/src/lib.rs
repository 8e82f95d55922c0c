//! C ABI over `snc-core`.
//!
//! Every function returns an [`SncStatus`]. On failure a message is kept per
//! thread and can be read with [`snc_last_error_message`]. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use snc::analysis::{analyze, AnalysisRequest, BoundKind, PerformanceBound};
use snc::netio::{parse_network_with, serialize_network, ParseOptions};
use snc::network::Network;
use snc::optimize::{evaluate_query, grid_search_minimize, BoundQuery, GridConfig, OptimizeError};
use snc::symbolic::ParamAssignment;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SncStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    AnalysisError = 4,
    InfeasiblePoint = 5,
    NoFeasiblePoint = 6,
    Unsupported = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SncBoundKind {
    Backlog = 0,
    Delay = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SncQueryKind {
    /// Probability that the quantity exceeds the given value.
    Forward = 0,
    /// Smallest value whose bound equals the given probability.
    Inverse = 1,
}

/// Grid search settings. A `theta_max` of zero or less selects it automatically.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SncGridOptions {
    pub theta_granularity: f64,
    pub theta_max: f64,
    pub hoelder_granularity: f64,
    pub p_max: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SncOptimum {
    pub value: f64,
    pub theta: f64,
    pub evaluated: u64,
    pub feasible: u64,
}

/// Parsed network.
pub struct SncNetwork {
    inner: Network,
}

/// Symbolic performance bound.
pub struct SncBound {
    inner: PerformanceBound,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

type Outcome = Result<(), (SncStatus, String)>;

fn guard(f: impl FnOnce() -> Outcome) -> SncStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SncStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SncStatus::Panic
        }
    }
}

fn fail<T>(status: SncStatus, msg: impl ToString) -> Result<T, (SncStatus, String)> {
    Err((status, msg.to_string()))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, (SncStatus, String)> {
    if p.is_null() {
        return fail(SncStatus::NullPointer, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(SncStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (SncStatus, String)> {
    p.as_ref()
        .map_or_else(|| fail(SncStatus::NullPointer, format!("{what} is null")), Ok)
}

fn out_ptr<T>(p: *mut T) -> Result<(), (SncStatus, String)> {
    if p.is_null() {
        fail(SncStatus::NullPointer, "output pointer is null")
    } else {
        Ok(())
    }
}

fn optimize_status(e: &OptimizeError) -> SncStatus {
    match e {
        OptimizeError::NoFeasiblePoint { .. } => SncStatus::NoFeasiblePoint,
        OptimizeError::InfeasiblePoint(_) | OptimizeError::NonDecaying { .. } => SncStatus::InfeasiblePoint,
        _ => SncStatus::InvalidArgument,
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn snc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn snc_grid_options_default() -> SncGridOptions {
    let d = GridConfig::default();
    SncGridOptions {
        theta_granularity: d.theta_granularity,
        theta_max: 0.0,
        hoelder_granularity: d.hoelder_granularity,
        p_max: d.p_max,
    }
}

/// Parses a network document. `*out` receives a handle on success.
///
/// # Safety
/// `document` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn snc_network_parse(document: *const c_char, strict: bool, out: *mut *mut SncNetwork) -> SncStatus {
    guard(|| {
        out_ptr(out)?;
        let net = parse_network_with(text(document, "document")?, ParseOptions { strict })
            .or_else(|e| fail(SncStatus::ParseError, e))?;
        *out = Box::into_raw(Box::new(SncNetwork { inner: net }));
        Ok(())
    })
}

/// # Safety
/// `net` must come from [`snc_network_parse`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn snc_network_free(net: *mut SncNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// # Safety
/// `net` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn snc_network_vertex_count(net: *const SncNetwork, out: *mut usize) -> SncStatus {
    guard(|| {
        out_ptr(out)?;
        *out = handle(net, "network")?.inner.vertices().count();
        Ok(())
    })
}

/// # Safety
/// `net` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn snc_network_flow_count(net: *const SncNetwork, out: *mut usize) -> SncStatus {
    guard(|| {
        out_ptr(out)?;
        *out = handle(net, "network")?.inner.flows().count();
        Ok(())
    })
}

/// Canonical text of the network. Release `*out` with [`snc_string_free`].
///
/// # Safety
/// `net` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn snc_network_serialize(net: *const SncNetwork, out: *mut *mut c_char) -> SncStatus {
    guard(|| {
        out_ptr(out)?;
        let s = serialize_network(&handle(net, "network")?.inner).or_else(|e| fail(SncStatus::Unsupported, e))?;
        *out = CString::new(s).or_else(|e| fail(SncStatus::InvalidArgument, e))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn snc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn run_analysis(
    net: *const SncNetwork,
    out: *mut *mut SncBound,
    build: impl FnOnce(&Network) -> Result<AnalysisRequest, (SncStatus, String)>,
) -> SncStatus {
    guard(|| {
        out_ptr(out)?;
        let net = &handle(net, "network")?.inner;
        let req = build(net)?;
        let (bound, _) = analyze(net, &req).or_else(|e| fail(SncStatus::AnalysisError, e))?;
        *out = Box::into_raw(Box::new(SncBound { inner: bound }));
        Ok(())
    })
}

fn lookup_flow(net: &Network, name: &str) -> Result<snc::FlowId, (SncStatus, String)> {
    net.flow_by_name(name)
        .map_or_else(|| fail(SncStatus::InvalidArgument, format!("no flow named '{name}'")), Ok)
}

/// Bound for `flow` at `vertex`. The network handle is not modified.
///
/// # Safety
/// Pointers must be valid; names NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn snc_analyze_local(
    net: *const SncNetwork,
    flow: *const c_char,
    vertex: *const c_char,
    kind: SncBoundKind,
    out: *mut *mut SncBound,
) -> SncStatus {
    run_analysis(net, out, |n| {
        let flow = lookup_flow(n, text(flow, "flow")?)?;
        let name = text(vertex, "vertex")?;
        let vertex = n
            .vertex_by_name(name)
            .map_or_else(|| fail(SncStatus::InvalidArgument, format!("no vertex named '{name}'")), Ok)?;
        let kind = match kind {
            SncBoundKind::Backlog => BoundKind::Backlog,
            SncBoundKind::Delay => BoundKind::Delay,
        };
        Ok(AnalysisRequest::Local { flow, vertex, kind })
    })
}

/// End-to-end delay bound of `flow` over its whole route.
///
/// # Safety
/// Pointers must be valid; names NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn snc_analyze_end_to_end(
    net: *const SncNetwork,
    flow: *const c_char,
    out: *mut *mut SncBound,
) -> SncStatus {
    run_analysis(net, out, |n| {
        let flow = lookup_flow(n, text(flow, "flow")?)?;
        let path = n.flow(flow).expect("resolved").path.clone();
        Ok(AnalysisRequest::EndToEnd { flow, path })
    })
}

/// End-to-end delay bound of `flow` over its whole route, which `crossflow`
/// shares with higher priority.
///
/// # Safety
/// Pointers must be valid; names NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn snc_analyze_ladder(
    net: *const SncNetwork,
    flow: *const c_char,
    crossflow: *const c_char,
    out: *mut *mut SncBound,
) -> SncStatus {
    run_analysis(net, out, |n| {
        let flow = lookup_flow(n, text(flow, "flow")?)?;
        let crossflow = lookup_flow(n, text(crossflow, "crossflow")?)?;
        let path = n.flow(flow).expect("resolved").path.clone();
        Ok(AnalysisRequest::Ladder { flow, crossflow, path })
    })
}

/// # Safety
/// `bound` must come from an analysis call and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn snc_bound_free(bound: *mut SncBound) {
    if !bound.is_null() {
        drop(Box::from_raw(bound));
    }
}

/// Number of Hölder parameters; [`snc_bound_evaluate`] expects that many `p` values.
///
/// # Safety
/// `bound` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn snc_bound_hoelder_count(bound: *const SncBound, out: *mut usize) -> SncStatus {
    guard(|| {
        out_ptr(out)?;
        *out = handle(bound, "bound")?.inner.hoelder_ids().len();
        Ok(())
    })
}

fn query(bound: &PerformanceBound, kind: SncQueryKind, x: f64) -> Result<BoundQuery, (SncStatus, String)> {
    let q = match kind {
        SncQueryKind::Forward => BoundQuery::forward(bound.clone(), x),
        SncQueryKind::Inverse => BoundQuery::inverse(bound.clone(), x),
    };
    q.or_else(|e| fail(SncStatus::InvalidArgument, e))
}

/// Evaluates the bound at one point. `p_values` holds one `p` per Hölder
/// parameter in ascending id order.
///
/// # Safety
/// `bound` must be a live handle, `p_values` valid for `n_p` reads (may be
/// null when `n_p` is 0), and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn snc_bound_evaluate(
    bound: *const SncBound,
    theta: f64,
    p_values: *const f64,
    n_p: usize,
    kind: SncQueryKind,
    x: f64,
    out: *mut f64,
) -> SncStatus {
    guard(|| {
        out_ptr(out)?;
        let b = &handle(bound, "bound")?.inner;
        let ids = b.hoelder_ids();
        if ids.len() != n_p {
            return fail(SncStatus::InvalidArgument, format!("expected {} Hölder values, got {n_p}", ids.len()));
        }
        if n_p > 0 && p_values.is_null() {
            return fail(SncStatus::NullPointer, "p_values is null");
        }
        let ps: &[f64] = if n_p == 0 { &[] } else { std::slice::from_raw_parts(p_values, n_p) };
        let mut a = ParamAssignment::new(theta);
        for (id, p) in ids.into_iter().zip(ps) {
            a = a.with_hoelder(id, *p);
        }
        let q = query(b, kind, x)?;
        *out = evaluate_query(&q, &a).or_else(|e| fail(optimize_status(&e), e))?;
        Ok(())
    })
}

/// Minimizes the bound over the grid.
///
/// # Safety
/// `bound` must be a live handle; `opts` may be null for defaults; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn snc_bound_optimize(
    bound: *const SncBound,
    kind: SncQueryKind,
    x: f64,
    opts: *const SncGridOptions,
    out: *mut SncOptimum,
) -> SncStatus {
    guard(|| {
        out_ptr(out)?;
        let b = &handle(bound, "bound")?.inner;
        let o = opts.as_ref().copied().unwrap_or_else(|| snc_grid_options_default());
        let cfg = GridConfig {
            theta_granularity: o.theta_granularity,
            theta_max: (o.theta_max > 0.0).then_some(o.theta_max),
            hoelder_granularity: o.hoelder_granularity,
            p_max: o.p_max,
            ..GridConfig::default()
        };
        let q = query(b, kind, x)?;
        let r = grid_search_minimize(&q, &cfg).or_else(|e| fail(optimize_status(&e), e))?;
        *out = SncOptimum { value: r.value, theta: r.argmin.theta, evaluated: r.evaluated, feasible: r.feasible };
        Ok(())
    })
}
