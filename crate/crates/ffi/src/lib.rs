//! C ABI over `beepsim`.
//!
//! Conventions:
//! * every fallible call returns a [`BeepsimStatus`]; results go through
//!   out-pointers, which are left untouched on failure;
//! * on failure a message is kept per thread and read with
//!   [`beepsim_last_error_message`];
//! * graphs and traces are opaque handles owned by the caller and released
//!   with the matching `_free` function;
//! * strings are NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufWriter;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use beepsim::bfw::{bfw_protocol, BfwParams, NodeState};
use beepsim::engine::{run, RunOptions, RunTrace, StopCondition, TraceOptions};
use beepsim::flowcheck::{audit_all, AuditPlan};
use beepsim::graph::{distances, generate, load_edge_list, DistanceTable, Graph, GraphSpec};
use beepsim::harness::{round_cap, DEFAULT_CAP_MULTIPLIER};
use beepsim::markov::{geom_binom_identity, stationary, ChainSpec};
use beepsim::tracefile::{write_trace, TraceHeader};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeepsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    GraphError = 3,
    IoError = 4,
    /// The trace lacks what the query needs (e.g. not recorded densely).
    TraceUnavailable = 5,
    Panic = 6,
}

/// Opaque graph handle.
pub struct BeepsimGraph {
    graph: Graph,
    descriptor: Option<String>,
    dist: DistanceTable,
}

/// Opaque handle to one completed run.
pub struct BeepsimTrace {
    graph: Graph,
    descriptor: Option<String>,
    params: BfwParams,
    max_rounds: u64,
    converged: bool,
    leader: Option<usize>,
    trace: RunTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: BeepsimStatus, msg: impl Into<String>) -> BeepsimStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning panics into [`BeepsimStatus::Panic`].
fn guard(f: impl FnOnce() -> BeepsimStatus) -> BeepsimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(BeepsimStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

unsafe fn c_str<'a>(s: *const c_char) -> Result<&'a str, BeepsimStatus> {
    if s.is_null() {
        return Err(fail(BeepsimStatus::NullPointer, "string argument is null"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(BeepsimStatus::InvalidArgument, "string argument is not UTF-8"))
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(BeepsimStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn beepsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn beepsim_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}

fn graph_handle(graph: Graph, descriptor: Option<String>) -> *mut BeepsimGraph {
    let dist = distances(&graph);
    Box::into_raw(Box::new(BeepsimGraph { graph, descriptor, dist }))
}

/// Builds a graph from a descriptor such as `path:16` or `grid:4x4`.
///
/// # Safety
/// `spec` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn beepsim_graph_generate(spec: *const c_char, out: *mut *mut BeepsimGraph) -> BeepsimStatus {
    guard(|| {
        non_null!(out);
        let spec = match c_str(spec) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let parsed: GraphSpec = match spec.parse() {
            Ok(s) => s,
            Err(e) => return fail(BeepsimStatus::InvalidArgument, e.to_string()),
        };
        match generate(&parsed) {
            Ok(g) => {
                *out = graph_handle(g, Some(parsed.to_string()));
                BeepsimStatus::Ok
            }
            Err(e) => fail(BeepsimStatus::GraphError, e.to_string()),
        }
    })
}

/// Parses an edge list (`u v` per line, `#` comments).
///
/// # Safety
/// `text` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn beepsim_graph_from_edge_list(text: *const c_char, out: *mut *mut BeepsimGraph) -> BeepsimStatus {
    guard(|| {
        non_null!(out);
        let text = match c_str(text) {
            Ok(s) => s,
            Err(status) => return status,
        };
        match load_edge_list(text) {
            Ok(g) => {
                *out = graph_handle(g, None);
                BeepsimStatus::Ok
            }
            Err(e) => fail(BeepsimStatus::GraphError, e.to_string()),
        }
    })
}

/// # Safety
/// `graph` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn beepsim_graph_node_count(graph: *const BeepsimGraph, out: *mut usize) -> BeepsimStatus {
    non_null!(graph, out);
    *out = (*graph).graph.node_count();
    BeepsimStatus::Ok
}

/// # Safety
/// `graph` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn beepsim_graph_edge_count(graph: *const BeepsimGraph, out: *mut usize) -> BeepsimStatus {
    non_null!(graph, out);
    *out = (*graph).graph.edge_count();
    BeepsimStatus::Ok
}

/// # Safety
/// `graph` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn beepsim_graph_diameter(graph: *const BeepsimGraph, out: *mut u32) -> BeepsimStatus {
    non_null!(graph, out);
    *out = (*graph).dist.diameter();
    BeepsimStatus::Ok
}

/// Releases a graph. NULL is ignored.
///
/// # Safety
/// `graph` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn beepsim_graph_free(graph: *mut BeepsimGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Runs the protocol until one leader remains or `max_rounds` pass.
///
/// `p` is the beep probability in (0, 1]; `p <= 0` selects `1/(D+1)`.
/// `max_rounds == 0` selects the default cap. With `dense` every round is
/// kept, which is required for auditing and per-round queries.
///
/// # Safety
/// `graph` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn beepsim_run(
    graph: *const BeepsimGraph,
    p: f64,
    seed: u64,
    max_rounds: u64,
    dense: bool,
    out: *mut *mut BeepsimTrace,
) -> BeepsimStatus {
    guard(|| {
        non_null!(graph, out);
        let h = &*graph;
        let diameter = h.dist.diameter();
        let params = if p <= 0.0 {
            BfwParams::diameter_tuned(diameter)
        } else {
            BfwParams::uniform(p)
        };
        let params = match params {
            Ok(params) => params,
            Err(e) => return fail(BeepsimStatus::InvalidArgument, e.to_string()),
        };
        let max_rounds = if max_rounds == 0 {
            round_cap(DEFAULT_CAP_MULTIPLIER, diameter, h.graph.node_count(), params.is_diameter_tuned())
        } else {
            max_rounds
        };
        let proto = bfw_protocol(&params);
        let opts = RunOptions {
            seed,
            max_rounds,
            stop: StopCondition::SingleLeader,
            record: if dense { TraceOptions::dense() } else { TraceOptions::summary_only() },
        };
        let outcome = run(&h.graph, &proto, &opts);
        let converged = outcome.is_converged();
        let trace = outcome.into_trace();
        let leader = trace.sole_leader(&proto);
        *out = Box::into_raw(Box::new(BeepsimTrace {
            graph: h.graph.clone(),
            descriptor: h.descriptor.clone(),
            params,
            max_rounds,
            converged,
            leader,
            trace,
        }));
        BeepsimStatus::Ok
    })
}

/// # Safety
/// `trace` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn beepsim_trace_converged(trace: *const BeepsimTrace, out: *mut bool) -> BeepsimStatus {
    non_null!(trace, out);
    *out = (*trace).converged;
    BeepsimStatus::Ok
}

/// Last executed round (the convergence round for converged runs).
///
/// # Safety
/// `trace` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn beepsim_trace_final_round(trace: *const BeepsimTrace, out: *mut u64) -> BeepsimStatus {
    non_null!(trace, out);
    *out = (*trace).trace.final_round();
    BeepsimStatus::Ok
}

/// The sole leader; `TraceUnavailable` when the run did not converge.
///
/// # Safety
/// `trace` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn beepsim_trace_leader(trace: *const BeepsimTrace, out: *mut usize) -> BeepsimStatus {
    non_null!(trace, out);
    match (*trace).leader {
        Some(l) => {
            *out = l;
            BeepsimStatus::Ok
        }
        None => fail(BeepsimStatus::TraceUnavailable, "run ended with more than one leader"),
    }
}

/// Number of leaders at round `round`.
///
/// # Safety
/// `trace` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn beepsim_trace_leader_count(trace: *const BeepsimTrace, round: u64, out: *mut u32) -> BeepsimStatus {
    non_null!(trace, out);
    let h = &*trace;
    match h.trace.leader_count_history.get(round as usize) {
        Some(&c) => {
            *out = c;
            BeepsimStatus::Ok
        }
        None => fail(BeepsimStatus::InvalidArgument, format!("round {round} is past the end of the run")),
    }
}

/// State of `node` at `round`, encoded 0..=5 as LW, LB, LF, NW, NB, NF.
/// Needs a dense trace except for the final round.
///
/// # Safety
/// `trace` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn beepsim_trace_state(trace: *const BeepsimTrace, round: u64, node: usize, out: *mut u8) -> BeepsimStatus {
    non_null!(trace, out);
    let t = &(*trace).trace;
    if node >= t.node_count() {
        return fail(BeepsimStatus::InvalidArgument, format!("node {node} out of range"));
    }
    let cfg = if round == t.final_round() {
        &t.final_config
    } else if round > t.final_round() {
        return fail(BeepsimStatus::InvalidArgument, format!("round {round} is past the end of the run"));
    } else if t.is_dense() {
        &t.snapshots[round as usize].config
    } else {
        return fail(BeepsimStatus::TraceUnavailable, "trace was not recorded densely");
    };
    *out = cfg.states[node].0;
    BeepsimStatus::Ok
}

/// Audits a dense trace with every lemma auditor and writes the violation
/// count to `violations`.
///
/// # Safety
/// `trace` must come from this library and `violations` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn beepsim_trace_verify(trace: *const BeepsimTrace, violations: *mut u64) -> BeepsimStatus {
    guard(|| {
        non_null!(trace, violations);
        let h = &*trace;
        if !h.trace.is_dense() {
            return fail(BeepsimStatus::TraceUnavailable, "auditing needs a dense trace");
        }
        let dist = distances(&h.graph);
        let plan = AuditPlan {
            seed: h.trace.seed,
            ..AuditPlan::default()
        };
        match audit_all(&h.trace, &h.graph, &dist, &plan) {
            Ok(report) => {
                *violations = report.violations();
                BeepsimStatus::Ok
            }
            Err(e) => fail(BeepsimStatus::TraceUnavailable, e.to_string()),
        }
    })
}

/// Writes the trace as JSON lines (readable by `beepsim verify --trace`).
///
/// # Safety
/// `trace` must come from this library and `path` be a valid C string.
#[no_mangle]
pub unsafe extern "C" fn beepsim_trace_write_jsonl(trace: *const BeepsimTrace, path: *const c_char) -> BeepsimStatus {
    guard(|| {
        non_null!(trace);
        let path = match c_str(path) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let h = &*trace;
        let every = h.trace.is_dense().then_some(1);
        let header = TraceHeader::new(&h.graph, h.descriptor.clone(), &h.params, &h.trace, h.max_rounds, every);
        let file = match File::create(path) {
            Ok(f) => f,
            Err(e) => return fail(BeepsimStatus::IoError, format!("{path}: {e}")),
        };
        match write_trace(BufWriter::new(file), &header, &h.trace) {
            Ok(()) => BeepsimStatus::Ok,
            Err(e) => fail(BeepsimStatus::IoError, e.to_string()),
        }
    })
}

/// Releases a trace. NULL is ignored.
///
/// # Safety
/// `trace` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn beepsim_trace_free(trace: *mut BeepsimTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Stationary law (W, B, F) of the single-node chain into `out[0..3]`.
///
/// # Safety
/// `out` must point to three writable doubles.
#[no_mangle]
pub unsafe extern "C" fn beepsim_markov_stationary(p: f64, out: *mut f64) -> BeepsimStatus {
    guard(|| {
        non_null!(out);
        match ChainSpec::new(p) {
            Ok(spec) => {
                let pi = stationary(&spec).pi;
                ptr::copy_nonoverlapping(pi.as_ptr(), out, 3);
                BeepsimStatus::Ok
            }
            Err(e) => fail(BeepsimStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// `P(W_1 + ... + W_n >= k)` for i.i.d. geometric `W_i` on {1, 2, ...}
/// (exact recursion) into `lhs`, and `P(Bin(k-1, p) <= n-1)` into `rhs`.
///
/// # Safety
/// `lhs` and `rhs` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn beepsim_geom_binom_identity(n: u64, k: u64, p: f64, lhs: *mut f64, rhs: *mut f64) -> BeepsimStatus {
    guard(|| {
        non_null!(lhs, rhs);
        match geom_binom_identity(n, k, p) {
            Ok(c) => {
                *lhs = c.lhs;
                *rhs = c.rhs;
                BeepsimStatus::Ok
            }
            Err(e) => fail(BeepsimStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Token (`"LW"`, ...) for a state code from [`beepsim_trace_state`], or NULL.
#[no_mangle]
pub extern "C" fn beepsim_state_token(code: u8) -> *const c_char {
    match NodeState::from_id(beepsim::engine::StateId(code)) {
        Some(s) => match s {
            NodeState::LeaderWaiting => c"LW".as_ptr(),
            NodeState::LeaderBeeping => c"LB".as_ptr(),
            NodeState::LeaderFrozen => c"LF".as_ptr(),
            NodeState::FollowerWaiting => c"NW".as_ptr(),
            NodeState::FollowerBeeping => c"NB".as_ptr(),
            NodeState::FollowerFrozen => c"NF".as_ptr(),
        },
        None => ptr::null(),
    }
}
