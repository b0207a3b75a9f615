//! Auditors must flag traces that were tampered with.

mod common;

use beepsim::bfw::NodeState;
use beepsim::engine::RunTrace;
use beepsim::flowcheck::{
    audit_all, audit_conservation, audit_lipschitz, audit_ohm, audit_traveling_beep, AuditPlan, FlowError, Lemma,
    OrientedPath,
};
use beepsim::{distances, Graph};

fn base() -> (Graph, RunTrace) {
    let g = common::graph("path:8");
    let trace = common::dense_trace(&g, 0.5, 3, 200);
    (g, trace)
}

fn first_beep_after(trace: &RunTrace, node: usize, from: usize) -> usize {
    (from..trace.snapshots.len())
        .find(|&i| NodeState::from_id(trace.snapshots[i].config.states[node]).unwrap().is_beeping())
        .expect("node beeps at some point")
}

#[test]
fn conservation_flags_a_flipped_endpoint_state() {
    let (g, mut trace) = base();
    let path = OrientedPath::new(&g, (0..8).collect()).unwrap();
    assert!(audit_conservation(&trace, &path).unwrap().is_clean());

    // Make node 0 waiting in a round where it beeped: the flow changes without
    // a matching endpoint beep.
    let i = first_beep_after(&trace, 0, 1);
    let s = &mut trace.snapshots[i].config.states[0];
    *s = if NodeState::from_id(*s).unwrap().is_leader() {
        NodeState::LeaderWaiting.id()
    } else {
        NodeState::FollowerWaiting.id()
    };
    let report = audit_conservation(&trace, &path).unwrap();
    assert!(!report.is_clean());
    assert_eq!(report.first_violation().unwrap().0, Lemma::Conservation);
}

#[test]
fn ohm_flags_a_shifted_beep_counter() {
    let (g, mut trace) = base();
    let path = OrientedPath::new(&g, (0..8).collect()).unwrap();
    assert!(audit_ohm(&trace, &path).unwrap().is_clean());
    let mid = trace.snapshots.len() / 2;
    for snap in &mut trace.snapshots[mid..] {
        snap.beeps[7] += 1;
    }
    let report = audit_ohm(&trace, &path).unwrap();
    let (lemma, v) = report.first_violation().unwrap();
    assert_eq!(lemma, Lemma::Ohm);
    assert_eq!(v.round, mid as u64);
}

#[test]
fn lipschitz_flags_an_inflated_counter() {
    let (g, mut trace) = base();
    let dist = distances(&g);
    let last = trace.snapshots.len() - 1;
    trace.snapshots[last].beeps[0] += 5;
    let report = audit_lipschitz(&trace, &dist).unwrap();
    assert_eq!(report.first_violation().unwrap().0, Lemma::Lipschitz);
}

#[test]
fn traveling_beep_flags_a_swallowed_wave() {
    let (g, mut trace) = base();
    let dist = distances(&g);
    assert!(audit_traveling_beep(&trace, &dist).unwrap().is_clean());
    // Silence node 7 from round 1 on, keeping its counter consistent: node
    // 0 soon has more beeps, and the wave it sends never arrives.
    for snap in &mut trace.snapshots[1..] {
        let s = &mut snap.config.states[7];
        if NodeState::from_id(*s).unwrap().is_beeping() {
            *s = NodeState::FollowerWaiting.id();
        }
        snap.beeps[7] = 0;
    }
    let report = audit_traveling_beep(&trace, &dist).unwrap();
    assert_eq!(report.first_violation().unwrap().0, Lemma::TravelingBeep);
}

#[test]
fn full_audit_flags_a_resurrected_leader() {
    let g = common::graph("cycle:10");
    let mut trace = common::dense_trace(&g, 0.5, 5, 300);
    let dist = distances(&g);
    let last = trace.snapshots.len() - 1;
    let victim = (0..10)
        .find(|&u| !NodeState::from_id(trace.snapshots[last].config.states[u]).unwrap().is_leader())
        .unwrap();
    trace.snapshots[last].config.states[victim] = NodeState::LeaderWaiting.id();
    trace.leader_count_history[last] += 1;
    let report = audit_all(&trace, &g, &dist, &AuditPlan::default()).unwrap();
    assert!(!report.is_clean());
    assert!(report.get(Lemma::LeaderMonotonicity).unwrap().violated > 0);
}

#[test]
fn sparse_trace_is_refused_where_density_is_needed() {
    let (g, mut trace) = base();
    trace.snapshots.retain(|s| s.round() % 2 == 0 || s.round() == trace.final_config.round);
    let path = OrientedPath::new(&g, vec![0, 1, 2]).unwrap();
    assert!(matches!(audit_conservation(&trace, &path), Err(FlowError::NotDense { .. })));
    assert!(audit_ohm(&trace, &path).unwrap().is_clean());
}

#[test]
fn oriented_path_rejects_non_edges() {
    let (g, _) = base();
    assert!(OrientedPath::new(&g, vec![0, 2]).is_err());
    assert!(OrientedPath::new(&g, vec![]).is_err());
}
