//! Flow calculus on BFW configurations and post-hoc trace auditors.
//!
//! The flow along an oriented edge `(u, v)` is `+1` when `u` beeps while `v`
//! waits, `-1` in the mirrored situation, and `0` otherwise; the flow along
//! a path is the sum over its edges. The auditors replay a recorded trace
//! and check the deterministic facts that hold for every BFW execution
//! started from an all-waiting configuration with at least one leader:
//!
//! * local transition facts (forward and backward in time),
//! * conservation: a path's flow changes only through beeps at its ends,
//! * flow equals the beep-count difference of the path's endpoints,
//! * beep counts differ by at most the hop distance,
//! * a beep surplus at `u` reaches `v` within `dis(u, v)` rounds,
//! * an eliminated node had a neighbor with exactly one more beep,
//! * the leader count never drops to zero and never grows.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::bfw::{NodeState, Phase};
use crate::engine::{rng_from_seed, Configuration, RunTrace};
use crate::graph::{random_walk, DistanceTable, Graph};

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("({u}, {v}) is not an edge of the graph")]
    NotAnEdge { u: usize, v: usize },
    #[error("a path needs at least one edge")]
    EmptyPath,
    #[error("audit needs a snapshot for every round; the trace has {snapshots} snapshots over {rounds} rounds")]
    NotDense { snapshots: usize, rounds: u64 },
    #[error("round {round}, node {node}: state is not a BFW state")]
    UnknownState { round: u64, node: usize },
    #[error("trace has {trace} nodes but the graph has {graph}")]
    SizeMismatch { trace: usize, graph: usize },
}

/// A walk through the graph given by its vertex sequence. Vertices and edges
/// may repeat.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrientedPath {
    vertices: Vec<usize>,
}

impl OrientedPath {
    pub fn new(g: &Graph, vertices: Vec<usize>) -> Result<Self, FlowError> {
        if vertices.len() < 2 {
            return Err(FlowError::EmptyPath);
        }
        for w in vertices.windows(2) {
            if !g.has_edge(w[0], w[1]) {
                return Err(FlowError::NotAnEdge { u: w[0], v: w[1] });
            }
        }
        Ok(OrientedPath { vertices })
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    /// Number of edges.
    pub fn len(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> usize {
        self.vertices[0]
    }

    pub fn last(&self) -> usize {
        *self.vertices.last().unwrap()
    }

    pub fn reversed(&self) -> Self {
        let mut vertices = self.vertices.clone();
        vertices.reverse();
        OrientedPath { vertices }
    }
}

fn phase_of(cfg: &Configuration, u: usize) -> Result<Phase, FlowError> {
    NodeState::from_id(cfg.states[u])
        .map(NodeState::phase)
        .ok_or(FlowError::UnknownState { round: cfg.round, node: u })
}

fn phase_flow(a: Phase, b: Phase) -> i64 {
    match (a, b) {
        (Phase::Beeping, Phase::Waiting) => 1,
        (Phase::Waiting, Phase::Beeping) => -1,
        _ => 0,
    }
}

/// Flow along the oriented edge `(u, v)`.
pub fn edge_flow(g: &Graph, cfg: &Configuration, u: usize, v: usize) -> Result<i64, FlowError> {
    if !g.has_edge(u, v) {
        return Err(FlowError::NotAnEdge { u, v });
    }
    Ok(phase_flow(phase_of(cfg, u)?, phase_of(cfg, v)?))
}

/// Sum of edge flows along the path.
pub fn path_flow(cfg: &Configuration, path: &OrientedPath) -> Result<i64, FlowError> {
    let mut total = 0;
    for w in path.vertices.windows(2) {
        total += phase_flow(phase_of(cfg, w[0])?, phase_of(cfg, w[1])?);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Lemma {
    /// All nodes waiting and at least one leader at round 0.
    Initialization,
    /// Recorded beep counters agree with the recorded states.
    BeepCounter,
    /// Pointwise forward/backward transition facts.
    BasicObservations,
    Conservation,
    Ohm,
    Lipschitz,
    TravelingBeep,
    Elimination,
    LeaderSurvival,
    LeaderMonotonicity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub round: u64,
    pub nodes: Vec<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LemmaReport {
    pub lemma: Lemma,
    pub checked: u64,
    pub passed: u64,
    pub violated: u64,
    pub indeterminate: u64,
    pub first_violation: Option<Violation>,
}

impl LemmaReport {
    fn new(lemma: Lemma) -> Self {
        LemmaReport {
            lemma,
            checked: 0,
            passed: 0,
            violated: 0,
            indeterminate: 0,
            first_violation: None,
        }
    }

    fn check(&mut self, ok: bool, violation: impl FnOnce() -> Violation) {
        self.checked += 1;
        if ok {
            self.passed += 1;
        } else {
            self.violated += 1;
            if self.first_violation.is_none() {
                self.first_violation = Some(violation());
            }
        }
    }

    fn indeterminate(&mut self) {
        self.checked += 1;
        self.indeterminate += 1;
    }

    fn absorb(&mut self, other: LemmaReport) {
        self.checked += other.checked;
        self.passed += other.passed;
        self.violated += other.violated;
        self.indeterminate += other.indeterminate;
        let earlier = match (&self.first_violation, &other.first_violation) {
            (None, Some(_)) => true,
            (Some(a), Some(b)) => b.round < a.round,
            _ => false,
        };
        if earlier {
            self.first_violation = other.first_violation;
        }
    }
}

/// Per-lemma tallies.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlowReport {
    lemmas: BTreeMap<Lemma, LemmaReport>,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    schema: u32,
    violations: u64,
    lemmas: Vec<&'a LemmaReport>,
}

impl Serialize for FlowReport {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ReportJson {
            schema: REPORT_SCHEMA,
            violations: self.violations(),
            lemmas: self.lemmas.values().collect(),
        }
        .serialize(s)
    }
}

impl FlowReport {
    fn single(report: LemmaReport) -> Self {
        let mut out = FlowReport::default();
        out.lemmas.insert(report.lemma, report);
        out
    }

    pub fn merge(&mut self, other: FlowReport) {
        for (lemma, report) in other.lemmas {
            self.lemmas
                .entry(lemma)
                .or_insert_with(|| LemmaReport::new(lemma))
                .absorb(report);
        }
    }

    pub fn get(&self, lemma: Lemma) -> Option<&LemmaReport> {
        self.lemmas.get(&lemma)
    }

    pub fn lemmas(&self) -> impl Iterator<Item = &LemmaReport> {
        self.lemmas.values()
    }

    pub fn violations(&self) -> u64 {
        self.lemmas.values().map(|r| r.violated).sum()
    }

    pub fn is_clean(&self) -> bool {
        self.violations() == 0
    }

    /// The earliest-round violation over all lemmas.
    pub fn first_violation(&self) -> Option<(Lemma, &Violation)> {
        self.lemmas
            .values()
            .filter_map(|r| r.first_violation.as_ref().map(|v| (r.lemma, v)))
            .min_by_key(|(_, v)| v.round)
    }
}

/// Decoded view of a trace: states per recorded snapshot.
struct View<'a> {
    trace: &'a RunTrace,
    states: Vec<Vec<NodeState>>,
}

impl<'a> View<'a> {
    fn new(trace: &'a RunTrace) -> Result<Self, FlowError> {
        let states = trace
            .snapshots
            .iter()
            .map(|snap| {
                snap.config
                    .states
                    .iter()
                    .enumerate()
                    .map(|(u, &s)| {
                        NodeState::from_id(s).ok_or(FlowError::UnknownState {
                            round: snap.round(),
                            node: u,
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(View { trace, states })
    }

    fn dense(trace: &'a RunTrace) -> Result<Self, FlowError> {
        if !trace.is_dense() {
            return Err(FlowError::NotDense {
                snapshots: trace.snapshots.len(),
                rounds: trace.final_round(),
            });
        }
        Self::new(trace)
    }

    fn round(&self, i: usize) -> u64 {
        self.trace.snapshots[i].round()
    }

    fn beeps(&self, i: usize) -> &[u32] {
        &self.trace.snapshots[i].beeps
    }

    fn phase(&self, i: usize, u: usize) -> Phase {
        self.states[i][u].phase()
    }

    fn flow(&self, i: usize, path: &OrientedPath) -> i64 {
        path.vertices
            .windows(2)
            .map(|w| phase_flow(self.phase(i, w[0]), self.phase(i, w[1])))
            .sum()
    }
}

fn check_width(trace: &RunTrace, n: usize) -> Result<(), FlowError> {
    if trace.node_count() != n {
        return Err(FlowError::SizeMismatch {
            trace: trace.node_count(),
            graph: n,
        });
    }
    Ok(())
}

/// Checks, for every round `t > 0`, that the flow along `path` changed by
/// exactly `1{first beeps at t} - 1{last beeps at t}`.
pub fn audit_conservation(trace: &RunTrace, path: &OrientedPath) -> Result<FlowReport, FlowError> {
    let view = View::dense(trace)?;
    let mut report = LemmaReport::new(Lemma::Conservation);
    let (a, b) = (path.first(), path.last());
    let mut prev = view.flow(0, path);
    for i in 1..view.states.len() {
        let cur = view.flow(i, path);
        let expected = prev + view.states[i][a].is_beeping() as i64 - view.states[i][b].is_beeping() as i64;
        report.check(cur == expected, || Violation {
            round: view.round(i),
            nodes: path.vertices.clone(),
            detail: format!("flow {cur}, previous flow {prev}, conservation predicts {expected}"),
        });
        prev = cur;
    }
    Ok(FlowReport::single(report))
}

/// Checks that the flow along `path` equals the beep-count difference of its
/// endpoints at every recorded round.
pub fn audit_ohm(trace: &RunTrace, path: &OrientedPath) -> Result<FlowReport, FlowError> {
    let view = View::new(trace)?;
    let mut report = LemmaReport::new(Lemma::Ohm);
    let (a, b) = (path.first(), path.last());
    for i in 0..view.states.len() {
        let flow = view.flow(i, path);
        let beeps = view.beeps(i);
        let diff = beeps[a] as i64 - beeps[b] as i64;
        report.check(flow == diff, || Violation {
            round: view.round(i),
            nodes: path.vertices.clone(),
            detail: format!("flow {flow} but beep counts {} - {} = {diff}", beeps[a], beeps[b]),
        });
    }
    Ok(FlowReport::single(report))
}

/// `|N(u) - N(v)| <= dis(u, v)` for every pair and every recorded round.
pub fn audit_lipschitz(trace: &RunTrace, dist: &DistanceTable) -> Result<FlowReport, FlowError> {
    check_width(trace, dist.node_count())?;
    let mut report = LemmaReport::new(Lemma::Lipschitz);
    let n = dist.node_count();
    for snap in &trace.snapshots {
        let beeps = &snap.beeps;
        for u in 0..n {
            let row = dist.row(u);
            for v in u + 1..n {
                let gap = beeps[u].abs_diff(beeps[v]);
                report.check(gap <= row[v], || Violation {
                    round: snap.round(),
                    nodes: vec![u, v],
                    detail: format!("beep counts {} and {} differ by more than distance {}", beeps[u], beeps[v], row[v]),
                });
            }
        }
    }
    Ok(FlowReport::single(report))
}

/// Whenever `N_t(u) > N_t(v)`, node `v` must beep in some round of
/// `(t, t + dis(u, v)]`. Obligations whose deadline lies past the end of the
/// trace and that are not yet met are counted as indeterminate.
#[allow(clippy::needless_range_loop)]
pub fn audit_traveling_beep(trace: &RunTrace, dist: &DistanceTable) -> Result<FlowReport, FlowError> {
    check_width(trace, dist.node_count())?;
    let view = View::dense(trace)?;
    let n = dist.node_count();
    let last = view.states.len() - 1;
    // next_beep[v][i]: first round index > i where v beeps, or usize::MAX.
    let mut next_beep = vec![vec![usize::MAX; last + 1]; n];
    for (v, row) in next_beep.iter_mut().enumerate() {
        let mut upcoming = usize::MAX;
        for i in (0..=last).rev() {
            row[i] = upcoming;
            if view.states[i][v].is_beeping() {
                upcoming = i;
            }
        }
    }
    let mut report = LemmaReport::new(Lemma::TravelingBeep);
    for i in 0..=last {
        let beeps = view.beeps(i);
        for u in 0..n {
            for v in 0..n {
                if beeps[u] <= beeps[v] {
                    continue;
                }
                let deadline = i + dist.get(u, v) as usize;
                let next = next_beep[v][i];
                if deadline > last && next > last {
                    report.indeterminate();
                    continue;
                }
                report.check(next <= deadline, || Violation {
                    round: view.round(i),
                    nodes: vec![u, v],
                    detail: format!(
                        "N({u}) = {} > N({v}) = {} but {v} does not beep by round {}",
                        beeps[u],
                        beeps[v],
                        view.round(i) + dist.get(u, v) as u64
                    ),
                });
            }
        }
    }
    Ok(FlowReport::single(report))
}

/// Every node that becomes a beeping non-leader at `t >= 1` had a neighbor
/// with exactly one more beep at `t - 1`. Also checks that the leader count
/// stays positive and never increases.
pub fn audit_elimination(trace: &RunTrace, g: &Graph) -> Result<FlowReport, FlowError> {
    check_width(trace, g.node_count())?;
    let view = View::dense(trace)?;
    let mut elim = LemmaReport::new(Lemma::Elimination);
    for i in 1..view.states.len() {
        let prev_beeps = view.beeps(i - 1);
        for u in 0..g.node_count() {
            if view.states[i][u] != NodeState::FollowerBeeping || view.phase(i - 1, u) != Phase::Waiting {
                continue;
            }
            let ok = g.neighbors(u).iter().any(|&v| prev_beeps[v] == prev_beeps[u] + 1);
            elim.check(ok, || Violation {
                round: view.round(i),
                nodes: vec![u],
                detail: format!("node {u} relays with N = {} but no neighbor had N = {}", prev_beeps[u], prev_beeps[u] + 1),
            });
        }
    }
    let mut out = FlowReport::single(elim);
    out.merge(audit_leader_counts(trace));
    Ok(out)
}

/// Leader count positive at every round and non-increasing.
pub fn audit_leader_counts(trace: &RunTrace) -> FlowReport {
    let mut survive = LemmaReport::new(Lemma::LeaderSurvival);
    let mut monotone = LemmaReport::new(Lemma::LeaderMonotonicity);
    let history = &trace.leader_count_history;
    for (t, &count) in history.iter().enumerate() {
        survive.check(count >= 1, || Violation {
            round: t as u64,
            nodes: vec![],
            detail: "no leader left".into(),
        });
        if t > 0 {
            let before = history[t - 1];
            monotone.check(count <= before, || Violation {
                round: t as u64,
                nodes: vec![],
                detail: format!("leader count rose from {before} to {count}"),
            });
        }
    }
    let mut out = FlowReport::single(survive);
    out.merge(FlowReport::single(monotone));
    out
}

/// Round 0 is all-waiting with at least one leader, and recorded beep counts
/// match the recorded states (non-decreasing, `+1` exactly on beeping rounds).
pub fn audit_bookkeeping(trace: &RunTrace) -> Result<FlowReport, FlowError> {
    let view = View::dense(trace)?;
    let mut init = LemmaReport::new(Lemma::Initialization);
    let first = &view.states[0];
    let all_waiting = first.iter().all(|s| s.phase() == Phase::Waiting);
    let has_leader = first.iter().any(|s| s.is_leader());
    init.check(all_waiting && has_leader, || Violation {
        round: 0,
        nodes: first
            .iter()
            .enumerate()
            .filter(|(_, s)| s.phase() != Phase::Waiting)
            .map(|(u, _)| u)
            .collect(),
        detail: format!("all waiting: {all_waiting}, has leader: {has_leader}"),
    });

    let mut counter = LemmaReport::new(Lemma::BeepCounter);
    for i in 0..view.states.len() {
        let beeps = view.beeps(i);
        for (u, state) in view.states[i].iter().enumerate() {
            let before = if i == 0 { 0 } else { view.beeps(i - 1)[u] };
            let expected = before + state.is_beeping() as u32;
            counter.check(beeps[u] == expected, || Violation {
                round: view.round(i),
                nodes: vec![u],
                detail: format!("recorded beep count {} but states imply {expected}", beeps[u]),
            });
        }
    }
    let mut out = FlowReport::single(init);
    out.merge(FlowReport::single(counter));
    Ok(out)
}

/// Pointwise transition facts for every node and edge.
///
/// Forward (`t -> t+1`): waiting never goes straight to frozen, beeping
/// always freezes, frozen always returns to waiting, and a waiting
/// neighbor of a beeper relays as a non-leader. Backward (`t -> t-1`):
/// waiting was not beeping, beeping was waiting, frozen was beeping, a
/// waiting neighbor of a frozen node was itself frozen, and a beeping
/// non-leader had a beeping neighbor.
pub fn audit_basic_observations(trace: &RunTrace, g: &Graph) -> Result<FlowReport, FlowError> {
    check_width(trace, g.node_count())?;
    let view = View::dense(trace)?;
    let mut report = LemmaReport::new(Lemma::BasicObservations);
    let n = g.node_count();
    for i in 0..view.states.len() {
        let round = view.round(i);
        let bad = |nodes: Vec<usize>, what: &str| Violation {
            round,
            nodes,
            detail: what.to_string(),
        };
        if i + 1 < view.states.len() {
            for u in 0..n {
                let (now, next) = (view.phase(i, u), view.phase(i + 1, u));
                match now {
                    Phase::Waiting => report.check(next != Phase::Frozen, || bad(vec![u], "waiting node froze")),
                    Phase::Beeping => report.check(next == Phase::Frozen, || bad(vec![u], "beeping node did not freeze")),
                    Phase::Frozen => report.check(next == Phase::Waiting, || bad(vec![u], "frozen node did not wake")),
                }
                if now == Phase::Beeping {
                    for &v in g.neighbors(u) {
                        if view.phase(i, v) == Phase::Waiting {
                            report.check(view.states[i + 1][v] == NodeState::FollowerBeeping, || {
                                bad(vec![u, v], "waiting neighbor of a beeper did not relay as non-leader")
                            });
                        }
                    }
                }
            }
        }
        if i > 0 {
            for u in 0..n {
                let (now, prev) = (view.phase(i, u), view.phase(i - 1, u));
                match now {
                    Phase::Waiting => report.check(prev != Phase::Beeping, || bad(vec![u], "waiting node was beeping")),
                    Phase::Beeping => report.check(prev == Phase::Waiting, || bad(vec![u], "beeping node was not waiting")),
                    Phase::Frozen => report.check(prev == Phase::Beeping, || bad(vec![u], "frozen node was not beeping")),
                }
                if now == Phase::Frozen {
                    for &v in g.neighbors(u) {
                        if view.phase(i, v) == Phase::Waiting {
                            report.check(view.phase(i - 1, v) == Phase::Frozen, || {
                                bad(vec![u, v], "waiting neighbor of a frozen node was not frozen")
                            });
                        }
                    }
                }
                if view.states[i][u] == NodeState::FollowerBeeping {
                    let heard = g.neighbors(u).iter().any(|&v| view.phase(i - 1, v) == Phase::Beeping);
                    report.check(heard, || bad(vec![u], "non-leader beeps without a beeping neighbor"));
                }
            }
        }
    }
    Ok(FlowReport::single(report))
}

/// Which auditors to run and how to sample paths.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditPlan {
    pub bookkeeping: bool,
    pub basic_observations: bool,
    pub conservation: bool,
    pub ohm: bool,
    pub lipschitz: bool,
    pub traveling_beep: bool,
    pub elimination: bool,
    /// Random walks of length at most `2D` (vertices may repeat).
    pub walks: usize,
    /// Node pairs joined by a shortest path; `None` means every pair.
    pub pair_samples: Option<usize>,
    pub seed: u64,
}

impl Default for AuditPlan {
    fn default() -> Self {
        AuditPlan {
            bookkeeping: true,
            basic_observations: true,
            conservation: true,
            ohm: true,
            lipschitz: true,
            traveling_beep: true,
            elimination: true,
            walks: 20,
            pair_samples: Some(32),
            seed: 0,
        }
    }
}

impl AuditPlan {
    pub fn none() -> Self {
        AuditPlan {
            bookkeeping: false,
            basic_observations: false,
            conservation: false,
            ohm: false,
            lipschitz: false,
            traveling_beep: false,
            elimination: false,
            ..AuditPlan::default()
        }
    }

    fn needs_paths(&self) -> bool {
        self.conservation || self.ohm
    }
}

/// Every edge (one orientation), one shortest path per sampled pair, and
/// `plan.walks` random walks of length `1..=2D`.
pub fn sample_paths(g: &Graph, dist: &DistanceTable, plan: &AuditPlan) -> Vec<OrientedPath> {
    let n = g.node_count();
    let mut paths: Vec<OrientedPath> = g
        .edges()
        .iter()
        .map(|&(u, v)| OrientedPath { vertices: vec![u, v] })
        .collect();
    if n < 2 {
        return paths;
    }
    let mut rng = rng_from_seed(plan.seed);
    let pairs: Vec<(usize, usize)> = match plan.pair_samples {
        None => (0..n).flat_map(|u| (0..n).filter(move |&v| v != u).map(move |v| (u, v))).collect(),
        Some(k) => (0..k)
            .map(|_| {
                let u = rng.gen_range(0..n);
                let v = (u + rng.gen_range(1..n)) % n;
                (u, v)
            })
            .collect(),
    };
    for (u, v) in pairs {
        paths.push(OrientedPath {
            vertices: g.shortest_path(dist, u, v),
        });
    }
    let max_len = (2 * dist.diameter() as usize).max(1);
    for _ in 0..plan.walks {
        let len = rng.gen_range(1..=max_len);
        let walk = random_walk(g, len, &mut rng);
        if walk.len() >= 2 {
            paths.push(OrientedPath { vertices: walk });
        }
    }
    paths
}

/// Runs the auditors selected by `plan`.
pub fn audit_all(trace: &RunTrace, g: &Graph, dist: &DistanceTable, plan: &AuditPlan) -> Result<FlowReport, FlowError> {
    check_width(trace, g.node_count())?;
    let mut report = FlowReport::default();
    if plan.bookkeeping {
        report.merge(audit_bookkeeping(trace)?);
    }
    if plan.basic_observations {
        report.merge(audit_basic_observations(trace, g)?);
    }
    if plan.needs_paths() {
        for path in sample_paths(g, dist, plan) {
            if plan.conservation {
                report.merge(audit_conservation(trace, &path)?);
            }
            if plan.ohm {
                report.merge(audit_ohm(trace, &path)?);
            }
        }
    }
    if plan.lipschitz {
        report.merge(audit_lipschitz(trace, dist)?);
    }
    if plan.traveling_beep {
        report.merge(audit_traveling_beep(trace, dist)?);
    }
    if plan.elimination {
        report.merge(audit_elimination(trace, g)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bfw::{bfw_protocol, BfwParams};
    use crate::engine::{run, RunOptions, StopCondition, TraceOptions};
    use crate::graph::{distances, generate, GraphSpec};
    use NodeState::*;

    fn cfg(states: &[NodeState]) -> Configuration {
        Configuration {
            round: 0,
            states: states.iter().map(|s| s.id()).collect(),
        }
    }

    fn bfw_trace(spec: &str, p: f64, seed: u64, rounds: u64) -> (Graph, RunTrace) {
        let g = generate(&spec.parse().unwrap()).unwrap();
        let opts = RunOptions {
            seed,
            max_rounds: rounds,
            stop: StopCondition::FixedRounds,
            record: TraceOptions::dense(),
        };
        let trace = run(&g, &bfw_protocol(&BfwParams::uniform(p).unwrap()), &opts).into_trace();
        (g, trace)
    }

    #[test]
    fn edge_flow_cases() {
        let g = generate(&GraphSpec::Path(2)).unwrap();
        assert_eq!(edge_flow(&g, &cfg(&[LeaderBeeping, FollowerWaiting]), 0, 1), Ok(1));
        assert_eq!(edge_flow(&g, &cfg(&[FollowerFrozen, LeaderWaiting]), 0, 1), Ok(0));
        assert_eq!(edge_flow(&g, &cfg(&[FollowerWaiting, FollowerBeeping]), 0, 1), Ok(-1));
        let g3 = generate(&GraphSpec::Path(3)).unwrap();
        assert_eq!(
            edge_flow(&g3, &cfg(&[LeaderWaiting; 3]), 0, 2),
            Err(FlowError::NotAnEdge { u: 0, v: 2 })
        );
    }

    #[test]
    fn path_flow_cases() {
        let g = generate(&GraphSpec::Path(3)).unwrap();
        let path = OrientedPath::new(&g, vec![0, 1, 2]).unwrap();
        assert_eq!(path_flow(&cfg(&[LeaderWaiting; 3]), &path), Ok(0));
        // (B, W, B): +1 on (0,1), -1 on (1,2).
        assert_eq!(path_flow(&cfg(&[LeaderBeeping, FollowerWaiting, FollowerBeeping]), &path), Ok(0));
        // Alternating B, W along a 5-edge walk that bounces: each hop is +1 or -1.
        let g6 = generate(&GraphSpec::Path(6)).unwrap();
        let c = cfg(&[LeaderBeeping, FollowerWaiting, FollowerBeeping, FollowerWaiting, FollowerBeeping, FollowerWaiting]);
        let walk = OrientedPath::new(&g6, vec![0, 1, 2, 3, 4, 5]).unwrap();
        assert_eq!(path_flow(&c, &walk), Ok(1));
        let bounce = OrientedPath::new(&g6, vec![0, 1, 0, 1, 0]).unwrap();
        assert_eq!(path_flow(&c, &bounce), Ok(0));
        let out = OrientedPath::new(&g6, vec![0, 1]).unwrap();
        assert_eq!(path_flow(&c, &out), Ok(1));
        assert!(OrientedPath::new(&g6, vec![0, 2]).is_err());
        assert_eq!(OrientedPath::new(&g6, vec![3]), Err(FlowError::EmptyPath));
    }

    #[test]
    fn reversed_path_negates_flow() {
        let (g, trace) = bfw_trace("cycle:7", 0.5, 2, 80);
        let path = OrientedPath::new(&g, vec![0, 1, 2, 3, 2, 1, 0, 6]).unwrap();
        for snap in &trace.snapshots {
            let f = path_flow(&snap.config, &path).unwrap();
            assert_eq!(path_flow(&snap.config, &path.reversed()).unwrap(), -f);
            assert!(f.unsigned_abs() as usize <= path.len());
        }
    }

    #[test]
    fn stationary_all_waiting_window() {
        // Only non-leaders: nobody ever beeps.
        let g = generate(&GraphSpec::Path(3)).unwrap();
        let proto = bfw_protocol(&BfwParams::default());
        let start = cfg(&[FollowerWaiting, FollowerWaiting, FollowerWaiting]);
        let opts = RunOptions {
            seed: 0,
            max_rounds: 10,
            stop: StopCondition::FixedRounds,
            record: TraceOptions::dense(),
        };
        let trace = crate::engine::run_from(&g, &proto, start, &opts).into_trace();
        let path = OrientedPath::new(&g, vec![0, 1, 2]).unwrap();
        let report = audit_conservation(&trace, &path).unwrap();
        let r = report.get(Lemma::Conservation).unwrap();
        assert_eq!((r.checked, r.violated), (10, 0));
    }

    #[test]
    fn path_six_full_path_conserves() {
        let (g, trace) = bfw_trace("path:6", 0.5, 7, 200);
        let path = OrientedPath::new(&g, (0..6).collect()).unwrap();
        let report = audit_conservation(&trace, &path).unwrap();
        assert!(report.is_clean());
        assert_eq!(report.get(Lemma::Conservation).unwrap().checked, 200);
    }

    #[test]
    fn ohm_holds_at_round_zero() {
        let (g, trace) = bfw_trace("path:4", 0.5, 1, 0);
        let path = OrientedPath::new(&g, vec![0, 1, 2, 3]).unwrap();
        let r = audit_ohm(&trace, &path).unwrap();
        assert_eq!(r.get(Lemma::Ohm).unwrap().passed, 1);
    }

    #[test]
    fn cycle_eight_random_paths_obey_ohm() {
        let (g, trace) = bfw_trace("cycle:8", 0.5, 3, 500);
        let mut rng = rng_from_seed(99);
        let mut saw_repeat = false;
        for _ in 0..20 {
            let len = rng.gen_range(1..=16);
            let walk = random_walk(&g, len, &mut rng);
            let mut sorted = walk.clone();
            sorted.sort_unstable();
            sorted.dedup();
            saw_repeat |= sorted.len() < walk.len();
            let path = OrientedPath::new(&g, walk).unwrap();
            assert!(audit_ohm(&trace, &path).unwrap().is_clean());
        }
        assert!(saw_repeat, "sample should include self-intersecting walks");
    }

    #[test]
    fn clique_beep_counts_stay_within_one() {
        let (g, trace) = bfw_trace("clique:6", 0.5, 5, 300);
        let report = audit_lipschitz(&trace, &distances(&g)).unwrap();
        assert!(report.is_clean());
        for snap in &trace.snapshots {
            let max = snap.beeps.iter().max().unwrap();
            let min = snap.beeps.iter().min().unwrap();
            assert!(max - min <= 1);
        }
    }

    #[test]
    fn single_edge_ohm_agrees_with_adjacent_lipschitz() {
        let (g, trace) = bfw_trace("grid:3x3", 0.3, 4, 300);
        let dist = distances(&g);
        let lip = audit_lipschitz(&trace, &dist).unwrap();
        for &(u, v) in g.edges() {
            let path = OrientedPath::new(&g, vec![u, v]).unwrap();
            assert!(audit_ohm(&trace, &path).unwrap().is_clean());
            for snap in &trace.snapshots {
                assert!(snap.beeps[u].abs_diff(snap.beeps[v]) <= 1);
            }
        }
        assert!(lip.is_clean());
    }

    #[test]
    fn traveling_beep_reaches_far_end() {
        let (g, trace) = bfw_trace("path:5", 0.5, 12, 200);
        let report = audit_traveling_beep(&trace, &distances(&g)).unwrap();
        let r = report.get(Lemma::TravelingBeep).unwrap();
        assert_eq!(r.violated, 0);
        assert!(r.passed > 0);
    }

    #[test]
    fn equal_counts_create_no_obligations() {
        let (g, trace) = bfw_trace("path:3", 0.5, 0, 0);
        let r = audit_traveling_beep(&trace, &distances(&g)).unwrap();
        assert_eq!(r.get(Lemma::TravelingBeep).unwrap().checked, 0);
    }

    #[test]
    fn elimination_and_leader_counts_hold() {
        let (g, trace) = bfw_trace("tree:20:3", 0.5, 8, 400);
        let report = audit_elimination(&trace, &g).unwrap();
        assert!(report.is_clean());
        assert!(report.get(Lemma::Elimination).unwrap().passed > 0);
        assert!(report.get(Lemma::LeaderSurvival).unwrap().passed > 0);
    }

    #[test]
    fn thinned_traces_rejected_where_density_matters() {
        let g = generate(&GraphSpec::Path(4)).unwrap();
        let opts = RunOptions {
            seed: 0,
            max_rounds: 20,
            stop: StopCondition::FixedRounds,
            record: TraceOptions { snapshot_every: Some(5) },
        };
        let trace = run(&g, &bfw_protocol(&BfwParams::default()), &opts).into_trace();
        let path = OrientedPath::new(&g, vec![0, 1]).unwrap();
        assert!(matches!(audit_conservation(&trace, &path), Err(FlowError::NotDense { .. })));
        // Ohm only needs the recorded rounds.
        assert!(audit_ohm(&trace, &path).unwrap().is_clean());
    }

    #[test]
    fn report_json_shape() {
        let (g, trace) = bfw_trace("path:4", 0.5, 2, 50);
        let report = audit_all(&trace, &g, &distances(&g), &AuditPlan::default()).unwrap();
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["schema"], 1);
        assert_eq!(json["violations"], 0);
        let names: Vec<_> = json["lemmas"].as_array().unwrap().iter().map(|l| l["lemma"].as_str().unwrap().to_string()).collect();
        for want in ["conservation", "ohm", "lipschitz", "traveling_beep", "elimination", "leader_survival"] {
            assert!(names.iter().any(|n| n == want), "{want} missing from {names:?}");
        }
        let first = &json["lemmas"][0];
        for key in ["checked", "passed", "violated", "indeterminate"] {
            assert!(first[key].is_u64());
        }
    }
}
