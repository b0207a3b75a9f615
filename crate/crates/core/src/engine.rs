//! Synchronous beeping-model semantics for an arbitrary probabilistic
//! state machine.
//!
//! In every round each node either beeps (its state is in the beeping set)
//! or listens. A listener hears a beep iff at least one neighbor beeps; it
//! cannot tell how many. A node then moves according to `delta_heard` if it
//! beeped or heard a beep, and according to `delta_quiet` otherwise.
//!
//! Randomness contract: after the hearing pass, one uniform `[0, 1)` draw is
//! taken per node in ascending node order, but only for nodes whose
//! applicable distribution has more than one outcome. The draws are fixed
//! before any node is updated, so the result does not depend on update order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;

/// Generator behind every simulated run. ChaCha8 has a 2^64-block stream
/// per seed, far beyond any run length used here.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `index` under a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateId(pub u8);

impl StateId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("distribution sums to {0}, not 1")]
    NotNormalized(f64),
    #[error("distribution has no outcomes")]
    EmptyDistribution,
    #[error("transition target {0} is not a state of the protocol")]
    UnknownTarget(u8),
    #[error("listening state `{0}` has no quiet transition")]
    MissingQuietTransition(String),
    #[error("start state {0} is not a state of the protocol")]
    BadStart(u8),
    #[error("protocol must have between 1 and 256 states")]
    BadStateCount,
    #[error("duplicate state name `{0}`")]
    DuplicateName(String),
}

/// A finite distribution over next states. Zero-mass outcomes are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    outcomes: Vec<(StateId, f64)>,
}

impl Distribution {
    pub fn certain(state: StateId) -> Self {
        Distribution {
            outcomes: vec![(state, 1.0)],
        }
    }

    /// Outcomes are sampled in the listed order: a draw below the first
    /// probability selects the first outcome, and so on.
    pub fn new(outcomes: Vec<(StateId, f64)>) -> Result<Self, ProtocolError> {
        let mut total = 0.0;
        for &(_, prob) in &outcomes {
            if !(0.0..=1.0).contains(&prob) {
                return Err(ProtocolError::BadProbability(prob));
            }
            total += prob;
        }
        if outcomes.is_empty() {
            return Err(ProtocolError::EmptyDistribution);
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(ProtocolError::NotNormalized(total));
        }
        let outcomes: Vec<_> = outcomes.into_iter().filter(|&(_, prob)| prob > 0.0).collect();
        Ok(Distribution { outcomes })
    }

    pub fn outcomes(&self) -> &[(StateId, f64)] {
        &self.outcomes
    }

    pub fn is_deterministic(&self) -> bool {
        self.outcomes.len() == 1
    }

    pub fn probability_of(&self, state: StateId) -> f64 {
        self.outcomes
            .iter()
            .filter(|&&(s, _)| s == state)
            .map(|&(_, prob)| prob)
            .sum()
    }

    fn sample(&self, draw: f64) -> StateId {
        let mut acc = 0.0;
        for &(state, prob) in &self.outcomes {
            acc += prob;
            if draw < acc {
                return state;
            }
        }
        self.outcomes.last().unwrap().0
    }
}

/// One state of a protocol definition.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDef {
    /// Token used in trace files.
    pub name: String,
    pub beeping: bool,
    pub leader: bool,
    /// Ignored (and may be `None`) for beeping states.
    pub on_quiet: Option<Distribution>,
    pub on_heard: Distribution,
}

/// A probabilistic state machine `(Q_listen, Q_beep, start, δ_quiet, δ_heard)`
/// together with its leader set.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolDefinition {
    states: Vec<StateDef>,
    start: StateId,
}

impl ProtocolDefinition {
    pub fn new(states: Vec<StateDef>, start: StateId) -> Result<Self, ProtocolError> {
        if states.is_empty() || states.len() > 256 {
            return Err(ProtocolError::BadStateCount);
        }
        if start.index() >= states.len() {
            return Err(ProtocolError::BadStart(start.0));
        }
        for (i, def) in states.iter().enumerate() {
            if states[..i].iter().any(|other| other.name == def.name) {
                return Err(ProtocolError::DuplicateName(def.name.clone()));
            }
            if !def.beeping && def.on_quiet.is_none() {
                return Err(ProtocolError::MissingQuietTransition(def.name.clone()));
            }
            let targets = def
                .on_heard
                .outcomes()
                .iter()
                .chain(def.on_quiet.iter().flat_map(|d| d.outcomes()));
            for &(target, _) in targets {
                if target.index() >= states.len() {
                    return Err(ProtocolError::UnknownTarget(target.0));
                }
            }
        }
        Ok(ProtocolDefinition { states, start })
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[StateDef] {
        &self.states
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn is_beeping(&self, s: StateId) -> bool {
        self.states[s.index()].beeping
    }

    pub fn is_leader(&self, s: StateId) -> bool {
        self.states[s.index()].leader
    }

    pub fn name(&self, s: StateId) -> &str {
        &self.states[s.index()].name
    }

    pub fn state_by_name(&self, name: &str) -> Option<StateId> {
        self.states
            .iter()
            .position(|d| d.name == name)
            .map(|i| StateId(i as u8))
    }

    /// The distribution applied to a node in state `s`; beeping states
    /// always use the heard transition.
    pub fn transition(&self, s: StateId, heard: bool) -> &Distribution {
        let def = &self.states[s.index()];
        if def.beeping || heard {
            &def.on_heard
        } else {
            def.on_quiet.as_ref().expect("validated at construction")
        }
    }
}

/// Per-node states at a given round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    pub round: u64,
    pub states: Vec<StateId>,
}

impl Configuration {
    pub fn uniform(n: usize, state: StateId) -> Self {
        Configuration {
            round: 0,
            states: vec![state; n],
        }
    }

    pub fn leader_count(&self, proto: &ProtocolDefinition) -> usize {
        self.states.iter().filter(|&&s| proto.is_leader(s)).count()
    }
}

fn hearing(g: &Graph, proto: &ProtocolDefinition, cfg: &Configuration, heard: &mut Vec<bool>) {
    heard.clear();
    heard.resize(cfg.states.len(), false);
    for (u, &s) in cfg.states.iter().enumerate() {
        if proto.is_beeping(s) {
            for &v in g.neighbors(u) {
                heard[v] = true;
            }
        }
    }
}

/// Advances `cfg` by one synchronous round.
pub fn step<R: Rng + ?Sized>(g: &Graph, proto: &ProtocolDefinition, cfg: &Configuration, rng: &mut R) -> Configuration {
    let mut scratch = StepScratch::default();
    let mut next = cfg.clone();
    scratch.advance(g, proto, cfg, &mut next, rng);
    next
}

/// Same as [`step`], but applies the per-node updates in the given order.
/// The result is identical for every permutation.
pub fn step_in_order<R: Rng + ?Sized>(
    g: &Graph,
    proto: &ProtocolDefinition,
    cfg: &Configuration,
    rng: &mut R,
    order: &[usize],
) -> Configuration {
    let mut heard = Vec::new();
    hearing(g, proto, cfg, &mut heard);
    let draws: Vec<Option<f64>> = cfg
        .states
        .iter()
        .zip(&heard)
        .map(|(&s, &h)| (!proto.transition(s, h).is_deterministic()).then(|| rng.gen::<f64>()))
        .collect();
    let mut states = cfg.states.clone();
    for &u in order {
        let dist = proto.transition(cfg.states[u], heard[u]);
        states[u] = dist.sample(draws[u].unwrap_or(0.0));
    }
    Configuration {
        round: cfg.round + 1,
        states,
    }
}

#[derive(Default)]
struct StepScratch {
    heard: Vec<bool>,
}

impl StepScratch {
    fn advance<R: Rng + ?Sized>(
        &mut self,
        g: &Graph,
        proto: &ProtocolDefinition,
        cur: &Configuration,
        next: &mut Configuration,
        rng: &mut R,
    ) {
        hearing(g, proto, cur, &mut self.heard);
        next.states.clear();
        // Ascending node order doubles as the draw order.
        next.states.extend(cur.states.iter().zip(&self.heard).map(|(&s, &h)| {
            let dist = proto.transition(s, h);
            if dist.is_deterministic() {
                dist.outcomes()[0].0
            } else {
                dist.sample(rng.gen::<f64>())
            }
        }));
        next.round = cur.round + 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCondition {
    /// Stop at the first round with exactly one leader.
    SingleLeader,
    /// Always run `max_rounds` rounds.
    FixedRounds,
}

/// What a run keeps besides the always-dense leader counts and final beep
/// counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceOptions {
    /// Keep a full snapshot (states and beep counts) every `k` rounds, plus
    /// the final round. `None` keeps no snapshots at all.
    pub snapshot_every: Option<u64>,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            snapshot_every: Some(1),
        }
    }
}

impl TraceOptions {
    pub fn dense() -> Self {
        Self::default()
    }

    pub fn summary_only() -> Self {
        TraceOptions { snapshot_every: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub seed: u64,
    pub max_rounds: u64,
    pub stop: StopCondition,
    pub record: TraceOptions,
}

/// States and cumulative beep counts at one recorded round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub config: Configuration,
    /// Number of rounds `s <= t` in which each node beeped.
    pub beeps: Vec<u32>,
}

impl Snapshot {
    pub fn round(&self) -> u64 {
        self.config.round
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunTrace {
    pub seed: u64,
    pub snapshots: Vec<Snapshot>,
    /// Cumulative beep counts at the final round.
    pub beep_count: Vec<u32>,
    /// Leader count at every round `0..=final_round`.
    pub leader_count_history: Vec<u32>,
    pub convergence_round: Option<u64>,
    pub final_config: Configuration,
}

impl RunTrace {
    pub fn final_round(&self) -> u64 {
        self.final_config.round
    }

    pub fn node_count(&self) -> usize {
        self.final_config.states.len()
    }

    /// The unique leader of the final configuration, if there is exactly one.
    pub fn sole_leader(&self, proto: &ProtocolDefinition) -> Option<usize> {
        let mut leaders = self
            .final_config
            .states
            .iter()
            .enumerate()
            .filter(|&(_, &s)| proto.is_leader(s))
            .map(|(u, _)| u);
        match (leaders.next(), leaders.next()) {
            (Some(u), None) => Some(u),
            _ => None,
        }
    }

    /// True when snapshots cover every round `0..=final_round` in order.
    pub fn is_dense(&self) -> bool {
        self.snapshots.len() as u64 == self.final_round() + 1
            && self
                .snapshots
                .iter()
                .enumerate()
                .all(|(i, s)| s.round() == i as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunOutcome {
    /// Stop condition `SingleLeader` reached.
    Converged(RunTrace),
    /// `FixedRounds` run finished its budget.
    Completed(RunTrace),
    /// `SingleLeader` not reached within `max_rounds`.
    CapReached(RunTrace),
}

impl RunOutcome {
    pub fn trace(&self) -> &RunTrace {
        match self {
            RunOutcome::Converged(t) | RunOutcome::Completed(t) | RunOutcome::CapReached(t) => t,
        }
    }

    pub fn into_trace(self) -> RunTrace {
        match self {
            RunOutcome::Converged(t) | RunOutcome::Completed(t) | RunOutcome::CapReached(t) => t,
        }
    }

    pub fn is_converged(&self) -> bool {
        matches!(self, RunOutcome::Converged(_))
    }
}

/// Runs from the all-start configuration.
pub fn run(g: &Graph, proto: &ProtocolDefinition, opts: &RunOptions) -> RunOutcome {
    run_from(g, proto, Configuration::uniform(g.node_count(), proto.start()), opts)
}

/// Runs from an arbitrary initial configuration (its round is reset to 0).
pub fn run_from(g: &Graph, proto: &ProtocolDefinition, initial: Configuration, opts: &RunOptions) -> RunOutcome {
    assert_eq!(initial.states.len(), g.node_count(), "configuration size must match the graph");
    let n = g.node_count();
    let mut rng = rng_from_seed(opts.seed);
    let mut scratch = StepScratch::default();

    let mut cur = Configuration {
        round: 0,
        states: initial.states,
    };
    let mut next = cur.clone();
    let mut beeps = vec![0u32; n];
    let mut snapshots = Vec::new();
    let mut leader_history = Vec::new();
    let mut convergence_round = None;

    let wants_snapshot = |t: u64| matches!(opts.record.snapshot_every, Some(k) if k > 0 && t.is_multiple_of(k));

    loop {
        let t = cur.round;
        for (count, &s) in beeps.iter_mut().zip(&cur.states) {
            if proto.is_beeping(s) {
                *count += 1;
            }
        }
        let leaders = cur.leader_count(proto) as u32;
        leader_history.push(leaders);
        if leaders == 1 && convergence_round.is_none() {
            convergence_round = Some(t);
        }
        let done = match opts.stop {
            StopCondition::SingleLeader => leaders == 1 || t >= opts.max_rounds,
            StopCondition::FixedRounds => t >= opts.max_rounds,
        };
        if wants_snapshot(t) || (done && opts.record.snapshot_every.is_some()) {
            snapshots.push(Snapshot {
                config: cur.clone(),
                beeps: beeps.clone(),
            });
        }
        if done {
            break;
        }
        scratch.advance(g, proto, &cur, &mut next, &mut rng);
        std::mem::swap(&mut cur, &mut next);
    }

    let trace = RunTrace {
        seed: opts.seed,
        snapshots,
        beep_count: beeps,
        leader_count_history: leader_history,
        convergence_round,
        final_config: cur,
    };
    match opts.stop {
        StopCondition::FixedRounds => RunOutcome::Completed(trace),
        StopCondition::SingleLeader if trace.convergence_round.is_some() => RunOutcome::Converged(trace),
        StopCondition::SingleLeader => RunOutcome::CapReached(trace),
    }
}
