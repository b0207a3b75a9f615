//! The six-state Beeping/Frozen/Waiting leader-election protocol.
//!
//! Every node starts as a waiting leader. A waiting leader that hears
//! nothing beeps next round with probability `p`. Any node that beeps is
//! frozen for the following round and ignores its surroundings, then
//! returns to waiting. A waiting leader that hears a beep is eliminated and
//! relays the beep as a non-leader; waiting non-leaders simply relay.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Distribution, ProtocolDefinition, StateDef, StateId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum NodeState {
    LeaderWaiting = 0,
    LeaderBeeping = 1,
    LeaderFrozen = 2,
    FollowerWaiting = 3,
    FollowerBeeping = 4,
    FollowerFrozen = 5,
}

/// Leader/non-leader halves collapsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Waiting,
    Beeping,
    Frozen,
}

impl NodeState {
    pub const ALL: [NodeState; 6] = [
        NodeState::LeaderWaiting,
        NodeState::LeaderBeeping,
        NodeState::LeaderFrozen,
        NodeState::FollowerWaiting,
        NodeState::FollowerBeeping,
        NodeState::FollowerFrozen,
    ];

    pub fn id(self) -> StateId {
        StateId(self as u8)
    }

    pub fn from_id(id: StateId) -> Option<Self> {
        Self::ALL.get(id.index()).copied()
    }

    pub fn token(self) -> &'static str {
        match self {
            NodeState::LeaderWaiting => "LW",
            NodeState::LeaderBeeping => "LB",
            NodeState::LeaderFrozen => "LF",
            NodeState::FollowerWaiting => "NW",
            NodeState::FollowerBeeping => "NB",
            NodeState::FollowerFrozen => "NF",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.token() == token)
    }

    pub fn is_leader(self) -> bool {
        matches!(
            self,
            NodeState::LeaderWaiting | NodeState::LeaderBeeping | NodeState::LeaderFrozen
        )
    }

    pub fn phase(self) -> Phase {
        match self {
            NodeState::LeaderWaiting | NodeState::FollowerWaiting => Phase::Waiting,
            NodeState::LeaderBeeping | NodeState::FollowerBeeping => Phase::Beeping,
            NodeState::LeaderFrozen | NodeState::FollowerFrozen => Phase::Frozen,
        }
    }

    pub fn is_beeping(self) -> bool {
        self.phase() == Phase::Beeping
    }
}

impl fmt::Display for NodeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

pub fn is_leader(s: NodeState) -> bool {
    s.is_leader()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BfwError {
    #[error("beep probability {0} must lie in (0, 1]")]
    InvalidP(f64),
    #[error("diameter-tuned mode needs a positive diameter, got {0}")]
    InvalidDiameter(u32),
    #[error("cannot parse `{0}` as a probability or `diam`")]
    BadPArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PMode {
    Uniform { p: f64 },
    DiameterTuned { diameter: u32 },
}

/// Beep probability of waiting leaders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BfwParams {
    mode: PMode,
}

impl Default for BfwParams {
    fn default() -> Self {
        BfwParams {
            mode: PMode::Uniform { p: 0.5 },
        }
    }
}

impl BfwParams {
    /// `p = 1` is accepted as the deterministic degenerate case; it cannot
    /// break symmetry and is only useful for testing.
    pub fn uniform(p: f64) -> Result<Self, BfwError> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(BfwError::InvalidP(p));
        }
        Ok(BfwParams {
            mode: PMode::Uniform { p },
        })
    }

    /// `p = 1/(D+1)` for a known diameter `D`.
    pub fn diameter_tuned(diameter: u32) -> Result<Self, BfwError> {
        if diameter == 0 {
            return Err(BfwError::InvalidDiameter(diameter));
        }
        Ok(BfwParams {
            mode: PMode::DiameterTuned { diameter },
        })
    }

    pub fn p(&self) -> f64 {
        match self.mode {
            PMode::Uniform { p } => p,
            PMode::DiameterTuned { diameter } => 1.0 / (diameter as f64 + 1.0),
        }
    }

    pub fn mode(&self) -> PMode {
        self.mode
    }

    pub fn is_diameter_tuned(&self) -> bool {
        matches!(self.mode, PMode::DiameterTuned { .. })
    }

    pub fn mode_name(&self) -> &'static str {
        match self.mode {
            PMode::Uniform { .. } => "uniform",
            PMode::DiameterTuned { .. } => "diam",
        }
    }
}

/// CLI form of the beep probability: a number, or `diam` for `1/(D+1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PArg {
    Fixed(f64),
    Diameter,
}

impl PArg {
    pub fn resolve(self, diameter: u32) -> Result<BfwParams, BfwError> {
        match self {
            PArg::Fixed(p) => BfwParams::uniform(p),
            PArg::Diameter => BfwParams::diameter_tuned(diameter),
        }
    }
}

impl FromStr for PArg {
    type Err = BfwError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("diam") {
            return Ok(PArg::Diameter);
        }
        let p: f64 = s.parse().map_err(|_| BfwError::BadPArgument(s.to_string()))?;
        BfwParams::uniform(p)?;
        Ok(PArg::Fixed(p))
    }
}

pub fn bfw_protocol(params: &BfwParams) -> ProtocolDefinition {
    use NodeState::*;
    let p = params.p();
    let go = |s: NodeState| Distribution::certain(s.id());
    let coin = Distribution::new(vec![(LeaderBeeping.id(), p), (LeaderWaiting.id(), 1.0 - p)])
        .expect("p validated by BfwParams");
    let def = |s: NodeState, on_quiet: Option<Distribution>, on_heard: Distribution| StateDef {
        name: s.token().to_string(),
        beeping: s.is_beeping(),
        leader: s.is_leader(),
        on_quiet,
        on_heard,
    };
    let states = vec![
        def(LeaderWaiting, Some(coin), go(FollowerBeeping)),
        def(LeaderBeeping, None, go(LeaderFrozen)),
        def(LeaderFrozen, Some(go(LeaderWaiting)), go(LeaderWaiting)),
        def(FollowerWaiting, Some(go(FollowerWaiting)), go(FollowerBeeping)),
        def(FollowerBeeping, None, go(FollowerFrozen)),
        def(FollowerFrozen, Some(go(FollowerWaiting)), go(FollowerWaiting)),
    ];
    ProtocolDefinition::new(states, LeaderWaiting.id()).expect("BFW definition is well formed")
}
