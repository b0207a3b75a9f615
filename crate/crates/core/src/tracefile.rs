//! JSON-lines trace files.
//!
//! Line 1 is a header record; every following line is one recorded round:
//! `{"t": 5, "states": ["LW", "NB", ...], "beeps": [2, 1, ...], "leaders": 3}`.
//! The header carries the edge list so a trace can be audited without the
//! original graph file.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bfw::{BfwParams, NodeState, PMode};
use crate::engine::{Configuration, RunTrace, Snapshot, StateId};
use crate::graph::{Graph, GraphError};

pub const TRACE_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum TraceFileError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("trace file has no header")]
    MissingHeader,
    #[error("unsupported trace schema {0}")]
    Schema(u32),
    #[error("line {line}: unknown state token `{token}`")]
    UnknownToken { line: usize, token: String },
    #[error("line {line}: record has {got} nodes, header says {want}")]
    WrongWidth { line: usize, got: usize, want: usize },
    #[error("trace file has no round records")]
    NoRecords,
    #[error("embedded graph is invalid: {0}")]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolInfo {
    pub name: String,
    pub p: f64,
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diameter: Option<u32>,
}

impl From<&BfwParams> for ProtocolInfo {
    fn from(params: &BfwParams) -> Self {
        ProtocolInfo {
            name: "bfw".into(),
            p: params.p(),
            mode: params.mode_name().into(),
            diameter: match params.mode() {
                PMode::DiameterTuned { diameter } => Some(diameter),
                PMode::Uniform { .. } => None,
            },
        }
    }
}

impl ProtocolInfo {
    pub fn params(&self) -> Result<BfwParams, crate::bfw::BfwError> {
        match self.diameter {
            Some(d) if self.mode == "diam" => BfwParams::diameter_tuned(d),
            _ => BfwParams::uniform(self.p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: u32,
    /// Generator descriptor, when the graph came from one.
    pub graph: Option<String>,
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    pub protocol: ProtocolInfo,
    pub seed: u64,
    pub max_rounds: u64,
    pub final_round: u64,
    pub convergence_round: Option<u64>,
    pub snapshot_every: Option<u64>,
}

impl TraceHeader {
    pub fn new(
        graph: &Graph,
        descriptor: Option<String>,
        params: &BfwParams,
        trace: &RunTrace,
        max_rounds: u64,
        snapshot_every: Option<u64>,
    ) -> Self {
        TraceHeader {
            schema: TRACE_SCHEMA,
            graph: descriptor,
            n: graph.node_count(),
            edges: graph.edges().iter().map(|&(u, v)| [u, v]).collect(),
            protocol: params.into(),
            seed: trace.seed,
            max_rounds,
            final_round: trace.final_round(),
            convergence_round: trace.convergence_round,
            snapshot_every,
        }
    }

    pub fn graph(&self) -> Result<Graph, GraphError> {
        Graph::from_edges(self.n, self.edges.iter().map(|e| (e[0], e[1])))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: u64,
    pub states: Vec<String>,
    pub beeps: Vec<u32>,
    pub leaders: u32,
}

fn token(s: StateId) -> String {
    NodeState::from_id(s).map_or_else(|| format!("S{}", s.0), |s| s.token().to_string())
}

/// Writes the header and one record per snapshot.
pub fn write_trace<W: Write>(mut w: W, header: &TraceHeader, trace: &RunTrace) -> Result<(), TraceFileError> {
    serde_json::to_writer(&mut w, header).map_err(|source| TraceFileError::Json { line: 1, source })?;
    writeln!(w)?;
    for (i, snap) in trace.snapshots.iter().enumerate() {
        let t = snap.round();
        let record = RoundRecord {
            t,
            states: snap.config.states.iter().map(|&s| token(s)).collect(),
            beeps: snap.beeps.clone(),
            leaders: trace.leader_count_history[t as usize],
        };
        serde_json::to_writer(&mut w, &record).map_err(|source| TraceFileError::Json { line: i + 2, source })?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace back. Leader counts are only known at recorded rounds, so
/// `leader_count_history` is indexed by record, which matches rounds exactly
/// for dense traces.
pub fn read_trace<R: BufRead>(r: R) -> Result<(TraceHeader, RunTrace), TraceFileError> {
    let mut lines = r.lines().enumerate().filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
    let (_, first) = lines.next().ok_or(TraceFileError::MissingHeader)?;
    let header: TraceHeader =
        serde_json::from_str(&first?).map_err(|source| TraceFileError::Json { line: 1, source })?;
    if header.schema != TRACE_SCHEMA {
        return Err(TraceFileError::Schema(header.schema));
    }
    let mut snapshots = Vec::new();
    let mut leaders = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let record: RoundRecord =
            serde_json::from_str(&line?).map_err(|source| TraceFileError::Json { line: line_no, source })?;
        if record.states.len() != header.n || record.beeps.len() != header.n {
            return Err(TraceFileError::WrongWidth {
                line: line_no,
                got: record.states.len().min(record.beeps.len()),
                want: header.n,
            });
        }
        let states = record
            .states
            .iter()
            .map(|tok| {
                NodeState::from_token(tok).map(NodeState::id).ok_or_else(|| TraceFileError::UnknownToken {
                    line: line_no,
                    token: tok.clone(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        leaders.push(record.leaders);
        snapshots.push(Snapshot {
            config: Configuration {
                round: record.t,
                states,
            },
            beeps: record.beeps,
        });
    }
    let last = snapshots.last().ok_or(TraceFileError::NoRecords)?;
    let trace = RunTrace {
        seed: header.seed,
        beep_count: last.beeps.clone(),
        final_config: last.config.clone(),
        snapshots,
        leader_count_history: leaders,
        convergence_round: header.convergence_round,
    };
    Ok((header, trace))
}
