#![allow(dead_code)]

use beepsim::engine::{run, RunOptions, RunTrace, StopCondition, TraceOptions};
use beepsim::{bfw_protocol, generate, BfwParams, Graph, GraphSpec};

pub fn graph(spec: &str) -> Graph {
    generate(&spec.parse::<GraphSpec>().unwrap()).unwrap()
}

/// Dense fixed-length BFW trace.
pub fn dense_trace(g: &Graph, p: f64, seed: u64, rounds: u64) -> RunTrace {
    let opts = RunOptions {
        seed,
        max_rounds: rounds,
        stop: StopCondition::FixedRounds,
        record: TraceOptions::dense(),
    };
    run(g, &bfw_protocol(&BfwParams::uniform(p).unwrap()), &opts).into_trace()
}
