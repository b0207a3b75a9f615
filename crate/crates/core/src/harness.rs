//! Monte-Carlo experiment driver: convergence-time sweeps over graph
//! families, log-log scaling fits, and the two-leader probe on paths.
//!
//! Every trial seed is derived from the master seed and the trial's global
//! index, and results are collected by index, so a sweep's output does not
//! depend on the number of worker threads.

use std::io::{self, Write};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bfw::{bfw_protocol, BfwError, BfwParams, NodeState};
use crate::engine::{derive_seed, run, run_from, Configuration, RunOptions, RunTrace, StopCondition, TraceOptions};
use crate::flowcheck::{audit_all, AuditPlan, FlowError};
use crate::graph::{distances, generate, GraphError, GraphSpec};

pub const SWEEP_SCHEMA: u32 = 1;
pub const DEFAULT_CAP_MULTIPLIER: u64 = 50;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Params(#[from] BfwError),
    #[error(transparent)]
    Audit(#[from] FlowError),
    #[error("invalid sweep: {0}")]
    BadSpec(String),
    #[error("log-log fit: {0}")]
    Fit(String),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Graph family of a sweep. Sizes are node counts, except for `grid`
/// where a size `s` means an `s x s` grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Path,
    Cycle,
    Clique,
    Grid,
    Tree,
    Gnp { p: f64 },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Path => "path",
            Family::Cycle => "cycle",
            Family::Clique => "clique",
            Family::Grid => "grid",
            Family::Tree => "tree",
            Family::Gnp { .. } => "gnp",
        }
    }

    /// Generator descriptor for one trial; random families use `seed`.
    pub fn graph_spec(&self, size: usize, seed: u64) -> GraphSpec {
        match *self {
            Family::Path => GraphSpec::Path(size),
            Family::Cycle => GraphSpec::Cycle(size),
            Family::Clique => GraphSpec::Clique(size),
            Family::Grid => GraphSpec::Grid { width: size, height: size },
            Family::Tree => GraphSpec::Tree { n: size, seed },
            Family::Gnp { p } => GraphSpec::Gnp { n: size, p, seed },
        }
    }

    fn is_random(&self) -> bool {
        matches!(self, Family::Tree | Family::Gnp { .. })
    }
}

impl FromStr for Family {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "path" => Ok(Family::Path),
            "cycle" => Ok(Family::Cycle),
            "clique" => Ok(Family::Clique),
            "grid" => Ok(Family::Grid),
            "tree" => Ok(Family::Tree),
            _ => match s.strip_prefix("gnp:") {
                Some(p) => {
                    let p: f64 = p.parse().map_err(|_| HarnessError::BadSpec(format!("bad gnp edge probability in `{s}`")))?;
                    if !(p > 0.0 && p <= 1.0) {
                        return Err(HarnessError::BadSpec(format!("gnp edge probability {p} outside (0, 1]")));
                    }
                    Ok(Family::Gnp { p })
                }
                None => Err(HarnessError::BadSpec(format!(
                    "unknown family `{s}` (path, cycle, clique, grid, tree, gnp:<p>)"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PChoice {
    Uniform(f64),
    /// `p = 1/(D+1)` from each graph's exact diameter.
    DiameterTuned,
}

impl PChoice {
    fn params(&self, diameter: u32) -> Result<BfwParams, BfwError> {
        match *self {
            PChoice::Uniform(p) => BfwParams::uniform(p),
            PChoice::DiameterTuned => BfwParams::diameter_tuned(diameter),
        }
    }

    fn mode_name(&self) -> &'static str {
        match self {
            PChoice::Uniform(_) => "uniform",
            PChoice::DiameterTuned => "diam",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditMode {
    Off,
    /// Audit every `k`-th trial.
    Sampled(usize),
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub family: Family,
    pub sizes: Vec<usize>,
    pub p: PChoice,
    pub trials: usize,
    pub master_seed: u64,
    pub cap_multiplier: u64,
    pub audit: AuditMode,
}

impl SweepSpec {
    pub fn new(family: Family, sizes: Vec<usize>, p: PChoice, trials: usize, master_seed: u64) -> Self {
        SweepSpec {
            family,
            sizes,
            p,
            trials,
            master_seed,
            cap_multiplier: DEFAULT_CAP_MULTIPLIER,
            audit: AuditMode::Off,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.sizes.is_empty() {
            return Err(HarnessError::BadSpec("no sizes".into()));
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::BadSpec("sizes must be strictly ascending".into()));
        }
        if self.trials == 0 {
            return Err(HarnessError::BadSpec("trials must be at least 1".into()));
        }
        if self.cap_multiplier == 0 {
            return Err(HarnessError::BadSpec("cap multiplier must be at least 1".into()));
        }
        if let AuditMode::Sampled(0) = self.audit {
            return Err(HarnessError::BadSpec("audit sampling interval must be at least 1".into()));
        }
        if let PChoice::Uniform(p) = self.p {
            BfwParams::uniform(p)?;
        }
        Ok(())
    }
}

/// `ceil(log2 n)`, with `ceil(log2 1) = 0`.
pub fn ceil_log2(n: usize) -> u64 {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as u64
    }
}

/// Round cap: `mult * D^2 * ceil(log2 n)` for constant `p`, and
/// `mult * D * ceil(log2 n)` for the diameter-tuned probability.
pub fn round_cap(multiplier: u64, diameter: u32, n: usize, tuned: bool) -> u64 {
    let d = diameter as u64;
    let scale = if tuned { d } else { d * d };
    (multiplier * scale * ceil_log2(n)).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub family: String,
    pub n: usize,
    #[serde(rename = "D")]
    pub diameter: u32,
    pub p_mode: String,
    pub p: f64,
    pub trial: usize,
    pub seed: u64,
    pub converged: bool,
    pub convergence_round: Option<u64>,
    pub rounds_executed: u64,
    /// Flow-audit violations, when this trial was audited.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit_violations: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSummary {
    pub size: usize,
    pub n: usize,
    #[serde(rename = "D")]
    pub diameter: u32,
    pub p: f64,
    pub cap: u64,
    pub trials: usize,
    pub non_converged: usize,
    /// Quantiles over converged trials; `None` if no trial converged.
    pub median: Option<f64>,
    pub mean: Option<f64>,
    pub p95: Option<f64>,
    pub audited: usize,
    pub audit_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
    pub slope_stderr: f64,
    /// 95% confidence interval on the slope (Student t).
    pub slope_ci95: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub schema: u32,
    pub spec: SweepSpec,
    #[serde(skip)]
    pub trials: Vec<TrialRecord>,
    pub points: Vec<PointSummary>,
    /// Median convergence round against `n`, when at least three points have
    /// converged trials.
    pub fit: Option<LogLogFit>,
    pub non_converged: usize,
}

/// Median (mean of the middle pair for even counts), mean, and nearest-rank
/// 95th percentile.
pub fn quantiles(values: &[u64]) -> Option<(f64, f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let len = v.len();
    let median = if len % 2 == 1 {
        v[len / 2] as f64
    } else {
        (v[len / 2 - 1] as f64 + v[len / 2] as f64) / 2.0
    };
    let mean = v.iter().map(|&x| x as f64).sum::<f64>() / len as f64;
    let rank = ((0.95 * len as f64).ceil() as usize).clamp(1, len);
    Some((median, mean, v[rank - 1] as f64))
}

struct TrialJob {
    point: usize,
    trial: usize,
    seed: u64,
}

pub fn sweep(spec: &SweepSpec) -> Result<SweepResult, HarnessError> {
    spec.validate()?;
    let jobs: Vec<TrialJob> = spec
        .sizes
        .iter()
        .enumerate()
        .flat_map(|(point, _)| {
            (0..spec.trials).map(move |trial| TrialJob {
                point,
                trial,
                seed: derive_seed(spec.master_seed, (point * spec.trials + trial) as u64),
            })
        })
        .collect();

    // Deterministic families share one graph per size.
    let shared: Vec<Option<_>> = spec
        .sizes
        .iter()
        .map(|&size| -> Result<_, HarnessError> {
            if spec.family.is_random() {
                return Ok(None);
            }
            let g = generate(&spec.family.graph_spec(size, 0))?;
            let d = distances(&g);
            Ok(Some((g, d)))
        })
        .collect::<Result<_, _>>()?;

    let records: Vec<TrialRecord> = jobs
        .par_iter()
        .map(|job| run_trial(spec, job, shared[job.point].as_ref()))
        .collect::<Result<_, _>>()?;

    let mut points = Vec::with_capacity(spec.sizes.len());
    for (i, &size) in spec.sizes.iter().enumerate() {
        let rows = &records[i * spec.trials..(i + 1) * spec.trials];
        let rounds: Vec<u64> = rows.iter().filter_map(|r| r.convergence_round).collect();
        let q = quantiles(&rounds);
        let first = &rows[0];
        points.push(PointSummary {
            size,
            n: first.n,
            diameter: first.diameter,
            p: first.p,
            cap: round_cap(spec.cap_multiplier, first.diameter, first.n, matches!(spec.p, PChoice::DiameterTuned)),
            trials: rows.len(),
            non_converged: rows.iter().filter(|r| !r.converged).count(),
            median: q.map(|q| q.0),
            mean: q.map(|q| q.1),
            p95: q.map(|q| q.2),
            audited: rows.iter().filter(|r| r.audit_violations.is_some()).count(),
            audit_violations: rows.iter().filter_map(|r| r.audit_violations).sum(),
        });
    }
    let fit_points: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|p| p.median.map(|m| (p.n as f64, m)))
        .collect();
    let fit = if fit_points.len() >= 3 {
        fit_loglog(&fit_points).ok()
    } else {
        None
    };
    let non_converged = points.iter().map(|p| p.non_converged).sum();
    Ok(SweepResult {
        schema: SWEEP_SCHEMA,
        spec: spec.clone(),
        trials: records,
        points,
        fit,
        non_converged,
    })
}

fn run_trial(
    spec: &SweepSpec,
    job: &TrialJob,
    shared: Option<&(crate::graph::Graph, crate::graph::DistanceTable)>,
) -> Result<TrialRecord, HarnessError> {
    let size = spec.sizes[job.point];
    let owned;
    let (g, dist) = match shared {
        Some((g, d)) => (g, d),
        None => {
            let g = generate(&spec.family.graph_spec(size, job.seed))?;
            let d = distances(&g);
            owned = (g, d);
            (&owned.0, &owned.1)
        }
    };
    let diameter = dist.diameter();
    let tuned = matches!(spec.p, PChoice::DiameterTuned);
    let params = spec.p.params(diameter)?;
    let cap = round_cap(spec.cap_multiplier, diameter, g.node_count(), tuned);
    let audited = match spec.audit {
        AuditMode::Off => false,
        AuditMode::Sampled(k) => job.trial.is_multiple_of(k),
        AuditMode::All => true,
    };
    let opts = RunOptions {
        seed: job.seed,
        max_rounds: cap,
        stop: StopCondition::SingleLeader,
        record: if audited { TraceOptions::dense() } else { TraceOptions::summary_only() },
    };
    let outcome = run(g, &bfw_protocol(&params), &opts);
    let converged = outcome.is_converged();
    let trace = outcome.into_trace();
    let audit_violations = if audited {
        let plan = AuditPlan {
            seed: job.seed,
            ..AuditPlan::default()
        };
        Some(audit_all(&trace, g, dist, &plan)?.violations())
    } else {
        None
    };
    Ok(TrialRecord {
        family: spec.family.name().to_string(),
        n: g.node_count(),
        diameter,
        p_mode: spec.p.mode_name().to_string(),
        p: params.p(),
        trial: job.trial,
        seed: job.seed,
        converged,
        convergence_round: if converged { trace.convergence_round } else { None },
        rounds_executed: trace.final_round(),
        audit_violations,
    })
}

/// Runs `f` on a pool of `threads` workers (all available cores if `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder.build().map_err(|e| HarnessError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

pub const CSV_HEADER: &str = "family,n,D,p_mode,p,trial,seed,converged,convergence_round,rounds_executed";

/// Writes the per-trial CSV. The first line is a `#` comment carrying the
/// schema version and a generation timestamp; everything after it is a
/// pure function of the sweep spec.
pub fn write_csv<W: Write>(mut w: W, result: &SweepResult) -> io::Result<()> {
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    writeln!(w, "# beepsim sweep schema={} generated_unix={stamp}", result.schema)?;
    writeln!(w, "{CSV_HEADER}")?;
    for r in &result.trials {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.family,
            r.n,
            r.diameter,
            r.p_mode,
            r.p,
            r.trial,
            r.seed,
            r.converged,
            r.convergence_round.map(|c| c.to_string()).unwrap_or_default(),
            r.rounds_executed
        )?;
    }
    w.flush()
}

/// Ordinary least squares of `ln y` on `ln x`.
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<LogLogFit, HarnessError> {
    if points.len() < 3 {
        return Err(HarnessError::Fit(format!("need at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(HarnessError::Fit("all coordinates must be positive".into()));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let m = points.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-12 {
        return Err(HarnessError::Fit("x values are degenerate".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = lx.iter().zip(&ly).map(|(x, y)| y - (intercept + slope * x)).collect();
    let dof = points.len() - 2;
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    let slope_stderr = if dof > 0 { (sse / dof as f64 / sxx).sqrt() } else { 0.0 };
    let half = student_t975(dof) * slope_stderr;
    Ok(LogLogFit {
        slope,
        intercept,
        residuals,
        slope_stderr,
        slope_ci95: [slope - half, slope + half],
    })
}

/// Two-sided 95% Student t critical values.
fn student_t975(dof: usize) -> f64 {
    const TABLE: [f64; 10] = [12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228];
    match dof {
        0 => f64::INFINITY,
        1..=10 => TABLE[dof - 1],
        11..=20 => 2.086,
        21..=30 => 2.042,
        _ => 1.96,
    }
}

/// Path of length `d` (so `d + 1` nodes) with waiting leaders at both ends
/// and waiting non-leaders in between.
pub fn two_leader_start(d: usize) -> Configuration {
    let mut states = vec![NodeState::FollowerWaiting.id(); d + 1];
    states[0] = NodeState::LeaderWaiting.id();
    states[d] = NodeState::LeaderWaiting.id();
    Configuration { round: 0, states }
}

/// One two-leader run, recorded according to `record`.
pub fn two_leader_trace(d: usize, p: f64, seed: u64, max_rounds: u64, record: TraceOptions) -> Result<(RunTrace, bool), HarnessError> {
    if d == 0 {
        return Err(HarnessError::BadSpec("path length must be at least 1".into()));
    }
    let g = generate(&GraphSpec::Path(d + 1))?;
    let proto = bfw_protocol(&BfwParams::uniform(p)?);
    let opts = RunOptions {
        seed,
        max_rounds,
        stop: StopCondition::SingleLeader,
        record,
    };
    let outcome = run_from(&g, &proto, two_leader_start(d), &opts);
    let converged = outcome.is_converged();
    Ok((outcome.into_trace(), converged))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbePoint {
    #[serde(rename = "D")]
    pub d: usize,
    pub trials: usize,
    pub cap: u64,
    pub non_converged: usize,
    pub median: Option<f64>,
    pub mean: Option<f64>,
    pub p95: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeResult {
    pub schema: u32,
    pub p: f64,
    pub points: Vec<ProbePoint>,
    /// Median elimination time against `D`; reported, never asserted.
    pub fit: Option<LogLogFit>,
}

/// Rounds until one of two endpoint leaders on a path of length `D` is
/// eliminated, for each `D` in `d_list`.
pub fn two_leader_probe(d_list: &[usize], trials: usize, seed: u64, p: f64, cap_multiplier: u64) -> Result<ProbeResult, HarnessError> {
    if trials == 0 || d_list.is_empty() {
        return Err(HarnessError::BadSpec("need at least one D and one trial".into()));
    }
    BfwParams::uniform(p)?;
    let mut points = Vec::new();
    for (i, &d) in d_list.iter().enumerate() {
        let cap = round_cap(cap_multiplier, d as u32, d + 1, false);
        let outcomes: Vec<Option<u64>> = (0..trials)
            .into_par_iter()
            .map(|trial| {
                let s = derive_seed(seed, (i * trials + trial) as u64);
                two_leader_trace(d, p, s, cap, TraceOptions::summary_only())
                    .map(|(trace, ok)| if ok { trace.convergence_round } else { None })
            })
            .collect::<Result<_, _>>()?;
        let rounds: Vec<u64> = outcomes.iter().flatten().copied().collect();
        let q = quantiles(&rounds);
        points.push(ProbePoint {
            d,
            trials,
            cap,
            non_converged: trials - rounds.len(),
            median: q.map(|q| q.0),
            mean: q.map(|q| q.1),
            p95: q.map(|q| q.2),
        });
    }
    let fit_points: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|pt| pt.median.filter(|&m| m > 0.0).map(|m| (pt.d as f64, m)))
        .collect();
    let fit = if fit_points.len() >= 3 { fit_loglog(&fit_points).ok() } else { None };
    Ok(ProbeResult {
        schema: SWEEP_SCHEMA,
        p,
        points,
        fit,
    })
}
