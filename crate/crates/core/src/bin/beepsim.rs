//! `beepsim` command-line entry point.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 round cap reached
//! without a single leader, 3 audit violation.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use beepsim::bfw::{bfw_protocol, PArg};
use beepsim::engine::{run, RunOptions, StopCondition, TraceOptions};
use beepsim::flowcheck::{audit_all, AuditPlan, FlowReport};
use beepsim::graph::{distances, generate, load_edge_list, DistanceTable, Graph, GraphSpec};
use beepsim::harness::{self, round_cap, AuditMode, Family, PChoice, SweepSpec, DEFAULT_CAP_MULTIPLIER};
use beepsim::markov::{self, ChainStart, ChainSpec, ChainState};
use beepsim::tracefile::{read_trace, write_trace, TraceHeader};

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_CAP: u8 = 2;
const EXIT_AUDIT: u8 = 3;

const SCHEMA: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "beepsim", version, about = "Beeping-model leader election simulator and trace auditor")]
struct Cli {
    /// Master seed; fixes every random choice of the command.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for sweeps and Monte-Carlo runs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Machine-readable output file (JSON, or CSV+JSON prefix for sweeps).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the protocol once on a graph.
    Run(RunArgs),
    /// Convergence-time sweep over a graph family.
    Sweep(SweepArgs),
    /// Audit a stored or freshly simulated trace.
    Verify(VerifyArgs),
    /// The single-node W/B/F chain.
    #[command(subcommand)]
    Markov(MarkovCommand),
    /// Graph utilities.
    #[command(subcommand)]
    Graph(GraphCommand),
    /// Two leaders at the ends of a path: elimination time against length.
    Probe(ProbeArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Generator descriptor (path:16, grid:4x4, ...) or edge-list file.
    #[arg(long)]
    graph: String,
    /// Beep probability, or `diam` for 1/(D+1).
    #[arg(long, default_value = "0.5")]
    p: PArg,
    /// Round cap (default 50·D²·⌈log₂ n⌉, or 50·D·⌈log₂ n⌉ with `--p diam`).
    #[arg(long)]
    max_rounds: Option<u64>,
    /// Audit the trace after the run.
    #[arg(long)]
    audit: bool,
    /// Write a JSON-lines trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Keep a snapshot every k rounds in the trace file.
    #[arg(long, default_value_t = 1)]
    snapshot_every: u64,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// path, cycle, clique, grid (size = side), tree, or gnp:<edge p>.
    #[arg(long)]
    family: String,
    /// Comma-separated ascending sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    #[arg(long, default_value = "0.5")]
    p: PArg,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = DEFAULT_CAP_MULTIPLIER)]
    cap_multiplier: u64,
    /// Audit every trial.
    #[arg(long, conflicts_with = "audit_every")]
    audit: bool,
    /// Audit every k-th trial.
    #[arg(long)]
    audit_every: Option<usize>,
}

#[derive(Args, Debug)]
struct AuditSelection {
    #[arg(long)]
    all: bool,
    #[arg(long)]
    conservation: bool,
    #[arg(long)]
    ohm: bool,
    #[arg(long)]
    lipschitz: bool,
    #[arg(long)]
    traveling: bool,
    #[arg(long)]
    elimination: bool,
    /// Transition facts and beep-counter bookkeeping.
    #[arg(long)]
    basic: bool,
    /// Random walks per trace for path audits.
    #[arg(long, default_value_t = 20)]
    walks: usize,
    /// Shortest-path pairs for path audits; 0 means every pair.
    #[arg(long, default_value_t = 32)]
    pairs: usize,
}

impl AuditSelection {
    fn plan(&self, seed: u64) -> AuditPlan {
        let any = self.conservation || self.ohm || self.lipschitz || self.traveling || self.elimination || self.basic;
        let all = self.all || !any;
        AuditPlan {
            bookkeeping: all || self.basic,
            basic_observations: all || self.basic,
            conservation: all || self.conservation,
            ohm: all || self.ohm,
            lipschitz: all || self.lipschitz,
            traveling_beep: all || self.traveling,
            elimination: all || self.elimination,
            walks: self.walks,
            pair_samples: (self.pairs > 0).then_some(self.pairs),
            seed,
        }
    }
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// JSON-lines trace to audit.
    #[arg(long, conflicts_with_all = ["graph", "rounds"])]
    trace: Option<PathBuf>,
    /// Simulate on this graph instead of reading a trace.
    #[arg(long, required_unless_present = "trace")]
    graph: Option<String>,
    #[arg(long, default_value = "0.5")]
    p: PArg,
    /// Rounds to simulate.
    #[arg(long, default_value_t = 500)]
    rounds: u64,
    #[command(flatten)]
    select: AuditSelection,
}

#[derive(Subcommand, Debug)]
enum MarkovCommand {
    Stationary {
        #[arg(long)]
        p: f64,
    },
    Simulate {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        t: u64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Start state: w, b, f, or stationary.
        #[arg(long, default_value = "w")]
        start: String,
    },
    Anticonc {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        t: u64,
        #[arg(long, default_value_t = 20000)]
        trials: usize,
        /// Window radius: an integer or `sqrt` for ⌈√t⌉.
        #[arg(long, default_value = "sqrt")]
        width: String,
        #[arg(long, default_value = "w")]
        start: String,
    },
    Sigma {
        #[arg(long)]
        p: f64,
        /// Beep-count gap to exceed.
        #[arg(long)]
        d: u64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 1_000_000)]
        cap: u64,
    },
    Identity {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        k: u64,
        #[arg(long)]
        p: f64,
    },
    ReturnTime {
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 10000)]
        trials: usize,
    },
}

#[derive(Subcommand, Debug)]
enum GraphCommand {
    /// Node count, edge count and diameter.
    Info {
        #[arg(long)]
        graph: String,
    },
    /// Print (or write with --out) the edge list.
    Export {
        #[arg(long)]
        graph: String,
    },
}

#[derive(Args, Debug)]
struct ProbeArgs {
    /// Comma-separated path lengths.
    #[arg(long, value_delimiter = ',', required = true)]
    d: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = DEFAULT_CAP_MULTIPLIER)]
    cap_multiplier: u64,
}

struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let threads = cli.threads;
    let result = harness::with_threads(threads, move || dispatch(&cli)).unwrap_or_else(|e| Err(Failure(e.to_string())));
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn dispatch(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Run(args) => cmd_run(cli, args),
        Command::Sweep(args) => cmd_sweep(cli, args),
        Command::Verify(args) => cmd_verify(cli, args),
        Command::Markov(cmd) => cmd_markov(cli, cmd),
        Command::Graph(cmd) => cmd_graph(cli, cmd),
        Command::Probe(args) => cmd_probe(cli, args),
    }
}

/// Descriptor first, then edge-list file.
fn load_graph(arg: &str) -> Result<(Graph, Option<String>), Failure> {
    match arg.parse::<GraphSpec>() {
        Ok(spec) => Ok((generate(&spec)?, Some(spec.to_string()))),
        Err(parse_err) => {
            let path = Path::new(arg);
            if path.exists() {
                let text = std::fs::read_to_string(path)?;
                Ok((load_edge_list(&text)?, None))
            } else {
                Err(Failure(format!("{parse_err} (and no file named `{arg}`)")))
            }
        }
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn report_audit(report: &FlowReport) -> u8 {
    match report.first_violation() {
        Some((lemma, v)) => {
            println!(
                "audit: {} violation(s); first: {:?} at round {} (nodes {:?}): {}",
                report.violations(),
                lemma,
                v.round,
                v.nodes,
                v.detail
            );
            EXIT_AUDIT
        }
        None => {
            let checked: u64 = report.lemmas().map(|l| l.checked).sum();
            println!("audit: clean ({checked} checks)");
            EXIT_OK
        }
    }
}

fn cmd_run(cli: &Cli, args: &RunArgs) -> CmdResult {
    let (g, descriptor) = load_graph(&args.graph)?;
    let dist = distances(&g);
    let params = args.p.resolve(dist.diameter())?;
    let max_rounds = args
        .max_rounds
        .unwrap_or_else(|| round_cap(DEFAULT_CAP_MULTIPLIER, dist.diameter(), g.node_count(), params.is_diameter_tuned()));
    let snapshot_every = args.snapshot_every.max(1);
    let record = if args.audit {
        TraceOptions::dense()
    } else if args.trace.is_some() {
        TraceOptions {
            snapshot_every: Some(snapshot_every),
        }
    } else {
        TraceOptions::summary_only()
    };
    let proto = bfw_protocol(&params);
    let opts = RunOptions {
        seed: cli.seed,
        max_rounds,
        stop: StopCondition::SingleLeader,
        record,
    };
    let outcome = run(&g, &proto, &opts);
    let converged = outcome.is_converged();
    let trace = outcome.into_trace();

    let mut code = if converged {
        let leader = trace.sole_leader(&proto).expect("converged trace has one leader");
        println!("converged t={} leader={leader}", trace.final_round());
        EXIT_OK
    } else {
        println!(
            "not converged: cap of {max_rounds} rounds reached with {} leaders",
            trace.leader_count_history.last().copied().unwrap_or(0)
        );
        EXIT_CAP
    };

    if let Some(path) = &args.trace {
        let mut file_trace = trace.clone();
        if args.audit && snapshot_every > 1 {
            let last = file_trace.final_round();
            file_trace
                .snapshots
                .retain(|s| s.round() % snapshot_every == 0 || s.round() == last);
        }
        let header = TraceHeader::new(&g, descriptor, &params, &trace, max_rounds, Some(snapshot_every));
        write_trace(BufWriter::new(File::create(path)?), &header, &file_trace)?;
    }
    if args.audit {
        let report = audit_all(&trace, &g, &dist, &AuditPlan { seed: cli.seed, ..AuditPlan::default() })?;
        if let Some(out) = &cli.out {
            emit_json(Some(out), &report)?;
        }
        if report_audit(&report) == EXIT_AUDIT {
            code = EXIT_AUDIT;
        }
    }
    Ok(code)
}

fn cmd_sweep(cli: &Cli, args: &SweepArgs) -> CmdResult {
    let family: Family = args.family.parse()?;
    let p = match args.p {
        PArg::Fixed(p) => PChoice::Uniform(p),
        PArg::Diameter => PChoice::DiameterTuned,
    };
    let mut spec = SweepSpec::new(family, args.sizes.clone(), p, args.trials, cli.seed);
    spec.cap_multiplier = args.cap_multiplier;
    spec.audit = match (args.audit, args.audit_every) {
        (true, _) => AuditMode::All,
        (false, Some(k)) => AuditMode::Sampled(k),
        (false, None) => AuditMode::Off,
    };
    let result = harness::sweep(&spec)?;

    println!("{:>6} {:>5} {:>9} {:>10} {:>10} {:>10} {:>6}", "n", "D", "p", "median", "mean", "p95", "capped");
    for pt in &result.points {
        let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.1}"));
        println!(
            "{:>6} {:>5} {:>9.5} {:>10} {:>10} {:>10} {:>6}",
            pt.n,
            pt.diameter,
            pt.p,
            show(pt.median),
            show(pt.mean),
            show(pt.p95),
            pt.non_converged
        );
    }
    if let Some(fit) = &result.fit {
        println!(
            "log-log slope of median vs n: {:.3} (95% CI {:.3}..{:.3})",
            fit.slope, fit.slope_ci95[0], fit.slope_ci95[1]
        );
    }
    if let Some(prefix) = &cli.out {
        let csv = prefix.with_extension("csv");
        let json = prefix.with_extension("json");
        harness::write_csv(BufWriter::new(File::create(&csv)?), &result)?;
        emit_json(Some(&json), &result)?;
        println!("wrote {} and {}", csv.display(), json.display());
    }
    let violations: u64 = result.points.iter().map(|p| p.audit_violations).sum();
    Ok(if result.non_converged > 0 {
        EXIT_CAP
    } else if violations > 0 {
        println!("audit: {violations} violation(s)");
        EXIT_AUDIT
    } else {
        EXIT_OK
    })
}

fn cmd_verify(cli: &Cli, args: &VerifyArgs) -> CmdResult {
    let (g, trace, plan_seed): (Graph, _, u64) = if let Some(path) = &args.trace {
        let (header, trace) = read_trace(BufReader::new(File::open(path)?))?;
        (header.graph()?, trace, header.seed)
    } else {
        let (g, _) = load_graph(args.graph.as_deref().expect("clap enforces --graph"))?;
        let diameter = distances(&g).diameter();
        let params = args.p.resolve(diameter)?;
        let opts = RunOptions {
            seed: cli.seed,
            max_rounds: args.rounds,
            stop: StopCondition::FixedRounds,
            record: TraceOptions::dense(),
        };
        let trace = run(&g, &bfw_protocol(&params), &opts).into_trace();
        (g, trace, cli.seed)
    };
    let dist: DistanceTable = distances(&g);
    let report = audit_all(&trace, &g, &dist, &args.select.plan(plan_seed))?;
    let code = report_audit(&report);
    emit_json(cli.out.as_deref(), &report)?;
    Ok(code)
}

fn parse_start(s: &str) -> Result<ChainStart, Failure> {
    match s.to_ascii_lowercase().as_str() {
        "w" => Ok(ChainStart::State(ChainState::W)),
        "b" => Ok(ChainStart::State(ChainState::B)),
        "f" => Ok(ChainStart::State(ChainState::F)),
        "stationary" | "pi" => Ok(ChainStart::Stationary),
        other => Err(Failure(format!("unknown start `{other}` (w, b, f, stationary)"))),
    }
}

fn cmd_markov(cli: &Cli, cmd: &MarkovCommand) -> CmdResult {
    let out = cli.out.as_deref();
    match *cmd {
        MarkovCommand::Stationary { p } => {
            let s = markov::stationary(&ChainSpec::new(p)?);
            emit_json(out, &json!({"schema": SCHEMA, "p": p, "pi": s.pi, "residual": s.residual}))?;
        }
        MarkovCommand::Simulate { p, t, trials, ref start } => {
            let spec = ChainSpec::new(p)?.with_start(parse_start(start)?);
            let stats = markov::simulate_chain(&spec, t, cli.seed, trials)?;
            let pi = markov::stationary(&spec).pi;
            emit_json(
                out,
                &json!({
                    "schema": SCHEMA, "p": p, "t": t, "trials": trials, "start": spec.start(),
                    "pi": pi, "visit_mean": stats.mean, "visit_var": stats.var,
                    "visit_fraction": stats.fractions(), "std_error": stats.std_error(),
                }),
            )?;
        }
        MarkovCommand::Anticonc { p, t, trials, ref width, ref start } => {
            let w = if width == "sqrt" {
                (t as f64).sqrt().ceil() as u64
            } else {
                width.parse().map_err(|_| Failure(format!("bad width `{width}`")))?
            };
            let spec = ChainSpec::new(p)?.with_start(parse_start(start)?);
            let a = markov::anticoncentration_sup(&spec, t, cli.seed, trials, w)?;
            emit_json(
                out,
                &json!({"schema": SCHEMA, "p": p, "t": t, "trials": trials, "width": w,
                        "anticonc_sup": a.estimate, "center": a.center}),
            )?;
        }
        MarkovCommand::Sigma { p, d, trials, cap } => {
            let spec = ChainSpec::new(p)?;
            let samples = markov::sigma_hitting(&spec, d, cli.seed, trials, cap)?;
            let hit: Vec<u64> = samples.iter().flatten().copied().collect();
            let q = harness::quantiles(&hit);
            emit_json(
                out,
                &json!({"schema": SCHEMA, "p": p, "D": d, "trials": trials, "cap": cap,
                        "capped": trials - hit.len(),
                        "median": q.map(|q| q.0), "mean": q.map(|q| q.1), "p95": q.map(|q| q.2)}),
            )?;
        }
        MarkovCommand::Identity { n, k, p } => {
            let c = markov::geom_binom_identity(n, k, p)?;
            emit_json(out, &json!({"schema": SCHEMA, "identity": c}))?;
        }
        MarkovCommand::ReturnTime { p, trials } => {
            let r = markov::return_times(&ChainSpec::new(p)?, cli.seed, trials);
            let mean = r.iter().sum::<u64>() as f64 / r.len().max(1) as f64;
            emit_json(
                out,
                &json!({"schema": SCHEMA, "p": p, "trials": trials, "mean": mean, "expected": 2.0 + 1.0 / p}),
            )?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_graph(cli: &Cli, cmd: &GraphCommand) -> CmdResult {
    match cmd {
        GraphCommand::Info { graph } => {
            let (g, _) = load_graph(graph)?;
            let d = distances(&g);
            emit_json(
                cli.out.as_deref(),
                &json!({"schema": SCHEMA, "n": g.node_count(), "edges": g.edge_count(), "diameter": d.diameter()}),
            )?;
        }
        GraphCommand::Export { graph } => {
            let (g, _) = load_graph(graph)?;
            let text = g.to_edge_list();
            match &cli.out {
                Some(path) => std::fs::write(path, text)?,
                None => io::stdout().write_all(text.as_bytes())?,
            }
        }
    }
    Ok(EXIT_OK)
}

fn cmd_probe(cli: &Cli, args: &ProbeArgs) -> CmdResult {
    let result = harness::two_leader_probe(&args.d, args.trials, cli.seed, args.p, args.cap_multiplier)?;
    for pt in &result.points {
        println!(
            "D={:>4} median={} capped={}",
            pt.d,
            pt.median.map_or("-".into(), |m| format!("{m:.1}")),
            pt.non_converged
        );
    }
    if let Some(fit) = &result.fit {
        println!("log-log slope of median vs D: {:.3}", fit.slope);
    }
    if let Some(out) = &cli.out {
        emit_json(Some(out), &result)?;
    }
    Ok(if result.points.iter().any(|p| p.non_converged > 0) { EXIT_CAP } else { EXIT_OK })
}
