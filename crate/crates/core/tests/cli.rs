//! End-to-end tests of the `beepsim` binary.

use std::process::{Command, Output};

use serde_json::Value;

fn beepsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beepsim")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

#[test]
fn run_single_node() {
    let o = beepsim(&["run", "--graph", "clique:1"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "converged t=0 leader=0");
}

#[test]
fn run_hits_cap_with_certain_beeps() {
    let o = beepsim(&["run", "--graph", "path:2", "--p", "1.0", "--max-rounds", "100"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_with_audit_and_trace_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let trace = trace.to_str().unwrap();
    let o = beepsim(&["run", "--graph", "grid:4x4", "--p", "diam", "--seed", "3", "--audit", "--trace", trace]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("converged t="));

    let v = beepsim(&["verify", "--trace", trace]);
    assert_eq!(v.status.code(), Some(0));
    let text = stdout(&v);
    let report: Value = serde_json::from_str(&text[text.find('{').unwrap()..]).unwrap();
    assert_eq!(report["violations"], 0);
    assert_eq!(report["schema"], 1);
}

#[test]
fn verify_reports_tampered_trace() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    let p = path.to_str().unwrap();
    assert_eq!(beepsim(&["run", "--graph", "path:6", "--seed", "1", "--trace", p]).status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let last = lines.len() - 1;
    let mut rec: Value = serde_json::from_str(&lines[last]).unwrap();
    rec["beeps"][0] = Value::from(rec["beeps"][0].as_u64().unwrap() + 10);
    lines[last] = rec.to_string();
    std::fs::write(&path, lines.join("\n")).unwrap();
    let v = beepsim(&["verify", "--trace", p]);
    assert_eq!(v.status.code(), Some(3));
}

#[test]
fn verify_inline_simulation_with_selected_lemmas() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = beepsim(&[
        "--out", out.to_str().unwrap(), "verify", "--graph", "cycle:8", "--rounds", "200", "--ohm", "--lipschitz",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    let lemmas: Vec<&str> = report["lemmas"].as_array().unwrap().iter().map(|l| l["lemma"].as_str().unwrap()).collect();
    assert_eq!(lemmas, ["ohm", "lipschitz"]);
}

#[test]
fn graph_info_and_export() {
    let o = beepsim(&["graph", "info", "--graph", "grid:3x3"]);
    let v = json(&o);
    assert_eq!((v["n"].as_u64(), v["edges"].as_u64(), v["diameter"].as_u64()), (Some(9), Some(12), Some(4)));

    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("g.txt");
    let e = beepsim(&["--out", file.to_str().unwrap(), "graph", "export", "--graph", "cycle:5"]);
    assert_eq!(e.status.code(), Some(0));
    let back = json(&beepsim(&["graph", "info", "--graph", file.to_str().unwrap()]));
    assert_eq!((back["n"].as_u64(), back["edges"].as_u64(), back["diameter"].as_u64()), (Some(5), Some(5), Some(2)));
}

#[test]
fn markov_subcommands() {
    let v = json(&beepsim(&["markov", "stationary", "--p", "0.5"]));
    assert_eq!(v["pi"], serde_json::json!([0.5, 0.25, 0.25]));

    let v = json(&beepsim(&["markov", "identity", "--n", "1", "--k", "2", "--p", "0.5"]));
    assert_eq!(v["identity"]["equal"], true);
    assert_eq!(v["identity"]["unshifted_equal"], false);

    let v = json(&beepsim(&["markov", "simulate", "--p", "0.5", "--t", "100", "--trials", "50", "--seed", "2"]));
    for key in ["p", "t", "trials", "pi", "visit_mean", "visit_var"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }

    let v = json(&beepsim(&["markov", "anticonc", "--p", "0.5", "--t", "1000", "--trials", "1000", "--width", "3"]));
    assert!(v["anticonc_sup"].as_f64().unwrap() < 1.0);

    let v = json(&beepsim(&["markov", "sigma", "--p", "0.5", "--d", "3", "--trials", "100"]));
    assert_eq!(v["capped"], 0);
}

#[test]
fn sweep_writes_csv_and_json_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for threads in ["1", "4"] {
        let prefix = dir.path().join(format!("s{threads}"));
        let o = beepsim(&[
            "--threads", threads, "--seed", "5", "--out", prefix.to_str().unwrap(), "sweep", "--family", "cycle",
            "--sizes", "6,12", "--trials", "10",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
        let csv = std::fs::read_to_string(prefix.with_extension("csv")).unwrap();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("# beepsim sweep schema=1"));
        assert_eq!(lines.next().unwrap(), "family,n,D,p_mode,p,trial,seed,converged,convergence_round,rounds_executed");
        csvs.push(lines.map(String::from).collect::<Vec<_>>());
        let summary: Value = serde_json::from_str(&std::fs::read_to_string(prefix.with_extension("json")).unwrap()).unwrap();
        assert_eq!(summary["points"].as_array().unwrap().len(), 2);
    }
    assert_eq!(csvs[0].len(), 20);
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(beepsim(&["run"]).status.code(), Some(1));
    assert_eq!(beepsim(&["run", "--graph", "hexagon:3"]).status.code(), Some(1));
    assert_eq!(beepsim(&["run", "--graph", "path:3", "--p", "1.5"]).status.code(), Some(1));
    assert_eq!(beepsim(&["sweep", "--family", "path", "--sizes", "8,4"]).status.code(), Some(1));
    assert_eq!(beepsim(&["--help"]).status.code(), Some(0));
}
