use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use stubborn_core::bench::BenchTable;
use stubborn_core::run::{MetricsDocument, SimulationDocument, SpectrumDocument};
use stubborn_core::verify::VerifySummary;
use tempfile::TempDir;

fn stubborn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stubborn")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn two_node(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    (write(dir, "g.txt", "# 2-node path\n1 2\n"), write(dir, "k.txt", "1 2\n2 1\n"), write(dir, "s.txt", "1 1\n2 -1\n"))
}

/// A connected graph: path 0..n plus chords `i — 7i+3 mod n`.
fn chorded_path(dir: &Path, n: usize) -> PathBuf {
    let mut body = String::new();
    for i in 1..n {
        body += &format!("{} {} 1\n", i - 1, i);
    }
    for i in 0..n {
        let j = (7 * i + 3) % n;
        if j != i {
            body += &format!("{i} {j} {}\n", 0.5 + (i % 4) as f64 * 0.5);
        }
    }
    write(dir, &format!("chorded{n}.txt"), &body)
}

fn json_stdout(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("one JSON line")
}

#[test]
fn exact_two_node_fixture() {
    let dir = TempDir::new().unwrap();
    let (g, k, s) = two_node(dir.path());
    let out = stubborn(&[
        "metrics",
        "--graph",
        g.to_str().unwrap(),
        "--stubbornness",
        k.to_str().unwrap(),
        "--opinions",
        s.to_str().unwrap(),
        "--mode",
        "exact",
        "--json",
    ]);
    let doc = json_stdout(&out);
    let report = &doc["report"];
    // z = (L + K)⁻¹Ks = (3/5, -1/5).
    let z = [0.6, -0.2];
    let expected = [
        ("C", 2.0 * (z[0] - 1.0f64).powi(2) + (z[1] + 1.0f64).powi(2)),
        ("D", (z[0] - z[1]).powi(2)),
        ("P", 2.0 * z[0] * z[0] + z[1] * z[1]),
        ("I_pd", 2.0 * z[0] - z[1]),
    ];
    for (key, value) in expected {
        let got = report[key].as_f64().unwrap();
        assert!((got - value).abs() < 1e-12, "{key}: {got} vs {value}");
    }
    assert_eq!(doc["node_ids"], serde_json::json!([1, 2]));
    assert_eq!(doc["graph"]["m"], 1);
}

#[test]
fn table_output_and_out_file() {
    let dir = TempDir::new().unwrap();
    let (g, k, s) = two_node(dir.path());
    let report = dir.path().join("report.jsonl");
    let out = stubborn(&[
        "metrics",
        "--graph",
        g.to_str().unwrap(),
        "--stubbornness",
        k.to_str().unwrap(),
        "--opinions",
        s.to_str().unwrap(),
        "--mode",
        "exact",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("C            9.6"), "{table}");
    let line = std::fs::read_to_string(&report).unwrap();
    assert_eq!(line.lines().count(), 1);
    serde_json::from_str::<MetricsDocument>(line.trim()).unwrap();
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let missing = stubborn(&["metrics", "--graph", dir.path().join("absent.txt").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("absent.txt"));

    let bad = write(dir.path(), "bad.txt", "1 2\n2 3 -4\n");
    let out = stubborn(&["metrics", "--graph", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let g = chorded_path(dir.path(), 30);
    let out = stubborn(&["metrics", "--graph", g.to_str().unwrap(), "--mode", "exact", "--dense-cap", "10"]);
    assert_eq!(out.status.code(), Some(3));

    let out = stubborn(&["metrics", "--graph", g.to_str().unwrap(), "--eps", "0.7"]);
    assert_eq!(out.status.code(), Some(1));
    let out = stubborn(&["metrics", "--graph", g.to_str().unwrap(), "--dist", "cauchy"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stubborn(&["metrics", "--nonsense"]).status.code(), Some(1));
}

#[test]
fn approx_on_thousand_nodes_is_certified() {
    let dir = TempDir::new().unwrap();
    let g = chorded_path(dir.path(), 1000);
    for dist in ["uniform", "powerlaw", "normal", "exponential"] {
        let doc = json_stdout(&stubborn(&["metrics", "--graph", g.to_str().unwrap(), "--dist", dist, "--json"]));
        assert_eq!(doc["graph"]["n"], 1000);
        assert_eq!(doc["report"]["certified"], true, "{dist}");
        assert!(doc["report"]["error_bounds"]["C"].as_f64().unwrap() <= 1e-6);
    }
}

fn without_timings(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timings");
    v.as_object_mut().unwrap().remove("total_seconds");
    if let Some(report) = v.get_mut("report") {
        report.as_object_mut().unwrap().remove("timings");
    }
    v
}

#[test]
fn single_thread_runs_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let g = chorded_path(dir.path(), 400);
    let args = ["--threads", "1", "metrics", "--graph", g.to_str().unwrap(), "--seed", "7", "--json"];
    let a = without_timings(json_stdout(&stubborn(&args)));
    let b = without_timings(json_stdout(&stubborn(&args)));
    assert_eq!(a, b);

    let other = without_timings(json_stdout(&stubborn(&[
        "--threads",
        "1",
        "metrics",
        "--graph",
        g.to_str().unwrap(),
        "--seed",
        "8",
        "--json",
    ])));
    assert_ne!(a["report"]["C"], other["report"]["C"]);
}

/// Parses the line into its document type and serializes it again; the
/// text must come back byte for byte.
fn typed_round_trip<T: DeserializeOwned + Serialize>(args: &[&str]) {
    let out = stubborn(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let doc: T = serde_json::from_str(text.trim_end()).unwrap();
    assert_eq!(serde_json::to_string(&doc).unwrap(), text.trim_end(), "{args:?}");
}

#[test]
fn every_document_round_trips() {
    let dir = TempDir::new().unwrap();
    let g = chorded_path(dir.path(), 50);
    let g = g.to_str().unwrap();
    typed_round_trip::<MetricsDocument>(&["metrics", "--graph", g, "--json"]);
    typed_round_trip::<MetricsDocument>(&[
        "metrics",
        "--graph",
        g,
        "--mode",
        "exact",
        "--stubbornness",
        "1.5",
        "--json",
    ]);
    typed_round_trip::<MetricsDocument>(&["metrics", "--graph", g, "--centering", "uniform", "--json"]);
    typed_round_trip::<SimulationDocument>(&["simulate", "--graph", g, "--eps", "1e-8", "--json"]);
    typed_round_trip::<SpectrumDocument>(&["spectrum", "--graph", g, "--json"]);
    typed_round_trip::<BenchTable>(&["bench", "--sizes", "300,600", "--repeats", "1", "--json"]);
    typed_round_trip::<VerifySummary>(&["verify", "--json"]);

    let (g2, k2, s2) = two_node(dir.path());
    typed_round_trip::<MetricsDocument>(&[
        "metrics",
        "--graph",
        g2.to_str().unwrap(),
        "--stubbornness",
        k2.to_str().unwrap(),
        "--opinions",
        s2.to_str().unwrap(),
        "--json",
    ]);
}

#[test]
fn simulate_respects_the_bound() {
    let dir = TempDir::new().unwrap();
    let g = chorded_path(dir.path(), 60);
    let finals = dir.path().join("z.txt");
    let doc = json_stdout(&stubborn(&[
        "simulate",
        "--graph",
        g.to_str().unwrap(),
        "--eps",
        "1e-8",
        "--opinions-out",
        finals.to_str().unwrap(),
        "--json",
    ]));
    let stop = doc["stop_time"].as_u64().unwrap();
    assert!(stop > 0 && stop <= doc["bound"].as_u64().unwrap());
    assert!(doc["f_norms"].as_array().unwrap().last().unwrap().as_f64().unwrap() <= 1e-8);
    assert_eq!(std::fs::read_to_string(finals).unwrap().lines().count(), 60);
}

#[test]
fn gen_opinions_is_seeded() {
    let dir = TempDir::new().unwrap();
    let g = chorded_path(dir.path(), 20);
    let run =
        |seed: &str| stubborn(&["gen-opinions", "--graph", g.to_str().unwrap(), "--dist", "normal", "--seed", seed]);
    let a = run("4");
    assert!(a.status.success());
    assert_eq!(a.stdout, run("4").stdout);
    assert_ne!(a.stdout, run("5").stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert_eq!(text.lines().count(), 20);
    for line in text.lines() {
        let v: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
        assert!((-1.0..=1.0).contains(&v));
    }

    // Generated values load back as an opinion file.
    let s = dir.path().join("s.txt");
    assert!(stubborn(&["gen-opinions", "--n", "20", "--out", s.to_str().unwrap()]).status.success());
    let out = stubborn(&["metrics", "--graph", g.to_str().unwrap(), "--opinions", s.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn verify_reports_an_injected_fault() {
    let ok = stubborn(&["verify"]);
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("0 failed\n"));

    let out = stubborn(&["verify", "--fault", "phi-row-sum"]);
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8(out.stdout).unwrap();
    let failing: Vec<&str> = text.lines().filter(|l| l.starts_with("FAIL")).collect();
    assert_eq!(failing.len(), 1, "{text}");
    assert!(failing[0].contains("dynamics.phi_row_stochastic"));
}

#[test]
fn bench_marks_infeasible_exact_with_a_dash() {
    let out = stubborn(&["bench", "--sizes", "500,2000", "--exact-cap", "150", "--repeats", "1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).take(2).collect();
    assert!(!rows[0].contains(" - "), "{text}");
    assert!(rows[1].contains(" - "), "{text}");
    assert!(text.contains("log-log slope"));
}
