use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_solbp");

fn solbp(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Table rows as (variable, state, mean, variance).
fn table(out: &Output) -> Vec<(String, String, f64, f64)> {
    stdout(out)
        .lines()
        .skip(1)
        .map(|line| {
            let f: Vec<&str> = line.split('\t').collect();
            (f[0].to_string(), f[1].to_string(), f[2].parse().unwrap(), f[3].parse().unwrap())
        })
        .collect()
}

const DETERMINISTIC_PAIR: &str = r#"{
  "format": "solbp-network",
  "version": 1,
  "variables": [{"name": "A", "states": ["lo", "hi"]}, {"name": "B", "states": ["lo", "hi"]}],
  "edges": [["A", "B"]],
  "tables": [
    {"variable": "A", "probabilities": [{"given": [], "values": [0.3, 0.7]}]},
    {"variable": "B", "probabilities": [
      {"given": ["lo"], "values": [1.0, 0.0]},
      {"given": ["hi"], "values": [0.4, 0.6]}
    ]}
  ]
}"#;

fn evidence_doc(pairs: &[(&str, &str)]) -> String {
    let obs: Vec<String> = pairs.iter().map(|(v, s)| format!("[\"{v}\", \"{s}\"]")).collect();
    format!("{{\"format\": \"solbp-evidence\", \"version\": 1, \"observations\": [{}]}}", obs.join(", "))
}

fn generated(dir: &Path, topology: &str) {
    let out = solbp(&["--seed", "3", "--output-dir", path(dir), "gen", "--topology", topology, "--n-train", "50"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn help_for_every_subcommand() {
    assert!(solbp(&["--help"]).status.success());
    for sub in ["infer", "compare", "decbod", "bench", "gen", "compile-spn"] {
        let out = solbp(&[sub, "--help"]);
        assert!(out.status.success(), "{sub}");
        assert!(stdout(&out).contains("Usage"), "{sub}");
    }
}

#[test]
fn bp_matches_enumeration_on_a_chain() {
    let dir = tempfile::tempdir().unwrap();
    generated(dir.path(), "chain3");
    let network = dir.path().join("chain3-truth.json");
    let evidence = dir.path().join("chain3-evidence.json");
    let run = |engine| {
        table(&solbp(&["infer", "--network", path(&network), "--evidence", path(&evidence), "--engine", engine]))
    };
    let bp = run("bp");
    let exact = run("enum");
    assert_eq!(bp.len(), 6);
    for (a, b) in bp.iter().zip(&exact) {
        assert_eq!((&a.0, &a.1), (&b.0, &b.1));
        assert!((a.2 - b.2).abs() < 1e-10);
        assert_eq!(a.3, 0.0);
    }
}

#[test]
fn second_order_engines_agree_on_learned_chain() {
    let dir = tempfile::tempdir().unwrap();
    generated(dir.path(), "chain3");
    let network = dir.path().join("chain3-learned.json");
    let run = |engine| table(&solbp(&["infer", "--network", path(&network), "--engine", engine]));
    let so = run("solbp");
    let circuit = run("sospn");
    for (a, b) in so.iter().zip(&circuit) {
        assert!((a.2 - b.2).abs() < 1e-9);
        assert!((a.3 - b.3).abs() < 1e-9);
        assert!(a.3 > 0.0);
    }
}

#[test]
fn fully_observed_network_echoes_evidence() {
    let dir = tempfile::tempdir().unwrap();
    let network = dir.path().join("pair.json");
    let evidence = dir.path().join("ev.json");
    fs::write(&network, DETERMINISTIC_PAIR).unwrap();
    fs::write(&evidence, evidence_doc(&[("A", "hi"), ("B", "lo")])).unwrap();
    for engine in ["bp", "solbp", "sospn", "enum"] {
        let out = solbp(&["infer", "--network", path(&network), "--evidence", path(&evidence), "--engine", engine]);
        assert!(out.status.success(), "{engine}");
        let rows = table(&out);
        let means: Vec<f64> = rows.iter().map(|r| r.2).collect();
        assert_eq!(means, vec![0.0, 1.0, 1.0, 0.0], "{engine}");
        assert!(rows.iter().all(|r| r.3 == 0.0), "{engine}");
    }
}

#[test]
fn impossible_evidence_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let network = dir.path().join("pair.json");
    let evidence = dir.path().join("ev.json");
    fs::write(&network, DETERMINISTIC_PAIR).unwrap();
    fs::write(&evidence, evidence_doc(&[("A", "lo"), ("B", "hi")])).unwrap();
    for engine in ["enum", "sospn"] {
        let out = solbp(&["infer", "--network", path(&network), "--evidence", path(&evidence), "--engine", engine]);
        assert_eq!(out.status.code(), Some(4), "{engine}");
    }
}

#[test]
fn usage_and_parse_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let network = dir.path().join("pair.json");
    fs::write(&network, DETERMINISTIC_PAIR).unwrap();
    assert_eq!(solbp(&["infer", "--network", path(&network), "--engine", "gibbs"]).status.code(), Some(2));
    assert_eq!(solbp(&["infer", "--network", path(&network), "--engine", "mc"]).status.code(), Some(2));
    assert_eq!(solbp(&["--max-rounds", "0", "infer", "--network", path(&network)]).status.code(), Some(2));
    assert_eq!(solbp(&["decbod", "--trials", "x.csv", "--gamma-step", "0"]).status.code(), Some(2));
    assert_eq!(solbp(&["compare", "--topology", "chain3"]).status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"format\": \"solbp-network\"").unwrap();
    assert_eq!(solbp(&["infer", "--network", path(&bad)]).status.code(), Some(3));
    let missing = dir.path().join("missing.json");
    assert_eq!(solbp(&["infer", "--network", path(&missing)]).status.code(), Some(3));
    let evidence = dir.path().join("ev.json");
    fs::write(&evidence, evidence_doc(&[("A", "medium")])).unwrap();
    let out = solbp(&["infer", "--network", path(&network), "--evidence", path(&evidence)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn compare_writes_csvs_and_decbod_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = solbp(&["--seed", "2", "--output-dir", path(&out_dir), "compare", "--topology", "tent3", "--runs", "10"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for (file, schema) in [
        ("trials.csv", "# solbp-trials v1"),
        ("scatter.csv", "# solbp-scatter v1"),
        ("timing.csv", "# solbp-timing v1"),
    ] {
        let text = fs::read_to_string(out_dir.join(file)).unwrap();
        assert_eq!(text.lines().next(), Some(schema), "{file}");
        assert!(text.lines().count() > 2, "{file}");
    }
    assert!(out_dir.join("manifest.json").exists());

    let trials = out_dir.join("trials.csv");
    let out = solbp(&["--output-dir", path(&out_dir), "decbod", "--trials", path(&trials), "--gamma-step", "0.1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let curve = fs::read_to_string(out_dir.join("decbod.csv")).unwrap();
    let lines: Vec<&str> = curve.lines().collect();
    assert_eq!(lines[0], "# solbp-decbod v1");
    assert_eq!(lines[1], "gamma,solbp,sospn");
    assert_eq!(lines.len(), 2 + 10);
    assert!(lines.last().unwrap().starts_with("0.9,"));
}

#[test]
fn compare_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for jobs in ["1", "8"] {
        let out_dir = dir.path().join(jobs);
        let out = solbp(&[
            "--seed", "9", "--jobs", jobs, "--output-dir", path(&out_dir), "compare", "--topology", "diamond", "--runs",
            "30",
        ]);
        assert!(out.status.success());
        outputs.push((
            fs::read(out_dir.join("trials.csv")).unwrap(),
            fs::read(out_dir.join("scatter.csv")).unwrap(),
        ));
    }
    assert!(outputs[0] == outputs[1]);
}

#[test]
fn compile_spn_dumps_circuit() {
    let dir = tempfile::tempdir().unwrap();
    let network = dir.path().join("pair.json");
    fs::write(&network, DETERMINISTIC_PAIR).unwrap();
    let out = solbp(&["--output-dir", path(dir.path()), "compile-spn", "--network", path(&network)]);
    assert!(out.status.success());
    let dump = fs::read_to_string(dir.path().join("circuit.txt")).unwrap();
    assert_eq!(dump.lines().next(), Some("solbp-spn 1"));
    assert!(stdout(&out).starts_with("circuit: "));
}

#[test]
fn gen_output_round_trips_through_infer_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    generated(dir.path(), "v3");
    let config = dir.path().join("v3-experiment.json");
    let out_dir = dir.path().join("exp");
    let out = solbp(&["--output-dir", path(&out_dir), "compare", "--config", path(&config), "--runs", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let learned = dir.path().join("v3-learned.json");
    let out = solbp(&["infer", "--network", path(&learned), "--engine", "mc", "--mc-samples", "500"]);
    assert!(out.status.success());
    assert_eq!(table(&out).len(), 6);
}
