use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_optolink"))
}

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn golden(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(path).unwrap()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn json_stdout(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn json_stderr(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    assert_eq!(text.trim_end().lines().count(), 1, "{text}");
    serde_json::from_str(&text).unwrap()
}

fn mask_timestamps(text: &str) -> String {
    text.lines()
        .map(|l| {
            let t = l.trim_start();
            if t.starts_with("\"started_at\"") || t.starts_with("\"finished_at\"") {
                let indent = &l[..l.len() - t.len()];
                let key = t.split(':').next().unwrap();
                let comma = if t.ends_with(',') { "," } else { "" };
                format!("{indent}{key}: \"<timestamp>\"{comma}")
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn analyze_example1() {
    let out = run(&["analyze", "--config", example("ex1.json").to_str().unwrap()]);
    let v = json_stdout(&out);
    let m = &v["result"]["metrics"];
    let keys: Vec<&str> = m.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["p_her", "i_prot", "i_th", "f_her", "eta_link", "p_success", "f_del"]);
    assert!((m["f_her"].as_f64().unwrap() - 0.73).abs() <= 0.01);
    assert!(m["f_del"].as_f64().unwrap() >= 0.55);
    assert_eq!(v["manifest"]["resolved_config"]["transducer"]["eta_mw"], 0.8);
    assert_eq!(v["manifest"]["resolved_config"]["qubit"]["t_coh_us"], 200.0);
}

#[test]
fn analyze_matches_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "analyze",
        "--config",
        example("ex1.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let metrics = std::fs::read_to_string(dir.path().join("metrics.json")).unwrap();
    assert_eq!(mask_timestamps(&metrics), golden("ex1_metrics.json"));
    let breakdown = std::fs::read_to_string(dir.path().join("breakdown.csv")).unwrap();
    assert_eq!(breakdown, golden("ex1_breakdown.csv"));
    let curve = std::fs::read_to_string(dir.path().join("delivery_curve.csv")).unwrap();
    assert!(curve.starts_with("t_del_us,p_success,f_del\n1,0.01,"));
    assert_eq!(curve.lines().count(), 1 + 2000);
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn shipped_examples_resolve_cleanly() {
    for name in ["ex1.json", "ex2.json", "ex3.json", "lattice.json"] {
        let out = run(&["analyze", "--config", example(name).to_str().unwrap()]);
        assert!(out.status.success(), "{name}");
        assert!(out.stderr.is_empty(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn simulate_is_reproducible() {
    let ex1 = example("ex1.json");
    let args = [
        "simulate",
        "--config",
        ex1.to_str().unwrap(),
        "--trials",
        "100000",
        "--seed",
        "7",
    ];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    let (a, b) = (
        String::from_utf8(a.stdout).unwrap(),
        String::from_utf8(b.stdout).unwrap(),
    );
    assert_eq!(mask_timestamps(&a), mask_timestamps(&b));
    let v: Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["manifest"]["seed"], 7);
    assert_eq!(v["result"]["stats"]["n_trials"], 100000);
    assert!(v["result"]["f_del_z"].as_f64().unwrap().abs() < 5.0);
}

#[test]
fn simulate_dumps_trials() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate",
        "--config",
        example("ex3.json").to_str().unwrap(),
        "--trials",
        "500",
        "--dump-trials",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let trials = std::fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    assert!(trials.starts_with("trial,herald_round,winning_channel,stored_us,delivered_fidelity\n"));
    assert_eq!(trials.lines().count(), 501);
}

#[test]
fn plan_lattice_surgery() {
    let v = json_stdout(&run(&["plan", "--config", example("lattice.json").to_str().unwrap()]));
    let r = &v["result"];
    assert_eq!(r["links"], 32);
    assert_eq!(r["transducers_per_link"], 300);
    assert_eq!(r["feasible"], false);
    assert_eq!(r["limiting_factor"], "processor_qubits");
}

#[test]
fn plan_csv_is_a_field_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "plan",
        "--config",
        example("lattice.json").to_str().unwrap(),
        "--format",
        "csv",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("plan.csv")).unwrap();
    assert!(csv.starts_with("field,value\narchitecture,lattice_surgery\nlinks,32\n"));
    assert!(csv.contains("cryostat.total_transducers,9600\n"));
}

#[test]
fn plan_without_architecture_is_config_error() {
    let out = run(&["plan", "--config", example("ex1.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json_stderr(&out)["error"]["kind"], "config");
}

#[test]
fn unattainable_target_exits_with_domain_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(example("lattice.json"))
        .unwrap()
        .replace("0.89", "0.99");
    let cfg = write_config(dir.path(), &text);
    let out = run(&["plan", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    let e = json_stderr(&out);
    assert_eq!(e["error"]["kind"], "unattainable");
    assert_eq!(e["error"]["target"], 0.99);
}

#[test]
fn empty_file_is_schema_error_at_root() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = run(&["analyze", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let e = json_stderr(&out);
    assert_eq!(e["error"]["kind"], "schema");
    assert_eq!(e["error"]["pointer"], "");
}

#[test]
fn out_of_range_efficiency_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
            "transducer": {"name": "t", "eta_mw": 1.2, "p_mo": 0.01, "eta_det": 0.5,
                           "n_th": 0.1, "t_rep_us": 1},
            "qubit": "preset:qubit1",
            "protocol": {"basis": "one_photon", "pump": "tms"},
            "policy": {"t_del_us": 88}
        }"#,
    );
    let out = run(&["analyze", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let e = json_stderr(&out);
    assert_eq!(e["error"]["kind"], "invalid");
    assert_eq!(e["error"]["violations"][0]["field"], "transducer.eta_mw");
}

#[test]
fn misspelled_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(example("ex3.json"))
        .unwrap()
        .replace("n_parallel", "n_paralel");
    let cfg = write_config(dir.path(), &text);
    let out = run(&["analyze", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json_stderr(&out)["error"]["pointer"], "/policy/n_paralel");
}

#[test]
fn missing_file_and_bad_flags_are_config_errors() {
    let out = run(&["analyze", "--config", "/nonexistent/x.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json_stderr(&out)["error"]["kind"], "io");

    let out = run(&["analyze", "--config", example("ex1.json").to_str().unwrap(), "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json_stderr(&out)["error"]["kind"], "usage");

    let out = run(&["teleport"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn failed_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "distill",
        "--fidelity",
        "0.4",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
}

#[test]
fn overrides_from_flags() {
    let ex1 = example("ex1.json");
    let v = json_stdout(&run(&[
        "analyze",
        "--config",
        ex1.to_str().unwrap(),
        "--fidelity-model",
        "linear",
        "--t-del",
        "138",
    ]));
    let m = &v["result"]["metrics"];
    assert!((m["f_her"].as_f64().unwrap() - 0.664).abs() < 1e-9);
    assert_eq!(v["manifest"]["resolved_config"]["policy"]["t_del_us"], 138.0);

    let v = json_stdout(&run(&[
        "analyze",
        "--config",
        ex1.to_str().unwrap(),
        "--protocol",
        "2p-tms",
    ]));
    assert_eq!(v["result"]["protocol"], "2p-tms");
    assert_eq!(v["result"]["metrics"]["i_th"], 0.2);

    // One-photon upconversion needs an alpha the config does not have.
    let out = run(&["analyze", "--config", ex1.to_str().unwrap(), "--protocol", "1p-upconversion"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json_stderr(&out)["error"]["violations"][0]["field"], "protocol.alpha");
}

#[test]
fn tradeoff_writes_pareto_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "tradeoff",
        "--config",
        example("ex3.json").to_str().unwrap(),
        "--budget",
        "16",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("pareto.csv")).unwrap();
    assert!(csv.starts_with("n_links,n_parallel,distill_rounds,t_del_us,rate_per_us,f_del\n"));
    assert!(csv.lines().any(|l| l.starts_with("16,1,0,")));
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn distill_reports() {
    let v = json_stdout(&run(&["distill", "--fidelity", "0.91", "--rounds", "4"]));
    let d = &v["result"]["distillation"];
    assert_eq!(d["f_out"], 0.991);
    assert_eq!(d["pairs"], 16);

    let v = json_stdout(&run(&[
        "distill",
        "--fidelity",
        "0.91",
        "--rounds",
        "2",
        "--mode",
        "recurrence",
        "--trials",
        "1000",
    ]));
    assert_eq!(v["result"]["distillation"]["mode"], "recurrence");
    assert_eq!(v["result"]["monte_carlo"]["n_trials"], 1000);

    let v = json_stdout(&run(&[
        "distill",
        "--config",
        example("ex3.json").to_str().unwrap(),
        "--rounds",
        "4",
    ]));
    assert!((v["result"]["distillation"]["f_in"].as_f64().unwrap() - 0.896449).abs() < 1e-5);
}

#[test]
fn presets_listing() {
    let v = json_stdout(&run(&["presets"]));
    assert_eq!(v["result"]["transducer1"]["eta_mw"], 0.8);
    assert_eq!(v["result"]["qubit2"]["t2_us"], 2500.0);
    assert_eq!(v["result"]["emo_2023"]["type"], "device");

    let v = json_stdout(&run(&["presets", "transducer2"]));
    assert_eq!(v["result"]["n_th"], 0.01);

    let out = run(&["presets", "nope"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json_stderr(&out)["error"]["kind"], "not_found");
}

#[test]
fn resolved_config_round_trips() {
    for name in ["ex1.json", "ex2.json", "ex3.json", "lattice.json"] {
        let parsed = optolink::io::parse_config(&example(name)).unwrap().resolved();
        let text = serde_json::to_string_pretty(&parsed).unwrap();
        assert_eq!(optolink::io::parse_config_str(&text).unwrap(), parsed, "{name}");

        let v = json_stdout(&run(&["analyze", "--config", example(name).to_str().unwrap()]));
        let emitted = v["manifest"]["resolved_config"].to_string();
        assert_eq!(optolink::io::parse_config_str(&emitted).unwrap(), parsed, "{name}");
    }
}

#[test]
fn help_exits_zero() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("simulate"));
}
