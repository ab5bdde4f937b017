use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_quasitile"));
    c.env_remove("QUASITILE_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn report(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn schema(name: &str) -> jsonschema::JSONSchema {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas").join(name);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::JSONSchema::compile(&v).expect("schema compiles")
}

fn assert_valid(schema: &jsonschema::JSONSchema, v: &Value) {
    if let Err(errors) = schema.validate(v) {
        let msgs: Vec<String> = errors.map(|e| e.to_string()).collect();
        panic!("schema violations: {msgs:?}");
    }
}

#[test]
fn help_exits_zero() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("quasitile"));
}

#[test]
fn build_writes_a_valid_maximal_quasitiling() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.json");
    let p = path.to_str().unwrap();
    let r = report(&run(&[
        "quasitile",
        "build",
        "--group",
        "z2",
        "--window",
        "64",
        "--shapes",
        "4,8",
        "--eps",
        "0.25",
        "--out",
        p,
    ]));
    assert_eq!(r["config"]["window"], 64);
    assert_eq!(r["config"]["eps"], "0.25");

    let tiling: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_valid(&schema("quasitiling.schema.json"), &tiling);
    assert_eq!(tiling["meta"]["maximal"], true);

    // independent re-scan through the check command
    let at = format!("@{p}");
    let c = report(&run(&["quasitile", "check", "--tiling", &at, "--eps", "0.25"]));
    assert_eq!(c["result"]["eps_disjoint"], true);
    assert_eq!(c["result"]["addable_centers"], 0);
    let cov = c["result"]["covering_f64"].as_f64().unwrap();
    assert!(cov >= 1.0 - 0.875f64.powi(2), "covering {cov}");
}

#[test]
fn disjointify_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.json");
    let d = dir.path().join("d.json");
    report(&run(&[
        "quasitile",
        "build",
        "--group",
        "z1",
        "--window",
        "40",
        "--shapes",
        "3,5",
        "--eps",
        "0.3",
        "--out",
        t.to_str().unwrap(),
    ]));
    let r = report(&run(&[
        "quasitile",
        "disjointify",
        "--tiling",
        &format!("@{}", t.display()),
        "--out",
        d.to_str().unwrap(),
    ]));
    assert_eq!(r["result"]["pairwise_disjoint"], true);
    let out: Value = serde_json::from_str(&std::fs::read_to_string(&d).unwrap()).unwrap();
    assert_valid(&schema("quasitiling.schema.json"), &out);
    // disjoint tiles pass at any ε
    let c = report(&run(&[
        "quasitile",
        "check",
        "--tiling",
        &format!("@{}", d.display()),
        "--eps",
        "1/100",
    ]));
    assert_eq!(c["result"]["eps_disjoint"], true);
}

#[test]
fn verify_core_lemma_is_clean_and_reproducible() {
    let args = [
        "verify",
        "core-lemma",
        "--group",
        "z2",
        "--trials",
        "1000",
        "--eps",
        "0.3",
        "--seed",
        "7",
    ];
    let a = run(&args);
    let b = run(&args);
    let r = report(&a);
    assert_eq!(r["result"]["violations"], 0);
    assert_eq!(r["result"]["trials"], 1000);
    assert_eq!(r["config"]["seed"], 7);
    assert_eq!(a.stdout, b.stdout, "reports differ between identical runs");
}

#[test]
fn thread_count_does_not_change_results() {
    let args = ["verify", "absorb", "--trials", "20", "--seed", "3"];
    let one = bin().args(args).env("QUASITILE_THREADS", "1").output().unwrap();
    let four = bin().args(args).env("QUASITILE_THREADS", "4").output().unwrap();
    assert_eq!(report(&one)["result"], report(&four)["result"]);
}

#[test]
fn unknown_group_exits_2() {
    let out = run(&["marker", "--group", "q7", "--window", "10", "--side", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn unknown_subcommand_and_suite_exit_2() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["verify", "no-such-suite"]).status.code(), Some(2));
}

#[test]
fn domain_errors_exit_2() {
    let out = run(&[
        "quasitile",
        "build",
        "--group",
        "z2",
        "--window",
        "16",
        "--shapes",
        "4",
        "--eps",
        "0.7",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("1/2"));
}

#[test]
fn capacity_error_exits_3_and_names_the_cap() {
    let out = run(&["folner", "scan", "--group", "z2", "--n-max", "20000"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Følner set size"));
    let out = run(&["entropy", "bernoulli", "--p", "0.5,0.5", "--group", "z2", "--side", "6"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn density_report_matches_schema() {
    // even columns of a 16×16 window: density 1/2 over 2×2 boxes
    let cells: Vec<[i64; 2]> = (0..16).step_by(2).flat_map(|x| (0..16).map(move |y| [x, y])).collect();
    let h = serde_json::to_string(&cells).unwrap();
    let r = report(&run(&[
        "density", "--group", "z2", "--h", &h, "--f-side", "2", "--window", "16",
    ]));
    assert_valid(&schema("density_report.schema.json"), &r["result"]);
    assert_eq!(r["result"]["value_num"], 1);
    assert_eq!(r["result"]["value_den"], 2);
}

#[test]
fn folner_scan_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("scan.csv");
    let r = report(&run(&[
        "folner",
        "scan",
        "--group",
        "z2",
        "--n-max",
        "5",
        "--csv",
        csv.to_str().unwrap(),
    ]));
    assert_eq!(r["result"]["rows"].as_array().unwrap().len(), 5);
    let text = std::fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,size,defect_num,defect_den,defect"));
    // n = 4: defect 4/4, stored reduced
    let row4: Vec<&str> = lines.nth(3).unwrap().split(',').collect();
    assert_eq!(&row4[..4], &["4", "16", "1", "1"]);
}

#[test]
fn configuration_json_and_binary_give_the_same_rate() {
    use quasitile_core::symbolic::Configuration;
    use quasitile_core::{GroupSpec, Window};
    let w = Window::cube(GroupSpec::Zd(2), 17).unwrap();
    let y = Configuration::from_fn(w, 2, |g| ((g.coords()[0] + g.coords()[1]).rem_euclid(2)) as u8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let json_path = dir.path().join("y.json");
    let bin_path = dir.path().join("y.qtcf");
    std::fs::write(&json_path, serde_json::to_string(&y.to_json()).unwrap()).unwrap();
    y.write_binary(std::fs::File::create(&bin_path).unwrap()).unwrap();
    assert_valid(&schema("configuration.schema.json"), &y.to_json());

    let a = report(&run(&[
        "entropy",
        "rate",
        "--config",
        &format!("@{}", json_path.display()),
        "--side",
        "2",
    ]));
    let b = report(&run(&[
        "entropy",
        "rate",
        "--config",
        &format!("@{}", bin_path.display()),
        "--side",
        "2",
    ]));
    assert_eq!(a["result"], b["result"]);
    let h = a["result"]["h_n_hat"].as_f64().unwrap();
    assert!((h - std::f64::consts::LN_2 / 4.0).abs() < 1e-12);
}

#[test]
fn group_and_marker_commands() {
    let r = report(&run(&["group", "--group", "h3", "--op", "inv", "--a", "[1,2,3]"]));
    // (a,b,c)^{-1} = (-a, -b, ab - c)
    assert_eq!(r["result"]["result"], serde_json::json!([-1, -2, -1]));
    let m = report(&run(&["marker", "--group", "z1", "--window", "20", "--side", "3"]));
    assert_eq!(
        m["result"]["markers"],
        serde_json::json!([[0], [3], [6], [9], [12], [15]])
    );
    assert_eq!(m["result"]["report"]["interior_covered"], true);
}
