use serde_json::Value;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cvp-mass"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn write_config(name: &str, text: &str) -> PathBuf {
    let p = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn records(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn check<'a>(recs: &'a [Value], name: &str) -> &'a Value {
    recs.iter()
        .find(|r| r["record"] == "check" && r["name"].as_str().is_some_and(|n| n.starts_with(name)))
        .unwrap_or_else(|| panic!("no check {name}"))
}

#[test]
fn moments_top_hat() {
    let out = run(&["moments", "--set", "kernel.kind=\"top_hat\""]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let recs = records(&out);
    assert_eq!(recs[0]["record"], "provenance");
    assert!(recs[0]["kernel_moments"].is_object());
    assert!(recs[0]["config"].is_object());
    let c = check(&recs, "s2_over_s");
    assert!((c["value"].as_f64().unwrap() - 0.6).abs() < 1e-10);
    assert!(c["error_estimate"].is_number());
    assert_eq!(recs.last().unwrap()["status"], "ok");
}

#[test]
fn malformed_config_is_rejected_with_a_pointer() {
    let p = write_config("malformed.toml", "seed = 3\n[kernel\ndelta = 1.0\n");
    let out = run(&["moments", "--config", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn unknown_keys_are_rejected() {
    let out = run(&["moments", "--set", "kernel.width=2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("width"));
}

#[test]
fn empty_sweep_is_rejected() {
    let p = write_config("empty_sweep.toml", "[schwarzschild.sweep]\nparameter = \"delta_over_r0\"\nvalues = []\n");
    let out = run(&["schwarzschild", "--config", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).to_lowercase().contains("sweep"));
}

#[test]
fn unknown_scenario_is_rejected() {
    let out = run(&["wormhole"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schwarzschild"));
}

#[test]
fn csv_sweep_has_the_documented_columns() {
    let p = write_config(
        "sweep.toml",
        "[schwarzschild]\naligned = false\np_of_r = false\n[schwarzschild.sweep]\nparameter = \"delta_over_r0\"\nvalues = [0.1, 0.05]\n",
    );
    let out = run(&["schwarzschild", "--config", p.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(str::to_owned).collect();
    assert_eq!(&header[..6], ["R0", "direct", "m0", "m1", "aligned", "p_of_r"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    let r0: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(r0, [10.0, 20.0]);
    assert!(rows.iter().all(|r| r[4].is_empty() && r[5].is_empty()));
}

#[test]
fn schwarzschild_alias_flags_and_determinism() {
    let args = [
        "schwarzschild",
        "--M",
        "1",
        "--delta-over-R0",
        "0.05",
        "--set",
        "schwarzschild.aligned=false",
        "--set",
        "schwarzschild.p_of_r=false",
    ];
    let a = run(&args);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    let recs = records(&a);
    let n = check(&recs, "normalized_direct_mass")["value"].as_f64().unwrap();
    assert!((1.326..=1.466).contains(&n), "{n}");
    assert_eq!(recs[0]["config"]["schwarzschild"]["mass"], 1.0);
    let b = run(&args);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn output_file_is_written() {
    let p = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("moments.jsonl");
    let out = run(&["moments", "--out", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(text.lines().all(|l| serde_json::from_str::<Value>(l).is_ok()));
}
