use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin(name: &str) -> Command {
    let path = match name {
        "privgraph" => env!("CARGO_BIN_EXE_privgraph"),
        "psgg" => env!("CARGO_BIN_EXE_psgg"),
        "fgw" => env!("CARGO_BIN_EXE_fgw"),
        "bounds" => env!("CARGO_BIN_EXE_bounds"),
        _ => unreachable!(),
    };
    let mut c = Command::new(path);
    c.env_remove("PRIVGRAPH_THREADS");
    c
}

fn run(name: &str, args: &[&str]) -> Output {
    bin(name).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_str(&stdout(o)).unwrap()
}

#[test]
fn malformed_flags_print_usage() {
    let o = run("privgraph", &["generate", "--eps", "abc"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("Usage"), "{err}");
    let o = run("privgraph", &["no-such-command"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn table_output() {
    let text = stdout(&run("privgraph", &["table", "--eps", "5,0.1", "--n", "100,1000"]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], ";100;100;1000;1000");
    assert_eq!(lines[1], "eps;Cor5;Cor6;Cor5;Cor6");
    assert!(lines[2].starts_with("5;") || lines[2].starts_with("5.0"));
    assert_eq!(lines.last().unwrap(), &"# decreasing_in_n=true");
    // the alias binary and the nested subcommand agree
    assert_eq!(stdout(&run("bounds", &["table", "--eps", "5,0.1", "--n", "100,1000"])), text);
    assert_eq!(stdout(&run("privgraph", &["bounds", "table", "--eps", "5,0.1", "--n", "100,1000"])), text);
    let comma = stdout(&run("privgraph", &["table", "--eps", "1", "--n", "100", "--csv-sep", ","]));
    assert!(comma.starts_with(",100,100"));
}

#[test]
fn bounds_eval_reports_terms() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("inputs.json");
    let e_abs = 2.0 * (-1f64).exp() / (1.0 - (-2f64).exp());
    fs::write(
        &p,
        serde_json::json!({
            "a": 10.0, "b": 10.0, "n": 1000, "m": 100, "eps": 1.0, "d": 2, "alpha": 0.5, "C": 1.0,
            "L_kappa": 1.0, "diam_omega": 1.0, "max_cell_diam": 0.1, "leb_omega": 1.0,
            "expected_abs_noise": e_abs
        })
        .to_string(),
    )
    .unwrap();
    let v = json(&run("privgraph", &["bounds", "eval", "--json", p.to_str().unwrap()]));
    assert!((v["cor5"]["total"].as_f64().unwrap() - 0.3202).abs() < 5e-5);
    assert!((v["thm3"]["total"].as_f64().unwrap() - 0.1241198725).abs() < 1e-9);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"a": 1}"#).unwrap();
    assert!(!run("privgraph", &["bounds", "eval", "--json", bad.to_str().unwrap()]).status.success());
}

#[test]
fn project_command() {
    for extra in [&[][..], &["--lp"][..]] {
        let mut args = vec!["project", "--weights", "0.5,0.2,0.2"];
        args.extend_from_slice(extra);
        let v = json(&run("privgraph", &args));
        assert!((v["distance"].as_f64().unwrap() - 0.1).abs() < 1e-9);
        let w: Vec<f64> = v["weights"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    let v = json(&run("privgraph", &["project", "--weights", "-0.5,1.0"]));
    assert!((v["distance"].as_f64().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn noisecheck_requirement() {
    let v = json(&run("privgraph", &["noisecheck", "--eps", "1"]));
    assert_eq!(v["satisfied"], true);
    let v = json(&run("privgraph", &["noisecheck", "--noise", "bounded-power:2", "--eps", "1", "--require"]));
    assert_eq!(v["satisfied"], true);

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("table.json");
    fs::write(&p, r#"{"pmf": {"0": 0.1, "1": 0.9}}"#).unwrap();
    let noise = format!("custom:{}", p.display());
    let o = run("privgraph", &["noisecheck", "--noise", &noise, "--eps", "1", "--require"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    // without --require the report is still printed
    let v = json(&run("privgraph", &["noisecheck", "--noise", &noise, "--eps", "1"]));
    assert_eq!(v["satisfied"], false);
}

fn generate(name: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![];
    if name == "privgraph" {
        args.push("generate");
    }
    let out = out.to_str().unwrap();
    args.extend_from_slice(&["--uniform", "40", "--dim", "1", "--eps", "1", "--m", "4", "--seed", "9", "--out", out]);
    args.extend_from_slice(extra);
    run(name, &args)
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn generate_is_reproducible_and_replayable() {
    let (d1, d2, d3) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    stdout(&generate("privgraph", d1.path(), &["--dot"]));
    stdout(&generate("psgg", d2.path(), &["--dot"]));
    let first = snapshot(d1.path());
    assert!(first.iter().any(|(n, _)| n == "pair.json"));
    assert!(first.iter().any(|(n, _)| n.ends_with(".dot")));
    assert_eq!(first, snapshot(d2.path()));

    let manifest = d1.path().join("manifest.json");
    let out3 = d3.path().to_str().unwrap().to_string();
    stdout(&run("privgraph", &["generate", "--config", manifest.to_str().unwrap(), "--out", &out3]));
    assert_eq!(first, snapshot(d3.path()));

    let eval = tempfile::tempdir().unwrap();
    let v = json(&run(
        "privgraph",
        &["evaluate", "--config", manifest.to_str().unwrap(), "--replicates", "4", "--out", eval.path().to_str().unwrap()],
    ));
    assert_eq!(v["replicates"], 4);
    let csv = fs::read_to_string(eval.path().join("evaluation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 + 3);
}

#[test]
fn fgw_distance_between_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    fs::write(&a, r#"{"vertices": [{"attr": [0.5], "id": 0.0}, {"attr": [0.5], "id": 0.0}], "edges": [[0, 1]]}"#).unwrap();
    fs::write(&b, r#"{"vertices": [{"attr": [0.5], "id": 0.0}, {"attr": [0.5], "id": 0.0}], "edges": []}"#).unwrap();
    let args = ["dist", "--from", a.to_str().unwrap(), "--to", b.to_str().unwrap(), "--alpha", "1", "--exact"];
    let v = json(&run("fgw", &args));
    assert_eq!(v["value"].as_f64(), Some(0.5));
    assert_eq!(v["method"], "exact");
    let mut nested = vec!["fgw"];
    nested.extend_from_slice(&args);
    assert_eq!(json(&run("privgraph", &nested)), v);
}

#[test]
fn thread_setting_is_validated() {
    let o = bin("privgraph").env("PRIVGRAPH_THREADS", "many").args(["table", "--eps", "1", "--n", "100"]).output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("PRIVGRAPH_THREADS"));
    let o = bin("privgraph").env("PRIVGRAPH_THREADS", "1").args(["table", "--eps", "1", "--n", "100"]).output().unwrap();
    assert!(o.status.success());
}

#[test]
fn invalid_parameters_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = generate("privgraph", dir.path(), &["--alpha", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}
