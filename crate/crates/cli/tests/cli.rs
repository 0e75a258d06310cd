use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn model(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models").join(name)
}

fn ers(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ers")).args(args).output().expect("ers runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(args: &[&str]) -> (i32, Value) {
    let mut all = vec!["--format", "json"];
    all.extend_from_slice(args);
    let o = ers(&all);
    let v: Value = serde_json::from_slice(&o.stdout).expect("valid json");
    assert_eq!(v["schema"], 1);
    (o.status.code().unwrap(), v)
}

#[test]
fn check_reports_the_corpus_clean() {
    let files: Vec<String> = std::fs::read_dir(model(""))
        .unwrap()
        .map(|e| e.unwrap().path().display().to_string())
        .filter(|p| p.ends_with(".ers"))
        .collect();
    let mut args = vec!["check"];
    args.extend(files.iter().map(String::as_str));
    let o = ers(&args);
    assert!(o.status.success());
    assert!(stdout(&o).ends_with("0 errors, 0 warnings\n"), "{}", stdout(&o));
}

#[test]
fn check_fails_on_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.ers");
    std::fs::write(&p, "mod A is pr B . endm").unwrap();
    let (code, v) = json(&["check", p.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert_eq!(v["diagnostics"][0]["code"], "E-UNKNOWN-MODULE");
}

#[test]
fn reduce_prints_term_and_sort() {
    let trains = model("trains.ers");
    let o = ers(&["reduce", trains.to_str().unwrap(), "-m", "RECKONER", "lmoving | 1 + 1"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "lmoving | 2 : Trans\n");
}

#[test]
fn invariant_exit_codes() {
    let mutex = model("mutex.ers");
    let f = "not (TRAIN1.isCrossing and TRAIN2.isCrossing)";
    let (code, v) = json(&["invariant", mutex.to_str().unwrap(), "-m", "MUTEX-TRAINS", "-f", f]);
    assert_eq!(code, 0);
    assert_eq!(v["verdict"], "holds");
    assert_eq!(v["exhaustive"], true);

    let trains = model("trains.ers");
    let (code, v) = json(&[
        "invariant",
        trains.to_str().unwrap(),
        "-m",
        "RECKONED-TRAINS",
        "-f",
        "not RECKONER.crash",
        "--max-depth",
        "12",
    ]);
    assert_eq!(code, 1);
    assert_eq!(v["verdict"], "violated");
    let trace = v["trace"].as_array().unwrap();
    assert_eq!(trace.len(), 5);
    assert_eq!(trace[4]["term"], "< stopped, stopped, 0 >");
    assert_eq!(trace[1]["sort"], "Stage");

    let (code, v) = json(&["invariant", trains.to_str().unwrap(), "-m", "NOPE", "-f", "true"]);
    assert_eq!(code, 2);
    assert!(v["error"].is_string());
}

#[test]
fn search_found_and_not_found() {
    let trains = model("trains.ers");
    let t = trains.to_str().unwrap();
    let (code, v) = json(&["search", t, "-m", "CONTROLLED-TRAINS", "-g", "CONTROLLER{consec} and RECKONER.areConsec"]);
    assert_eq!(code, 0);
    assert_eq!(v["found"], true);
    assert_eq!(v["trace"].as_array().unwrap().len(), 3);

    let (code, v) = json(&["search", t, "-m", "CONTROLLED-TRAINS", "-g", "RECKONER.crash", "--max-depth", "6"]);
    assert_eq!(code, 1);
    assert_eq!(v["found"], false);
    assert_eq!(v["exhaustive"], false);
}

#[test]
fn split_writes_a_loadable_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rt.ers");
    let trains = model("trains.ers");
    let (code, v) =
        json(&["split", trains.to_str().unwrap(), "-m", "RECKONED-TRAINS", "--prune", "-o", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(v["rules"], 6);
    assert_eq!(v["stats"]["distinct"], 144);
    let o = ers(&["check", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stdout(&o));
    let bounded = |f: &str| stdout(&ers(&["explore", f, "-m", "RECKONED-TRAINS", "--max-depth", "8"]));
    let a = bounded(out.to_str().unwrap());
    assert_eq!(a, bounded(trains.to_str().unwrap()));
    assert!(a.starts_with("RECKONED-TRAINS: 30 stages, 42 edges"), "{a}");
}

#[test]
fn explore_writes_dot_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let (dot, js) = (dir.path().join("g.dot"), dir.path().join("g.json"));
    let m = model("mutex.ers");
    let m = m.to_str().unwrap();
    assert!(ers(&["explore", m, "-m", "MUTEX-TRAINS", "--dot", dot.to_str().unwrap()]).status.success());
    assert!(std::fs::read_to_string(&dot).unwrap().starts_with("digraph"));
    let (code, v) = json(&["explore", m, "-m", "MUTEX-TRAINS", "--json", js.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(v["nodes"], 35);
    let g: Value = serde_json::from_str(&std::fs::read_to_string(&js).unwrap()).unwrap();
    assert_eq!(g["nodes"].as_array().unwrap().len(), 35);
    assert_eq!(g["edges"].as_array().unwrap().len(), 100);
}
