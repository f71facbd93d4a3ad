use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn avoid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avoid"))
        .args(args)
        .env_remove("AVOID_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_owned()
}

fn write_plan(dir: &TempDir, n: &str, k: &str) -> String {
    let p = path(dir, "plan.json");
    let o = avoid(&["plan", "--n", n, "--k", k, "--out", &p]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    p
}

#[test]
fn plan_nine_four_succeeds_and_embeds_invocation() {
    let dir = TempDir::new().unwrap();
    let p = write_plan(&dir, "9", "4");
    let plan: Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
    assert_eq!(plan["annotations"]["n"], 9);
    assert_eq!(plan["annotations"]["k"], 4);
    let o = avoid(&["plan", "--n", "9", "--k", "4"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout_json(&o)["kind"], "hypercube");
}

#[test]
fn plan_exit_codes() {
    assert_eq!(code(&avoid(&["plan", "--n", "3", "--k", "2"])), 3);
    assert_eq!(code(&avoid(&["plan", "--n", "0", "--k", "2"])), 2);
    assert_eq!(code(&avoid(&["plan", "--n", "9"])), 2);
}

#[test]
fn simulate_zero_rounds_writes_header_only() {
    let dir = TempDir::new().unwrap();
    let p = write_plan(&dir, "9", "4");
    let log = path(&dir, "log.jsonl");
    let o = avoid(&["simulate", "--plan", &p, "--rounds", "0", "--seed", "1", "--out", &log]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&log).unwrap();
    assert_eq!(text.lines().count(), 1);
    let header: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(header["n"], 9);
    assert_eq!(stdout_json(&o)["invocation"][1], "simulate");
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = TempDir::new().unwrap();
    let p = write_plan(&dir, "9", "4");
    let (a, b) = (path(&dir, "a.jsonl"), path(&dir, "b.jsonl"));
    for out in [&a, &b] {
        let o = Command::new(env!("CARGO_BIN_EXE_avoid"))
            .args(["simulate", "--plan", &p, "--rounds", "50", "--out", out])
            .env("AVOID_SEED", "17")
            .output()
            .unwrap();
        assert_eq!(code(&o), 0);
        assert_eq!(stdout_json(&o)["seed"], 17);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn corrupt_plan_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let p = path(&dir, "bad.json");
    std::fs::write(&p, "{\"kind\": \"hypercube\"").unwrap();
    let o = avoid(&["simulate", "--plan", &p, "--rounds", "5", "--out", &path(&dir, "x.jsonl")]);
    assert_eq!(code(&o), 2);
    let missing = path(&dir, "missing.json");
    assert_eq!(code(&avoid(&["verify", "--plan", &missing, "--checks", "markov"])), 2);
}

#[test]
fn unknown_check_is_rejected() {
    let dir = TempDir::new().unwrap();
    let p = write_plan(&dir, "9", "4");
    let o = avoid(&["verify", "--plan", &p, "--checks", "markov,bogus"]);
    assert_eq!(code(&o), 2);
    assert!(o.stdout.is_empty());
}

#[test]
fn verify_plan_exact_checks_pass() {
    let dir = TempDir::new().unwrap();
    let p = write_plan(&dir, "9", "4");
    let o = avoid(&["verify", "--plan", &p, "--checks", "collisions-exhaustive,markov,stationary,waves", "--depth", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let report = stdout_json(&o);
    assert_eq!(report["verdict"], "PASS");
    assert_eq!(report["reports"].as_array().unwrap().len(), 4);
}

#[test]
fn verify_simulated_log_passes() {
    let dir = TempDir::new().unwrap();
    let p = write_plan(&dir, "9", "4");
    let log = path(&dir, "log.jsonl");
    assert_eq!(code(&avoid(&["simulate", "--plan", &p, "--rounds", "2000", "--seed", "5", "--out", &log])), 0);
    let o = avoid(&["verify", "--log", &log, "--checks", "collisions,faithfulness-empirical"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn colliding_log_fails_with_witness() {
    let dir = TempDir::new().unwrap();
    let log = path(&dir, "collide.jsonl");
    std::fs::write(
        &log,
        concat!(
            "{\"construction\":\"hand\",\"initial_positions\":[0,1],\"k\":2,\"loop_mode\":\"unlooped\",\"n\":3,\"seed\":0}\n",
            "{\"t\":0,\"positions\":[0,1],\"moves\":[{\"walker\":0,\"from\":0,\"to\":2},{\"walker\":1,\"from\":1,\"to\":2}],\"rest_wave\":false}\n",
        ),
    )
    .unwrap();
    let o = avoid(&["verify", "--log", &log, "--checks", "collisions"]);
    assert_eq!(code(&o), 1);
    let report = stdout_json(&o);
    assert_eq!(report["verdict"], "FAIL");
    assert_eq!(report["reports"][0]["witness"]["walker"], 1);
    assert_eq!(report["reports"][0]["witness"]["to"], 2);
}

#[test]
fn k3_threshold_scan() {
    let o = avoid(&["scan", "--k3-threshold", "--tol", "1e-6"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "0.500000");
}

#[test]
fn max_walker_scan() {
    let o = avoid(&["scan", "--max-walkers", "--n-range", "8..10"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout);
    let row = out.lines().find(|l| l.split_whitespace().next() == Some("9")).expect("row for n = 9");
    assert_eq!(row.split_whitespace().nth(1), Some("4"));
    assert_eq!(code(&avoid(&["scan", "--max-walkers", "--n-range", "10..5"])), 2);
    assert_eq!(code(&avoid(&["scan", "--max-walkers", "--n-range", "nonsense"])), 2);
}

#[test]
fn build_named_constructions() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "k3.json");
    let o = avoid(&["build", "--construction", "k3-markovian", "--s", "3/4", "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(Path::new(&out).exists());
    assert_eq!(stdout_json(&o)["annotations"]["markovian"], true);

    assert_eq!(code(&avoid(&["build", "--construction", "k3-markovian", "--s", "1/4"])), 2);
    let o = avoid(&["build", "--construction", "composite", "--a", "3", "--b", "2"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout_json(&o)["annotations"]["n"], 6);
    let o = avoid(&["build", "--construction", "hypercube", "--d", "2", "--variant", "looped_plus1"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout_json(&o)["annotations"]["waves"], true);
    assert_eq!(code(&avoid(&["build", "--construction", "nope"])), 2);
}

#[test]
fn continuous_time_check_passes() {
    let dir = TempDir::new().unwrap();
    let p = path(&dir, "c.json");
    assert_eq!(code(&avoid(&["build", "--construction", "composite", "--a", "2", "--b", "2", "--out", &p])), 0);
    let o = avoid(&["ct-check", "--plan", &p, "--rounds", "20000", "--seed", "9"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(stdout_json(&o)["report"]["verdict"], "PASS");
}
