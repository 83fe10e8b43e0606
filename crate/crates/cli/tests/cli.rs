use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skewgame"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    run(dir, args).status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn game(dir: &TempDir, kind: &str) -> String {
    ok(dir.path(), &["generate", "--kind", kind]);
    dir.path().join("game.csv").to_str().unwrap().to_string()
}

#[test]
fn generate_writes_the_fixture_bit_exactly() {
    let dir = TempDir::new().unwrap();
    let stdout = ok(dir.path(), &["generate", "--kind", "four_player"]);
    assert!(stdout.contains("game.csv"));
    let m = skewgame::io::read_matrix(&dir.path().join("game.csv")).unwrap();
    assert_eq!(&m, skewgame::generators::four_player_game().matrix());

    ok(dir.path(), &["--format", "json", "generate", "--kind", "four_player"]);
    let m = skewgame::io::read_matrix(&dir.path().join("game.json")).unwrap();
    assert_eq!(&m, skewgame::generators::four_player_game().matrix());
}

#[test]
fn rate_elo_and_hyperbolic() {
    let dir = TempDir::new().unwrap();
    let input = game(&dir, "four_player");
    ok(dir.path(), &["rate", &input, "--method", "elo"]);
    let r = json(&dir.path().join("ratings.json"));
    let ratings: Vec<f64> = r["ratings"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    for (a, b) in ratings.iter().zip([0.87, -0.42, 0.19, -0.64]) {
        assert!((a - b).abs() < 5e-3);
    }
    assert_eq!(r["certified"], false);

    ok(dir.path(), &["rate", &input, "--method", "hyperbolic", "--beta", "7"]);
    let r = json(&dir.path().join("ratings.json"));
    assert_eq!(r["certified"], true);
    let rec = skewgame::io::read_matrix(&dir.path().join("reconstruction.csv")).unwrap();
    assert!(rec[(1, 2)] > 0.0);

    ok(dir.path(), &["rate", &input, "--method", "hyperbolic", "--beta", "auto"]);
    assert_eq!(json(&dir.path().join("ratings.json"))["certified"], true);
}

#[test]
fn auto_beta_on_a_cyclic_game_needs_a_fallback() {
    let dir = TempDir::new().unwrap();
    let input = game(&dir, "cyclic_fixture");
    assert_eq!(code(dir.path(), &["rate", &input, "--method", "hyperbolic", "--beta", "auto"]), 4);
    ok(dir.path(), &["rate", &input, "--method", "hyperbolic", "--beta", "auto", "--fallback-beta", "3"]);
    assert_eq!(json(&dir.path().join("ratings.json"))["beta"], 3.0);
}

#[test]
fn decompose_schur_reconstructs() {
    let dir = TempDir::new().unwrap();
    let input = game(&dir, "five_player");
    ok(dir.path(), &["decompose", &input, "--method", "schur"]);
    let rec = skewgame::io::read_matrix(&dir.path().join("reconstruction.csv")).unwrap();
    let p = skewgame::generators::five_player_game();
    assert!((rec - p.matrix()).abs().max() < 1e-10);
    assert!(dir.path().join("cyclic_1.csv").exists());
    assert!(dir.path().join("cyclic_2.csv").exists());
    assert!(dir.path().join("decomposition.json").exists());
}

#[test]
fn construct_cyclic_is_verified() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["--seed", "4", "generate", "--kind", "cyclic", "--n", "7"]);
    let input = dir.path().join("game.csv");
    ok(dir.path(), &["decompose", input.to_str().unwrap(), "--method", "construct_cyclic"]);
    let c = json(&dir.path().join("construction.json"));
    assert!(c["k"].as_u64().unwrap() >= 1);
}

#[test]
fn learn_is_deterministic_in_the_seed() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let c = TempDir::new().unwrap();
    let input = game(&a, "cyclic_fixture");
    let args = ["learn", &input, "--K", "1", "--M", "2", "--learn-transitive", "false", "--iterations", "200"];
    for (dir, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        let mut full = vec!["--seed", seed];
        full.extend_from_slice(&args);
        ok(dir.path(), &full);
    }
    let read = |d: &TempDir| fs::read_to_string(d.path().join("model.json")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    let hist = fs::read_to_string(a.path().join("history.csv")).unwrap();
    assert!(hist.lines().count() > 1);
    assert!(a.path().join("plot.csv").exists());
}

#[test]
fn eval_writes_a_comparison() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["--seed", "1", "generate", "--kind", "disk_mixture", "--n", "12", "--K", "2"]);
    let input = dir.path().join("game.csv");
    let stdout = ok(dir.path(), &["eval", input.to_str().unwrap(), "--methods", "elo,melo,normal_fitted", "--seeds", "0,1"]);
    assert!(stdout.contains("comparison.csv"));
    let table = fs::read_to_string(dir.path().join("comparison.txt")).unwrap();
    assert!(table.contains("elo") && table.contains("normal_fitted"));
}

#[test]
fn simulate_writes_a_long_trajectory() {
    let dir = TempDir::new().unwrap();
    let input = game(&dir, "four_player");
    ok(dir.path(), &["simulate", &input, "--steps", "20", "--sims", "3"]);
    let t = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = t.lines();
    assert_eq!(lines.next(), Some("step,player_index,rating_mean"));
    assert_eq!(lines.count(), 20 * 4);
}

#[test]
fn config_file_supplies_defaults() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"kind": "polynomial", "n": 6, "power": 1.0, "lambda": 0.5}"#).unwrap();
    ok(dir.path(), &["--config", cfg.to_str().unwrap(), "generate"]);
    let m = skewgame::io::read_matrix(&dir.path().join("game.csv")).unwrap();
    assert_eq!(m.nrows(), 6);

    fs::write(&cfg, "{\"kind\": \"polynomial\",\n \"colour\": 1}").unwrap();
    let out = run(dir.path(), &["--config", cfg.to_str().unwrap(), "generate"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "0,1\n-1,oops\n").unwrap();
    let out = run(dir.path(), &["rate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let skew = dir.path().join("skew.csv");
    fs::write(&skew, "0,0.5\n0.5,0\n").unwrap();
    assert_eq!(code(dir.path(), &["rate", skew.to_str().unwrap()]), 4);

    let missing = dir.path().join("missing.csv");
    assert_eq!(code(dir.path(), &["rate", missing.to_str().unwrap()]), 7);

    assert_eq!(code(dir.path(), &["rate", "--method", "nope"]), 2);
}
