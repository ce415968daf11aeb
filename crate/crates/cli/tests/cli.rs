//! The `al` binary: exit codes and the files each subcommand leaves behind.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use albench_core::config::StrategyId;
use common::*;

fn al(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_al"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env("AL_DATA_ROOT", dir.join("data"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn run_then_analyze() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(StrategyId::Uc);
    cfg.num_al_iterations = 1;
    let path = write_config(tmp.path(), "uc.json", &cfg);
    let p = path.to_str().unwrap();
    for (seed, fold) in [("0", "0"), ("1", "0")] {
        let o = al(tmp.path(), &["run", "--config", p, "--seed", seed, "--fold", fold]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    // Rerunning a finished cell is a no-op.
    assert_eq!(code(&al(tmp.path(), &["run", "--config", p, "--seed", "0", "--fold", "0"])), 0);
    let o = al(tmp.path(), &["analyze", "runs", "--out", "rep", "--format", "csv,text"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["accuracy.csv", "significance.csv", "report.txt"] {
        assert!(tmp.path().join("rep").join(f).is_file(), "{f}");
    }
    assert!(!tmp.path().join("rep/accuracy.svg").exists());
}

#[test]
fn configuration_problems_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = al(tmp.path(), &["run", "--config", "nope.json", "--seed", "0", "--fold", "0"]);
    assert_eq!(code(&missing), 2);

    let mut bad = config(StrategyId::Random);
    bad.budget_fraction = 1.5;
    let p = write_config(tmp.path(), "bad.json", &bad);
    assert_eq!(code(&al(tmp.path(), &["run", "--config", p.to_str().unwrap(), "--seed", "0", "--fold", "0"])), 2);

    let mut no_dropout = config(StrategyId::Bald);
    no_dropout.dropout_rate = 0.0;
    let p = write_config(tmp.path(), "bald.json", &no_dropout);
    let o = al(tmp.path(), &["suite", "--config", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("dropout"));
    assert!(!tmp.path().join("runs").exists(), "nothing runs before the check");

    let cfg = write_config(tmp.path(), "ok.json", &config(StrategyId::Random));
    let o = al(tmp.path(), &["run", "--config", cfg.to_str().unwrap(), "--seed", "0", "--fold", "9"]);
    assert_eq!(code(&o), 2, "fold outside the drawn folds");
    assert_eq!(code(&al(tmp.path(), &["frobnicate"])), 2);
}

#[test]
fn model_failures_exit_with_3() {
    // The small CNN needs sides divisible by 4.
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(StrategyId::Random);
    cfg.dataset.synthetic.as_mut().unwrap().side = 6;
    let p = write_config(tmp.path(), "odd.json", &cfg);
    let o = al(tmp.path(), &["run", "--config", p.to_str().unwrap(), "--seed", "0", "--fold", "0"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn other_failures_exit_with_1() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&al(tmp.path(), &["resume", "no/such/run"])), 1);
    std::fs::create_dir_all(tmp.path().join("empty")).unwrap();
    assert_eq!(code(&al(tmp.path(), &["analyze", "empty"])), 1);
}

#[test]
fn transfer_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let mut src = config(StrategyId::Random);
    src.seeds = vec![0];
    src.initial_fold_ids = vec![0];
    src.num_al_iterations = 1;
    let sp = write_config(tmp.path(), "src.json", &src);
    assert_eq!(code(&al(tmp.path(), &["suite", "--config", sp.to_str().unwrap()])), 0);
    let hash = src.content_hash().unwrap().0;
    let mut target = src.clone();
    target.optimizer.epochs = 1;
    let tp = write_config(tmp.path(), "target.json", &target);
    let o = al(tmp.path(), &["transfer", "--source", &hash[..8], "--target-config", tp.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let replay = tmp
        .path()
        .join("runs")
        .join(target.content_hash().unwrap().0)
        .join(format!("from-{}", &hash[..16]))
        .join("0/0/records.jsonl");
    assert_eq!(std::fs::read_to_string(replay).unwrap().lines().count(), 2);
    let o = al(tmp.path(), &["transfer", "--source", "zzzz", "--target-config", tp.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}
