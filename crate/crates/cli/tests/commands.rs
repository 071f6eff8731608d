use std::path::Path;
use std::process::{Command, Output};

fn packplan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_packplan"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = packplan(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn setup(dir: &Path) {
    ok(dir, &["gen-catalog", "--out", "cat.toml", "--seed", "4"]);
    ok(dir, &["gen-scenarios", "--catalog", "cat.toml", "--out", "sc.toml", "--count", "3", "--objects", "15", "--buffer", "3"]);
}

#[test]
fn pack_logs_replay_to_the_same_image() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    setup(d);
    let out = ok(d, &["pack", "--scenarios", "sc.toml", "--container", "16x16x15", "--policy", "dbl", "--render-dir", "img", "--log-dir", "logs"]);
    assert!(out.contains("seed-0:"));
    ok(d, &["render", "--log", "logs/seed-1.json", "--out", "replay.png"]);
    assert_eq!(std::fs::read(d.join("replay.png")).unwrap(), std::fs::read(d.join("img/seed-1.png")).unwrap());
}

#[test]
fn eval_is_reproducible_and_paired() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    setup(d);
    let args = ["eval", "--scenarios", "sc.toml", "--container", "16x16x15", "--policies", "firstfit,hm,random", "--report", "a.csv"];
    let table = ok(d, &args);
    assert_eq!(table.lines().count(), 4);
    let mut again = args;
    again[args.len() - 1] = "b.csv";
    ok(d, &again);
    let a = std::fs::read_to_string(d.join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read_to_string(d.join("b.csv")).unwrap());
    assert_eq!(a.lines().count(), 1 + 9);
    for policy in ["firstfit", "hm", "random"] {
        let scenarios: Vec<&str> = a.lines().filter(|l| l.starts_with(policy)).map(|l| l.split(',').nth(1).unwrap()).collect();
        assert_eq!(scenarios, ["seed-0", "seed-1", "seed-2"]);
    }
    assert!(d.join("a.summary.json").exists());
}

#[test]
fn train_then_evaluate_learned_policy() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    setup(d);
    std::fs::write(
        d.join("train.toml"),
        "train_steps = 10\nwarmup = 8\nbatch_size = 4\nreplay_capacity = 50\n\n[env]\nwidth = 16\nlength = 16\nheight = 15\navoid_distance = 3\n",
    )
    .unwrap();
    ok(d, &["train", "--config", "train.toml", "--scenarios", "sc.toml", "--seed", "3", "--out", "m.ckpt", "--curve", "curve.csv"]);
    assert!(std::fs::read_to_string(d.join("curve.csv")).unwrap().starts_with("step,"));
    let out = ok(d, &["eval", "--scenarios", "sc.toml", "--container", "16x16x15", "--policies", "opa", "--checkpoint", "m.ckpt"]);
    assert!(out.contains("opa"));
    // model built for 16x16 cannot drive a 32x32 container
    assert_eq!(packplan(d, &["eval", "--scenarios", "sc.toml", "--policies", "opa", "--checkpoint", "m.ckpt"]).status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    setup(d);
    assert_eq!(packplan(d, &["--help"]).status.code(), Some(0));
    assert_eq!(packplan(d, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(packplan(d, &["eval", "--scenarios", "sc.toml", "--policies", "nope"]).status.code(), Some(1));
    assert_eq!(packplan(d, &["pack", "--scenarios", "sc.toml", "--policy", "opa"]).status.code(), Some(1));
    assert_eq!(packplan(d, &["pack", "--scenarios", "missing.toml"]).status.code(), Some(2));
    std::fs::write(d.join("broken.toml"), "format = \"packplan-catalog\"\nversion = 99\n").unwrap();
    assert_eq!(packplan(d, &["pack", "--scenarios", "sc.toml", "--catalog", "broken.toml"]).status.code(), Some(2));
    std::fs::write(d.join("log.json"), r#"{"catalog":"cat.toml","scenario":"x","width":4,"length":4,"height":3,"avoid_distance":3,"placements":[{"object_id":0,"buffer_index":0,"orientation":0,"x":0,"y":0,"z":7}]}"#).unwrap();
    assert_eq!(packplan(d, &["render", "--log", "log.json", "--out", "x.png"]).status.code(), Some(2));
}
