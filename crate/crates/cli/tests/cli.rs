use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn snd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snd"))
        .args(args)
        .env_remove("SND_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn close(v: &Value, want: f64) -> bool {
    (v.as_f64().unwrap() - want).abs() < 1e-9
}

#[test]
fn metrics_on_matrices() {
    let dir = TempDir::new().unwrap();
    let zero = write(dir.path(), "zero.csv", "0,0,0,0\n0,0,0,0\n0,0,0,0\n0,0,0,0\n");
    let r = stdout_json(&snd(&["metrics", "--matrix", &zero]));
    assert_eq!(r["snd"], 0.0);
    assert_eq!(r["hse"], 0.0);
    assert_eq!(r["n"], 4);
    assert!(r["contributions"].as_array().unwrap().iter().all(|c| close(c, 0.25)));

    let eq = write(dir.path(), "eq.csv", "0,1,1,1\n1,0,1,1\n1,1,0,1\n1,1,1,0\n");
    let r = stdout_json(&snd(&["metrics", "--matrix", &eq]));
    assert!(close(&r["snd"], 1.0));
    assert!(close(&r["hse"], 2.0));

    let clusters = write(dir.path(), "c.json", r#"{"n": 4, "kind": "wasserstein", "seed": null, "episodes": 0, "values": [[0,0,2,2],[0,0,2,2],[2,2,0,0],[2,2,0,0]]}"#);
    let r = stdout_json(&snd(&["metrics", "--matrix", &clusters]));
    assert!(close(&r["snd"], 4.0 / 3.0));
    assert!(close(&r["hse"], 2.0));
}

#[test]
fn malformed_inputs_fail() {
    let dir = TempDir::new().unwrap();
    let asym = write(dir.path(), "a.csv", "0,1\n2,0\n");
    let out = snd(&["metrics", "--matrix", &asym]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let junk = write(dir.path(), "j.csv", "0,x\n1,0\n");
    assert!(!snd(&["metrics", "--matrix", &junk]).status.success());
    assert!(!snd(&["metrics", "--matrix", "/nonexistent/m.csv"]).status.success());
    assert!(!snd(&["metrics"]).status.success());
}

const TINY: &str = r#"
name = "tiny"
seeds = [0, 1]

[task]
kind = "goal_navigation"
assignment = [0, 1, 1]

[trainer]
iterations = 3
episodes_per_iteration = 2
minibatch_size = 256
epochs = 1
eval_episodes = 1
"#;

fn read_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn train_writes_reproducible_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "tiny.toml", TINY);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for (out, parallel) in [(&out_a, "1"), (&out_b, "2")] {
        let o = snd(&["train", "--config", &cfg, "--out", out.to_str().unwrap(), "--parallel", parallel]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let run = out_a.join("tiny");
    for seed in ["seed-0", "seed-1"] {
        for f in ["log.csv", "log.json", "matrix.csv", "matrix.json", "checkpoint.json", "summary.json"] {
            assert!(run.join(seed).join(f).is_file(), "{seed}/{f}");
        }
    }
    let log = fs::read_to_string(run.join("seed-1/log.csv")).unwrap();
    assert!(log.starts_with("# snd schema 1\n# provenance: "));
    assert!(log.contains("\"seeds\":[1]"));
    assert!(log.contains("\niteration,reward_mean,reward_std,snd,hse,wind,penalty,c0,c1,c2\n"));
    assert_eq!(log.lines().filter(|l| !l.starts_with('#')).count(), 4);

    let summary: Value = serde_json::from_str(&fs::read_to_string(run.join("seed-0/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["provenance"]["config"]["name"], "tiny");
    assert_eq!(summary["final"]["iteration"], 2);

    // thread count and reruns do not change a byte
    assert_eq!(read_tree(&run), read_tree(&out_b.join("tiny")));
    let o = snd(&["train", "--config", &cfg, "--out", out_a.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(read_tree(&run), read_tree(&out_b.join("tiny")));

    // the written matrix and checkpoint feed the metrics command
    let m = stdout_json(&snd(&["metrics", "--matrix", run.join("seed-0/matrix.csv").to_str().unwrap()]));
    let mj = stdout_json(&snd(&["metrics", "--matrix", run.join("seed-0/matrix.json").to_str().unwrap()]));
    assert_eq!(m["snd"], mj["snd"]);
    assert_eq!(mj["batch_size"], 100);
    let ck = run.join("seed-0/checkpoint.json");
    let fresh = stdout_json(&snd(&["metrics", "--checkpoint", ck.to_str().unwrap(), "--config", &cfg, "--episodes", "2"]));
    assert_eq!(fresh["n"], 3);
    assert!(fresh["snd"].as_f64().unwrap() > 0.0);

    // aggregation from the run directory
    let agg = snd(&["aggregate", run.to_str().unwrap()]);
    assert!(agg.status.success());
    let text = String::from_utf8(agg.stdout).unwrap();
    assert!(text.contains("iteration,reward_mean_mean,reward_mean_std,"));
    assert_eq!(fs::read_to_string(run.join("aggregate.csv")).unwrap().lines().filter(|l| !l.starts_with('#')).count(), 4);
}

#[test]
fn seeds_flag_and_env_root() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "tiny.toml", TINY);
    let root = dir.path().join("envroot");
    let o = Command::new(env!("CARGO_BIN_EXE_snd"))
        .args(["train", "--config", &cfg, "--seeds", "7"])
        .env("SND_OUTPUT_ROOT", &root)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(root.join("tiny/seed-7/log.csv").is_file());
    assert!(!root.join("tiny/seed-0").exists());
}

#[test]
fn invalid_config_reports_schema_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "bad.toml", &format!("{TINY}\nunexpected = true\n"));
    let o = snd(&["train", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("invalid config") && err.contains("unexpected"), "{err}");
    assert!(!dir.path().join("tiny").exists());

    let cfg = write(dir.path(), "bad2.toml", &TINY.replace("iterations = 3", "iterations = -3"));
    assert!(!snd(&["train", "--config", &cfg]).status.success());
    assert!(!snd(&["train", "--config", "/nonexistent.toml"]).status.success());
}

#[test]
fn sweep_configs_write_tables() {
    let dir = TempDir::new().unwrap();
    let text = format!("{}\n[sweep]\nagents = [2, 4]\nclusters = 2\n", TINY.replace("seeds = [0, 1]", "seeds = [0]"));
    let cfg = write(dir.path(), "sweep.toml", &text);
    let o = snd(&["train", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(dir.path().join("tiny/table.csv")).unwrap();
    let rows: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "n,snd_mean,snd_std,hse_mean,hse_std,reward_mean,reward_std");
    assert!(rows[1].starts_with("2,") && rows[2].starts_with("4,"));
    assert!(dir.path().join("tiny/n4/seed-0/checkpoint.json").is_file());
}

const STEER: &str = r#"
name = "steer"
[task]
kind = "differential_steering"
n_agents = 4
[policy]
mode = "homogeneous"
[trainer]
iterations = 1
episodes_per_iteration = 1
eval_episodes = 1
"#;

#[test]
fn noise_sweeps() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "steer.toml", STEER);
    let o = snd(&["train", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ck = dir.path().join("steer/seed-0/checkpoint.json");
    let ck = ck.to_str().unwrap();

    let single = snd(&["sweep-noise", "--checkpoint", ck, "--config", &cfg, "--deltas", "0:2:10", "--episodes", "3"]);
    assert!(single.status.success(), "{}", String::from_utf8_lossy(&single.stderr));
    let text = String::from_utf8(single.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "delta,mean,std");
    assert_eq!(rows.len(), 11);
    assert!(rows[10].starts_with("2,"));

    let out = dir.path().join("noise.csv");
    let paired = snd(&[
        "sweep-noise", "--checkpoint", ck, "--baseline", ck, "--config", &cfg, "--deltas", "0:1:3", "--episodes", "3", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(paired.status.success());
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.lines().any(|l| l == "delta,mean,std,p_value_vs_baseline"));

    assert!(!snd(&["sweep-noise", "--checkpoint", ck, "--config", &cfg, "--deltas", "-1:2:10"]).status.success());
    assert!(!snd(&["sweep-noise", "--checkpoint", "/missing.json", "--config", &cfg]).status.success());
    // a checkpoint for a different team does not fit
    let goal_cfg = write(dir.path(), "tiny.toml", TINY);
    assert!(!snd(&["sweep-noise", "--checkpoint", ck, "--config", &goal_cfg]).status.success());
}
