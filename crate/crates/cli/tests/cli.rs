use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn edmdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edmdp"))
        .args(args)
        .env_remove("EDMDP_MEMORY_BUDGET")
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn sorted_keys(v: &Value) -> Vec<String> {
    let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
    k.sort();
    k
}

fn golden(method: &str) -> Vec<String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/solve_keys.json");
    let v: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    v[method]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s.as_str().unwrap().to_string())
        .collect()
}

#[test]
fn solve_chain_reports_n_plus_one_iterations() {
    let out = edmdp(&["solve", "--builtin", "chain:3:0.9", "--method", "pi"]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    assert_eq!(sorted_keys(&report), golden("pi"));
    assert_eq!(report["iterations"], 4);
    assert_eq!(report["bound_ok"], true);
    assert_eq!(report["n_states"], 5);
}

#[test]
fn solve_mapi_on_two_state() {
    let out = edmdp(&[
        "solve",
        "--builtin",
        "two-state:0.8:0.5",
        "--method",
        "mapi",
        "--delay",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    assert_eq!(sorted_keys(&report), golden("mapi"));
    assert_eq!(report["n_states"], 4);
    assert_eq!(report["table_size"], 8);
    assert_eq!(report["bound_ok"], true);
    assert_eq!(report["values"].as_array().unwrap().len(), 4);
}

#[test]
fn solve_reads_files_written_by_augment_and_maze_gen() {
    let dir = tempfile::tempdir().unwrap();
    let maze = dir.path().join("maze.json");
    let maze_s = maze.to_str().unwrap();
    let out = edmdp(&[
        "maze-gen", "--size", "3", "--seed", "4", "--noise", "0.1", "--mdp", maze_s,
    ]);
    assert_eq!(out.status.code(), Some(0));
    let aug = dir.path().join("aug.json");
    let out = edmdp(&[
        "augment",
        "--mdp",
        maze_s,
        "--delay",
        "1",
        "--out",
        aug.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let out = edmdp(&["solve", "--mdp", aug.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["n_states"], 36);
}

#[test]
fn maze_gen_ascii_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let pic = dir.path().join("maze.txt");
    let out = edmdp(&[
        "maze-gen",
        "--size",
        "5",
        "--seed",
        "9",
        "--ascii",
        pic.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let first = fs::read_to_string(&pic).unwrap();
    assert_eq!(first.lines().count(), 11);
    let out = edmdp(&["maze-gen", "--from-ascii", pic.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        String::from_utf8(out.stdout).unwrap().trim_end(),
        first.trim_end()
    );
}

#[test]
fn invalid_input_exits_with_two() {
    for args in [
        &["solve", "--builtin", "chain:x:0.9"][..],
        &["solve", "--builtin", "nothing:1"],
        &["solve", "--builtin", "chain:3:0.9", "--delay", "2"],
        &["solve", "--mdp", "/nonexistent/file.json"],
        &["sweep", "/nonexistent/config.toml"],
    ] {
        assert_eq!(edmdp(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn malformed_mdp_file_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{ not json").unwrap();
    assert_eq!(
        edmdp(&["solve", "--mdp", path.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn capacity_exits_with_three() {
    let out = edmdp(&[
        "solve",
        "--builtin",
        "maze:8:1:0:0.9",
        "--method",
        "mapi",
        "--delay",
        "20",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let out = Command::new(env!("CARGO_BIN_EXE_edmdp"))
        .args([
            "solve",
            "--builtin",
            "two-state:0.8:0.5",
            "--method",
            "mapi",
            "--delay",
            "4",
        ])
        .env("EDMDP_MEMORY_BUDGET", "8")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn verify_with_injected_fault_flags_the_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = edmdp(&[
        "verify",
        "--inject-kernel-fault",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    let report: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
    let check = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "mdp.kernel_rows_stochastic")
        .unwrap();
    assert_eq!(check["passed"], false);
}

#[test]
fn sweep_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(
        &cfg,
        "master_seed = 1\ndelays = [0, 2]\nseeds = [0]\nvariants = [\"delayed\", \"oblivious\"]\nepisodes = 10\n\
         [environment]\nkind = \"maze\"\nsize = 3\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = edmdp(&[
        "sweep",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out_dir.join("summary.json").exists());
    assert!(out_dir.join("tables.md").exists());
    assert_eq!(fs::read_dir(out_dir.join("cells")).unwrap().count(), 4);
}
