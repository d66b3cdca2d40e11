use std::fs;
use std::path::Path;

use edmdp::agents::AgentVariant;
use edmdp::harness::{
    linear_fit, run_cell, run_sweep, CellStatus, ExperimentConfig, ResultRecord, CURVE_HEADER,
};
use edmdp::Error;
use serde_json::Value;

const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden");

fn config(extra: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!(
        r#"
name = "test"
master_seed = 3
delays = [0, 1]
seeds = [0, 1]
variants = ["delayed", "augmented"]
episodes = 30
{extra}

[environment]
kind = "maze"
size = 4
maze_seed = 2

[hyper]
eval_episodes = 3
"#
    ))
    .unwrap()
}

fn keys(v: &Value) -> Vec<String> {
    let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
    k.sort();
    k
}

fn golden_keys(section: &str) -> Vec<String> {
    let text = fs::read_to_string(Path::new(GOLDEN).join("summary_keys.json")).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    v[section]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s.as_str().unwrap().to_string())
        .collect()
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn single_cell_sweep_writes_one_record() {
    let mut cfg = config("");
    cfg.delays = vec![0];
    cfg.seeds = vec![4];
    cfg.variants = vec![AgentVariant::Delayed];
    let dir = tempfile::tempdir().unwrap();
    let out = run_sweep(&cfg, dir.path()).unwrap();
    assert_eq!(out.records.len(), 1);
    assert_eq!(fs::read_dir(dir.path().join("cells")).unwrap().count(), 1);
    assert_eq!(out.records[0].returns.len(), 30);
    assert_eq!(out.summary.groups.len(), 1);
}

#[test]
fn output_schema_matches_golden_files() {
    let cfg = config("");
    let dir = tempfile::tempdir().unwrap();
    run_sweep(&cfg, dir.path()).unwrap();
    let golden_curve = fs::read_to_string(Path::new(GOLDEN).join("curve_header.csv")).unwrap();
    assert_eq!(golden_curve.trim_end(), CURVE_HEADER.join(","));
    for entry in fs::read_dir(dir.path().join("curves")).unwrap() {
        assert_eq!(first_line(&entry.unwrap().path()), golden_curve.trim_end());
    }
    let golden_threshold =
        fs::read_to_string(Path::new(GOLDEN).join("threshold_header.csv")).unwrap();
    assert_eq!(
        first_line(&dir.path().join("threshold.csv")),
        golden_threshold.trim_end()
    );

    let summary: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(keys(&summary), golden_keys("summary"));
    for group in summary["groups"].as_array().unwrap() {
        assert_eq!(keys(group), golden_keys("group"));
    }
    let cell = dir.path().join("cells").join("delayed_m1_p0_s0.json");
    let record: Value = serde_json::from_str(&fs::read_to_string(cell).unwrap()).unwrap();
    assert_eq!(keys(&record), golden_keys("record"));
    assert!(fs::read_to_string(dir.path().join("tables.md"))
        .unwrap()
        .contains("| delayed |"));
}

#[test]
fn records_reproduce_from_hash_and_seed() {
    let cfg = config("");
    let dir = tempfile::tempdir().unwrap();
    let out = run_sweep(&cfg, dir.path()).unwrap();
    for r in &out.records {
        assert_eq!(r.config_hash, cfg.hash());
        let again = run_cell(&cfg, r.variant, r.delay, r.noise, r.seed).unwrap();
        let bits = |x: &ResultRecord| x.returns.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&again), bits(r));
        assert_eq!(
            again.final_return.map(f64::to_bits),
            r.final_return.map(f64::to_bits)
        );
    }
}

#[test]
fn capacity_cells_are_reported_not_fatal() {
    let mut cfg = config("memory_budget = 100");
    cfg.delays = vec![0, 4];
    let dir = tempfile::tempdir().unwrap();
    let out = run_sweep(&cfg, dir.path()).unwrap();
    let aug = out.summary.group(AgentVariant::Augmented, 4, 0.0).unwrap();
    assert_eq!(aug.status, CellStatus::Capacity);
    assert_eq!(aug.mean, None);
    let del = out.summary.group(AgentVariant::Delayed, 4, 0.0).unwrap();
    assert_eq!(del.status, CellStatus::Ok);
    assert!(del.mean.is_some());
    let tables = fs::read_to_string(dir.path().join("tables.md")).unwrap();
    assert!(tables.contains("N/A"));
}

#[test]
fn config_hash_ignores_the_output_directory() {
    let a = config("");
    let b = config("output_dir = \"elsewhere\"");
    assert_eq!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 16);
    let c = config("memory_budget = 5");
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = config("");
    assert_eq!(
        ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(),
        cfg
    );
}

#[test]
fn bad_configs_are_rejected() {
    let bad = [
        "master_seed = 1\ndelays = []\nseeds = [0]\nvariants = [\"delayed\"]\nepisodes = 1\n[environment]\nkind = \"maze\"\nsize = 4\n",
        "master_seed = 1\ndelays = [0]\nseeds = [0]\nvariants = [\"delayed\"]\nepisodes = 1\nbogus = 2\n[environment]\nkind = \"maze\"\nsize = 4\n",
        "master_seed = 1\ndelays = [0]\nseeds = [0]\nvariants = [\"delayed\"]\nepisodes = 1\nnoises = [0.1]\n[environment]\nkind = \"two-state\"\np = 0.8\ndiscount = 0.5\nepisode_len = 10\n",
    ];
    for text in bad {
        assert!(
            matches!(
                ExperimentConfig::from_toml(text),
                Err(Error::InvalidInput(_) | Error::Parse(_))
            ),
            "{text}"
        );
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        ExperimentConfig::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn linear_fit_recovers_a_line() {
    let x = [0.0, 1.0, 2.0, 3.0];
    let y = [1.0, 3.0, 5.0, 7.0];
    let fit = linear_fit(&x, &y).unwrap();
    assert!((fit.slope - 2.0).abs() < 1e-12 && (fit.intercept - 1.0).abs() < 1e-12);
    assert!((fit.r_squared - 1.0).abs() < 1e-12);
    assert!(linear_fit(&[1.0], &[2.0]).is_none());
}
