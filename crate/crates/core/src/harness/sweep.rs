use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::record::{cell_name, run_cell, CellStatus, ResultRecord};
use super::{mean_std, median, ExperimentConfig};
use crate::agents::AgentVariant;
use crate::error::{Error, Result};

/// Header of every curve CSV.
pub const CURVE_HEADER: [&str; 5] = ["seed", "episode", "return", "steps", "epsilon"];

/// Aggregate over the seeds of one (variant, m, noise).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub variant: AgentVariant,
    pub delay: usize,
    pub noise: f64,
    pub status: CellStatus,
    pub seeds: Vec<u64>,
    pub final_returns: Vec<f64>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub median: Option<f64>,
    pub episodes_to_threshold: Vec<Option<usize>>,
    /// Median with unreached seeds counted as never; `None` if that is the
    /// median.
    pub threshold_median: Option<f64>,
    pub table_size: Option<usize>,
    pub wall_clock_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub name: String,
    pub config_hash: String,
    pub episodes: usize,
    pub groups: Vec<GroupSummary>,
}

impl SweepSummary {
    pub fn group(&self, variant: AgentVariant, delay: usize, noise: f64) -> Option<&GroupSummary> {
        self.groups
            .iter()
            .find(|g| g.variant == variant && g.delay == delay && g.noise == noise)
    }
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub records: Vec<ResultRecord>,
    pub summary: SweepSummary,
    pub output_dir: PathBuf,
}

fn threshold_median(values: &[Option<usize>]) -> Option<f64> {
    let mut v: Vec<f64> = values
        .iter()
        .map(|x| x.map_or(f64::INFINITY, |e| e as f64))
        .collect();
    let m = median(&mut v)?;
    m.is_finite().then_some(m)
}

/// Groups records by (variant, m, noise) in sweep order.
pub fn summarize(cfg: &ExperimentConfig, records: &[ResultRecord]) -> SweepSummary {
    let mut groups = Vec::new();
    for &variant in &cfg.variants {
        for &delay in &cfg.delays {
            for &noise in &cfg.noises {
                let cell: Vec<&ResultRecord> = records
                    .iter()
                    .filter(|r| r.variant == variant && r.delay == delay && r.noise == noise)
                    .collect();
                if cell.is_empty() {
                    continue;
                }
                let status = if cell.iter().any(|r| r.status == CellStatus::Capacity) {
                    CellStatus::Capacity
                } else {
                    CellStatus::Ok
                };
                let mut finals: Vec<f64> = cell.iter().filter_map(|r| r.final_return).collect();
                let (mean, std) = match status {
                    CellStatus::Ok => {
                        let (m, s) = mean_std(&finals);
                        (Some(m), Some(s))
                    }
                    CellStatus::Capacity => (None, None),
                };
                let thresholds: Vec<Option<usize>> =
                    cell.iter().map(|r| r.episodes_to_threshold).collect();
                groups.push(GroupSummary {
                    variant,
                    delay,
                    noise,
                    status,
                    seeds: cell.iter().map(|r| r.seed).collect(),
                    final_returns: finals.clone(),
                    mean,
                    std,
                    median: if status == CellStatus::Ok {
                        median(&mut finals)
                    } else {
                        None
                    },
                    threshold_median: if status == CellStatus::Ok {
                        threshold_median(&thresholds)
                    } else {
                        None
                    },
                    episodes_to_threshold: thresholds,
                    table_size: cell[0].table_size,
                    wall_clock_secs: cell.iter().map(|r| r.wall_clock_secs).sum(),
                });
            }
        }
    }
    SweepSummary {
        name: cfg.name.clone(),
        config_hash: cfg.hash(),
        episodes: cfg.episodes,
        groups,
    }
}

/// Runs every cell in parallel, writes one JSON file per cell, then merges
/// them into curves, a summary and Markdown tables under `out`.
pub fn run_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<SweepOutcome> {
    cfg.validate()?;
    let cells_dir = out.join("cells");
    fs::create_dir_all(&cells_dir)?;

    let mut cells = Vec::new();
    for &variant in &cfg.variants {
        for &delay in &cfg.delays {
            for &noise in &cfg.noises {
                for &seed in &cfg.seeds {
                    cells.push((variant, delay, noise, seed));
                }
            }
        }
    }
    cells
        .par_iter()
        .map(|&(variant, delay, noise, seed)| {
            let record = run_cell(cfg, variant, delay, noise, seed)?;
            let path = cells_dir.join(format!("{}.json", record.cell_name()));
            fs::write(path, serde_json::to_string(&record)?)?;
            Ok(())
        })
        .collect::<Result<Vec<()>>>()?;

    let records = cells
        .iter()
        .map(|&(variant, delay, noise, seed)| {
            let path = cells_dir.join(format!("{}.json", cell_name(variant, delay, noise, seed)));
            Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
        })
        .collect::<Result<Vec<ResultRecord>>>()?;

    write_curves(&records, &out.join("curves"))?;
    let summary = summarize(cfg, &records);
    fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    fs::write(out.join("tables.md"), markdown_tables(cfg, &summary))?;
    write_threshold_csv(&summary, &out.join("threshold.csv"))?;
    Ok(SweepOutcome {
        records,
        summary,
        output_dir: out.to_path_buf(),
    })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// One CSV per (variant, m, noise) holding every seed's curve.
fn write_curves(records: &[ResultRecord], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut by_group: BTreeMap<String, Vec<&ResultRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.status == CellStatus::Ok) {
        let key = format!("{}_m{}_p{}", r.variant.name(), r.delay, r.noise);
        by_group.entry(key).or_default().push(r);
    }
    for (key, group) in by_group {
        let mut w = csv::Writer::from_path(dir.join(format!("{key}.csv"))).map_err(csv_err)?;
        w.write_record(CURVE_HEADER).map_err(csv_err)?;
        for r in group {
            for (i, ret) in r.returns.iter().enumerate() {
                w.write_record([
                    r.seed.to_string(),
                    i.to_string(),
                    ret.to_string(),
                    r.steps[i].to_string(),
                    r.epsilons[i].to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

fn write_threshold_csv(summary: &SweepSummary, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "variant",
        "delay",
        "noise",
        "median_episodes",
        "reached",
        "seeds",
    ])
    .map_err(csv_err)?;
    for g in &summary.groups {
        w.write_record([
            g.variant.name().to_string(),
            g.delay.to_string(),
            g.noise.to_string(),
            g.threshold_median.map_or("NA".into(), |m| m.to_string()),
            g.episodes_to_threshold
                .iter()
                .filter(|e| e.is_some())
                .count()
                .to_string(),
            g.seeds.len().to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Final-return table per noise level, variants as rows and delays as
/// columns, plus the matching episodes-to-threshold table.
pub fn markdown_tables(cfg: &ExperimentConfig, summary: &SweepSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# {}\n",
        if cfg.name.is_empty() {
            "sweep"
        } else {
            &cfg.name
        }
    );
    let _ = writeln!(
        out,
        "Greedy return after {} training episodes, mean ± std over {} seeds.\n",
        cfg.episodes,
        cfg.seeds.len()
    );
    let header = |out: &mut String| {
        let _ = write!(out, "| variant |");
        for m in &cfg.delays {
            let _ = write!(out, " m={m} |");
        }
        let _ = write!(out, "\n|---|");
        for _ in &cfg.delays {
            let _ = write!(out, "---|");
        }
        out.push('\n');
    };
    for &noise in &cfg.noises {
        let _ = writeln!(out, "## noise {noise}\n");
        header(&mut out);
        for &variant in &cfg.variants {
            let _ = write!(out, "| {} |", variant.name());
            for &m in &cfg.delays {
                let cell = match summary.group(variant, m, noise) {
                    Some(GroupSummary {
                        mean: Some(mean),
                        std: Some(std),
                        ..
                    }) => format!("{mean:.3} ± {std:.3}"),
                    _ => "N/A".to_string(),
                };
                let _ = write!(out, " {cell} |");
            }
            out.push('\n');
        }
        out.push('\n');
        if cfg.hyper.probe.is_some() {
            let _ = writeln!(out, "Median training episodes to the greedy threshold:\n");
            header(&mut out);
            for &variant in &cfg.variants {
                let _ = write!(out, "| {} |", variant.name());
                for &m in &cfg.delays {
                    let cell = match summary.group(variant, m, noise) {
                        Some(g) if g.status == CellStatus::Ok => g
                            .threshold_median
                            .map_or("not reached".into(), |x| format!("{x}")),
                        _ => "N/A".to_string(),
                    };
                    let _ = write!(out, " {cell} |");
                }
                out.push('\n');
            }
            out.push('\n');
        }
    }
    out
}
