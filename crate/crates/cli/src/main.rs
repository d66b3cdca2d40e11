use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use edmdp::augmentation::{
    build_augmented, ma_pi_default, ma_pi_iteration_bound, make_lower_bound_chain, MemoryBudget,
};
use edmdp::env::{two_state_mdp, MazeEnv, MazeGrid};
use edmdp::harness::{run_sweep, run_verify, ExperimentConfig, VerifyOptions};
use edmdp::mdp::{policy_iteration, MdpFile, StationaryDetPolicy};
use edmdp::{Error, Mdp, Result};

const VERIFY_FAILED: u8 = 4;

#[derive(Parser)]
#[command(
    name = "edmdp",
    version,
    about = "Planning and learning under execution delay"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    /// Policy iteration on the given MDP.
    Pi,
    /// Policy iteration on the m-augmented MDP.
    Mapi,
}

#[derive(clap::Args)]
struct Source {
    /// MDP in the JSON file format.
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    mdp: Option<PathBuf>,
    /// `chain:N:GAMMA`, `two-state:P:GAMMA` or `maze:N:SEED:NOISE:GAMMA`.
    #[arg(long)]
    builtin: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an MDP and report values, policy and iteration count.
    Solve {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum, default_value = "pi")]
        method: Method,
        #[arg(long, default_value_t = 0)]
        delay: usize,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the m-augmented MDP of a source MDP.
    Augment {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        delay: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment sweep from a TOML config.
    Sweep {
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the property battery and print a JSON report.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Corrupt one kernel row to exercise the stochasticity check.
        #[arg(long, hide = true)]
        inject_kernel_fault: bool,
    },
    /// Generate a maze, or load one from its ASCII picture.
    MazeGen {
        #[arg(long, required_unless_present = "from_ascii")]
        size: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0.99)]
        discount: f64,
        #[arg(long, conflicts_with = "size")]
        from_ascii: Option<PathBuf>,
        /// Write the ASCII picture here (stdout when neither output is given).
        #[arg(long)]
        ascii: Option<PathBuf>,
        /// Write the MDP view here.
        #[arg(long)]
        mdp: Option<PathBuf>,
    },
}

fn parse_field<T: std::str::FromStr>(spec: &str, field: Option<&str>) -> Result<T> {
    field
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| Error::Parse(format!("malformed builtin spec `{spec}`")))
}

fn builtin(spec: &str) -> Result<Mdp> {
    let mut parts = spec.split(':');
    let kind = parts.next().unwrap_or_default();
    let mut next = || parts.next();
    let mdp = match kind {
        "chain" => {
            let n = parse_field(spec, next())?;
            make_lower_bound_chain(n, parse_field(spec, next())?)?
        }
        "two-state" => {
            let p = parse_field(spec, next())?;
            two_state_mdp(p, parse_field(spec, next())?)?
        }
        "maze" => {
            let n = parse_field(spec, next())?;
            let seed = parse_field(spec, next())?;
            let noise = parse_field(spec, next())?;
            let gamma = parse_field(spec, next())?;
            MazeEnv::new(MazeGrid::generate(n, seed)?, noise, seed)?.mdp(gamma)?
        }
        _ => return Err(Error::Parse(format!("unknown builtin `{kind}`"))),
    };
    if next().is_some() {
        return Err(Error::Parse(format!("malformed builtin spec `{spec}`")));
    }
    Ok(mdp)
}

fn load(source: &Source) -> Result<Mdp> {
    match (&source.mdp, &source.builtin) {
        (Some(path), _) => MdpFile::read(path)?.to_mdp(),
        (None, Some(spec)) => builtin(spec),
        (None, None) => Err(Error::InvalidInput("no MDP given".into())),
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => writeln!(std::io::stdout().lock(), "{text}")?,
    }
    Ok(())
}

fn solve(source: &Source, method: Method, delay: usize, out: Option<&Path>) -> Result<()> {
    let mdp = load(source)?;
    let report = match method {
        Method::Pi => {
            if delay != 0 {
                return Err(Error::InvalidInput(
                    "method pi ignores delay; use mapi".into(),
                ));
            }
            let res = policy_iteration(&mdp, &StationaryDetPolicy::constant(mdp.n_states(), 0))?;
            let bound = ma_pi_iteration_bound(mdp.n_states(), mdp.n_actions(), 0, mdp.discount());
            json!({
                "method": "pi",
                "delay": 0,
                "n_states": mdp.n_states(),
                "n_actions": mdp.n_actions(),
                "table_size": mdp.n_states() * mdp.n_actions(),
                "iterations": res.iterations,
                "bound": bound.to_string(),
                "bound_ok": res.iterations as u128 <= bound,
                "values": res.value.0,
                "policy": res.policy.actions(),
            })
        }
        Method::Mapi => {
            let aug = build_augmented(&mdp, delay, MemoryBudget::from_env())?;
            let res = ma_pi_default(&aug)?;
            json!({
                "method": "mapi",
                "delay": delay,
                "n_states": aug.inner().n_states(),
                "n_actions": aug.inner().n_actions(),
                "base_states": mdp.n_states(),
                "table_size": aug.inner().n_states() * aug.inner().n_actions(),
                "iterations": res.iterations,
                "bound": res.bound.to_string(),
                "bound_ok": res.bound_ok(),
                "values": res.value.0,
                "policy": res.policy.actions(),
            })
        }
    };
    emit(&serde_json::to_string_pretty(&report)?, out)
}

fn augment(source: &Source, delay: usize, out: &Path) -> Result<()> {
    let mdp = load(source)?;
    let aug = build_augmented(&mdp, delay, MemoryBudget::from_env())?;
    aug.to_file()?.write(out)?;
    eprintln!(
        "wrote {} augmented states to {}",
        aug.inner().n_states(),
        out.display()
    );
    Ok(())
}

fn sweep(config: &Path, out: Option<PathBuf>) -> Result<()> {
    let cfg = ExperimentConfig::read(config)?;
    let dir = out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results").join(cfg.hash()));
    let outcome = run_sweep(&cfg, &dir)?;
    let na = outcome
        .summary
        .groups
        .iter()
        .filter(|g| g.mean.is_none())
        .count();
    eprintln!(
        "{} records, {} groups ({} N/A) in {}",
        outcome.records.len(),
        outcome.summary.groups.len(),
        na,
        dir.display()
    );
    Ok(())
}

fn verify(seed: u64, out: Option<&Path>, inject_kernel_fault: bool) -> Result<bool> {
    let report = run_verify(&VerifyOptions {
        inject_kernel_fault,
        seed,
    });
    for c in &report.checks {
        eprintln!(
            "{} {} ({:.1}s)",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.seconds
        );
    }
    emit(&serde_json::to_string_pretty(&report)?, out)?;
    Ok(report.passed)
}

#[allow(clippy::too_many_arguments)]
fn maze_gen(
    size: Option<usize>,
    seed: u64,
    noise: f64,
    discount: f64,
    from_ascii: Option<&Path>,
    ascii: Option<&Path>,
    mdp: Option<&Path>,
) -> Result<()> {
    let grid = match (from_ascii, size) {
        (Some(path), _) => MazeGrid::from_ascii(&fs::read_to_string(path)?)?,
        (None, Some(n)) => MazeGrid::generate(n, seed)?,
        (None, None) => return Err(Error::InvalidInput("give --size or --from-ascii".into())),
    };
    if let Some(path) = mdp {
        MdpFile::from_mdp(&MazeEnv::new(grid.clone(), noise, seed)?.mdp(discount)?)?.write(path)?;
    }
    if ascii.is_some() || mdp.is_none() {
        emit(grid.to_ascii().trim_end(), ascii)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve {
            source,
            method,
            delay,
            out,
        } => solve(&source, method, delay, out.as_deref()).map(|_| true),
        Command::Augment { source, delay, out } => augment(&source, delay, &out).map(|_| true),
        Command::Sweep { config, out } => sweep(&config, out).map(|_| true),
        Command::Verify {
            seed,
            out,
            inject_kernel_fault,
        } => verify(seed, out.as_deref(), inject_kernel_fault),
        Command::MazeGen {
            size,
            seed,
            noise,
            discount,
            from_ascii,
            ascii,
            mdp,
        } => maze_gen(
            size,
            seed,
            noise,
            discount,
            from_ascii.as_deref(),
            ascii.as_deref(),
            mdp.as_deref(),
        )
        .map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(VERIFY_FAILED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
