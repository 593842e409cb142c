//! `cvgate`: runs a reproduction scenario and writes `<scenario>.csv` and
//! `<scenario>.json` to the output directory.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails, 2 on usage,
//! configuration or I/O errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cvgate_core::scenarios::{self, Scenario, ScenarioConfig};
use cvgate_core::{Ancilla, Report};
use tempfile::NamedTempFile;

#[derive(Debug, Parser)]
#[command(name = "cvgate", version, about = "Cluster-state gate sequence: reproduction scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the network decomposition and the nullifier closed forms.
    ClusterVerify(Common),
    /// Nullifier levels and inseparability sums.
    Figure2(Common),
    /// Entanglement degree versus gate squeezing.
    Figure4(Common),
    /// Output noise levels: ideal, cluster and coherent substitute.
    Figure5(Common),
    /// Propagation of coherent modulations.
    Figure6(Common),
    /// Fidelity versus gate squeezing, cluster against substitute.
    Figure8(Common),
    /// Gains, entanglement degrees and fidelities at the ten tabulated points.
    Table1(Common),
    /// Monte-Carlo sampling against the analytic engine.
    McValidate(Common),
}

impl Command {
    fn split(&self) -> (Scenario, &Common) {
        match self {
            Command::ClusterVerify(c) => (Scenario::ClusterVerify, c),
            Command::Figure2(c) => (Scenario::Figure2, c),
            Command::Figure4(c) => (Scenario::Figure4, c),
            Command::Figure5(c) => (Scenario::Figure5, c),
            Command::Figure6(c) => (Scenario::Figure6, c),
            Command::Figure8(c) => (Scenario::Figure8, c),
            Command::Table1(c) => (Scenario::Table1, c),
            Command::McValidate(c) => (Scenario::McValidate, c),
        }
    }
}

#[derive(Debug, Args)]
struct Common {
    /// Flat TOML configuration; flags below override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out_dir: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    shots: Option<u64>,
    /// NOPA squeezing in dB (≤ 0).
    #[arg(long, allow_hyphen_values = true)]
    cluster_db: Option<f64>,
    /// Comma-separated cluster levels (figure4); a single value elsewhere.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    cluster: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    gate_db: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    gate_dbs: Option<Vec<f64>>,
    #[arg(long)]
    sweep_step_db: Option<f64>,
    /// vacuum, psq:<dB>, coh-x:<dB> or coh-p:<dB>.
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<String>,
    /// As --alpha; a bare number is a p-squeezed level. Comma-separated list
    /// for figure4.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    beta: Option<Vec<String>>,
    #[arg(long)]
    modulation_db: Option<f64>,
    /// cluster or coherent-substitute.
    #[arg(long)]
    ancilla: Option<String>,
    #[arg(long)]
    efficiency: Option<f64>,
    #[arg(long)]
    phase_jitter_deg: Option<f64>,
    #[arg(long)]
    jitter_correction: Option<bool>,
    #[arg(long)]
    calibrated_gains: Option<bool>,
    #[arg(long)]
    mc_threshold: Option<f64>,
    /// Suppress the per-check listing.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Checks,
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn load_config(path: Option<&Path>) -> Result<ScenarioConfig, Failure> {
    match path {
        None => Ok(ScenarioConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))
        }
    }
}

fn single<T: Clone>(flag: &str, v: &[T]) -> Result<T, Failure> {
    match v {
        [x] => Ok(x.clone()),
        _ => Err(usage(format!("--{flag} takes a single value for this command"))),
    }
}

fn apply_flags(cfg: &mut ScenarioConfig, scenario: Scenario, f: &Common) -> Result<(), Failure> {
    if let Some(v) = &f.out_dir {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = f.seed {
        cfg.seed = v;
    }
    if let Some(v) = f.shots {
        cfg.shots = v;
    }
    if let Some(v) = f.cluster_db {
        cfg.cluster_db = v;
    }
    if let Some(v) = &f.cluster {
        if scenario == Scenario::Figure4 {
            cfg.cluster_dbs = v.clone();
        } else {
            cfg.cluster_db = single("cluster", v)?;
        }
    }
    if let Some(v) = f.gate_db {
        cfg.gate_db = v;
    }
    if let Some(v) = &f.gate_dbs {
        cfg.gate_dbs = v.clone();
    }
    if let Some(v) = f.sweep_step_db {
        cfg.sweep_step_db = v;
    }
    if let Some(v) = &f.alpha {
        cfg.alpha = v.clone();
    }
    if let Some(v) = &f.beta {
        if scenario == Scenario::Figure4 {
            cfg.betas = v.clone();
        } else {
            cfg.beta = single("beta", v)?;
        }
    }
    if let Some(v) = f.modulation_db {
        cfg.modulation_db = v;
    }
    if let Some(v) = &f.ancilla {
        cfg.ancilla = match v.as_str() {
            "cluster" => Ancilla::Cluster,
            "coherent-substitute" | "substitute" => Ancilla::CoherentSubstitute,
            other => return Err(usage(format!("unknown ancilla '{other}'"))),
        };
    }
    if let Some(v) = f.efficiency {
        cfg.efficiency = v;
    }
    if let Some(v) = f.phase_jitter_deg {
        cfg.phase_jitter_deg = v;
    }
    if let Some(v) = f.jitter_correction {
        cfg.jitter_correction = v;
    }
    if let Some(v) = f.calibrated_gains {
        cfg.calibrated_gains = v;
    }
    if let Some(v) = f.mc_threshold {
        cfg.mc_threshold = v;
    }
    Ok(())
}

fn staged(dir: &Path, contents: &str) -> std::io::Result<NamedTempFile> {
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    Ok(tmp)
}

/// Writes both files or neither.
fn emit(report: &Report, dir: &Path) -> Result<(PathBuf, PathBuf), Failure> {
    let csv = report.to_csv().map_err(usage)?;
    let json = report.to_json().map_err(usage)?;
    fs::create_dir_all(dir).map_err(|e| usage(format!("cannot create {}: {e}", dir.display())))?;
    let csv_path = dir.join(format!("{}.csv", report.scenario));
    let json_path = dir.join(format!("{}.json", report.scenario));
    let io = |e: std::io::Error| usage(format!("write to {} failed: {e}", dir.display()));
    let csv_tmp = staged(dir, &csv).map_err(io)?;
    let json_tmp = staged(dir, &json).map_err(io)?;
    csv_tmp
        .persist(&csv_path)
        .map_err(|e| usage(format!("cannot write {}: {}", csv_path.display(), e.error)))?;
    if let Err(e) = json_tmp.persist(&json_path) {
        let _ = fs::remove_file(&csv_path);
        return Err(usage(format!("cannot write {}: {}", json_path.display(), e.error)));
    }
    Ok((csv_path, json_path))
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let (scenario, flags) = cli.command.split();
    let mut cfg = load_config(flags.config.as_deref())?;
    apply_flags(&mut cfg, scenario, flags)?;
    let report = scenarios::run(scenario, &cfg).map_err(usage)?;
    let (csv_path, json_path) = emit(&report, Path::new(&cfg.out_dir))?;

    if !flags.quiet {
        for c in &report.checks {
            println!("{} {}: {}", if c.passes { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
    }
    let failed = report.checks.iter().filter(|c| !c.passes).count();
    println!(
        "{scenario}: {} of {} checks passed; wrote {} and {}",
        report.checks.len() - failed,
        report.checks.len(),
        csv_path.display(),
        json_path.display()
    );
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
