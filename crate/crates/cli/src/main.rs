use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use hybridfit::config::ExperimentConfig;
use hybridfit::problems::{dynamic_problem, export_dynamic, export_static, static_problem, GenOptions, ProblemId};
use hybridfit::report::{read_jsonl, summarize, write_jsonl, write_summary_csv, Record};
use hybridfit::runner::run_experiment;

#[derive(Parser)]
#[command(name = "hybridfit", version, about = "Train and evaluate hybrid additive models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the desk scale factor (dynamical problems).
    #[arg(long, global = true)]
    scale: Option<f64>,
    /// Output directory (`run`) or summary file (`summarize`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Runs an experiment config; writes records.jsonl and summary.csv.
    Run { config: PathBuf },
    /// Rebuilds the summary table from a records file.
    Summarize { records: PathBuf },
    /// Writes a generated problem instance as CSV plus a manifest.
    ExportData { problem: String, seed: u64, dir: PathBuf },
}

fn write_summary(records: &[Record], path: &Path) -> Result<()> {
    let rows = summarize(records)?;
    write_summary_csv(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?), &rows)?;
    Ok(())
}

fn run(cli: &Cli, config: &Path) -> Result<bool> {
    let mut cfg = ExperimentConfig::load(config).with_context(|| format!("loading {}", config.display()))?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(s) = cli.scale {
        cfg.scale = s;
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("results").join(&cfg.name));
    fs::create_dir_all(&out)?;
    let records = run_experiment(&cfg)?;
    write_jsonl(BufWriter::new(File::create(out.join("records.jsonl"))?), &records)?;
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    if failed < records.len() {
        write_summary(&records, &out.join("summary.csv"))?;
    }
    eprintln!("{} records ({} failed) written to {}", records.len(), failed, out.display());
    for r in records.iter().filter(|r| !r.is_ok()) {
        eprintln!(
            "failed: {} {} {} filtered={} replicate={}: {}",
            r.cell.problem,
            r.cell.scheme,
            r.cell.model,
            r.cell.filtered,
            r.replicate,
            r.error.as_deref().unwrap_or("")
        );
    }
    Ok(failed == 0)
}

fn summarize_cmd(cli: &Cli, path: &Path) -> Result<bool> {
    let records = read_jsonl(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))?;
    let out = cli.out.clone().unwrap_or_else(|| path.with_file_name("summary.csv"));
    write_summary(&records, &out)?;
    Ok(records.iter().all(Record::is_ok))
}

fn export(cli: &Cli, problem: &str, seed: u64, dir: &Path) -> Result<bool> {
    let id = ProblemId::parse(problem)?;
    let opts = GenOptions {
        scale: cli.scale.unwrap_or(1.0),
        data_dir: std::env::var_os("HYBRIDFIT_DATA_DIR").map(Into::into),
        ..GenOptions::default()
    };
    if !(opts.scale > 0.0) {
        bail!("scale must be positive");
    }
    if id.is_dynamic() {
        export_dynamic(&dynamic_problem(id, seed, &opts)?, dir)?;
    } else {
        export_static(&static_problem(id, seed, &opts)?, dir)?;
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => run(&cli, config),
        Command::Summarize { records } => summarize_cmd(&cli, records),
        Command::ExportData { problem, seed, dir } => export(&cli, problem, *seed, dir),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
