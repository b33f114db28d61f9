//! Command-line driver: reads a configuration, runs one experiment and writes
//! CSV tables, SVG plots, a summary and a run manifest.

pub mod svg;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Parser;
use sha2::{Digest, Sha256};

use parastab::config::Ini;
use parastab::experiments::{
    fmt_num, run_experiment, ExperimentConfig, ExperimentKind, Report, Table,
};
use parastab::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SIMULATION: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "parastab",
    version,
    about = "Riccati feedback stabilization experiments on a disk"
)]
pub struct Args {
    /// Experiment to run, e.g. stabilize-linear-internal, replay, estimates.
    pub experiment: String,
    /// Configuration file (INI). Optional for `estimates`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a configuration value, `section.key=value`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Simulation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Simulation(_) => EXIT_SIMULATION,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Simulation(m) => m,
        }
    }
}

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config { .. } | Error::MissingSection(_) | Error::SyntaxError { .. }
    )
}

/// Parses the configuration after applying overrides.
pub fn load_config(args: &Args) -> Result<(ExperimentKind, Ini, ExperimentConfig), CliError> {
    let kind: ExperimentKind = args
        .experiment
        .parse()
        .map_err(|e: Error| CliError::Config(e.to_string()))?;
    let (mut ini, base) = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let ini = Ini::parse(&text).map_err(|e| CliError::Config(e.to_string()))?;
            (ini, path.parent().map(Path::to_path_buf))
        }
        None if kind == ExperimentKind::Estimates => (Ini::default(), None),
        None => return Err(CliError::Config(format!("`{kind}` needs --config FILE"))),
    };
    for o in &args.overrides {
        ini.apply_override(o)
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let cfg = ExperimentConfig::from_ini(kind, &ini, base.as_deref())
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok((kind, ini, cfg))
}

/// Writes a table as CSV with `%.17g` numbers.
pub fn write_csv(path: &Path, table: &Table) -> parastab::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    w.write_record(&table.columns)
        .map_err(|e| Error::Io(e.to_string()))?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| fmt_num(*v)))
            .map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn write_summary(path: &Path, report: &Report) -> parastab::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    w.write_record(["key", "value"])
        .map_err(|e| Error::Io(e.to_string()))?;
    for (k, v) in &report.summary {
        w.write_record([k, v])
            .map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn config_hash(ini: &Ini) -> String {
    let digest = Sha256::digest(ini.canonical().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_manifest(
    dir: &Path,
    kind: ExperimentKind,
    ini: &Ini,
    report: &Report,
) -> parastab::Result<()> {
    let mut f = fs::File::create(dir.join("manifest.txt"))?;
    writeln!(f, "experiment={kind}")?;
    writeln!(f, "config_sha256={}", config_hash(ini))?;
    writeln!(f, "parastab_version={}", env!("CARGO_PKG_VERSION"))?;
    writeln!(
        f,
        "tables={}",
        report
            .tables
            .iter()
            .map(|t| t.name.as_str())
            .collect::<Vec<_>>()
            .join(",")
    )?;
    writeln!(
        f,
        "plots={}",
        report
            .plots
            .iter()
            .map(|p| p.name.as_str())
            .collect::<Vec<_>>()
            .join(",")
    )?;
    Ok(())
}

/// Writes every artifact of `report` into `dir`.
pub fn write_report(
    dir: &Path,
    kind: ExperimentKind,
    ini: &Ini,
    report: &Report,
) -> parastab::Result<()> {
    fs::create_dir_all(dir)?;
    for t in &report.tables {
        write_csv(&dir.join(format!("{}.csv", t.name)), t)?;
    }
    for p in &report.plots {
        // Plots whose every point was filtered (e.g. an immediate blow-up) are skipped.
        if p.series.is_empty() {
            log::warn!("plot `{}` has no drawable points", p.name);
            continue;
        }
        fs::write(dir.join(format!("{}.svg", p.name)), svg::render(p)?)?;
    }
    for (name, contents) in &report.files {
        fs::write(dir.join(name), contents)?;
    }
    write_summary(&dir.join("summary.csv"), report)?;
    write_manifest(dir, kind, ini, report)
}

/// Runs the command and returns the summary on success.
pub fn execute(args: &Args) -> Result<Report, CliError> {
    let (kind, ini, cfg) = load_config(args)?;
    let report = run_experiment(&cfg).map_err(|e| {
        if is_config_error(&e) {
            CliError::Config(e.to_string())
        } else {
            CliError::Simulation(e.to_string())
        }
    })?;
    write_report(&args.out, kind, &ini, &report)
        .map_err(|e| CliError::Simulation(e.to_string()))?;
    Ok(report)
}
