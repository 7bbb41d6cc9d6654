//! Command-line driver.
//!
//! Exit codes: 0 success, 1 usage error, 2 config error, 3 runtime failure.
//! `SWARM_OUT`, when set, replaces the output root from the config file.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::analysis::{
    compute_report, performance_table, report_table, Figure, MetricKind, ReportOptions,
};
use crate::config::ExperimentConfig;
use crate::error::Error;
use crate::io::write_atomic;
use crate::metrics::{AdaptabilityMode, LossNormalization, MetricReport, PhiMode};
use crate::runner::{load_batch, run_batch, CellStatus};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "swarmscale",
    version,
    about = "Swarm foraging batches and swarm-level metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every (controller, N) cell of a config.
    Run {
        config: PathBuf,
        /// Override a config value, e.g. `--set controller.kind=CRW`.
        #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
        overrides: Vec<String>,
        /// Replace an existing batch directory.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        batch_id: Option<String>,
        /// Output root; defaults to $SWARM_OUT, then `experiment.output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config without running anything.
    Validate {
        config: PathBuf,
        #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Compute a metric report from stored batches.
    Metrics {
        /// Batch run under ideal conditions.
        batch: PathBuf,
        /// Batch run under a variance scenario; needed for reactivity and adaptability.
        #[arg(long)]
        variance: Option<PathBuf>,
        /// Metrics to compute; defaults to all that the inputs allow.
        #[arg(long, value_enum, value_delimiter = ',')]
        which: Vec<MetricArg>,
        #[arg(long, value_enum, default_value_t = PhiArg::Mean)]
        phi_mode: PhiArg,
        #[arg(long, value_enum, default_value_t = AdaptArg::Literal)]
        adaptability_mode: AdaptArg,
        #[arg(long, value_enum, default_value_t = LossArg::PerRobot)]
        loss_normalization: LossArg,
        /// Directory for report.json and report.csv; defaults to
        /// `<output root>/reports/<batch id>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write tidy CSV tables for plotting.
    Plotdata {
        #[arg(long, value_enum, value_delimiter = ',', required = true)]
        figure: Vec<FigureArg>,
        #[arg(long)]
        batch: Option<PathBuf>,
        /// A report.json written by `metrics`.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    Scalability,
    Selforg,
    Reactivity,
    Adaptability,
}

impl From<MetricArg> for MetricKind {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Scalability => MetricKind::Scalability,
            MetricArg::Selforg => MetricKind::SelfOrg,
            MetricArg::Reactivity => MetricKind::Reactivity,
            MetricArg::Adaptability => MetricKind::Adaptability,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PhiArg {
    Mean,
    LiteralSum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AdaptArg {
    Literal,
    ScaledIdeal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum LossArg {
    PerRobot,
    RobotSeconds,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FigureArg {
    Performance,
    Scalability,
    Selforg,
    Reactivity,
    Adaptability,
}

impl From<FigureArg> for Figure {
    fn from(f: FigureArg) -> Self {
        match f {
            FigureArg::Performance => Figure::Performance,
            FigureArg::Scalability => Figure::Scalability,
            FigureArg::Selforg => Figure::SelfOrg,
            FigureArg::Reactivity => Figure::Reactivity,
            FigureArg::Adaptability => Figure::Adaptability,
        }
    }
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn output_root(explicit: Option<PathBuf>, config_dir: &str) -> PathBuf {
    explicit
        .or_else(|| {
            std::env::var_os("SWARM_OUT")
                .filter(|v| !v.is_empty())
                .map(PathBuf::from)
        })
        .unwrap_or_else(|| PathBuf::from(config_dir))
}

fn cmd_run(
    config: &Path,
    overrides: &[String],
    force: bool,
    batch_id: Option<&str>,
    out: Option<PathBuf>,
    stdout: &mut dyn Write,
) -> Result<(), Failure> {
    let config = ExperimentConfig::load(config, overrides)?;
    let root = output_root(out, &config.experiment.output_dir);
    let batch = run_batch(&config, &root, batch_id, force)?;
    let _ = writeln!(stdout, "batch {}", batch.manifest.batch_id);
    let _ = writeln!(stdout, "{}", batch.dir.display());
    let _ = writeln!(
        stdout,
        "{:<8} {:>6} {:>14}",
        "control",
        "N",
        format!("P(T={})", config.experiment.duration_s)
    );
    for cell in &batch.manifest.cells {
        let value = match (&cell.status, batch.curves(cell.controller, cell.n)) {
            (CellStatus::Ok, Some(c)) => format!("{:.2}", c.cumulative.last()),
            _ => "failed".to_string(),
        };
        let _ = writeln!(
            stdout,
            "{:<8} {:>6} {:>14}",
            cell.controller.as_str(),
            cell.n,
            value
        );
    }
    let failed: Vec<String> = batch
        .failed_cells()
        .map(|c| format!("{} N={}", c.controller, c.n))
        .collect();
    if !failed.is_empty() {
        return Err(Error::RunFailed(format!(
            "{} cell(s) failed: {}; partial outputs kept under {}",
            failed.len(),
            failed.join(", "),
            batch.dir.display()
        ))
        .into());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_metrics(
    batch: &Path,
    variance: Option<&Path>,
    which: &[MetricArg],
    opts: ReportOptions,
    out: Option<PathBuf>,
    stdout: &mut dyn Write,
) -> Result<(), Failure> {
    let mut which: BTreeSet<MetricKind> = which.iter().map(|&m| m.into()).collect();
    if which.is_empty() {
        which.insert(MetricKind::Scalability);
        which.insert(MetricKind::SelfOrg);
        if variance.is_some() {
            which.insert(MetricKind::Reactivity);
            which.insert(MetricKind::Adaptability);
        }
    }
    let needs_variance =
        which.contains(&MetricKind::Reactivity) || which.contains(&MetricKind::Adaptability);
    if needs_variance && variance.is_none() {
        return Err(Failure::Usage(
            "reactivity and adaptability need a variance batch (--variance DIR)".into(),
        ));
    }
    let ideal = load_batch(batch)?;
    let variance = variance.map(load_batch).transpose()?;
    let report = compute_report(&ideal, variance.as_ref(), &which, &opts)?;
    let out = out.unwrap_or_else(|| {
        output_root(None, "out")
            .join("reports")
            .join(&ideal.manifest.batch_id)
    });
    write_atomic(&out.join("report.json"), report.to_json_string().as_bytes())?;
    write_atomic(&out.join("report.csv"), report.to_csv_string().as_bytes())?;
    let _ = writeln!(stdout, "{}", out.join("report.json").display());
    Ok(())
}

fn cmd_plotdata(
    figures: &[FigureArg],
    batch: Option<&Path>,
    report: Option<&Path>,
    out: &Path,
    stdout: &mut dyn Write,
) -> Result<(), Failure> {
    let batch = batch.map(load_batch).transpose()?;
    let report = match report {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Some(MetricReport::from_json_str(&text)?)
        }
        None => None,
    };
    let mut tables = Vec::new();
    for &f in figures {
        let figure = Figure::from(f);
        let table = match figure {
            Figure::Performance => {
                let b = batch
                    .as_ref()
                    .ok_or_else(|| Failure::Usage("the performance figure needs --batch".into()))?;
                performance_table(b)?
            }
            _ => match (&report, &batch) {
                (Some(r), _) => report_table(r, figure)?,
                (None, Some(b)) if matches!(figure, Figure::Scalability | Figure::SelfOrg) => {
                    let which = [MetricKind::Scalability, MetricKind::SelfOrg]
                        .into_iter()
                        .collect();
                    let r = compute_report(b, None, &which, &ReportOptions::default())?;
                    report_table(&r, figure)?
                }
                _ => {
                    return Err(Failure::Usage(format!(
                        "the {} figure needs --report",
                        figure.as_str()
                    )))
                }
            },
        };
        tables.push((figure, table));
    }
    for (figure, table) in &tables {
        let path = out.join(format!("{}.csv", figure.as_str()));
        write_atomic(&path, table.as_bytes())?;
        let _ = writeln!(stdout, "{}", path.display());
    }
    Ok(())
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{text}");
            } else {
                let _ = write!(stdout, "{text}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Run {
            config,
            overrides,
            force,
            batch_id,
            out,
        } => cmd_run(&config, &overrides, force, batch_id.as_deref(), out, stdout),
        Command::Validate { config, overrides } => ExperimentConfig::load(&config, &overrides)
            .map(|c| {
                let cells = c.controllers().len() * c.experiment.sizes.len();
                let _ = writeln!(
                    stdout,
                    "ok: {cells} cells, {} runs, digest {}",
                    cells * c.experiment.runs_per_cell,
                    c.digest()
                );
            })
            .map_err(Failure::from),
        Command::Metrics {
            batch,
            variance,
            which,
            phi_mode,
            adaptability_mode,
            loss_normalization,
            out,
        } => {
            let opts = ReportOptions {
                phi_mode: match phi_mode {
                    PhiArg::Mean => PhiMode::Mean,
                    PhiArg::LiteralSum => PhiMode::LiteralSum,
                },
                adaptability_mode: match adaptability_mode {
                    AdaptArg::Literal => AdaptabilityMode::Literal,
                    AdaptArg::ScaledIdeal => AdaptabilityMode::ScaledIdeal,
                },
                loss_normalization: match loss_normalization {
                    LossArg::PerRobot => LossNormalization::PerRobot,
                    LossArg::RobotSeconds => LossNormalization::RobotSeconds,
                },
            };
            cmd_metrics(&batch, variance.as_deref(), &which, opts, out, stdout)
        }
        Command::Plotdata {
            figure,
            batch,
            report,
            out,
        } => cmd_plotdata(&figure, batch.as_deref(), report.as_deref(), &out, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Lib(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}
