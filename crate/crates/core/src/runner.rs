//! Batch orchestration: every (controller, N) cell of a config is run
//! `runs_per_cell` times with derived seeds, and the traces are averaged.
//!
//! Layout of a batch directory:
//!
//! ```text
//! <batch-id>/
//!   manifest.json
//!   <controller>/<N>/run-<k>.csv       per-interval trace of run k
//!   <controller>/<N>/run-<k>.json      seed and digest of run k
//!   <controller>/<N>/avg-cumulative.csv
//!   <controller>/<N>/avg-rate.csv
//!   <controller>/<N>/avg-interference.csv
//! ```
//!
//! Run seeds come from [`derive_seed`], so any cell can be rebuilt from the
//! config file alone.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::controllers::ControllerKind;
use crate::curves::{CurveKind, PerformanceCurve};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::sim::{simulate, RunSetup, RunTrace, TraceSidecar};

pub const MANIFEST: &str = "manifest.json";
pub const AVG_CUMULATIVE: &str = "avg-cumulative.csv";
pub const AVG_RATE: &str = "avg-rate.csv";
pub const AVG_INTERFERENCE: &str = "avg-interference.csv";

/// Seed of run `run` in cell `(kind, n)`.
///
/// The first eight bytes, little-endian, of
/// `SHA-256("swarmscale/seed/v1" ‖ 0 ‖ master_le ‖ kind ‖ 0 ‖ n_le ‖ run_le)`,
/// where `kind` is the controller name (`CRW`, `DPO`, `GP-DPO`) and the
/// integers are 64-bit.
pub fn derive_seed(master_seed: u64, kind: ControllerKind, n: usize, run: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(b"swarmscale/seed/v1\0");
    h.update(master_seed.to_le_bytes());
    h.update(kind.as_str().as_bytes());
    h.update([0u8]);
    h.update((n as u64).to_le_bytes());
    h.update((run as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("eight bytes"))
}

pub fn default_batch_id(config: &ExperimentConfig) -> String {
    format!("batch-{}", &config.digest()[..12])
}

/// Directory of a cell, relative to the batch root.
pub fn cell_path(kind: ControllerKind, n: usize) -> PathBuf {
    PathBuf::from(kind.as_str()).join(n.to_string())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed { errors: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub controller: ControllerKind,
    pub n: usize,
    pub seeds: Vec<u64>,
    #[serde(flatten)]
    pub status: CellStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub batch_id: String,
    pub config_digest: String,
    /// The config as run, with `output_dir` cleared.
    pub config: ExperimentConfig,
    pub cells: Vec<CellSummary>,
}

impl Manifest {
    pub fn to_json_string(&self) -> String {
        let mut s =
            serde_json::to_string_pretty(self).expect("manifest serialization is infallible");
        s.push('\n');
        s
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Pointwise-mean curves of one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellCurves {
    pub cumulative: PerformanceCurve,
    pub rate: PerformanceCurve,
    pub interference: PerformanceCurve,
}

impl CellCurves {
    /// Averages equal-length traces.
    pub fn average(traces: &[RunTrace]) -> Result<Self> {
        let first = traces
            .first()
            .ok_or_else(|| Error::Precondition("cannot average zero traces".into()))?;
        let len = first.records.len();
        if traces.iter().any(|t| t.records.len() != len) {
            return Err(Error::Precondition("traces differ in length".into()));
        }
        let k = traces.len() as f64;
        let mean = |f: &dyn Fn(&RunTrace, usize) -> f64| -> Vec<f64> {
            (0..len)
                .map(|i| traces.iter().map(|t| f(t, i)).sum::<f64>() / k)
                .collect()
        };
        let dt = first.interval_seconds;
        Ok(Self {
            cumulative: PerformanceCurve::new(
                CurveKind::Cumulative,
                dt,
                mean(&|t, i| t.records[i].cum_delivered as f64),
            )?,
            rate: PerformanceCurve::new(
                CurveKind::IntervalRate,
                dt,
                mean(&|t, i| t.records[i].delivered as f64),
            )?,
            interference: PerformanceCurve::new(
                CurveKind::IntervalRate,
                dt,
                mean(&|t, i| t.records[i].avoid_robot_s + t.records[i].avoid_wall_s),
            )?,
        })
    }

    fn write(&self, dir: &Path) -> Result<()> {
        self.cumulative.write_csv(&dir.join(AVG_CUMULATIVE))?;
        self.rate.write_csv(&dir.join(AVG_RATE))?;
        self.interference.write_csv(&dir.join(AVG_INTERFERENCE))
    }

    fn read(dir: &Path) -> Result<Self> {
        Ok(Self {
            cumulative: PerformanceCurve::read_csv(
                CurveKind::Cumulative,
                &dir.join(AVG_CUMULATIVE),
            )?,
            rate: PerformanceCurve::read_csv(CurveKind::IntervalRate, &dir.join(AVG_RATE))?,
            interference: PerformanceCurve::read_csv(
                CurveKind::IntervalRate,
                &dir.join(AVG_INTERFERENCE),
            )?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub summary: CellSummary,
    /// `None` when any run failed.
    pub curves: Option<CellCurves>,
}

#[derive(Clone, Debug)]
pub struct BatchResult {
    pub dir: PathBuf,
    pub manifest: Manifest,
    /// Curves of every cell that completed.
    pub cells: BTreeMap<(ControllerKind, usize), CellCurves>,
}

impl BatchResult {
    pub fn failed_cells(&self) -> impl Iterator<Item = &CellSummary> {
        self.manifest
            .cells
            .iter()
            .filter(|c| c.status != CellStatus::Ok)
    }

    pub fn curves(&self, kind: ControllerKind, n: usize) -> Option<&CellCurves> {
        self.cells.get(&(kind, n))
    }
}

pub fn run_setup(config: &ExperimentConfig, kind: ControllerKind, n: usize, seed: u64) -> RunSetup {
    let ex = &config.experiment;
    RunSetup {
        params: config.arena.clone(),
        controller: kind,
        controller_params: config.controller.params(),
        num_robots: n,
        tick_seconds: ex.tick_s,
        interval_seconds: ex.interval_s,
        duration_seconds: ex.duration_s,
        throttle: config.throttle(),
        seed,
        config_digest: config.digest(),
    }
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "simulation panicked".to_string()
    }
}

fn run_one(
    config: &ExperimentConfig,
    kind: ControllerKind,
    n: usize,
    run: usize,
    seed: u64,
    cell_dir: &Path,
) -> Result<RunTrace> {
    let setup = run_setup(config, kind, n, seed);
    let trace = match catch_unwind(AssertUnwindSafe(|| simulate(&setup))) {
        Ok(result) => result?,
        Err(payload) => return Err(Error::RunFailed(panic_message(payload))),
    };
    let sidecar = TraceSidecar {
        config_digest: trace.config_digest.clone(),
        seed,
        interval_seconds: trace.interval_seconds,
        controller: kind,
        n,
        run_index: run,
    };
    write_atomic(
        &cell_dir.join(format!("run-{run}.csv")),
        trace.to_csv_string().as_bytes(),
    )?;
    let mut json = serde_json::to_string_pretty(&sidecar)?;
    json.push('\n');
    write_atomic(&cell_dir.join(format!("run-{run}.json")), json.as_bytes())?;
    Ok(trace)
}

/// Runs every repetition of one cell under `batch_dir` and writes the
/// averages. A failed run marks the cell failed; files of the runs that did
/// complete are left in place.
pub fn run_cell(
    config: &ExperimentConfig,
    kind: ControllerKind,
    n: usize,
    batch_dir: &Path,
) -> Result<CellOutcome> {
    let cell_dir = batch_dir.join(cell_path(kind, n));
    std::fs::create_dir_all(&cell_dir).map_err(|e| Error::io(&cell_dir, e))?;
    let seeds: Vec<u64> = (0..config.experiment.runs_per_cell)
        .map(|k| derive_seed(config.experiment.master_seed, kind, n, k))
        .collect();
    let results: Vec<Result<RunTrace>> = seeds
        .par_iter()
        .enumerate()
        .map(|(k, &seed)| run_one(config, kind, n, k, seed, &cell_dir))
        .collect();

    let mut traces = Vec::with_capacity(results.len());
    let mut errors = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(t) => traces.push(t),
            Err(e) => errors.push(format!("run {k}: {e}")),
        }
    }
    if !errors.is_empty() {
        return Ok(CellOutcome {
            summary: CellSummary {
                controller: kind,
                n,
                seeds,
                status: CellStatus::Failed { errors },
            },
            curves: None,
        });
    }
    let curves = CellCurves::average(&traces)?;
    curves.write(&cell_dir)?;
    Ok(CellOutcome {
        summary: CellSummary {
            controller: kind,
            n,
            seeds,
            status: CellStatus::Ok,
        },
        curves: Some(curves),
    })
}

/// Runs every cell of `config` into `out_root/<batch_id>`. The N=1 baselines
/// run before any other size. An existing batch directory is an error
/// unless `force` is set, in which case it is removed first.
pub fn run_batch(
    config: &ExperimentConfig,
    out_root: &Path,
    batch_id: Option<&str>,
    force: bool,
) -> Result<BatchResult> {
    config.validate()?;
    let batch_id = batch_id.map_or_else(|| default_batch_id(config), str::to_string);
    if batch_id.is_empty() || batch_id.contains(['/', '\\']) || batch_id == "." || batch_id == ".."
    {
        return Err(Error::config(
            "batch_id",
            format!("`{batch_id}` is not a plain directory name"),
        ));
    }
    let dir = out_root.join(&batch_id);
    if dir.exists() {
        if !force {
            return Err(Error::OutputExists(dir));
        }
        std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let sizes = config.ladder().sizes().to_vec();
    let cells_for = |sizes: &[usize]| -> Vec<(ControllerKind, usize)> {
        sizes
            .iter()
            .flat_map(|&n| config.controllers().iter().map(move |&k| (k, n)))
            .collect()
    };
    let mut outcomes = Vec::new();
    for phase in [cells_for(&sizes[..1]), cells_for(&sizes[1..])] {
        let done: Vec<Result<CellOutcome>> = phase
            .par_iter()
            .map(|&(k, n)| run_cell(config, k, n, &dir))
            .collect();
        for o in done {
            outcomes.push(o?);
        }
    }
    outcomes.sort_by_key(|o| (o.summary.controller, o.summary.n));

    let mut echo = config.clone();
    echo.experiment.output_dir.clear();
    let manifest = Manifest {
        batch_id,
        config_digest: config.digest(),
        config: echo,
        cells: outcomes.iter().map(|o| o.summary.clone()).collect(),
    };
    write_atomic(&dir.join(MANIFEST), manifest.to_json_string().as_bytes())?;
    let cells = outcomes
        .into_iter()
        .filter_map(|o| o.curves.map(|c| ((o.summary.controller, o.summary.n), c)))
        .collect();
    Ok(BatchResult {
        dir,
        manifest,
        cells,
    })
}

/// Reads a batch written by [`run_batch`]. Nothing is written.
pub fn load_batch(dir: &Path) -> Result<BatchResult> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest = Manifest::from_json_str(&text)?;
    let mut cells = BTreeMap::new();
    for c in &manifest.cells {
        if c.status == CellStatus::Ok {
            let curves = CellCurves::read(&dir.join(cell_path(c.controller, c.n)))?;
            cells.insert((c.controller, c.n), curves);
        }
    }
    Ok(BatchResult {
        dir: dir.to_path_buf(),
        manifest,
        cells,
    })
}
