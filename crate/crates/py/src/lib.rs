//! Python bindings: `import swarmscale`.

use std::collections::BTreeSet;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use swarmscale::analysis::{self, MetricKind, ReportOptions};
use swarmscale::config::ExperimentConfig;
use swarmscale::controllers::ControllerKind;
use swarmscale::curves::{self, CurveKind, PerformanceCurve, TimeGrid};
use swarmscale::metrics::{self, AdaptabilityMode, LossCurve, PhiMode};
use swarmscale::runner;
use swarmscale::sim;
use swarmscale::variance::{self, StepKind, VarianceProfile};

fn err(e: swarmscale::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn controller(name: &str) -> PyResult<ControllerKind> {
    name.parse().map_err(err)
}

fn step_kind(name: &str) -> PyResult<StepKind> {
    match name {
        "step_up" => Ok(StepKind::StepUp),
        "step_down" => Ok(StepKind::StepDown),
        other => Err(PyValueError::new_err(format!(
            "unknown step kind `{other}`; expected step_up or step_down"
        ))),
    }
}

fn curve_kind(name: &str) -> PyResult<CurveKind> {
    match name {
        "cumulative" => Ok(CurveKind::Cumulative),
        "interval_rate" => Ok(CurveKind::IntervalRate),
        other => Err(PyValueError::new_err(format!(
            "unknown curve kind `{other}`; expected cumulative or interval_rate"
        ))),
    }
}

fn rate(values: Vec<f64>, interval: f64) -> PyResult<PerformanceCurve> {
    PerformanceCurve::new(CurveKind::IntervalRate, interval, values).map_err(err)
}

/// A performance curve on a uniform grid.
#[pyclass(name = "PerformanceCurve", frozen)]
struct PyCurve(PerformanceCurve);

#[pymethods]
impl PyCurve {
    #[new]
    #[pyo3(signature = (kind, values, interval_seconds=10.0))]
    fn new(kind: &str, values: Vec<f64>, interval_seconds: f64) -> PyResult<Self> {
        PerformanceCurve::new(curve_kind(kind)?, interval_seconds, values)
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.0.kind() {
            CurveKind::Cumulative => "cumulative",
            CurveKind::IntervalRate => "interval_rate",
        }
    }

    #[getter]
    fn interval_seconds(&self) -> f64 {
        self.0.interval_seconds()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn to_interval_rate(&self) -> PyResult<Self> {
        self.0.to_interval_rate().map(Self).map_err(err)
    }

    fn to_csv(&self) -> String {
        self.0.to_csv_string()
    }

    #[staticmethod]
    fn from_csv(kind: &str, text: &str) -> PyResult<Self> {
        PerformanceCurve::from_csv_str(curve_kind(kind)?, text)
            .map(Self)
            .map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "PerformanceCurve({}, {} points, {} s)",
            self.kind(),
            self.0.len(),
            self.0.interval_seconds()
        )
    }
}

/// A validated experiment configuration.
#[pyclass(name = "ExperimentConfig", frozen)]
struct PyConfig(ExperimentConfig);

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (toml="", overrides=Vec::new()))]
    fn new(toml: &str, overrides: Vec<String>) -> PyResult<Self> {
        ExperimentConfig::from_toml_str_with_overrides(toml, &overrides)
            .map(Self)
            .map_err(err)
    }

    fn digest(&self) -> String {
        self.0.digest()
    }

    fn to_toml(&self) -> String {
        self.0.to_toml_string()
    }

    #[getter]
    fn controllers(&self) -> Vec<String> {
        self.0.controllers().iter().map(|c| c.to_string()).collect()
    }

    #[getter]
    fn sizes(&self) -> Vec<usize> {
        self.0.experiment.sizes.clone()
    }
}

#[pyfunction]
fn minmax_map(x: Vec<f64>, lo: f64, hi: f64) -> PyResult<Vec<f64>> {
    curves::minmax_map(&x, lo, hi).map_err(err)
}

#[pyfunction]
fn dtw(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    curves::dtw(&a, &b).map_err(err)
}

/// Observed over projected performance for sizes `n1 < n2`.
#[pyfunction]
#[pyo3(signature = (p1, p2, n1, n2, literal_sum=false))]
fn phi(p1: &PyCurve, p2: &PyCurve, n1: usize, n2: usize, literal_sum: bool) -> PyResult<f64> {
    let mode = if literal_sum {
        PhiMode::LiteralSum
    } else {
        PhiMode::Mean
    };
    metrics::phi(&p1.0, &p2.0, n1, n2, mode).map_err(err)
}

#[pyfunction]
fn scalability_e(n1: usize, n2: usize, phi: f64) -> PyResult<f64> {
    metrics::scalability_e(n1, n2, phi).map_err(err)
}

/// Interference-induced performance loss; `baseline` is the N=1 loss.
#[pyfunction]
#[pyo3(signature = (curve, t_lost, n, baseline=None))]
fn perf_lost(
    curve: &PyCurve,
    t_lost: &PyCurve,
    n: usize,
    baseline: Option<Vec<f64>>,
) -> PyResult<Vec<f64>> {
    let base = baseline.map(|values| LossCurve {
        n: 1,
        controller: ControllerKind::Crw,
        values,
    });
    metrics::perf_lost(&curve.0, &t_lost.0, base.as_ref(), n, ControllerKind::Crw)
        .map(|l| l.values)
        .map_err(err)
}

/// `(Z, theta)` between loss curves of sizes `m` and `2m`.
#[pyfunction]
fn self_org_z(prev: Vec<f64>, cur: Vec<f64>, m: usize) -> PyResult<(f64, Vec<f64>)> {
    let mk = |n, values| LossCurve {
        n,
        controller: ControllerKind::Crw,
        values,
    };
    metrics::self_org_z(&mk(m, prev), &mk(2 * m, cur))
        .map(|s| (s.z, s.theta))
        .map_err(err)
}

#[pyfunction]
fn step_up(t: f64, alpha: f64, beta: f64) -> PyResult<f64> {
    variance::step_up(t, alpha, beta).map_err(err)
}

#[pyfunction]
fn step_down(t: f64, alpha: f64, beta: f64) -> PyResult<f64> {
    variance::step_down(t, alpha, beta).map_err(err)
}

fn profile(
    kind: &str,
    beta: f64,
    alpha: f64,
    duration: f64,
    intervals: usize,
) -> PyResult<VarianceProfile> {
    let grid = TimeGrid::new(duration, intervals).map_err(err)?;
    variance::condition_signals(step_kind(kind)?, beta, alpha, &grid).map_err(err)
}

/// `(ideal, deviation)` condition signals at interval midpoints.
#[pyfunction]
fn condition_signals(
    kind: &str,
    beta: f64,
    alpha: f64,
    duration: f64,
    num_intervals: usize,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let p = profile(kind, beta, alpha, duration, num_intervals)?;
    Ok((p.ideal, p.deviation))
}

/// `(R, P_R*)` for interval-rate curves under a step scenario.
#[pyfunction]
#[pyo3(signature = (p_ideal, p_observed, kind, beta, alpha, interval_seconds=10.0))]
fn reactivity(
    p_ideal: Vec<f64>,
    p_observed: Vec<f64>,
    kind: &str,
    beta: f64,
    alpha: f64,
    interval_seconds: f64,
) -> PyResult<(f64, Vec<f64>)> {
    let n = p_ideal.len();
    let prof = profile(kind, beta, alpha, n as f64 * interval_seconds, n)?;
    metrics::reactivity_r(
        &rate(p_ideal, interval_seconds)?,
        &rate(p_observed, interval_seconds)?,
        &prof,
    )
    .map(|r| (r.r, r.p_r_star))
    .map_err(err)
}

/// `(A, P_A*)`; `r` is the reactivity of the same curves.
#[pyfunction]
#[pyo3(signature = (p_ideal, p_observed, kind, beta, alpha, r, interval_seconds=10.0, scaled_ideal=false))]
#[allow(clippy::too_many_arguments)]
fn adaptability(
    p_ideal: Vec<f64>,
    p_observed: Vec<f64>,
    kind: &str,
    beta: f64,
    alpha: f64,
    r: f64,
    interval_seconds: f64,
    scaled_ideal: bool,
) -> PyResult<(f64, Vec<f64>)> {
    let n = p_ideal.len();
    let prof = profile(kind, beta, alpha, n as f64 * interval_seconds, n)?;
    let mode = if scaled_ideal {
        AdaptabilityMode::ScaledIdeal
    } else {
        AdaptabilityMode::Literal
    };
    metrics::adaptability_a(
        &rate(p_ideal, interval_seconds)?,
        &rate(p_observed, interval_seconds)?,
        &prof,
        Some(r),
        mode,
    )
    .map(|a| (a.a, a.p_a_star))
    .map_err(err)
}

#[pyfunction]
fn derive_seed(master_seed: u64, controller_name: &str, n: usize, run: usize) -> PyResult<u64> {
    Ok(runner::derive_seed(
        master_seed,
        controller(controller_name)?,
        n,
        run,
    ))
}

/// One run; returns `(cumulative, rate, interference)` curves.
#[pyfunction]
fn simulate(
    py: Python<'_>,
    config: &PyConfig,
    controller_name: &str,
    n: usize,
    seed: u64,
) -> PyResult<(PyCurve, PyCurve, PyCurve)> {
    let setup = runner::run_setup(&config.0, controller(controller_name)?, n, seed);
    let grid = config.0.grid();
    let trace = py.detach(|| sim::simulate(&setup)).map_err(err)?;
    Ok((
        PyCurve(trace.cumulative_curve().map_err(err)?),
        PyCurve(trace.rate_curve().map_err(err)?),
        PyCurve(sim::interference_curve(&trace, &grid).map_err(err)?),
    ))
}

/// Runs a batch under `out_root` and returns its directory.
#[pyfunction]
#[pyo3(signature = (config, out_root, batch_id=None, force=false))]
fn run_batch(
    py: Python<'_>,
    config: &PyConfig,
    out_root: PathBuf,
    batch_id: Option<String>,
    force: bool,
) -> PyResult<PathBuf> {
    let batch = py
        .detach(|| runner::run_batch(&config.0, &out_root, batch_id.as_deref(), force))
        .map_err(err)?;
    if let Some(c) = batch.failed_cells().next() {
        return Err(PyValueError::new_err(format!(
            "cell {} N={} failed; see {}",
            c.controller,
            c.n,
            batch.dir.display()
        )));
    }
    Ok(batch.dir)
}

/// Metric report of stored batches as JSON.
#[pyfunction]
#[pyo3(signature = (batch_dir, variance_dir=None))]
fn compute_report(batch_dir: PathBuf, variance_dir: Option<PathBuf>) -> PyResult<String> {
    let ideal = runner::load_batch(&batch_dir).map_err(err)?;
    let var = variance_dir
        .map(|d| runner::load_batch(&d))
        .transpose()
        .map_err(err)?;
    let mut which: BTreeSet<MetricKind> = [MetricKind::Scalability, MetricKind::SelfOrg].into();
    if var.is_some() {
        which.extend([MetricKind::Reactivity, MetricKind::Adaptability]);
    }
    analysis::compute_report(&ideal, var.as_ref(), &which, &ReportOptions::default())
        .map(|r| r.to_json_string())
        .map_err(err)
}

#[pymodule]
fn _swarmscale(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCurve>()?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(minmax_map, m)?)?;
    m.add_function(wrap_pyfunction!(dtw, m)?)?;
    m.add_function(wrap_pyfunction!(phi, m)?)?;
    m.add_function(wrap_pyfunction!(scalability_e, m)?)?;
    m.add_function(wrap_pyfunction!(perf_lost, m)?)?;
    m.add_function(wrap_pyfunction!(self_org_z, m)?)?;
    m.add_function(wrap_pyfunction!(step_up, m)?)?;
    m.add_function(wrap_pyfunction!(step_down, m)?)?;
    m.add_function(wrap_pyfunction!(condition_signals, m)?)?;
    m.add_function(wrap_pyfunction!(reactivity, m)?)?;
    m.add_function(wrap_pyfunction!(adaptability, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_batch, m)?)?;
    m.add_function(wrap_pyfunction!(compute_report, m)?)?;
    Ok(())
}
