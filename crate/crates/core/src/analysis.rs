//! Metric reports computed from stored batches, and tidy plot tables.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::controllers::ControllerKind;
use crate::curves::{CurveKind, PerformanceCurve};
use crate::error::{Error, Result};
use crate::metrics::{
    adaptability_a, lost_time, perf_lost, phi, reactivity_r, scalability_e, self_org_z,
    AdaptabilityEntry, AdaptabilityMode, LossCurve, LossNormalization, MetricReport, PhiMode,
    ReactivityEntry, ScalabilityEntry, SelfOrgEntry,
};
use crate::runner::BatchResult;
use crate::variance::{condition_signals, VarianceProfile};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Scalability,
    SelfOrg,
    Reactivity,
    Adaptability,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [
        MetricKind::Scalability,
        MetricKind::SelfOrg,
        MetricKind::Reactivity,
        MetricKind::Adaptability,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Scalability => "scalability",
            MetricKind::SelfOrg => "selforg",
            MetricKind::Reactivity => "reactivity",
            MetricKind::Adaptability => "adaptability",
        }
    }

    fn needs_variance(self) -> bool {
        matches!(self, MetricKind::Reactivity | MetricKind::Adaptability)
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Parameter(format!(
                    "unknown metric `{s}`; expected scalability, selforg, reactivity or adaptability"
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReportOptions {
    pub phi_mode: PhiMode,
    pub adaptability_mode: AdaptabilityMode,
    pub loss_normalization: LossNormalization,
}

fn cell_curve(
    batch: &BatchResult,
    kind: ControllerKind,
    n: usize,
) -> Result<&crate::runner::CellCurves> {
    batch.curves(kind, n).ok_or_else(|| {
        Error::Precondition(format!(
            "batch {} has no completed {kind} N={n} cell",
            batch.manifest.batch_id
        ))
    })
}

fn scalability(batch: &BatchResult, opts: &ReportOptions) -> Result<Vec<ScalabilityEntry>> {
    let mut out = Vec::new();
    let ladder = batch.manifest.config.ladder();
    for &kind in batch.manifest.config.controllers() {
        for (n1, n2) in ladder.adjacent_pairs().filter(|(n1, _)| *n1 >= 2) {
            let c1 = &cell_curve(batch, kind, n1)?.cumulative;
            let c2 = &cell_curve(batch, kind, n2)?.cumulative;
            let p = phi(c1, c2, n1, n2, opts.phi_mode)?;
            out.push(ScalabilityEntry {
                controller: kind,
                n1,
                n2,
                phi: p,
                e: scalability_e(n1, n2, p)?,
            });
        }
    }
    Ok(out)
}

/// `P_lost` for every size of one controller, smallest first.
pub fn loss_curves(
    batch: &BatchResult,
    kind: ControllerKind,
    norm: LossNormalization,
) -> Result<Vec<LossCurve>> {
    let sizes = batch.manifest.config.ladder().sizes().to_vec();
    let baseline_cell = batch.curves(kind, 1).ok_or_else(|| {
        Error::Precondition(format!(
            "performance loss needs the N=1 baseline, but batch {} has no completed {kind} N=1 cell",
            batch.manifest.batch_id
        ))
    })?;
    let loss_of = |cell: &crate::runner::CellCurves, n, base: Option<&LossCurve>| {
        let t_lost = lost_time(&cell.interference, n, norm)?;
        perf_lost(&cell.cumulative, &t_lost, base, n, kind)
    };
    let baseline = loss_of(baseline_cell, 1, None)?;
    let mut out = vec![baseline.clone()];
    for &n in &sizes[1..] {
        out.push(loss_of(cell_curve(batch, kind, n)?, n, Some(&baseline))?);
    }
    Ok(out)
}

fn self_org(batch: &BatchResult, opts: &ReportOptions) -> Result<Vec<SelfOrgEntry>> {
    let mut out = Vec::new();
    for &kind in batch.manifest.config.controllers() {
        let losses = loss_curves(batch, kind, opts.loss_normalization)?;
        for pair in losses.windows(2) {
            let s = self_org_z(&pair[0], &pair[1])?;
            out.push(SelfOrgEntry {
                controller: kind,
                m_prev: pair[0].n,
                m_cur: pair[1].n,
                z: s.z,
                theta: s.theta,
            });
        }
    }
    Ok(out)
}

/// Condition signals of a variance batch, on its own analysis grid.
pub fn variance_profile(batch: &BatchResult) -> Result<VarianceProfile> {
    let config = &batch.manifest.config;
    let kind = config.step_kind().ok_or_else(|| {
        Error::Precondition(format!(
            "batch {} was run without a variance scenario",
            batch.manifest.batch_id
        ))
    })?;
    condition_signals(
        kind,
        config.variance.beta,
        config.alpha_seconds(),
        &config.grid(),
    )
}

fn ensure_same_batch_grid(ideal: &BatchResult, variance: &BatchResult) -> Result<()> {
    let a = &ideal.manifest.config.experiment;
    let b = &variance.manifest.config.experiment;
    if a.duration_s != b.duration_s || a.interval_s != b.interval_s {
        return Err(Error::Precondition(format!(
            "time grids differ: ideal batch {} runs {} s in {} s intervals, variance batch {} runs {} s in {} s intervals",
            ideal.manifest.batch_id, a.duration_s, a.interval_s,
            variance.manifest.batch_id, b.duration_s, b.interval_s
        )));
    }
    Ok(())
}

type Flexibility = (Vec<ReactivityEntry>, Vec<AdaptabilityEntry>);

fn flexibility(
    ideal: &BatchResult,
    variance: &BatchResult,
    opts: &ReportOptions,
) -> Result<Flexibility> {
    ensure_same_batch_grid(ideal, variance)?;
    let profile = variance_profile(variance)?;
    let mut reactivity = Vec::new();
    let mut adaptability = Vec::new();
    for (&(kind, n), observed) in &variance.cells {
        let Some(reference) = ideal.curves(kind, n) else {
            continue;
        };
        let r = reactivity_r(&reference.rate, &observed.rate, &profile)?;
        let a = adaptability_a(
            &reference.rate,
            &observed.rate,
            &profile,
            Some(r.r),
            opts.adaptability_mode,
        )?;
        reactivity.push(ReactivityEntry {
            controller: kind,
            n,
            r: r.r,
            p_r_star: r.p_r_star,
            orientation_flipped: r.orientation_flipped,
        });
        adaptability.push(AdaptabilityEntry {
            controller: kind,
            n,
            a: a.a,
            p_a_star: a.p_a_star,
        });
    }
    if reactivity.is_empty() {
        return Err(Error::Precondition(format!(
            "batches {} and {} share no (controller, N) cell",
            ideal.manifest.batch_id, variance.manifest.batch_id
        )));
    }
    Ok((reactivity, adaptability))
}

/// Computes the requested metrics. Reactivity and adaptability compare the
/// interval-rate curves of `ideal` and `variance` over the cells both hold.
pub fn compute_report(
    ideal: &BatchResult,
    variance: Option<&BatchResult>,
    which: &BTreeSet<MetricKind>,
    opts: &ReportOptions,
) -> Result<MetricReport> {
    let mut report = MetricReport {
        phi_mode: opts.phi_mode,
        adaptability_mode: opts.adaptability_mode,
        loss_normalization: opts.loss_normalization,
        ..MetricReport::default()
    };
    report
        .provenance
        .insert("ideal".into(), ideal.manifest.config_digest.clone());
    if which.contains(&MetricKind::Scalability) {
        report.scalability = scalability(ideal, opts)?;
        report.notes.push(format!(
            "scalability uses cumulative performance with {} aggregation of the per-timestep ratios",
            match opts.phi_mode {
                PhiMode::Mean => "mean",
                PhiMode::LiteralSum => "summed",
            }
        ));
    }
    if which.contains(&MetricKind::SelfOrg) {
        report.self_org = self_org(ideal, opts)?;
        report.notes.push(format!(
            "self-organization uses cumulative performance and {} avoidance time",
            match opts.loss_normalization {
                LossNormalization::PerRobot => "per-robot",
                LossNormalization::RobotSeconds => "total robot-seconds of",
            }
        ));
    }
    if which.iter().any(|k| k.needs_variance()) {
        let variance = variance.ok_or_else(|| {
            Error::Precondition("reactivity and adaptability need a variance batch".into())
        })?;
        report
            .provenance
            .insert("variance".into(), variance.manifest.config_digest.clone());
        let (r, a) = flexibility(ideal, variance, opts)?;
        if r.iter().any(|e| e.orientation_flipped) {
            report.notes.push(
                "the deviation signal is cost-like and was negated before mapping onto the ideal performance range"
                    .into(),
            );
        }
        if which.contains(&MetricKind::Reactivity) {
            report.reactivity = r;
        }
        if which.contains(&MetricKind::Adaptability) {
            report.adaptability = a;
            report.notes.push(format!(
                "adaptability expects {} under beneficial conditions",
                match opts.adaptability_mode {
                    AdaptabilityMode::Literal => "c*(V/I)*R",
                    AdaptabilityMode::ScaledIdeal => "(V/I)*P_ideal",
                }
            ));
        }
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Figure {
    Performance,
    Scalability,
    SelfOrg,
    Reactivity,
    Adaptability,
}

impl Figure {
    pub const ALL: [Figure; 5] = [
        Figure::Performance,
        Figure::Scalability,
        Figure::SelfOrg,
        Figure::Reactivity,
        Figure::Adaptability,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Figure::Performance => "performance",
            Figure::Scalability => "scalability",
            Figure::SelfOrg => "selforg",
            Figure::Reactivity => "reactivity",
            Figure::Adaptability => "adaptability",
        }
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Parameter(format!(
                    "unknown figure `{s}`; expected one of performance, scalability, selforg, reactivity, adaptability"
                ))
            })
    }
}

fn curve_rows(out: &mut String, kind: ControllerKind, n: usize, curve: &PerformanceCurve) {
    let dt = curve.interval_seconds();
    for (i, v) in curve.values().iter().enumerate() {
        let _ = writeln!(out, "{kind},{n},{},{v}", (i + 1) as f64 * dt);
    }
}

/// Mean cumulative deliveries of every completed cell.
pub fn performance_table(batch: &BatchResult) -> Result<String> {
    if batch.cells.is_empty() {
        return Err(Error::Precondition(format!(
            "batch {} has no completed cells",
            batch.manifest.batch_id
        )));
    }
    let mut out = String::from("controller,N,t_seconds,value\n");
    for (&(kind, n), cell) in &batch.cells {
        debug_assert_eq!(cell.cumulative.kind(), CurveKind::Cumulative);
        curve_rows(&mut out, kind, n, &cell.cumulative);
    }
    Ok(out)
}

fn non_empty(rows: usize, what: &str) -> Result<()> {
    if rows == 0 {
        return Err(Error::Precondition(format!(
            "the report holds no {what} entries"
        )));
    }
    Ok(())
}

/// Tidy table for one figure family from a report.
pub fn report_table(report: &MetricReport, figure: Figure) -> Result<String> {
    let mut out = String::new();
    match figure {
        Figure::Performance => {
            return Err(Error::Precondition(
                "the performance table is built from a batch, not a report".into(),
            ))
        }
        Figure::Scalability => {
            non_empty(report.scalability.len(), "scalability")?;
            out.push_str("controller,N1,N2,e\n");
            for s in &report.scalability {
                let _ = writeln!(out, "{},{},{},{}", s.controller, s.n1, s.n2, s.e);
            }
        }
        Figure::SelfOrg => {
            non_empty(report.self_org.len(), "self-organization")?;
            out.push_str("controller,N1,N2,Z\n");
            for s in &report.self_org {
                let _ = writeln!(out, "{},{},{},{}", s.controller, s.m_prev, s.m_cur, s.z);
            }
        }
        Figure::Reactivity => {
            non_empty(report.reactivity.len(), "reactivity")?;
            out.push_str("controller,N,R\n");
            for r in &report.reactivity {
                let _ = writeln!(out, "{},{},{}", r.controller, r.n, r.r);
            }
        }
        Figure::Adaptability => {
            non_empty(report.adaptability.len(), "adaptability")?;
            out.push_str("controller,N,A\n");
            for a in &report.adaptability {
                let _ = writeln!(out, "{},{},{}", a.controller, a.n, a.a);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::runner::run_batch;

    fn config(extra: &[&str]) -> ExperimentConfig {
        let mut o: Vec<String> = [
            "controller.kind=[\"CRW\",\"DPO\"]",
            "experiment.sizes=[1,2,4]",
            "experiment.runs_per_cell=2",
            "experiment.duration_s=100.0",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        o.extend(extra.iter().map(|s| s.to_string()));
        ExperimentConfig::from_toml_str_with_overrides("", &o).unwrap()
    }

    fn all() -> BTreeSet<MetricKind> {
        MetricKind::ALL.into_iter().collect()
    }

    #[test]
    fn report_shape() {
        let tmp = tempfile::tempdir().unwrap();
        let ideal = run_batch(&config(&[]), tmp.path(), Some("ideal"), false).unwrap();
        let var = run_batch(
            &config(&["variance.kind=step_down", "variance.beta=0.8"]),
            tmp.path(),
            Some("var"),
            false,
        )
        .unwrap();
        let report = compute_report(&ideal, Some(&var), &all(), &ReportOptions::default()).unwrap();
        let pairs: Vec<_> = report
            .self_org
            .iter()
            .map(|s| (s.controller, s.m_prev, s.m_cur))
            .collect();
        assert_eq!(
            pairs,
            [
                (ControllerKind::Crw, 1, 2),
                (ControllerKind::Crw, 2, 4),
                (ControllerKind::Dpo, 1, 2),
                (ControllerKind::Dpo, 2, 4)
            ]
        );
        let pairs: Vec<_> = report.scalability.iter().map(|s| (s.n1, s.n2)).collect();
        assert_eq!(pairs, [(2, 4), (2, 4)]);
        assert_eq!(report.reactivity.len(), 6);
        assert_eq!(report.adaptability.len(), 6);
        assert!(report
            .reactivity
            .iter()
            .all(|r| r.orientation_flipped && r.r >= 0.0));
        assert_eq!(report.provenance.len(), 2);
        assert_eq!(
            MetricReport::from_json_str(&report.to_json_string()).unwrap(),
            report
        );

        let err = compute_report(&ideal, None, &all(), &ReportOptions::default()).unwrap_err();
        assert!(err.to_string().contains("variance batch"), "{err}");
        assert!(compute_report(&ideal, Some(&ideal), &all(), &ReportOptions::default()).is_err());

        let table = report_table(&report, Figure::Scalability).unwrap();
        assert!(table.starts_with("controller,N1,N2,e\nCRW,2,4,"));
        let perf = performance_table(&ideal).unwrap();
        assert!(perf.starts_with("controller,N,t_seconds,value\nCRW,1,10,"));
        assert_eq!(perf.lines().count(), 1 + 6 * 10);
    }

    #[test]
    fn grids_must_match() {
        let tmp = tempfile::tempdir().unwrap();
        let ideal = run_batch(&config(&[]), tmp.path(), Some("ideal"), false).unwrap();
        let var = run_batch(
            &config(&["variance.kind=step_up", "experiment.duration_s=200.0"]),
            tmp.path(),
            Some("var"),
            false,
        )
        .unwrap();
        let which = [MetricKind::Reactivity].into_iter().collect();
        let err =
            compute_report(&ideal, Some(&var), &which, &ReportOptions::default()).unwrap_err();
        assert!(err.to_string().contains("time grids differ"), "{err}");
    }

    #[test]
    fn missing_baseline_is_reported() {
        let tmp = tempfile::tempdir().unwrap();
        let mut ideal = run_batch(&config(&[]), tmp.path(), Some("ideal"), false).unwrap();
        ideal.cells.remove(&(ControllerKind::Dpo, 1));
        let which = [MetricKind::SelfOrg].into_iter().collect();
        let err = compute_report(&ideal, None, &which, &ReportOptions::default()).unwrap_err();
        assert!(err.to_string().contains("N=1 baseline"), "{err}");
    }

    #[test]
    fn names_parse() {
        assert_eq!(
            "selforg".parse::<MetricKind>().unwrap(),
            MetricKind::SelfOrg
        );
        assert_eq!(
            "Performance".parse::<Figure>().unwrap(),
            Figure::Performance
        );
        let err = "heatmap".parse::<Figure>().unwrap_err().to_string();
        assert!(err.contains("performance, scalability, selforg, reactivity, adaptability"));
    }
}
