//! Swarm-level measures computed from performance and interference curves.
//!
//! - scalability `e(N1, N2)`: the Karp-Flatt serial fraction, fed with the
//!   projected-vs-observed performance ratio `φ`;
//! - self-organization `Z(m_i)`: how interference-induced performance loss
//!   grows when the swarm doubles, squashed through a sigmoid per timestep;
//! - reactivity `R` and adaptability `A`: DTW distances between observed
//!   performance and the curves an ideally reacting or adapting swarm would
//!   trace under a condition change.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::controllers::ControllerKind;
use crate::curves::{dtw, ensure_same_grid, minmax_map, CurveKind, PerformanceCurve};
use crate::error::{Error, Result};
use crate::variance::{Orientation, VarianceProfile};

/// Swarm sizes `{1, 2, 4, …, m_max}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct SizeLadder(Vec<usize>);

impl SizeLadder {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.first() != Some(&1) {
            return Err(Error::Parameter(format!(
                "size ladder must start at 1, got {sizes:?}"
            )));
        }
        if let Some(w) = sizes.windows(2).find(|w| w[1] != 2 * w[0]) {
            return Err(Error::Parameter(format!(
                "size ladder must double at each rung; {} is followed by {}",
                w[0], w[1]
            )));
        }
        Ok(Self(sizes))
    }

    /// `{1, 2, 4, …, max}`.
    pub fn up_to(max: usize) -> Result<Self> {
        let mut sizes = vec![1];
        while *sizes.last().unwrap() < max {
            sizes.push(sizes.last().unwrap() * 2);
        }
        Self::new(sizes)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.0
    }

    /// `(m_{i-1}, m_i)` for every rung above the first.
    pub fn adjacent_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.windows(2).map(|w| (w[0], w[1]))
    }
}

impl TryFrom<Vec<usize>> for SizeLadder {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SizeLadder> for Vec<usize> {
    fn from(l: SizeLadder) -> Vec<usize> {
        l.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiMode {
    /// Mean of the per-timestep ratios.
    #[default]
    Mean,
    /// Plain sum of the per-timestep ratios, which grows with the grid length.
    LiteralSum,
}

/// Observed over projected performance, `P(N2,t) / ((N2/N1)·P(N1,t))`,
/// aggregated over every timestep where `P(N1,t) > 0`.
pub fn phi(
    curve_n1: &PerformanceCurve,
    curve_n2: &PerformanceCurve,
    n1: usize,
    n2: usize,
    mode: PhiMode,
) -> Result<f64> {
    ensure_same_grid(&[curve_n1, curve_n2])?;
    if !(n1 >= 1 && n2 > n1) {
        return Err(Error::Precondition(format!(
            "phi needs N2 > N1 >= 1, got N1={n1}, N2={n2}"
        )));
    }
    let scale = n2 as f64 / n1 as f64;
    let ratios: Vec<f64> = curve_n1
        .values()
        .iter()
        .zip(curve_n2.values())
        .filter(|(p1, _)| **p1 > 0.0)
        .map(|(p1, p2)| p2 / (scale * p1))
        .collect();
    if ratios.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "phi({n1},{n2}) has no timestep with positive performance at N1"
        )));
    }
    let sum: f64 = ratios.iter().sum();
    Ok(match mode {
        PhiMode::Mean => sum / ratios.len() as f64,
        PhiMode::LiteralSum => sum,
    })
}

/// Karp-Flatt serial fraction; smaller means better use of added robots.
pub fn scalability_e(n1: usize, n2: usize, phi: f64) -> Result<f64> {
    if n1 < 2 {
        return Err(Error::UndefinedMetric(format!(
            "e(N1={n1}, N2={n2}) is undefined for N1 < 2 (1 - 1/N1 vanishes)"
        )));
    }
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(Error::Precondition(format!(
            "phi must be positive, got {phi}"
        )));
    }
    let inv_n1 = 1.0 / n1 as f64;
    Ok((1.0 / phi - inv_n1) / (1.0 - inv_n1))
}

/// `P_lost(N, κ, t)` over the analysis grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub n: usize,
    pub controller: ControllerKind,
    pub values: Vec<f64>,
}

/// Performance loss attributable to inter-robot interference.
///
/// For `N = 1` this is `P·t_lost`. For larger swarms the loss a
/// non-interacting swarm of `N` robots would suffer, `N·P_lost(1)`, is
/// subtracted, so `baseline` must be the `N = 1` loss curve.
pub fn perf_lost(
    curve: &PerformanceCurve,
    t_lost: &PerformanceCurve,
    baseline: Option<&LossCurve>,
    n: usize,
    controller: ControllerKind,
) -> Result<LossCurve> {
    ensure_same_grid(&[curve, t_lost])?;
    let raw = curve
        .values()
        .iter()
        .zip(t_lost.values())
        .map(|(p, t)| p * t);
    let values = match n {
        0 => return Err(Error::Precondition("swarm size must be at least 1".into())),
        1 => raw.collect(),
        _ => {
            let base = baseline.ok_or_else(|| {
                Error::Precondition(format!(
                    "P_lost for N={n} needs the N=1 baseline loss curve"
                ))
            })?;
            if base.n != 1 {
                return Err(Error::Precondition(format!(
                    "baseline loss curve is for N={}, not N=1",
                    base.n
                )));
            }
            if base.values.len() != curve.len() {
                return Err(Error::Precondition(
                    "baseline loss curve does not share the time grid".into(),
                ));
            }
            let k = n as f64;
            raw.zip(&base.values).map(|(v, b)| v - k * b).collect()
        }
    };
    Ok(LossCurve {
        n,
        controller,
        values,
    })
}

/// How interference time becomes the `t_lost` term of the loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossNormalization {
    /// Mean seconds lost per robot in each interval.
    #[default]
    PerRobot,
    /// Total robot-seconds lost in each interval.
    RobotSeconds,
}

/// Converts an interference curve (robot-seconds per interval) for a swarm of
/// `n` robots into the `t_lost` curve used by [`perf_lost`].
pub fn lost_time(
    interference: &PerformanceCurve,
    n: usize,
    norm: LossNormalization,
) -> Result<PerformanceCurve> {
    if n == 0 {
        return Err(Error::Precondition("swarm size must be at least 1".into()));
    }
    let scale = match norm {
        LossNormalization::PerRobot => 1.0 / n as f64,
        LossNormalization::RobotSeconds => 1.0,
    };
    PerformanceCurve::new(
        interference.kind(),
        interference.interval_seconds(),
        interference.values().iter().map(|v| v * scale).collect(),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfOrganization {
    pub z: f64,
    pub theta: Vec<f64>,
}

/// `1 - sigmoid(θ)`, evaluated without overflow.
fn sigmoid_complement(theta: f64) -> f64 {
    if theta >= 0.0 {
        let e = (-theta).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + theta.exp())
    }
}

/// Self-organization between consecutive ladder rungs `m_{i-1}` and `m_i = 2·m_{i-1}`.
pub fn self_org_z(prev: &LossCurve, cur: &LossCurve) -> Result<SelfOrganization> {
    if cur.n != 2 * prev.n {
        return Err(Error::Precondition(format!(
            "self-organization compares m and 2m, got {} and {}",
            prev.n, cur.n
        )));
    }
    if prev.values.len() != cur.values.len() || prev.values.is_empty() {
        return Err(Error::Precondition(
            "loss curves do not share a time grid".into(),
        ));
    }
    let ratio = cur.n as f64 / prev.n as f64;
    let theta: Vec<f64> = cur
        .values
        .iter()
        .zip(&prev.values)
        .map(|(c, p)| c - ratio * p)
        .collect();
    let z = theta.iter().map(|&t| sigmoid_complement(t)).sum();
    Ok(SelfOrganization { z, theta })
}

fn require_rate(curve: &PerformanceCurve, what: &str) -> Result<()> {
    if curve.kind() != CurveKind::IntervalRate {
        return Err(Error::Precondition(format!(
            "{what} must be an interval-rate curve; cumulative curves cannot track a drop in conditions"
        )));
    }
    Ok(())
}

fn check_profile(profile: &VarianceProfile, len: usize) -> Result<()> {
    if profile.ideal.len() != len || profile.deviation.len() != len {
        return Err(Error::Precondition(format!(
            "variance profile has {} points but the curves have {len}",
            profile.ideal.len()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reactivity {
    pub r: f64,
    pub p_r_star: Vec<f64>,
    /// The deviation signal was negated before mapping because it is cost-like.
    pub orientation_flipped: bool,
}

/// DTW distance between observed performance and the curve of a swarm that
/// tracks the condition deviation instantly, scaled to the ideal-conditions
/// performance range.
pub fn reactivity_r(
    p_ideal: &PerformanceCurve,
    p_observed: &PerformanceCurve,
    profile: &VarianceProfile,
) -> Result<Reactivity> {
    ensure_same_grid(&[p_ideal, p_observed])?;
    require_rate(p_ideal, "P_ideal")?;
    require_rate(p_observed, "P_observed")?;
    check_profile(profile, p_ideal.len())?;
    let flip = profile.orientation == Orientation::CostLike;
    let sign = if flip { -1.0 } else { 1.0 };
    let target: Vec<f64> = profile
        .deviation
        .iter()
        .zip(&profile.ideal)
        .map(|(v, i)| sign * (v - i))
        .collect();
    let (lo, hi) = min_max(p_ideal.values());
    let p_r_star = minmax_map(&target, lo, hi)?;
    let r = dtw(&p_r_star, p_observed.values())?;
    Ok(Reactivity {
        r,
        p_r_star,
        orientation_flipped: flip,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptabilityMode {
    /// Beneficial timesteps expect `c·(V/I)·R`, exactly as the optimal-curve formula reads.
    #[default]
    Literal,
    /// Beneficial timesteps expect `(V/I)·P_ideal` instead.
    ScaledIdeal,
}

/// Per-timestep constant in both optimal-curve constructions.
pub const C_T: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adaptability {
    pub a: f64,
    pub p_a_star: Vec<f64>,
}

/// DTW distance between observed performance and the curve of a swarm that
/// holds ideal performance through adverse conditions and exploits
/// beneficial ones.
pub fn adaptability_a(
    p_ideal: &PerformanceCurve,
    p_observed: &PerformanceCurve,
    profile: &VarianceProfile,
    r: Option<f64>,
    mode: AdaptabilityMode,
) -> Result<Adaptability> {
    let r = r.ok_or_else(|| {
        Error::Precondition("adaptability needs the reactivity R computed first".into())
    })?;
    ensure_same_grid(&[p_ideal, p_observed])?;
    require_rate(p_ideal, "P_ideal")?;
    require_rate(p_observed, "P_observed")?;
    check_profile(profile, p_ideal.len())?;
    if let Some(i) = profile.ideal.iter().position(|v| v.is_nan() || *v <= 0.0) {
        return Err(Error::Precondition(format!(
            "ideal condition signal must be positive, got {} at {i}",
            profile.ideal[i]
        )));
    }
    let p_a_star: Vec<f64> = profile
        .deviation
        .iter()
        .zip(&profile.ideal)
        .zip(p_ideal.values())
        .map(|((&v, &i), &ideal)| {
            if v < i {
                match mode {
                    AdaptabilityMode::Literal => C_T * v / i * r,
                    AdaptabilityMode::ScaledIdeal => C_T * v / i * ideal,
                }
            } else {
                ideal
            }
        })
        .collect();
    let a = dtw(&p_a_star, p_observed.values())?;
    Ok(Adaptability { a, p_a_star })
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalabilityEntry {
    pub controller: ControllerKind,
    pub n1: usize,
    pub n2: usize,
    pub phi: f64,
    pub e: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfOrgEntry {
    pub controller: ControllerKind,
    pub m_prev: usize,
    pub m_cur: usize,
    pub z: f64,
    pub theta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReactivityEntry {
    pub controller: ControllerKind,
    pub n: usize,
    pub r: f64,
    pub p_r_star: Vec<f64>,
    pub orientation_flipped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptabilityEntry {
    pub controller: ControllerKind,
    pub n: usize,
    pub a: f64,
    pub p_a_star: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub phi_mode: PhiMode,
    pub adaptability_mode: AdaptabilityMode,
    pub loss_normalization: LossNormalization,
    pub scalability: Vec<ScalabilityEntry>,
    pub self_org: Vec<SelfOrgEntry>,
    pub reactivity: Vec<ReactivityEntry>,
    pub adaptability: Vec<AdaptabilityEntry>,
    /// Config digests of every batch whose curves fed the report.
    pub provenance: BTreeMap<String, String>,
    /// Interpretation choices applied while computing the report.
    pub notes: Vec<String>,
}

impl MetricReport {
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization is infallible");
        s.push('\n');
        s
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// One row per metric instance: `metric,controller,n1,n2,value,provenance`.
    pub fn to_csv_string(&self) -> String {
        let prov = self
            .provenance
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";");
        let mut out = String::from("metric,controller,n1,n2,value,provenance\n");
        let mut row = |metric: &str, c: ControllerKind, n1: usize, n2: usize, v: f64| {
            let _ = writeln!(out, "{metric},{c},{n1},{n2},{v},{prov}");
        };
        for s in &self.scalability {
            row("phi", s.controller, s.n1, s.n2, s.phi);
            row("e", s.controller, s.n1, s.n2, s.e);
        }
        for s in &self.self_org {
            row("Z", s.controller, s.m_prev, s.m_cur, s.z);
        }
        for r in &self.reactivity {
            row("R", r.controller, r.n, r.n, r.r);
        }
        for a in &self.adaptability {
            row("A", a.controller, a.n, a.n, a.a);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::TimeGrid;
    use crate::variance::{condition_signals, StepKind};
    use proptest::prelude::*;

    fn rate(values: &[f64]) -> PerformanceCurve {
        PerformanceCurve::new(CurveKind::IntervalRate, 10.0, values.to_vec()).unwrap()
    }

    fn loss(n: usize, values: &[f64]) -> LossCurve {
        LossCurve {
            n,
            controller: ControllerKind::Crw,
            values: values.to_vec(),
        }
    }

    #[test]
    fn lost_time_scaling() {
        let c = rate(&[8.0, 0.0, 4.0]);
        assert_eq!(
            lost_time(&c, 4, LossNormalization::PerRobot)
                .unwrap()
                .values(),
            [2.0, 0.0, 1.0]
        );
        assert_eq!(
            lost_time(&c, 4, LossNormalization::RobotSeconds)
                .unwrap()
                .values(),
            c.values()
        );
        assert!(lost_time(&c, 0, LossNormalization::PerRobot).is_err());
    }

    #[test]
    fn ladder_rules() {
        assert_eq!(
            SizeLadder::up_to(64).unwrap().sizes(),
            [1, 2, 4, 8, 16, 32, 64]
        );
        assert!(SizeLadder::new(vec![2, 4]).is_err());
        assert!(SizeLadder::new(vec![1, 2, 3]).is_err());
        assert!(SizeLadder::new(vec![]).is_err());
        let pairs: Vec<_> = SizeLadder::up_to(4).unwrap().adjacent_pairs().collect();
        assert_eq!(pairs, [(1, 2), (2, 4)]);
    }

    #[test]
    fn phi_examples() {
        let p1 = rate(&[1.0, 3.0, 0.5]);
        let p2 = rate(&[2.0, 6.0, 1.0]);
        assert_eq!(phi(&p1, &p2, 2, 4, PhiMode::Mean).unwrap(), 1.0);
        let p4 = rate(&[4.0, 12.0, 2.0]);
        assert_eq!(phi(&p1, &p4, 1, 4, PhiMode::Mean).unwrap(), 1.0);
        let a = rate(&[1.0, 2.0]);
        let b = rate(&[4.0, 4.0]);
        assert_eq!(phi(&a, &b, 2, 4, PhiMode::Mean).unwrap(), 1.5);
        assert_eq!(phi(&a, &b, 2, 4, PhiMode::LiteralSum).unwrap(), 3.0);
        // Zero-denominator timesteps are skipped.
        let c = rate(&[0.0, 2.0]);
        assert_eq!(phi(&c, &b, 2, 4, PhiMode::Mean).unwrap(), 1.0);
        assert!(matches!(
            phi(&rate(&[0.0, 0.0]), &b, 2, 4, PhiMode::Mean),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(phi(&a, &b, 4, 4, PhiMode::Mean).is_err());
        assert!(phi(&a, &rate(&[1.0]), 2, 4, PhiMode::Mean).is_err());
    }

    #[test]
    fn karp_flatt_examples() {
        assert_eq!(scalability_e(4, 8, 4.0).unwrap(), 0.0);
        assert_eq!(scalability_e(4, 8, 1.0).unwrap(), 1.0);
        assert!((scalability_e(2, 4, 1.5).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            scalability_e(1, 2, 1.0),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(scalability_e(2, 4, 0.0).is_err());
    }

    #[test]
    fn perf_lost_examples() {
        let l1 = perf_lost(
            &rate(&[2.0, 2.0]),
            &rate(&[0.5, 0.0]),
            None,
            1,
            ControllerKind::Crw,
        )
        .unwrap();
        assert_eq!(l1.values, [1.0, 0.0]);

        let zero = loss(1, &[0.0, 0.0]);
        let l2 = perf_lost(
            &rate(&[3.0, 5.0]),
            &rate(&[0.0, 0.0]),
            Some(&zero),
            2,
            ControllerKind::Crw,
        )
        .unwrap();
        assert_eq!(l2.values, [0.0, 0.0]);

        let base = loss(1, &[0.5]);
        let l2 = perf_lost(
            &rate(&[4.0]),
            &rate(&[1.0]),
            Some(&base),
            2,
            ControllerKind::Crw,
        )
        .unwrap();
        assert_eq!(l2.values, [3.0]);

        assert!(perf_lost(&rate(&[4.0]), &rate(&[1.0]), None, 2, ControllerKind::Crw).is_err());
        assert!(perf_lost(
            &rate(&[4.0]),
            &rate(&[1.0]),
            Some(&loss(2, &[0.0])),
            4,
            ControllerKind::Crw
        )
        .is_err());
    }

    #[test]
    fn self_org_examples() {
        let zeros = vec![0.0; 100];
        let s = self_org_z(&loss(2, &zeros), &loss(4, &zeros)).unwrap();
        assert_eq!(s.z, 50.0);

        let s = self_org_z(&loss(1, &[0.0; 10]), &loss(2, &[-1e6; 10])).unwrap();
        assert_eq!(s.z, 10.0);

        let s = self_org_z(&loss(1, &[1.0]), &loss(2, &[3.0])).unwrap();
        assert_eq!(s.theta, [1.0]);
        let expected = 1.0 - 1.0 / (1.0 + (-1.0f64).exp());
        assert!((s.z - expected).abs() < 1e-15);
        assert!((s.z - 0.2689).abs() < 1e-4);

        assert!(self_org_z(&loss(1, &[1.0]), &loss(4, &[1.0])).is_err());
        assert!(self_org_z(&loss(1, &[1.0]), &loss(2, &[1.0, 2.0])).is_err());
    }

    fn step_up_profile(n: usize) -> VarianceProfile {
        let grid = TimeGrid::new(10.0 * n as f64, n).unwrap();
        condition_signals(StepKind::StepUp, 0.4, 5.0 * n as f64, &grid).unwrap()
    }

    #[test]
    fn reactivity_examples() {
        let profile = step_up_profile(6);
        let ideal = rate(&[0.0, 4.0, 10.0, 7.0, 3.0, 5.0]);
        let observed = rate(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let r = reactivity_r(&ideal, &observed, &profile).unwrap();
        assert_eq!(r.p_r_star, [10.0, 10.0, 10.0, 0.0, 0.0, 0.0]);
        assert!(r.orientation_flipped);

        let perfect = rate(&r.p_r_star);
        assert_eq!(reactivity_r(&ideal, &perfect, &profile).unwrap().r, 0.0);

        let mut flat = profile.clone();
        flat.deviation = flat.ideal.clone();
        assert!(matches!(
            reactivity_r(&ideal, &observed, &flat),
            Err(Error::DegenerateInput(_))
        ));

        let cumulative = PerformanceCurve::new(CurveKind::Cumulative, 10.0, vec![0.0; 6]).unwrap();
        assert!(reactivity_r(&cumulative, &observed, &profile).is_err());
        assert!(reactivity_r(&ideal, &rate(&[1.0; 5]), &profile).is_err());
    }

    #[test]
    fn adaptability_examples() {
        let profile = step_up_profile(4);
        let ideal = rate(&[3.0, 4.0, 5.0, 6.0]);
        let a = adaptability_a(
            &ideal,
            &ideal,
            &profile,
            Some(2.0),
            AdaptabilityMode::Literal,
        )
        .unwrap();
        assert_eq!(a.a, 0.0);
        assert_eq!(a.p_a_star, ideal.values());

        let mut same = profile.clone();
        same.deviation = same.ideal.clone();
        assert_eq!(
            adaptability_a(&ideal, &ideal, &same, Some(2.0), AdaptabilityMode::Literal)
                .unwrap()
                .a,
            0.0
        );

        let mut beneficial = profile.clone();
        beneficial.deviation[1] = 0.5;
        let a = adaptability_a(
            &ideal,
            &ideal,
            &beneficial,
            Some(4.0),
            AdaptabilityMode::Literal,
        )
        .unwrap();
        assert_eq!(a.p_a_star[1], 2.0);
        let a = adaptability_a(
            &ideal,
            &ideal,
            &beneficial,
            Some(4.0),
            AdaptabilityMode::ScaledIdeal,
        )
        .unwrap();
        assert_eq!(a.p_a_star[1], 2.0);

        assert!(adaptability_a(&ideal, &ideal, &profile, None, AdaptabilityMode::Literal).is_err());
        let mut bad = profile.clone();
        bad.ideal[0] = 0.0;
        assert!(
            adaptability_a(&ideal, &ideal, &bad, Some(1.0), AdaptabilityMode::Literal).is_err()
        );
    }

    #[test]
    fn report_csv_rows() {
        let report = MetricReport {
            scalability: vec![ScalabilityEntry {
                controller: ControllerKind::Dpo,
                n1: 2,
                n2: 4,
                phi: 1.5,
                e: 0.25,
            }],
            self_org: vec![SelfOrgEntry {
                controller: ControllerKind::Crw,
                m_prev: 1,
                m_cur: 2,
                z: 3.5,
                theta: vec![],
            }],
            provenance: [("ideal".to_string(), "abc".to_string())].into(),
            ..Default::default()
        };
        assert_eq!(
            report.to_csv_string(),
            "metric,controller,n1,n2,value,provenance\n\
             phi,DPO,2,4,1.5,ideal=abc\n\
             e,DPO,2,4,0.25,ideal=abc\n\
             Z,CRW,1,2,3.5,ideal=abc\n"
        );
        assert_eq!(
            MetricReport::from_json_str(&report.to_json_string()).unwrap(),
            report
        );
    }

    proptest! {
        #[test]
        fn e_strictly_decreasing_in_phi(n1 in 2usize..512, a in 0.01f64..100.0, b in 0.01f64..100.0) {
            prop_assume!(a < b);
            prop_assert!(scalability_e(n1, 2 * n1, a).unwrap() > scalability_e(n1, 2 * n1, b).unwrap());
        }

        #[test]
        fn z_terms_bounded_and_antitone(
            prev in prop::collection::vec(-10.0f64..10.0, 1..30),
            cur in prop::collection::vec(-10.0f64..10.0, 1..30),
            bump in 0.0f64..5.0,
            idx in any::<prop::sample::Index>(),
        ) {
            let len = prev.len().min(cur.len());
            let (prev, cur) = (&prev[..len], &cur[..len]);
            let base = self_org_z(&loss(2, prev), &loss(4, cur)).unwrap();
            prop_assert!(base.z > 0.0 && base.z < len as f64);
            let i = idx.index(len);

            let mut up_cur = cur.to_vec();
            up_cur[i] += bump;
            prop_assert!(self_org_z(&loss(2, prev), &loss(4, &up_cur)).unwrap().z <= base.z);

            let mut up_prev = prev.to_vec();
            up_prev[i] += bump;
            prop_assert!(self_org_z(&loss(2, &up_prev), &loss(4, cur)).unwrap().z >= base.z);
        }

        #[test]
        fn optimal_curves_give_zero_and_keep_range(
            ideal in prop::collection::vec(0.0f64..50.0, 8),
            observed in prop::collection::vec(0.0f64..50.0, 8),
            up in any::<bool>(),
            beta in 0.05f64..0.95,
        ) {
            prop_assume!(ideal.iter().any(|v| *v != ideal[0]));
            let grid = TimeGrid::new(80.0, 8).unwrap();
            let kind = if up { StepKind::StepUp } else { StepKind::StepDown };
            let profile = condition_signals(kind, beta, 40.0, &grid).unwrap();
            let ideal = rate(&ideal);
            let react = reactivity_r(&ideal, &rate(&observed), &profile).unwrap();
            prop_assert!(react.r >= 0.0);
            let (lo, hi) = min_max(ideal.values());
            prop_assert_eq!(min_max(&react.p_r_star), (lo, hi));
            prop_assert_eq!(reactivity_r(&ideal, &rate(&react.p_r_star), &profile).unwrap().r, 0.0);

            let adapt = adaptability_a(&ideal, &rate(&observed), &profile, Some(react.r), AdaptabilityMode::Literal).unwrap();
            prop_assert!(adapt.a >= 0.0);
            let star = rate(&adapt.p_a_star);
            prop_assert_eq!(adaptability_a(&ideal, &star, &profile, Some(react.r), AdaptabilityMode::Literal).unwrap().a, 0.0);
        }
    }
}
