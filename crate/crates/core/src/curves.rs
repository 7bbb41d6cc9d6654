//! Performance curves and the curve mathematics shared by every metric:
//! mapped min-max normalization and dynamic time warping.
//!
//! Curves serialize to a three-column CSV (`t_index,t_seconds,value`, where
//! `t_seconds` is the end of the interval) and to a small JSON object. Values
//! are printed in Rust's shortest round-trip form, so reading a file back
//! yields bit-identical `f64`s.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    /// Running total since the start of the run.
    Cumulative,
    /// Amount accrued within each interval.
    IntervalRate,
}

/// Timestep-indexed performance values `P(N, κ, t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerformanceCurve {
    kind: CurveKind,
    interval_seconds: f64,
    values: Vec<f64>,
}

impl PerformanceCurve {
    pub fn new(kind: CurveKind, interval_seconds: f64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Precondition("curve has no values".into()));
        }
        if !(interval_seconds > 0.0 && interval_seconds.is_finite()) {
            return Err(Error::Precondition(format!(
                "interval_seconds must be positive, got {interval_seconds}"
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0 && v.is_finite()))
        {
            return Err(Error::Precondition(format!(
                "curve value at index {i} is {v}; values must be finite and non-negative"
            )));
        }
        if kind == CurveKind::Cumulative {
            if let Some(i) = values.windows(2).position(|w| w[1] < w[0]) {
                return Err(Error::Precondition(format!(
                    "cumulative curve decreases between index {i} and {}",
                    i + 1
                )));
            }
        }
        Ok(Self {
            kind,
            interval_seconds,
            values,
        })
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    pub fn interval_seconds(&self) -> f64 {
        self.interval_seconds
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("curves are non-empty")
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid {
            total_duration: self.interval_seconds * self.values.len() as f64,
            num_intervals: self.values.len(),
        }
    }

    /// Per-interval increments of a cumulative curve.
    pub fn to_interval_rate(&self) -> Result<Self> {
        if self.kind != CurveKind::Cumulative {
            return Err(Error::Precondition(
                "only cumulative curves can be differenced".into(),
            ));
        }
        let mut prev = 0.0;
        let values = self
            .values
            .iter()
            .map(|&v| {
                let d = v - prev;
                prev = v;
                d.max(0.0)
            })
            .collect();
        Self::new(CurveKind::IntervalRate, self.interval_seconds, values)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("t_index,t_seconds,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let t = (i + 1) as f64 * self.interval_seconds;
            let _ = writeln!(out, "{i},{t},{v}");
        }
        out
    }

    pub fn from_csv_str(kind: CurveKind, text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t_index", "t_seconds", "value"] {
            return Err(Error::Format(format!(
                "unexpected curve CSV header: {:?}",
                headers
            )));
        }
        let mut values = Vec::new();
        let mut interval = None;
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let index: usize = parse_field(&record, 0)?;
            let t_seconds: f64 = parse_field(&record, 1)?;
            let value: f64 = parse_field(&record, 2)?;
            if index != row {
                return Err(Error::Format(format!(
                    "curve CSV row {row} carries t_index {index}"
                )));
            }
            if row == 0 {
                interval = Some(t_seconds);
            }
            values.push(value);
        }
        let interval =
            interval.ok_or_else(|| Error::Format("curve CSV has no data rows".into()))?;
        Self::new(kind, interval, values)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_csv_string().as_bytes())
    }

    pub fn read_csv(kind: CurveKind, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(kind, &text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("curve serialization is infallible")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: PerformanceCurve = serde_json::from_str(text)?;
        Self::new(raw.kind, raw.interval_seconds, raw.values)
    }
}

/// Parses one CSV field with the standard library parser, which is exact for
/// shortest round-trip float output.
pub(crate) fn parse_field<T: std::str::FromStr>(record: &csv::StringRecord, i: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = record
        .get(i)
        .ok_or_else(|| Error::Format(format!("missing column {i} in CSV row")))?;
    raw.trim()
        .parse()
        .map_err(|e| Error::Format(format!("bad CSV field `{raw}`: {e}")))
}

/// Simulation length `T` split into equal aggregation intervals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub total_duration: f64,
    pub num_intervals: usize,
}

impl TimeGrid {
    pub fn new(total_duration: f64, num_intervals: usize) -> Result<Self> {
        if !(total_duration > 0.0 && total_duration.is_finite()) {
            return Err(Error::Precondition(format!(
                "total duration must be positive, got {total_duration}"
            )));
        }
        if num_intervals < 2 {
            return Err(Error::Precondition(format!(
                "a time grid needs at least 2 intervals, got {num_intervals}"
            )));
        }
        Ok(Self {
            total_duration,
            num_intervals,
        })
    }

    pub fn interval_seconds(&self) -> f64 {
        self.total_duration / self.num_intervals as f64
    }

    /// Midpoint of interval `i` in seconds.
    pub fn midpoint(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.interval_seconds()
    }

    pub fn midpoints(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.num_intervals).map(|i| self.midpoint(i))
    }
}

/// Checks that every curve has the same length and interval width.
pub fn ensure_same_grid(curves: &[&PerformanceCurve]) -> Result<()> {
    let Some(first) = curves.first() else {
        return Ok(());
    };
    for c in &curves[1..] {
        if c.len() != first.len() || c.interval_seconds() != first.interval_seconds() {
            return Err(Error::Precondition(format!(
                "curves do not share a time grid ({} x {}s vs {} x {}s)",
                first.len(),
                first.interval_seconds(),
                c.len(),
                c.interval_seconds()
            )));
        }
    }
    Ok(())
}

/// Maps `x` affinely onto `[lo, hi]` so that `min(x) -> lo` and `max(x) -> hi`.
pub fn minmax_map(x: &[f64], lo: f64, hi: f64) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::Precondition("minmax_map of an empty curve".into()));
    }
    if hi < lo {
        return Err(Error::Precondition(format!(
            "minmax_map target range is inverted: [{lo}, {hi}]"
        )));
    }
    let (min, max) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(mn, mx), &v| {
            (mn.min(v), mx.max(v))
        });
    let span = max - min;
    if span == 0.0 {
        if hi == lo {
            return Ok(vec![lo; x.len()]);
        }
        return Err(Error::DegenerateInput(format!(
            "cannot min-max map a constant curve (value {min}) onto [{lo}, {hi}]"
        )));
    }
    if min == lo && max == hi {
        // Already spans the target range; the map is the identity.
        return Ok(x.to_vec());
    }
    let scale = hi - lo;
    Ok(x.iter()
        .map(|&v| {
            // Pin the extremes so the endpoints come out exact.
            if v == min {
                lo
            } else if v == max {
                hi
            } else {
                (scale * (v - min) / span + lo).clamp(lo, hi)
            }
        })
        .collect())
}

/// Unconstrained dynamic time warping distance with local cost `|x - y|`.
pub fn dtw(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Precondition("dtw of an empty curve".into()));
    }
    let m = y.len();
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![f64::INFINITY; m];
    for (i, &xi) in x.iter().enumerate() {
        for j in 0..m {
            let cost = (xi - y[j]).abs();
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j].min(cur[j - 1]).min(prev[j - 1]),
            };
            cur[j] = cost + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Minimum cost over every monotone warping path, found by enumeration.
    fn dtw_oracle(x: &[f64], y: &[f64]) -> f64 {
        fn walk(x: &[f64], y: &[f64], i: usize, j: usize, acc: f64, best: &mut f64) {
            let acc = acc + (x[i] - y[j]).abs();
            if i == x.len() - 1 && j == y.len() - 1 {
                *best = best.min(acc);
                return;
            }
            if i + 1 < x.len() {
                walk(x, y, i + 1, j, acc, best);
            }
            if j + 1 < y.len() {
                walk(x, y, i, j + 1, acc, best);
            }
            if i + 1 < x.len() && j + 1 < y.len() {
                walk(x, y, i + 1, j + 1, acc, best);
            }
        }
        let mut best = f64::INFINITY;
        walk(x, y, 0, 0, 0.0, &mut best);
        best
    }

    #[test]
    fn minmax_examples() {
        assert_eq!(
            minmax_map(&[0.0, 5.0, 10.0], 0.0, 1.0).unwrap(),
            [0.0, 0.5, 1.0]
        );
        assert_eq!(
            minmax_map(&[2.0, 4.0, 8.0], 10.0, 40.0).unwrap(),
            [10.0, 20.0, 40.0]
        );
        assert!(matches!(
            minmax_map(&[3.0, 3.0, 3.0], 0.0, 1.0),
            Err(Error::DegenerateInput(_))
        ));
        assert_eq!(minmax_map(&[3.0, 3.0], 2.0, 2.0).unwrap(), [2.0, 2.0]);
        assert!(minmax_map(&[], 0.0, 1.0).is_err());
        assert!(minmax_map(&[1.0, 2.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn dtw_examples() {
        assert_eq!(dtw(&[4.0, 1.0, 7.0], &[4.0, 1.0, 7.0]).unwrap(), 0.0);
        assert_eq!(dtw(&[0.0], &[3.0]).unwrap(), 3.0);
        let x = [1.0, 2.0, 3.0];
        let y = [1.0, 2.0, 2.0, 3.0];
        assert_eq!(dtw_oracle(&x, &y), 0.0);
        assert_eq!(dtw(&x, &y).unwrap(), 0.0);
        assert!(dtw(&[], &[1.0]).is_err());
    }

    #[test]
    fn dtw_matches_oracle_on_small_curves() {
        // Every length-1..=3 pair over {0,1,2}; the acceptance suite covers length 6.
        fn all(len: usize) -> Vec<Vec<f64>> {
            (0..3usize.pow(len as u32))
                .map(|mut code| {
                    (0..len)
                        .map(|_| {
                            let v = (code % 3) as f64;
                            code /= 3;
                            v
                        })
                        .collect()
                })
                .collect()
        }
        for lx in 1..=3 {
            for ly in 1..=3 {
                for x in all(lx) {
                    for y in all(ly) {
                        assert_eq!(dtw(&x, &y).unwrap(), dtw_oracle(&x, &y), "{x:?} {y:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn curve_validation() {
        assert!(PerformanceCurve::new(CurveKind::Cumulative, 10.0, vec![]).is_err());
        assert!(PerformanceCurve::new(CurveKind::Cumulative, 10.0, vec![1.0, 0.5]).is_err());
        assert!(PerformanceCurve::new(CurveKind::IntervalRate, 10.0, vec![1.0, 0.5]).is_ok());
        assert!(PerformanceCurve::new(CurveKind::IntervalRate, 10.0, vec![-1.0]).is_err());
        assert!(PerformanceCurve::new(CurveKind::IntervalRate, 0.0, vec![1.0]).is_err());
        assert!(TimeGrid::new(100.0, 1).is_err());
        assert_eq!(TimeGrid::new(100.0, 10).unwrap().midpoint(0), 5.0);
    }

    #[test]
    fn interval_rate_of_cumulative() {
        let c = PerformanceCurve::new(CurveKind::Cumulative, 10.0, vec![1.0, 1.0, 4.0]).unwrap();
        assert_eq!(c.to_interval_rate().unwrap().values(), [1.0, 0.0, 3.0]);
    }

    #[test]
    fn csv_layout() {
        let c = PerformanceCurve::new(CurveKind::IntervalRate, 10.0, vec![0.5, 2.0]).unwrap();
        assert_eq!(
            c.to_csv_string(),
            "t_index,t_seconds,value\n0,10,0.5\n1,20,2\n"
        );
        assert!(PerformanceCurve::from_csv_str(CurveKind::IntervalRate, "a,b,c\n1,2,3\n").is_err());
    }

    fn curve_values() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1e6f64..1e6, 1..40)
    }

    proptest! {
        #[test]
        fn dtw_is_symmetric_and_reflexive(x in curve_values(), y in curve_values()) {
            prop_assert_eq!(dtw(&x, &x).unwrap(), 0.0);
            prop_assert_eq!(dtw(&x, &y).unwrap(), dtw(&y, &x).unwrap());
            prop_assert!(dtw(&x, &y).unwrap() >= 0.0);
        }

        #[test]
        fn minmax_is_idempotent_and_keeps_extrema(x in curve_values(), a in -100.0f64..100.0, w in 0.001f64..100.0) {
            let b = a + w;
            prop_assume!(x.iter().any(|v| *v != x[0]));
            let once = minmax_map(&x, a, b).unwrap();
            let twice = minmax_map(&once, a, b).unwrap();
            prop_assert_eq!(&once, &twice);
            let argmax = x.iter().enumerate().fold(0, |best, (i, e)| if *e > x[best] { i } else { best });
            let argmin = x.iter().enumerate().fold(0, |best, (i, e)| if *e < x[best] { i } else { best });
            prop_assert_eq!(once[argmax], b);
            prop_assert_eq!(once[argmin], a);
            prop_assert_eq!(once.iter().cloned().fold(f64::INFINITY, f64::min), a);
            prop_assert_eq!(once.iter().cloned().fold(f64::NEG_INFINITY, f64::max), b);
        }

        #[test]
        fn curve_csv_and_json_round_trip(values in prop::collection::vec(0.0f64..1e9, 1..30), dt in 0.01f64..100.0) {
            let c = PerformanceCurve::new(CurveKind::IntervalRate, dt, values).unwrap();
            let from_csv = PerformanceCurve::from_csv_str(CurveKind::IntervalRate, &c.to_csv_string()).unwrap();
            prop_assert_eq!(&from_csv, &c);
            prop_assert_eq!(PerformanceCurve::from_json_str(&c.to_json_string()).unwrap(), c);
        }
    }
}
