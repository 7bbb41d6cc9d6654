//! Temporal environmental-condition signals.
//!
//! A variance scenario throttles the speed of block-carrying robots by a
//! Heaviside step of amplitude β switching at onset α. The same step is also
//! expressed as a one-dimensional condition signal on the analysis grid:
//! relative action cost, where ideal conditions cost 1 and a throttle of
//! fraction `v` costs `1 / (1 - v)` (the slowdown of a carry traverse).

use serde::{Deserialize, Serialize};

use crate::curves::TimeGrid;
use crate::error::{Error, Result};
use crate::sim::World;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// Adversity rises at α.
    StepUp,
    /// Adversity falls at α.
    StepDown,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::StepUp => "step_up",
            StepKind::StepDown => "step_down",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Larger values are more adverse.
    CostLike,
    /// Larger values are more favourable.
    PerformanceLike,
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "step amplitude beta must lie in (0, 1), got {beta}"
        )))
    }
}

/// `β·H(t - α)` with the half-maximum convention at `t = α`.
pub fn step_up(t: f64, alpha: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let d = t - alpha;
    Ok(if d < 0.0 {
        0.0
    } else if d == 0.0 {
        beta / 2.0
    } else {
        beta
    })
}

pub fn step_down(t: f64, alpha: f64, beta: f64) -> Result<f64> {
    Ok(beta - step_up(t, alpha, beta)?)
}

/// A validated step throttle: kind, amplitude β and onset α in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepThrottle {
    pub kind: StepKind,
    pub beta: f64,
    pub alpha: f64,
}

impl StepThrottle {
    pub fn new(kind: StepKind, beta: f64, alpha: f64) -> Result<Self> {
        check_beta(beta)?;
        if !alpha.is_finite() {
            return Err(Error::Parameter(format!(
                "onset alpha must be finite, got {alpha}"
            )));
        }
        Ok(Self { kind, beta, alpha })
    }

    /// Throttle fraction `V_k(t, α)` in `[0, β]`.
    pub fn fraction_at(&self, t: f64) -> f64 {
        let up = match (t - self.alpha).partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Less) => 0.0,
            Some(std::cmp::Ordering::Equal) => self.beta / 2.0,
            _ => self.beta,
        };
        match self.kind {
            StepKind::StepUp => up,
            StepKind::StepDown => self.beta - up,
        }
    }
}

/// Ideal and deviated condition signals sampled on an analysis grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceProfile {
    pub ideal: Vec<f64>,
    pub deviation: Vec<f64>,
    pub orientation: Orientation,
    pub kind: StepKind,
    pub beta: f64,
    pub alpha: f64,
}

impl VarianceProfile {
    pub fn len(&self) -> usize {
        self.ideal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ideal.is_empty()
    }
}

/// Samples the step at each interval midpoint and converts it to relative
/// action cost. Midpoints never coincide with an α that is a multiple of the
/// interval width, so the signals are clean steps.
pub fn condition_signals(
    kind: StepKind,
    beta: f64,
    alpha: f64,
    grid: &TimeGrid,
) -> Result<VarianceProfile> {
    let throttle = StepThrottle::new(kind, beta, alpha)?;
    let deviation = grid
        .midpoints()
        .map(|t| {
            let v = throttle.fraction_at(t);
            if v >= 1.0 {
                Err(Error::Parameter(format!(
                    "throttle fraction {v} at t={t} implies infinite cost"
                )))
            } else {
                Ok(1.0 / (1.0 - v))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VarianceProfile {
        ideal: vec![1.0; grid.num_intervals],
        deviation,
        orientation: Orientation::CostLike,
        kind,
        beta,
        alpha,
    })
}

/// Sets every robot's speed cap for time `t`: carrying robots are slowed to
/// `base * (1 - V(t))`, everyone else runs at base speed.
pub fn apply_throttle(world: &mut World, throttle: Option<&StepThrottle>, t: f64) {
    let base = world.params().robot_speed;
    let carry_cap = match throttle {
        Some(th) => base * (1.0 - th.fraction_at(t)),
        None => base,
    };
    for robot in world.robots_mut() {
        robot.speed_cap = if robot.carrying.is_some() {
            carry_cap
        } else {
            base
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn step_examples() {
        assert_eq!(step_up(4999.0, 5000.0, 0.4).unwrap(), 0.0);
        assert_eq!(step_up(5000.0, 5000.0, 0.4).unwrap(), 0.2);
        assert_eq!(step_up(5001.0, 5000.0, 0.4).unwrap(), 0.4);
        assert_eq!(step_down(10.0, 5000.0, 0.8).unwrap(), 0.8);
        assert_eq!(step_down(5000.0, 5000.0, 0.8).unwrap(), 0.4);
        assert_eq!(step_down(6000.0, 5000.0, 0.8).unwrap(), 0.0);
        for bad in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(matches!(step_up(1.0, 0.0, bad), Err(Error::Parameter(_))));
            assert!(step_down(1.0, 0.0, bad).is_err());
        }
    }

    #[test]
    fn signal_examples() {
        let grid = TimeGrid::new(100.0, 10).unwrap();
        let up = condition_signals(StepKind::StepUp, 0.4, 50.0, &grid).unwrap();
        assert_eq!(up.ideal, vec![1.0; 10]);
        assert_eq!(up.orientation, Orientation::CostLike);
        assert_eq!(up.deviation[..5], [1.0; 5]);
        assert!((up.deviation[7] - 1.0 / 0.6).abs() < 1e-15);
        assert!((up.deviation[7] - 1.6667).abs() < 1e-4);
        let down = condition_signals(StepKind::StepDown, 0.8, 50.0, &grid).unwrap();
        assert!((down.deviation[0] - 5.0).abs() < 1e-12);
        assert_eq!(down.deviation[9], 1.0);
        assert!(condition_signals(StepKind::StepDown, 1.0, 50.0, &grid).is_err());
    }

    #[test]
    fn throttle_matches_steps() {
        let th = StepThrottle::new(StepKind::StepUp, 0.4, 10.0).unwrap();
        assert_eq!(th.fraction_at(10.0), 0.2);
        let th = StepThrottle::new(StepKind::StepDown, 0.4, 10.0).unwrap();
        assert_eq!(th.fraction_at(3.0), 0.4);
        assert_eq!(th.fraction_at(30.0), 0.0);
    }

    proptest! {
        #[test]
        fn up_plus_down_is_beta(t in -1e4f64..1e4, alpha in -1e4f64..1e4, beta in 0.001f64..0.999) {
            prop_assert_eq!(step_up(t, alpha, beta).unwrap() + step_down(t, alpha, beta).unwrap(), beta);
            prop_assert_eq!(step_up(alpha, alpha, beta).unwrap() + step_down(alpha, alpha, beta).unwrap(), beta);
        }

        #[test]
        fn deviation_cost_at_least_one(beta in 0.001f64..0.999, frac in 0.0f64..1.0, up in any::<bool>()) {
            let grid = TimeGrid::new(200.0, 20).unwrap();
            let kind = if up { StepKind::StepUp } else { StepKind::StepDown };
            let p = condition_signals(kind, beta, frac * 200.0, &grid).unwrap();
            let th = StepThrottle::new(kind, beta, frac * 200.0).unwrap();
            for (i, v) in p.deviation.iter().enumerate() {
                prop_assert!(*v >= 1.0);
                prop_assert_eq!(*v == 1.0, th.fraction_at(grid.midpoint(i)) == 0.0);
            }
        }
    }
}
