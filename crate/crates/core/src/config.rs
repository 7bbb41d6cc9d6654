//! Experiment configuration: a TOML file with `[arena]`, `[controller]`,
//! `[experiment]` and `[variance]` sections, plus `section.key=value`
//! command-line overrides.
//!
//! ```toml
//! [arena]
//! width = 32.0
//! height = 16.0
//!
//! [controller]
//! kind = ["CRW", "DPO", "GP-DPO"]   # or a single name
//! sigma_turn = 0.1
//! gamma = 0.9
//! p_part = 0.5
//!
//! [experiment]
//! sizes = [1, 2, 4, 8, 16, 32, 64]
//! runs_per_cell = 10
//! duration_s = 2000.0
//! tick_s = 0.1
//! interval_s = 10.0
//! master_seed = 1
//! output_dir = "out"
//!
//! [variance]
//! kind = "none"        # none | step_up | step_down
//! beta = 0.4
//! alpha_fraction = 0.5 # onset at alpha_fraction * duration_s
//! ```
//!
//! Every key is optional and falls back to the desk-scale defaults above.
//! `beta` is the step amplitude of the throttle on carrying robots; the
//! third case of the step function (after onset) takes the full amplitude.

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::controllers::{ControllerKind, ControllerParams};
use crate::curves::TimeGrid;
use crate::error::{Error, Result};
use crate::metrics::SizeLadder;
use crate::sim::{whole_ratio, SimParams};
use crate::variance::{StepKind, StepThrottle};

/// One or more controllers to sweep.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ControllerSelection(pub Vec<ControllerKind>);

impl Serialize for ControllerSelection {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0.as_slice() {
            [one] => one.serialize(s),
            many => many.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for ControllerSelection {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            One(ControllerKind),
            Many(Vec<ControllerKind>),
        }
        match Raw::deserialize(d) {
            Ok(Raw::One(k)) => Ok(Self(vec![k])),
            Ok(Raw::Many(v)) => Ok(Self(v)),
            Err(_) => Err(serde::de::Error::custom(
                "expected a controller name (CRW, DPO, GP-DPO) or a list of them",
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub kind: ControllerSelection,
    pub sigma_turn: f64,
    pub gamma: f64,
    pub p_part: f64,
}

impl Default for ControllerSection {
    fn default() -> Self {
        let p = ControllerParams::default();
        Self {
            kind: ControllerSelection(ControllerKind::ALL.to_vec()),
            sigma_turn: p.sigma_turn,
            gamma: p.gamma,
            p_part: p.p_part,
        }
    }
}

impl ControllerSection {
    pub fn params(&self) -> ControllerParams {
        ControllerParams {
            sigma_turn: self.sigma_turn,
            gamma: self.gamma,
            p_part: self.p_part,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub sizes: Vec<usize>,
    pub runs_per_cell: usize,
    pub duration_s: f64,
    pub tick_s: f64,
    pub interval_s: f64,
    pub master_seed: u64,
    pub output_dir: String,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            sizes: vec![1, 2, 4, 8, 16, 32, 64],
            runs_per_cell: 10,
            duration_s: 2000.0,
            tick_s: 0.1,
            interval_s: 10.0,
            master_seed: 1,
            output_dir: "out".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceKind {
    #[default]
    None,
    StepUp,
    StepDown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VarianceSection {
    pub kind: VarianceKind,
    pub beta: f64,
    pub alpha_fraction: f64,
}

impl Default for VarianceSection {
    fn default() -> Self {
        Self {
            kind: VarianceKind::None,
            beta: 0.4,
            alpha_fraction: 0.5,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub arena: SimParams,
    pub controller: ControllerSection,
    pub experiment: ExperimentSection,
    pub variance: VarianceSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(toml_error)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str_with_overrides(&text, overrides)
    }

    /// Parses `text`, then applies `section.key=value` overrides. Every key
    /// must name an existing field.
    pub fn from_toml_str_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let base: Self = toml::from_str(text).map_err(toml_error)?;
        if overrides.is_empty() {
            base.validate()?;
            return Ok(base);
        }
        let mut table = toml::Table::try_from(&base).expect("config serializes to a table");
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        let config: Self = table.try_into().map_err(toml_error)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.arena.validate()?;
        self.controller.params().validate()?;
        if self.controller.kind.0.is_empty() {
            return Err(Error::config("controller.kind", "names no controller"));
        }
        let mut kinds = self.controller.kind.0.clone();
        kinds.sort();
        kinds.dedup();
        if kinds.len() != self.controller.kind.0.len() {
            return Err(Error::config("controller.kind", "lists a controller twice"));
        }
        let ex = &self.experiment;
        SizeLadder::new(ex.sizes.clone())
            .map_err(|e| Error::config("experiment.sizes", e.to_string()))?;
        if ex.runs_per_cell == 0 {
            return Err(Error::config(
                "experiment.runs_per_cell",
                "must be at least 1",
            ));
        }
        whole_ratio(
            ex.interval_s,
            ex.tick_s,
            "experiment.interval_s",
            "experiment.tick_s",
        )?;
        let intervals = whole_ratio(
            ex.duration_s,
            ex.interval_s,
            "experiment.duration_s",
            "experiment.interval_s",
        )?;
        if intervals < 2 {
            return Err(Error::config(
                "experiment.duration_s",
                "must span at least two aggregation intervals",
            ));
        }
        let v = &self.variance;
        if v.kind != VarianceKind::None {
            if !(v.beta > 0.0 && v.beta < 1.0) {
                return Err(Error::config(
                    "variance.beta",
                    format!("must lie in (0, 1), got {}", v.beta),
                ));
            }
            if !(0.0..=1.0).contains(&v.alpha_fraction) {
                return Err(Error::config(
                    "variance.alpha_fraction",
                    format!("must lie in [0, 1], got {}", v.alpha_fraction),
                ));
            }
        }
        Ok(())
    }

    pub fn ladder(&self) -> SizeLadder {
        SizeLadder::new(self.experiment.sizes.clone()).expect("validated ladder")
    }

    pub fn controllers(&self) -> &[ControllerKind] {
        &self.controller.kind.0
    }

    pub fn grid(&self) -> TimeGrid {
        let n = (self.experiment.duration_s / self.experiment.interval_s).round() as usize;
        TimeGrid::new(self.experiment.duration_s, n).expect("validated grid")
    }

    pub fn alpha_seconds(&self) -> f64 {
        self.variance.alpha_fraction * self.experiment.duration_s
    }

    pub fn step_kind(&self) -> Option<StepKind> {
        match self.variance.kind {
            VarianceKind::None => None,
            VarianceKind::StepUp => Some(StepKind::StepUp),
            VarianceKind::StepDown => Some(StepKind::StepDown),
        }
    }

    pub fn throttle(&self) -> Option<StepThrottle> {
        self.step_kind().map(|kind| {
            StepThrottle::new(kind, self.variance.beta, self.alpha_seconds())
                .expect("validated variance")
        })
    }

    /// SHA-256 over the canonical TOML form, ignoring where outputs go.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.experiment.output_dir.clear();
        hex::encode(Sha256::digest(canonical.to_toml_string().as_bytes()))
    }
}

fn toml_error(e: toml::de::Error) -> Error {
    let message = e.message().to_string();
    let field = message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "config".to_string());
    Error::config(field, e.to_string().trim().to_string())
}

fn parse_override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::config(item, "override must look like section.key=value"))?;
    let key = key.trim();
    let (section, field) = key
        .split_once('.')
        .ok_or_else(|| Error::config(key, "override key must look like section.key"))?;
    let slot = table
        .get_mut(section)
        .and_then(|s| s.as_table_mut())
        .and_then(|s| s.get_mut(field))
        .ok_or_else(|| Error::config(key, "unknown config key"))?;
    let mut value = parse_override_value(raw.trim());
    // Keep numeric fields numeric when an integer is given for a float.
    if let (toml::Value::Float(_), toml::Value::Integer(i)) = (&*slot, &value) {
        value = toml::Value::Float(*i as f64);
    }
    *slot = value;
    Ok(())
}
