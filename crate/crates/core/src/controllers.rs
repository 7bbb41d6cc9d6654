//! Swarm control methods: correlated random walk (CRW), decaying pheromone
//! object tracking (DPO) and cache-partitioned DPO (GP-DPO).
//!
//! Every controller maps a robot's local view (its own pose, blocks within
//! sensing range, the nest light bearing and, for GP-DPO, the cache) plus its
//! private memory and RNG stream to a desired heading and speed. None of them
//! can see global world state.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{wrap_angle, Vec2};

/// Densities below this are forgotten.
pub const PHEROMONE_CULL: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ControllerKind {
    Crw,
    Dpo,
    GpDpo,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [
        ControllerKind::Crw,
        ControllerKind::Dpo,
        ControllerKind::GpDpo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::Crw => "CRW",
            ControllerKind::Dpo => "DPO",
            ControllerKind::GpDpo => "GP-DPO",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('_', "-").as_str() {
            "CRW" => Ok(ControllerKind::Crw),
            "DPO" => Ok(ControllerKind::Dpo),
            "GP-DPO" | "GPDPO" => Ok(ControllerKind::GpDpo),
            _ => Err(Error::Parameter(format!(
                "unknown controller `{s}` (expected CRW, DPO or GP-DPO)"
            ))),
        }
    }
}

impl TryFrom<String> for ControllerKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ControllerKind> for String {
    fn from(k: ControllerKind) -> String {
        k.as_str().to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    /// Standard deviation of the per-tick heading perturbation, radians.
    pub sigma_turn: f64,
    /// Pheromone decay factor applied once per aggregation interval.
    pub gamma: f64,
    /// Probability of taking a partitioned subtask at a task boundary.
    pub p_part: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            sigma_turn: 0.1,
            gamma: 0.9,
            p_part: 0.5,
        }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_turn > 0.0 && self.sigma_turn.is_finite()) {
            return Err(Error::config(
                "controller.sigma_turn",
                format!("must be positive, got {}", self.sigma_turn),
            ));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config(
                "controller.gamma",
                format!("must lie in (0, 1), got {}", self.gamma),
            ));
        }
        if !(0.0..=1.0).contains(&self.p_part) {
            return Err(Error::config(
                "controller.p_part",
                format!("must lie in [0, 1], got {}", self.p_part),
            ));
        }
        Ok(())
    }
}

/// A free block seen this tick.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sighting {
    pub block: usize,
    pub position: Vec2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CacheView {
    pub position: Vec2,
    pub radius: f64,
    /// Number of cached blocks, known only while the cache is in sensing range.
    pub count: Option<usize>,
}

/// Everything a robot perceives in one tick.
#[derive(Clone, Copy, Debug)]
pub struct Observation<'a> {
    pub position: Vec2,
    pub heading: f64,
    pub carrying: bool,
    pub nest_light: Vec2,
    pub pickup_radius: f64,
    pub speed: f64,
    pub sightings: &'a [Sighting],
    pub cache: Option<CacheView>,
}

/// Desired heading (radians) and speed (m/s) for the next tick.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    pub heading: f64,
    pub speed: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PheromoneEntry {
    pub block: usize,
    pub position: Vec2,
    pub density: f64,
    pub last_seen: u64,
}

/// A robot's private memory of where it has seen blocks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PheromoneMap {
    entries: Vec<PheromoneEntry>,
}

impl PheromoneMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[PheromoneEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn insert(&mut self, entry: PheromoneEntry) {
        match self.entries.iter_mut().find(|e| e.block == entry.block) {
            Some(e) => *e = entry,
            None => self.entries.push(entry),
        }
    }

    pub fn forget(&mut self, block: usize) {
        self.entries.retain(|e| e.block != block);
    }
}

/// Decays every density by `gamma`, refreshes sighted blocks to 1.0 and culls
/// faded entries.
pub fn pheromone_update(map: &mut PheromoneMap, sightings: &[Sighting], gamma: f64, now: u64) {
    for e in &mut map.entries {
        e.density *= gamma;
    }
    for s in sightings {
        map.insert(PheromoneEntry {
            block: s.block,
            position: s.position,
            density: 1.0,
            last_seen: now,
        });
    }
    map.entries.retain(|e| e.density >= PHEROMONE_CULL);
}

/// Information relevance of a remembered block: fresh and near beats stale and far.
pub fn relevance(density: f64, distance: f64) -> f64 {
    density / (1.0 + distance)
}

fn phototaxis(obs: &Observation<'_>) -> Decision {
    Decision {
        heading: obs.position.bearing_to(obs.nest_light),
        speed: obs.speed,
    }
}

fn steer_to(obs: &Observation<'_>, target: Vec2) -> Decision {
    Decision {
        heading: obs.position.bearing_to(target),
        speed: obs.speed,
    }
}

pub fn crw_decide<R: Rng + ?Sized>(
    obs: &Observation<'_>,
    sigma_turn: f64,
    rng: &mut R,
) -> Decision {
    if obs.carrying {
        return phototaxis(obs);
    }
    let turn = Normal::new(0.0, sigma_turn)
        .expect("sigma_turn is validated positive")
        .sample(rng);
    Decision {
        heading: wrap_angle(obs.heading + turn),
        speed: obs.speed,
    }
}

/// Index of the most relevant remembered block.
fn best_entry(map: &PheromoneMap, from: Vec2) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in map.entries.iter().enumerate() {
        let r = relevance(e.density, from.distance(e.position));
        if best.is_none_or(|(_, br)| r > br) {
            best = Some((i, r));
        }
    }
    best.map(|(i, _)| i)
}

/// Steers toward the most relevant remembered block, or random-walks when
/// memory is empty. Reaching a remembered spot that no longer holds the block
/// erases it.
pub fn dpo_decide<R: Rng + ?Sized>(
    map: &mut PheromoneMap,
    obs: &Observation<'_>,
    params: &ControllerParams,
    rng: &mut R,
) -> Decision {
    if obs.carrying {
        return phototaxis(obs);
    }
    let Some(i) = best_entry(map, obs.position) else {
        return crw_decide(obs, params.sigma_turn, rng);
    };
    let target = map.entries[i];
    if obs.position.distance(target.position) <= obs.pickup_radius
        && !obs.sightings.iter().any(|s| s.block == target.block)
    {
        map.entries.remove(i);
        return crw_decide(obs, params.sigma_turn, rng);
    }
    steer_to(obs, target.position)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Source to nest, unpartitioned.
    Full,
    /// Source to cache.
    Harvester,
    /// Cache to nest.
    Collector,
}

/// Partitions with probability `p_part`, splitting evenly between the two subtasks.
pub fn draw_role<R: Rng + ?Sized>(p_part: f64, rng: &mut R) -> Role {
    let u: f64 = rng.random();
    if u < p_part {
        if rng.random::<bool>() {
            Role::Harvester
        } else {
            Role::Collector
        }
    } else {
        Role::Full
    }
}

/// Per-robot GP-DPO state: pheromone memory plus the current task role.
/// `role == None` marks a task boundary; the next decision draws a new role.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GpDpoMemory {
    pub map: PheromoneMap,
    pub role: Option<Role>,
}

pub fn gpdpo_decide<R: Rng + ?Sized, T: Rng + ?Sized>(
    memory: &mut GpDpoMemory,
    obs: &Observation<'_>,
    params: &ControllerParams,
    rng: &mut R,
    task_rng: &mut T,
) -> Decision {
    let cache = obs.cache.expect("GP-DPO requires an arena cache");
    if memory.role.is_none() && !obs.carrying {
        memory.role = Some(draw_role(params.p_part, task_rng));
    }
    match memory.role.unwrap_or(Role::Full) {
        Role::Full => dpo_decide(&mut memory.map, obs, params, rng),
        Role::Harvester => {
            if obs.carrying {
                steer_to(obs, cache.position)
            } else {
                dpo_decide(&mut memory.map, obs, params, rng)
            }
        }
        Role::Collector => {
            if obs.carrying {
                return phototaxis(obs);
            }
            let at_cache = obs.position.distance(cache.position) <= cache.radius;
            if at_cache && cache.count == Some(0) {
                // Nothing to collect: wander this tick and re-draw next tick.
                memory.role = None;
                return crw_decide(obs, params.sigma_turn, rng);
            }
            steer_to(obs, cache.position)
        }
    }
}
