//! Discrete-time 2D kinematic simulation of single-source foraging.
//!
//! Robots are unicycles with a bounded speed and turn rate. They are
//! permeable: nothing resolves physical contact, so interference shows up
//! only as time spent in avoidance maneuvers, which is what the trace
//! records. Blocks start in a source strip at the east wall and respawn there
//! once delivered to the nest strip at the west wall.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controllers::{
    crw_decide, dpo_decide, gpdpo_decide, pheromone_update, CacheView, ControllerKind,
    ControllerParams, Decision, GpDpoMemory, Observation, PheromoneMap, Role, Sighting,
};
use crate::curves::{parse_field, CurveKind, PerformanceCurve, TimeGrid};
use crate::error::{Error, Result};
use crate::geom::{angle_diff, wrap_angle, Rect, Vec2};
use crate::variance::{apply_throttle, StepThrottle};

/// Arena geometry and robot model. Serialized as the `[arena]` config section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub width: f64,
    pub height: f64,
    /// Depth of the nest strip along the west wall.
    pub nest_depth: f64,
    /// Depth of the block source strip along the east wall.
    pub source_depth: f64,
    pub num_blocks: usize,
    pub robot_radius: f64,
    /// Avoidance trigger radius.
    pub r_prox: f64,
    pub pickup_radius: f64,
    pub sensing_radius: f64,
    /// Base speed cap, m/s.
    pub robot_speed: f64,
    /// Largest heading change per second, rad/s.
    pub max_turn_rate: f64,
    /// Heading change per second while avoiding, rad/s.
    pub avoid_turn_rate: f64,
    /// Cache location as fractions of width and height (GP-DPO only).
    pub cache_x: f64,
    pub cache_y: f64,
    pub cache_radius: f64,
    /// Keep-out margin from the walls for spawned blocks and robots.
    pub spawn_margin: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            width: 32.0,
            height: 16.0,
            nest_depth: 2.0,
            source_depth: 4.0,
            num_blocks: 50,
            robot_radius: 0.1,
            r_prox: 0.2,
            pickup_radius: 0.2,
            sensing_radius: 2.0,
            robot_speed: 1.0,
            max_turn_rate: PI,
            avoid_turn_rate: PI,
            cache_x: 0.5,
            cache_y: 0.5,
            cache_radius: 0.5,
            spawn_margin: 0.5,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("arena.width", self.width),
            ("arena.height", self.height),
            ("arena.nest_depth", self.nest_depth),
            ("arena.source_depth", self.source_depth),
            ("arena.robot_radius", self.robot_radius),
            ("arena.r_prox", self.r_prox),
            ("arena.pickup_radius", self.pickup_radius),
            ("arena.sensing_radius", self.sensing_radius),
            ("arena.robot_speed", self.robot_speed),
            ("arena.max_turn_rate", self.max_turn_rate),
            ("arena.avoid_turn_rate", self.avoid_turn_rate),
            ("arena.cache_radius", self.cache_radius),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("must be positive, got {v}")));
            }
        }
        if self.num_blocks == 0 {
            return Err(Error::config("arena.num_blocks", "must be at least 1"));
        }
        if self.spawn_margin.is_nan() || self.spawn_margin < 0.0 {
            return Err(Error::config("arena.spawn_margin", "must be non-negative"));
        }
        if self.nest_depth + self.source_depth >= self.width {
            return Err(Error::config(
                "arena.nest_depth",
                "nest and source strips overlap; their depths must sum to less than the width",
            ));
        }
        if 2.0 * self.spawn_margin >= self.source_depth.min(self.nest_depth).min(self.height) {
            return Err(Error::config(
                "arena.spawn_margin",
                "margin leaves no room to spawn inside the nest or source strip",
            ));
        }
        for (field, v) in [
            ("arena.cache_x", self.cache_x),
            ("arena.cache_y", self.cache_y),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(
                    field,
                    format!("must be a fraction in [0, 1], got {v}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Arena {
    pub bounds: Rect,
    pub nest: Rect,
    pub source: Rect,
    pub cache_position: Option<Vec2>,
    pub nest_light: Vec2,
    pub num_blocks: usize,
}

impl Arena {
    pub fn new(params: &SimParams, with_cache: bool) -> Self {
        let (w, h) = (params.width, params.height);
        Self {
            bounds: Rect::new(Vec2::new(0.0, 0.0), Vec2::new(w, h)),
            nest: Rect::new(Vec2::new(0.0, 0.0), Vec2::new(params.nest_depth, h)),
            source: Rect::new(Vec2::new(w - params.source_depth, 0.0), Vec2::new(w, h)),
            cache_position: with_cache.then(|| Vec2::new(params.cache_x * w, params.cache_y * h)),
            nest_light: Vec2::new(0.0, h / 2.0),
            num_blocks: params.num_blocks,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorState {
    Exploring,
    Acquiring,
    Homing,
    Avoiding,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AvoidanceCause {
    None,
    Wall,
    Robot,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobotState {
    pub position: Vec2,
    pub heading: f64,
    pub speed_cap: f64,
    pub carrying: Option<usize>,
    pub behavior: BehaviorState,
    pub avoidance_cause: AvoidanceCause,
}

impl RobotState {
    pub fn new(position: Vec2, heading: f64, speed_cap: f64) -> Self {
        Self {
            position,
            heading,
            speed_cap,
            carrying: None,
            behavior: BehaviorState::Exploring,
            avoidance_cause: AvoidanceCause::None,
        }
    }
}

/// What a robot must steer away from, and the heading that points away from it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Avoidance {
    pub cause: AvoidanceCause,
    pub away_heading: f64,
}

/// Robots inside `r_prox` win over walls inside `r_prox`; the nearest threat
/// of the winning kind sets the escape heading.
pub fn detect_avoidance(
    robot: &RobotState,
    neighbors: &[Vec2],
    walls: &Rect,
    r_prox: f64,
) -> Option<Avoidance> {
    let p = robot.position;
    let nearest_robot = neighbors
        .iter()
        .map(|&q| (q, p.distance(q)))
        .filter(|&(_, d)| d < r_prox)
        .min_by(|a, b| a.1.total_cmp(&b.1));
    if let Some((q, d)) = nearest_robot {
        let away_heading = if d > 0.0 {
            q.bearing_to(p)
        } else {
            wrap_angle(robot.heading + PI)
        };
        return Some(Avoidance {
            cause: AvoidanceCause::Robot,
            away_heading,
        });
    }
    // Inward normals of the west, east, south and north walls.
    let walls = [
        (p.x - walls.min.x, 0.0),
        (walls.max.x - p.x, PI),
        (p.y - walls.min.y, PI / 2.0),
        (walls.max.y - p.y, -PI / 2.0),
    ];
    walls
        .into_iter()
        .filter(|&(d, _)| d < r_prox)
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, away_heading)| Avoidance {
            cause: AvoidanceCause::Wall,
            away_heading,
        })
}

/// Turns toward `away_heading` at `turn_rate`; moves only once the heading is
/// within a right angle of it, so the maneuver never closes on the threat.
pub fn avoidance_maneuver(
    robot: &RobotState,
    avoidance: &Avoidance,
    turn_rate: f64,
    dt: f64,
) -> Decision {
    let max_turn = turn_rate * dt;
    let diff = angle_diff(robot.heading, avoidance.away_heading);
    let heading = wrap_angle(robot.heading + diff.clamp(-max_turn, max_turn));
    let remaining = angle_diff(heading, avoidance.away_heading).abs();
    Decision {
        heading,
        speed: if remaining < PI / 2.0 {
            robot.speed_cap
        } else {
            0.0
        },
    }
}

/// One controller decision plus the avoidance override that produced it, if any.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Command {
    pub decision: Decision,
    pub avoidance: Option<Avoidance>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockState {
    Free,
    Carried(usize),
    Cached,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Block {
    pub position: Vec2,
    pub state: BlockState,
}

/// Per-robot controller memory.
#[derive(Clone, Debug, PartialEq)]
pub enum Memory {
    Crw,
    Dpo(PheromoneMap),
    GpDpo(GpDpoMemory),
}

impl Memory {
    fn for_kind(kind: ControllerKind) -> Self {
        match kind {
            ControllerKind::Crw => Memory::Crw,
            ControllerKind::Dpo => Memory::Dpo(PheromoneMap::new()),
            ControllerKind::GpDpo => Memory::GpDpo(GpDpoMemory::default()),
        }
    }

    pub fn role(&self) -> Option<Role> {
        match self {
            Memory::GpDpo(m) => m.role,
            _ => None,
        }
    }

    fn map_mut(&mut self) -> Option<&mut PheromoneMap> {
        match self {
            Memory::Crw => None,
            Memory::Dpo(map) => Some(map),
            Memory::GpDpo(m) => Some(&mut m.map),
        }
    }

    fn has_target(&self) -> bool {
        match self {
            Memory::Crw => false,
            Memory::Dpo(map) => !map.is_empty(),
            Memory::GpDpo(m) => m.role == Some(Role::Collector) || !m.map.is_empty(),
        }
    }

    fn end_task(&mut self) {
        if let Memory::GpDpo(m) = self {
            m.role = None;
        }
    }
}

/// Controller memory and private RNG streams of one robot.
#[derive(Clone, Debug)]
pub struct Agent {
    pub memory: Memory,
    rng: ChaCha8Rng,
    task_rng: ChaCha8Rng,
}

/// Totals accumulated over the current aggregation interval.
#[derive(Clone, Copy, Debug, Default)]
struct IntervalTally {
    delivered: u64,
    robot_ticks: u64,
    wall_ticks: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub cum_delivered: u64,
    pub delivered: u64,
    pub avoid_robot_s: f64,
    pub avoid_wall_s: f64,
    pub avoiding_count: u64,
}

/// Everything one run observed, one record per aggregation interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub config_digest: String,
    pub seed: u64,
    pub interval_seconds: f64,
    pub records: Vec<IntervalRecord>,
}

const TRACE_HEADER: &str =
    "interval,cum_delivered,delivered,avoid_robot_s,avoid_wall_s,avoiding_count";

/// Metadata written next to each run CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSidecar {
    pub config_digest: String,
    pub seed: u64,
    pub interval_seconds: f64,
    pub controller: ControllerKind,
    pub n: usize,
    pub run_index: usize,
}

impl RunTrace {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for (i, r) in self.records.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i},{},{},{},{},{}",
                r.cum_delivered, r.delivered, r.avoid_robot_s, r.avoid_wall_s, r.avoiding_count
            );
        }
        out
    }

    pub fn records_from_csv_str(text: &str) -> Result<Vec<IntervalRecord>> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header = reader.headers()?.iter().collect::<Vec<_>>().join(",");
        if header != TRACE_HEADER {
            return Err(Error::Format(format!(
                "unexpected run trace header `{header}`"
            )));
        }
        let mut records = Vec::new();
        for (row, rec) in reader.records().enumerate() {
            let rec = rec?;
            let i: usize = parse_field(&rec, 0)?;
            let cum_delivered = parse_field(&rec, 1)?;
            let delivered = parse_field(&rec, 2)?;
            let avoid_robot_s = parse_field(&rec, 3)?;
            let avoid_wall_s = parse_field(&rec, 4)?;
            let avoiding_count = parse_field(&rec, 5)?;
            if i != row {
                return Err(Error::Format(format!(
                    "run trace row {row} carries interval {i}"
                )));
            }
            records.push(IntervalRecord {
                cum_delivered,
                delivered,
                avoid_robot_s,
                avoid_wall_s,
                avoiding_count,
            });
        }
        Ok(records)
    }

    pub fn read(csv_path: &Path, sidecar: &TraceSidecar) -> Result<Self> {
        let text = std::fs::read_to_string(csv_path).map_err(|e| Error::io(csv_path, e))?;
        Ok(Self {
            config_digest: sidecar.config_digest.clone(),
            seed: sidecar.seed,
            interval_seconds: sidecar.interval_seconds,
            records: Self::records_from_csv_str(&text)?,
        })
    }

    pub fn cumulative_curve(&self) -> Result<PerformanceCurve> {
        PerformanceCurve::new(
            CurveKind::Cumulative,
            self.interval_seconds,
            self.records
                .iter()
                .map(|r| r.cum_delivered as f64)
                .collect(),
        )
    }

    pub fn rate_curve(&self) -> Result<PerformanceCurve> {
        PerformanceCurve::new(
            CurveKind::IntervalRate,
            self.interval_seconds,
            self.records.iter().map(|r| r.delivered as f64).collect(),
        )
    }
}

/// `t_lost^N(t)`: robot-seconds spent avoiding, any cause, per interval.
pub fn interference_curve(trace: &RunTrace, grid: &TimeGrid) -> Result<PerformanceCurve> {
    if trace.records.len() != grid.num_intervals {
        return Err(Error::Precondition(format!(
            "trace has {} intervals but the grid has {}",
            trace.records.len(),
            grid.num_intervals
        )));
    }
    PerformanceCurve::new(
        CurveKind::IntervalRate,
        grid.interval_seconds(),
        trace
            .records
            .iter()
            .map(|r| r.avoid_robot_s + r.avoid_wall_s)
            .collect(),
    )
}

/// Block bookkeeping snapshot; `free + in_transit + cached == num_blocks`
/// and every delivery respawns exactly one block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockCensus {
    pub free: usize,
    pub in_transit: usize,
    pub cached: usize,
    pub delivered: u64,
    pub respawned: u64,
}

/// Everything needed to run one simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSetup {
    pub params: SimParams,
    pub controller: ControllerKind,
    pub controller_params: ControllerParams,
    pub num_robots: usize,
    pub tick_seconds: f64,
    pub interval_seconds: f64,
    pub duration_seconds: f64,
    pub throttle: Option<StepThrottle>,
    pub seed: u64,
    pub config_digest: String,
}

impl RunSetup {
    pub fn ticks_per_interval(&self) -> Result<u64> {
        whole_ratio(
            self.interval_seconds,
            self.tick_seconds,
            "experiment.interval_s",
            "experiment.tick_s",
        )
    }

    pub fn num_intervals(&self) -> Result<usize> {
        Ok(whole_ratio(
            self.duration_seconds,
            self.interval_seconds,
            "experiment.duration_s",
            "experiment.interval_s",
        )? as usize)
    }
}

/// `num / den` when it is a positive whole number.
pub(crate) fn whole_ratio(num: f64, den: f64, num_field: &str, den_field: &str) -> Result<u64> {
    if !(num > 0.0 && den > 0.0 && num.is_finite() && den.is_finite()) {
        return Err(Error::config(
            num_field,
            format!("{num} / {den} needs positive operands"),
        ));
    }
    let ratio = num / den;
    let rounded = ratio.round();
    if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::config(
            num_field,
            format!("{num} is not a whole multiple of {den_field} = {den}"),
        ));
    }
    Ok(rounded as u64)
}

pub struct World {
    params: SimParams,
    arena: Arena,
    controller: ControllerKind,
    controller_params: ControllerParams,
    tick_seconds: f64,
    ticks_per_interval: u64,
    gamma_per_tick: f64,
    throttle: Option<StepThrottle>,
    tick: u64,
    robots: Vec<RobotState>,
    agents: Vec<Agent>,
    blocks: Vec<Block>,
    cache_count: usize,
    rng: ChaCha8Rng,
    tally: IntervalTally,
    delivered_total: u64,
    respawned_total: u64,
    records: Vec<IntervalRecord>,
}

fn sample_in<R: Rng + ?Sized>(rect: &Rect, margin: f64, rng: &mut R) -> Vec2 {
    Vec2::new(
        rng.random_range(rect.min.x + margin..rect.max.x - margin),
        rng.random_range(rect.min.y + margin..rect.max.y - margin),
    )
}

impl World {
    pub fn new(setup: &RunSetup) -> Result<Self> {
        setup.params.validate()?;
        setup.controller_params.validate()?;
        if setup.num_robots == 0 {
            return Err(Error::Precondition(
                "a swarm needs at least one robot".into(),
            ));
        }
        let ticks_per_interval = setup.ticks_per_interval()?;
        let params = setup.params.clone();
        let arena = Arena::new(&params, setup.controller == ControllerKind::GpDpo);
        let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);

        let mut blocks: Vec<Block> = Vec::with_capacity(params.num_blocks);
        for _ in 0..params.num_blocks {
            let position = Self::free_spot(&arena.source, &params, &blocks, &mut rng);
            blocks.push(Block {
                position,
                state: BlockState::Free,
            });
        }
        let robots = (0..setup.num_robots)
            .map(|_| {
                let p = sample_in(&arena.nest, params.spawn_margin, &mut rng);
                let heading = wrap_angle(rng.random_range(-PI..PI));
                RobotState::new(p, heading, params.robot_speed)
            })
            .collect();
        let agents = (0..setup.num_robots as u64)
            .map(|i| {
                let mut motion = ChaCha8Rng::seed_from_u64(setup.seed);
                motion.set_stream(2 * i + 1);
                let mut task = ChaCha8Rng::seed_from_u64(setup.seed);
                task.set_stream(2 * i + 2);
                Agent {
                    memory: Memory::for_kind(setup.controller),
                    rng: motion,
                    task_rng: task,
                }
            })
            .collect();
        let gamma_per_tick = setup
            .controller_params
            .gamma
            .powf(1.0 / ticks_per_interval as f64);
        Ok(Self {
            params,
            arena,
            controller: setup.controller,
            controller_params: setup.controller_params,
            tick_seconds: setup.tick_seconds,
            ticks_per_interval,
            gamma_per_tick,
            throttle: setup.throttle,
            tick: 0,
            robots,
            agents,
            blocks,
            cache_count: 0,
            rng,
            tally: IntervalTally::default(),
            delivered_total: 0,
            respawned_total: 0,
            records: Vec::new(),
        })
    }

    /// A uniformly random source point not crowding another free block.
    fn free_spot(
        source: &Rect,
        params: &SimParams,
        blocks: &[Block],
        rng: &mut ChaCha8Rng,
    ) -> Vec2 {
        let min_gap_sq = (2.0 * params.pickup_radius).powi(2);
        let mut p = sample_in(source, params.spawn_margin, rng);
        for _ in 0..32 {
            let crowded = blocks
                .iter()
                .any(|b| b.state == BlockState::Free && b.position.distance_sq(p) < min_gap_sq);
            if !crowded {
                break;
            }
            p = sample_in(source, params.spawn_margin, rng);
        }
        p
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn controller(&self) -> ControllerKind {
        self.controller
    }

    pub fn arena(&self) -> &Arena {
        &self.arena
    }

    pub fn robots(&self) -> &[RobotState] {
        &self.robots
    }

    pub fn robots_mut(&mut self) -> &mut [RobotState] {
        &mut self.robots
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn cache_count(&self) -> usize {
        self.cache_count
    }

    pub fn tick_index(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.tick_seconds
    }

    pub fn records(&self) -> &[IntervalRecord] {
        &self.records
    }

    pub fn census(&self) -> BlockCensus {
        let mut c = BlockCensus {
            free: 0,
            in_transit: 0,
            cached: 0,
            delivered: self.delivered_total,
            respawned: self.respawned_total,
        };
        for b in &self.blocks {
            match b.state {
                BlockState::Free => c.free += 1,
                BlockState::Carried(_) => c.in_transit += 1,
                BlockState::Cached => c.cached += 1,
            }
        }
        c
    }

    /// Places robot `i` for hand-built scenarios.
    pub fn place_robot(&mut self, i: usize, position: Vec2, heading: f64) {
        let r = &mut self.robots[i];
        r.position = position;
        r.heading = heading;
    }

    /// Moves every free block to `position` list order; extra blocks are left alone.
    pub fn place_blocks(&mut self, positions: &[Vec2]) {
        for (b, &p) in self.blocks.iter_mut().zip(positions) {
            b.position = p;
        }
    }

    /// Hands block `block` to robot `i`.
    pub fn give_block(&mut self, i: usize, block: usize) {
        self.blocks[block].state = BlockState::Carried(i);
        self.robots[i].carrying = Some(block);
    }

    fn sightings_for(&self, p: Vec2) -> Vec<Sighting> {
        let r2 = self.params.sensing_radius * self.params.sensing_radius;
        self.blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| b.state == BlockState::Free && b.position.distance_sq(p) <= r2)
            .map(|(block, b)| Sighting {
                block,
                position: b.position,
            })
            .collect()
    }

    /// Perception and decision for every robot against the current snapshot.
    pub fn decide(&mut self) -> Vec<Command> {
        let r_prox = self.params.r_prox;
        let interval = self.tick / self.ticks_per_interval;
        let mut commands = Vec::with_capacity(self.robots.len());
        for i in 0..self.robots.len() {
            let robot = &self.robots[i];
            let p = robot.position;
            let neighbors: Vec<Vec2> = self
                .robots
                .iter()
                .enumerate()
                .filter(|&(j, other)| j != i && other.position.distance_sq(p) < r_prox * r_prox)
                .map(|(_, other)| other.position)
                .collect();
            let sightings = self.sightings_for(p);
            let agent = &mut self.agents[i];
            if let Some(map) = agent.memory.map_mut() {
                pheromone_update(map, &sightings, self.gamma_per_tick, interval);
            }
            if let Some(avoid) = detect_avoidance(robot, &neighbors, &self.arena.bounds, r_prox) {
                commands.push(Command {
                    decision: avoidance_maneuver(
                        robot,
                        &avoid,
                        self.params.avoid_turn_rate,
                        self.tick_seconds,
                    ),
                    avoidance: Some(avoid),
                });
                continue;
            }
            let cache = self.arena.cache_position.map(|position| CacheView {
                position,
                radius: self.params.cache_radius,
                count: (position.distance(p) <= self.params.sensing_radius)
                    .then_some(self.cache_count),
            });
            let obs = Observation {
                position: p,
                heading: robot.heading,
                carrying: robot.carrying.is_some(),
                nest_light: self.arena.nest_light,
                pickup_radius: self.params.pickup_radius,
                speed: robot.speed_cap,
                sightings: &sightings,
                cache,
            };
            let params = &self.controller_params;
            let decision = match &mut agent.memory {
                Memory::Crw => crw_decide(&obs, params.sigma_turn, &mut agent.rng),
                Memory::Dpo(map) => dpo_decide(map, &obs, params, &mut agent.rng),
                Memory::GpDpo(mem) => {
                    gpdpo_decide(mem, &obs, params, &mut agent.rng, &mut agent.task_rng)
                }
            };
            commands.push(Command {
                decision,
                avoidance: None,
            });
        }
        commands
    }

    /// Advances one tick: throttle, decide, integrate.
    pub fn tick(&mut self) {
        let t = self.time();
        let throttle = self.throttle;
        apply_throttle(self, throttle.as_ref(), t);
        let commands = self.decide();
        step_world(self, &commands, self.tick_seconds);
    }

    pub fn into_trace(self, config_digest: String, seed: u64) -> RunTrace {
        RunTrace {
            config_digest,
            seed,
            interval_seconds: self.ticks_per_interval as f64 * self.tick_seconds,
            records: self.records,
        }
    }

    fn deliver(&mut self, i: usize, block: usize) {
        self.robots[i].carrying = None;
        self.delivered_total += 1;
        self.tally.delivered += 1;
        self.blocks[block].state = BlockState::Free;
        let spot = Self::free_spot(
            &self.arena.source,
            &self.params,
            &self.blocks,
            &mut self.rng,
        );
        self.blocks[block].position = spot;
        self.respawned_total += 1;
        self.agents[i].memory.end_task();
    }

    fn interact(&mut self, i: usize) {
        let p = self.robots[i].position;
        let role = self.agents[i].memory.role();
        if let Some(block) = self.robots[i].carrying {
            let to_cache = role == Some(Role::Harvester);
            match self.arena.cache_position {
                Some(cache) if to_cache => {
                    if p.distance(cache) <= self.params.cache_radius {
                        self.robots[i].carrying = None;
                        self.blocks[block].state = BlockState::Cached;
                        self.blocks[block].position = cache;
                        self.cache_count += 1;
                        self.agents[i].memory.end_task();
                    }
                }
                _ => {
                    if self.arena.nest.contains(p) {
                        self.deliver(i, block);
                    }
                }
            }
            return;
        }
        if role == Some(Role::Collector) && self.cache_count > 0 {
            if let Some(cache) = self.arena.cache_position {
                if p.distance(cache) <= self.params.cache_radius {
                    let block = self
                        .blocks
                        .iter()
                        .position(|b| b.state == BlockState::Cached)
                        .expect("cache count tracks cached blocks");
                    self.blocks[block].state = BlockState::Carried(i);
                    self.robots[i].carrying = Some(block);
                    self.cache_count -= 1;
                    return;
                }
            }
        }
        let r2 = self.params.pickup_radius * self.params.pickup_radius;
        let nearest = self
            .blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| b.state == BlockState::Free)
            .map(|(k, b)| (k, b.position.distance_sq(p)))
            .filter(|&(_, d)| d <= r2)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((block, _)) = nearest {
            self.blocks[block].state = BlockState::Carried(i);
            self.robots[i].carrying = Some(block);
            if let Some(map) = self.agents[i].memory.map_mut() {
                map.forget(block);
            }
        }
    }

    fn close_interval(&mut self) {
        let avoiding = self
            .robots
            .iter()
            .filter(|r| r.behavior == BehaviorState::Avoiding)
            .count() as u64;
        self.records.push(IntervalRecord {
            cum_delivered: self.delivered_total,
            delivered: self.tally.delivered,
            avoid_robot_s: self.tally.robot_ticks as f64 * self.tick_seconds,
            avoid_wall_s: self.tally.wall_ticks as f64 * self.tick_seconds,
            avoiding_count: avoiding,
        });
        self.tally = IntervalTally::default();
    }
}

/// Integrates one tick of motion, applies pickup, drop and delivery rules and
/// books avoidance time into the current interval.
pub fn step_world(world: &mut World, commands: &[Command], dt: f64) {
    assert_eq!(commands.len(), world.robots.len(), "one command per robot");
    let max_turn = world.params.max_turn_rate * dt;
    let bounds = world.arena.bounds;
    for (robot, cmd) in world.robots.iter_mut().zip(commands) {
        let turn = angle_diff(robot.heading, cmd.decision.heading).clamp(-max_turn, max_turn);
        robot.heading = wrap_angle(robot.heading + turn);
        let speed = cmd.decision.speed.min(robot.speed_cap).max(0.0);
        let proposed = robot.position + Vec2::from_heading(robot.heading) * (speed * dt);
        let clamped = Vec2::new(
            proposed.x.clamp(bounds.min.x, bounds.max.x),
            proposed.y.clamp(bounds.min.y, bounds.max.y),
        );
        robot.position = clamped;
        let mut cause = cmd.avoidance.map_or(AvoidanceCause::None, |a| a.cause);
        if clamped != proposed && cause == AvoidanceCause::None {
            cause = AvoidanceCause::Wall;
        }
        robot.avoidance_cause = cause;
        match cause {
            AvoidanceCause::Robot => world.tally.robot_ticks += 1,
            AvoidanceCause::Wall => world.tally.wall_ticks += 1,
            AvoidanceCause::None => {}
        }
    }
    for i in 0..world.robots.len() {
        world.interact(i);
        let has_target = world.agents[i].memory.has_target();
        let robot = &mut world.robots[i];
        robot.behavior = if robot.avoidance_cause != AvoidanceCause::None {
            BehaviorState::Avoiding
        } else if robot.carrying.is_some() {
            BehaviorState::Homing
        } else if has_target {
            BehaviorState::Acquiring
        } else {
            BehaviorState::Exploring
        };
    }
    world.tick += 1;
    if world.tick.is_multiple_of(world.ticks_per_interval) {
        world.close_interval();
    }
}

/// Runs a full simulation and returns its trace.
pub fn simulate(setup: &RunSetup) -> Result<RunTrace> {
    let intervals = setup.num_intervals()?;
    let mut world = World::new(setup)?;
    let total_ticks = intervals as u64 * world.ticks_per_interval;
    while world.tick < total_ticks {
        world.tick();
    }
    Ok(world.into_trace(setup.config_digest.clone(), setup.seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn setup(controller: ControllerKind, n: usize, seed: u64) -> RunSetup {
        RunSetup {
            params: SimParams::default(),
            controller,
            controller_params: ControllerParams::default(),
            num_robots: n,
            tick_seconds: 0.1,
            interval_seconds: 10.0,
            duration_seconds: 300.0,
            throttle: None,
            seed,
            config_digest: "test".into(),
        }
    }

    fn cmd(heading: f64, speed: f64) -> Command {
        Command {
            decision: Decision { heading, speed },
            avoidance: None,
        }
    }

    #[test]
    fn kinematic_step() {
        let mut s = setup(ControllerKind::Crw, 1, 1);
        s.params.robot_speed = 1.0;
        let mut w = World::new(&s).unwrap();
        w.place_robot(0, Vec2::new(1.0, 1.0), 0.0);
        w.robots_mut()[0].speed_cap = 1.0;
        step_world(&mut w, &[cmd(0.0, 1.0)], 0.1);
        let p = w.robots()[0].position;
        assert!((p.x - 1.1).abs() < 1e-12 && (p.y - 1.0).abs() < 1e-12);
        assert_eq!(w.robots()[0].behavior, BehaviorState::Exploring);
    }

    #[test]
    fn delivery_in_nest() {
        let mut w = World::new(&setup(ControllerKind::Crw, 1, 2)).unwrap();
        w.place_robot(0, Vec2::new(2.05, 8.0), PI);
        w.give_block(0, 3);
        step_world(&mut w, &[cmd(PI, 1.0)], 0.1);
        assert_eq!(w.robots()[0].carrying, None);
        assert_eq!(w.census().delivered, 1);
        assert_eq!(w.census().respawned, 1);
        assert_eq!(w.blocks()[3].state, BlockState::Free);
        assert!(w.arena().source.contains(w.blocks()[3].position));
    }

    #[test]
    fn leaving_the_arena_clamps_and_avoids_wall() {
        let mut w = World::new(&setup(ControllerKind::Crw, 1, 3)).unwrap();
        w.place_robot(0, Vec2::new(31.95, 8.0), 0.0);
        step_world(&mut w, &[cmd(0.0, 1.0)], 0.1);
        let r = &w.robots()[0];
        assert_eq!(r.position, Vec2::new(32.0, 8.0));
        assert_eq!(r.behavior, BehaviorState::Avoiding);
        assert_eq!(r.avoidance_cause, AvoidanceCause::Wall);
    }

    #[test]
    fn pickup_within_radius() {
        let mut w = World::new(&setup(ControllerKind::Crw, 1, 4)).unwrap();
        w.place_blocks(&[Vec2::new(20.0, 8.0)]);
        w.place_robot(0, Vec2::new(19.75, 8.0), 0.0);
        step_world(&mut w, &[cmd(0.0, 1.0)], 0.1);
        assert_eq!(w.robots()[0].carrying, Some(0));
        assert_eq!(w.robots()[0].behavior, BehaviorState::Homing);
        assert_eq!(w.census().in_transit, 1);
    }

    fn robot_at(x: f64, y: f64) -> RobotState {
        RobotState::new(Vec2::new(x, y), 0.0, 1.0)
    }

    #[test]
    fn avoidance_thresholds() {
        let walls = Rect::new(Vec2::new(0.0, 0.0), Vec2::new(32.0, 16.0));
        let r_prox = 0.2;
        let me = robot_at(10.0, 8.0);
        let a =
            detect_avoidance(&me, &[Vec2::new(10.0 + 0.9 * r_prox, 8.0)], &walls, r_prox).unwrap();
        assert_eq!(a.cause, AvoidanceCause::Robot);
        assert_eq!(a.away_heading, PI);

        let near_wall = robot_at(10.0, 0.5 * r_prox);
        let a = detect_avoidance(&near_wall, &[], &walls, r_prox).unwrap();
        assert_eq!(a.cause, AvoidanceCause::Wall);
        assert_eq!(a.away_heading, PI / 2.0);

        let a = detect_avoidance(&near_wall, &[Vec2::new(10.1, 0.1)], &walls, r_prox).unwrap();
        assert_eq!(a.cause, AvoidanceCause::Robot);

        assert!(detect_avoidance(&me, &[Vec2::new(10.5, 8.0)], &walls, r_prox).is_none());
    }

    #[test]
    fn maneuver_turns_before_moving() {
        let me = robot_at(31.9, 8.0);
        let wall = Avoidance {
            cause: AvoidanceCause::Wall,
            away_heading: PI,
        };
        let d = avoidance_maneuver(&me, &wall, PI, 0.1);
        assert!((d.heading - 0.1 * PI).abs() < 1e-12);
        assert_eq!(d.speed, 0.0);
        let mut turned = me.clone();
        turned.heading = 0.6 * PI;
        let d = avoidance_maneuver(&turned, &wall, PI, 0.1);
        assert_eq!(d.speed, 1.0);
    }

    fn trace_with(records: Vec<(f64, f64)>) -> RunTrace {
        RunTrace {
            config_digest: "x".into(),
            seed: 0,
            interval_seconds: 10.0,
            records: records
                .into_iter()
                .map(|(robot, wall)| IntervalRecord {
                    cum_delivered: 0,
                    delivered: 0,
                    avoid_robot_s: robot,
                    avoid_wall_s: wall,
                    avoiding_count: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn interference_examples() {
        let grid = TimeGrid::new(30.0, 3).unwrap();
        let c = interference_curve(
            &trace_with(vec![(0.0, 0.0), (0.0, 10.0), (6.0, 0.0)]),
            &grid,
        )
        .unwrap();
        assert_eq!(c.values(), [0.0, 10.0, 6.0]);
        assert!(interference_curve(&trace_with(vec![(0.0, 0.0)]), &grid).is_err());
    }

    #[test]
    fn pinned_robot_books_a_full_interval_of_wall_time() {
        let mut s = setup(ControllerKind::Crw, 1, 5);
        s.duration_seconds = 20.0;
        let mut w = World::new(&s).unwrap();
        // Wedged in a corner, facing out, with no speed: never escapes.
        w.place_robot(0, Vec2::new(0.0, 0.0), -3.0 * PI / 4.0);
        w.params.robot_speed = 0.0;
        for _ in 0..100 {
            w.tick();
        }
        assert_eq!(w.records().len(), 1);
        assert_eq!(w.records()[0].avoid_wall_s, 10.0);
        assert_eq!(w.records()[0].avoid_robot_s, 0.0);
        assert_eq!(w.records()[0].avoiding_count, 1);
    }

    #[test]
    fn spans_sum_to_interference() {
        // Instrumented micro-run: count each robot's avoiding ticks directly.
        let mut s = setup(ControllerKind::Crw, 3, 6);
        s.duration_seconds = 10.0;
        let mut w = World::new(&s).unwrap();
        w.place_robot(0, Vec2::new(10.0, 8.0), 0.0);
        w.place_robot(1, Vec2::new(10.15, 8.0), PI);
        w.place_robot(2, Vec2::new(31.85, 3.0), 0.0);
        let mut spans = [0u32; 3];
        for _ in 0..100 {
            w.tick();
            for (k, r) in w.robots().iter().enumerate() {
                if r.behavior == BehaviorState::Avoiding {
                    spans[k] += 1;
                }
            }
        }
        assert!(spans.iter().all(|&s| s > 0), "{spans:?}");
        let total: f64 = spans.iter().map(|&s| s as f64 * 0.1).sum();
        let rec = w.records()[0];
        assert!((rec.avoid_robot_s + rec.avoid_wall_s - total).abs() < 1e-9);
    }

    #[test]
    fn determinism_and_invariants() {
        for kind in ControllerKind::ALL {
            let s = setup(kind, 8, 77);
            let a = simulate(&s).unwrap();
            let b = simulate(&s).unwrap();
            assert_eq!(a.to_csv_string(), b.to_csv_string());
            assert_eq!(a.records.len(), 30);
            assert!(a
                .records
                .windows(2)
                .all(|w| w[1].cum_delivered >= w[0].cum_delivered));
            for r in &a.records {
                assert!(r.avoid_robot_s + r.avoid_wall_s <= 8.0 * 10.0 + 1e-9);
            }
        }
    }

    #[test]
    fn conservation_and_bounds_every_tick() {
        for kind in ControllerKind::ALL {
            let mut w = World::new(&setup(kind, 16, 9)).unwrap();
            for _ in 0..3000 {
                w.tick();
                let c = w.census();
                assert_eq!(c.free + c.in_transit + c.cached, w.arena().num_blocks);
                assert_eq!(c.delivered, c.respawned);
                assert_eq!(c.cached, w.cache_count());
                for r in w.robots() {
                    assert!(w.arena().bounds.contains(r.position));
                    assert_eq!(
                        r.avoidance_cause == AvoidanceCause::None,
                        r.behavior != BehaviorState::Avoiding
                    );
                }
            }
        }
    }

    #[test]
    fn lone_robot_never_avoids_robots() {
        for kind in ControllerKind::ALL {
            let t = simulate(&setup(kind, 1, 10)).unwrap();
            assert!(t.records.iter().all(|r| r.avoid_robot_s == 0.0));
        }
    }

    #[test]
    fn gpdpo_without_partitioning_matches_dpo() {
        let dpo = setup(ControllerKind::Dpo, 6, 21);
        let mut gp = setup(ControllerKind::GpDpo, 6, 21);
        gp.controller_params.p_part = 0.0;
        assert_eq!(
            simulate(&dpo).unwrap().records,
            simulate(&gp).unwrap().records
        );
    }

    #[test]
    fn trace_csv_round_trip() {
        let t = simulate(&setup(ControllerKind::Dpo, 4, 3)).unwrap();
        assert_eq!(
            RunTrace::records_from_csv_str(&t.to_csv_string()).unwrap(),
            t.records
        );
    }

    #[test]
    fn setup_validation() {
        let mut s = setup(ControllerKind::Crw, 1, 1);
        s.interval_seconds = 10.05;
        assert!(World::new(&s).is_err());
        let mut s = setup(ControllerKind::Crw, 0, 1);
        s.num_robots = 0;
        assert!(World::new(&s).is_err());
        let mut s = setup(ControllerKind::Crw, 1, 1);
        s.params.nest_depth = 30.0;
        assert!(World::new(&s).is_err());
    }
}
