//! Randomized episode worlds and skid-steer rover simulation.
//!
//! A [`World`] holds one episode: the rover pose, a goal, a set of circular
//! rock obstacles, and the episode clock. Episodes are generated from a seed
//! by rejection sampling, stepped with [`World::control_step`] (one decision
//! per five physics substeps), and classified into one of four terminal
//! outcomes: success, collision, fall, or timeout.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Attempts per placement before episode generation gives up.
const MAX_REJECTION_ATTEMPTS: u32 = 10_000;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid world config: {0}")]
    InvalidConfig(String),
    #[error("could not place {what} after {attempts} rejection-sampling attempts")]
    UnsatisfiableConfig { what: &'static str, attempts: u32 },
    #[error("control_step called on a terminated episode (outcome {0})")]
    EpisodeTerminated(Outcome),
    #[error("bad world snapshot: {0}")]
    BadSnapshot(String),
}

/// 2-D point/vector in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Vec2) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Normalize an angle to the half-open interval (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % TAU;
    if a <= -PI {
        a += TAU;
    } else if a > PI {
        a -= TAU;
    }
    a
}

/// Rover pose on the ground plane. Heading is measured from the +x axis,
/// counterclockwise, and is kept normalized to (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoverPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl RoverPose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: wrap_angle(heading),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// Normalized wheel-speed pair. Components are clamped to [0, 1]; the rover
/// has no reverse gear, so negative inputs saturate at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelCommand {
    left: f64,
    right: f64,
}

impl WheelCommand {
    pub fn new(left: f64, right: f64) -> Self {
        let sanitize = |v: f64| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        Self {
            left: sanitize(left),
            right: sanitize(right),
        }
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn right(&self) -> f64 {
        self.right
    }
}

/// Episode geometry and stepping parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    /// Side length of the square map, meters.
    pub map_side: f64,
    /// Number of rock obstacles per episode.
    pub n_obstacles: usize,
    /// Minimum start-to-goal distance, meters.
    pub goal_min_dist: f64,
    /// Optional maximum start-to-goal distance, meters. `None` leaves goal
    /// placement bounded only by the map.
    pub goal_max_dist: Option<f64>,
    /// Minimum obstacle-center distance from the rover start, meters.
    pub obstacle_min_dist_from_start: f64,
    /// A collision is recorded within this distance of an obstacle center.
    pub collision_radius: f64,
    /// A win is recorded within this distance of the goal center.
    pub win_radius: f64,
    /// Episode time limit, seconds.
    pub max_episode_time: f64,
    /// Wheel-rim speed at command 1.0, meters/second.
    pub v_max: f64,
    /// Lateral wheel separation, meters.
    pub track_width: f64,
    /// Physics substep length, seconds.
    pub physics_dt: f64,
    /// Physics substeps per control decision.
    pub substeps_per_action: usize,
    /// Visual radius range for rendered rocks, meters (min, max).
    pub obstacle_radius_range: (f64, f64),
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            map_side: 25.0,
            n_obstacles: 4,
            goal_min_dist: 10.0,
            goal_max_dist: None,
            obstacle_min_dist_from_start: 4.0,
            collision_radius: 0.5,
            win_radius: 1.0,
            max_episode_time: 100.0,
            v_max: 0.2,
            track_width: 0.3,
            physics_dt: 0.2,
            substeps_per_action: 5,
            obstacle_radius_range: (0.2, 0.5),
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        let positive = [
            ("map_side", self.map_side),
            ("goal_min_dist", self.goal_min_dist),
            ("obstacle_min_dist_from_start", self.obstacle_min_dist_from_start),
            ("collision_radius", self.collision_radius),
            ("win_radius", self.win_radius),
            ("max_episode_time", self.max_episode_time),
            ("v_max", self.v_max),
            ("track_width", self.track_width),
            ("physics_dt", self.physics_dt),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(WorldError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.substeps_per_action == 0 {
            return Err(WorldError::InvalidConfig("substeps_per_action must be >= 1".into()));
        }
        let diagonal = self.map_side * std::f64::consts::SQRT_2;
        if self.goal_min_dist >= diagonal {
            return Err(WorldError::InvalidConfig(format!(
                "goal_min_dist {} must be below the map diagonal {diagonal}",
                self.goal_min_dist
            )));
        }
        if self.collision_radius >= self.obstacle_min_dist_from_start {
            return Err(WorldError::InvalidConfig(
                "collision_radius must be below obstacle_min_dist_from_start".into(),
            ));
        }
        let (rmin, rmax) = self.obstacle_radius_range;
        if !(rmin > 0.0 && rmax >= rmin) {
            return Err(WorldError::InvalidConfig(format!(
                "obstacle_radius_range ({rmin}, {rmax}) must satisfy 0 < min <= max"
            )));
        }
        if let Some(max) = self.goal_max_dist {
            if max < self.goal_min_dist {
                return Err(WorldError::InvalidConfig(
                    "goal_max_dist must be >= goal_min_dist".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Reward constants: progress reward per meter and terminal penalties.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardConfig {
    pub c_veloc: f64,
    pub c_crash: f64,
    pub c_fall: f64,
    pub c_timeout: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            c_veloc: 100.0,
            c_crash: 100.0,
            c_fall: 100.0,
            c_timeout: 20.0,
        }
    }
}

/// One circular rock. Collision checks use the fixed
/// [`WorldConfig::collision_radius`] around `center`; `radius` only sets the
/// rendered sphere size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub center: Vec2,
    pub radius: f64,
}

/// Episode status. `Running` is the only non-terminal value; terminal
/// outcomes are checked in the priority order collision > fall > success >
/// timeout within a single substep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Running,
    Success,
    Collision,
    Fall,
    Timeout,
}

impl Outcome {
    pub fn is_terminal(&self) -> bool {
        *self != Outcome::Running
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Outcome::Running => "running",
            Outcome::Success => "success",
            Outcome::Collision => "collision",
            Outcome::Fall => "fall",
            Outcome::Timeout => "timeout",
        };
        f.write_str(s)
    }
}

impl FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "running" => Ok(Outcome::Running),
            "success" => Ok(Outcome::Success),
            "collision" => Ok(Outcome::Collision),
            "fall" => Ok(Outcome::Fall),
            "timeout" => Ok(Outcome::Timeout),
            other => Err(format!("unknown outcome {other:?}")),
        }
    }
}

/// Result of one control step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    pub outcome: Outcome,
}

/// Full episode state.
///
/// Worlds compare with `==` field-for-field, including the RNG stream, so
/// determinism tests can assert bit-identical replication.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub config: WorldConfig,
    pub rover: RoverPose,
    pub goal: Vec2,
    pub obstacles: Vec<Obstacle>,
    /// Seed this episode was generated from.
    pub seed: u64,
    /// Physics substeps executed so far. `elapsed` is always derived as
    /// `substeps * physics_dt` so the 100-step budget is exact.
    pub substeps: u64,
    /// Seconds elapsed, derived from `substeps`.
    pub elapsed: f64,
    /// Rover-to-goal distance at the end of the previous control step.
    pub prev_goal_distance: f64,
    pub outcome: Outcome,
    /// Leftover generator state after placement sampling. Vectorized
    /// training draws follow-up episode seeds from this stream.
    pub rng: ChaCha8Rng,
}

/// Advance a pose along the exact circular arc (or straight line) produced
/// by holding a wheel command for `dt` seconds.
///
/// Forward speed is `v_max * (left + right) / 2` and turn rate is
/// `v_max * (right - left) / track_width`.
pub fn step_physics(pose: RoverPose, cmd: WheelCommand, dt: f64, v_max: f64, track_width: f64) -> RoverPose {
    let v = v_max * (cmd.left + cmd.right) / 2.0;
    let omega = v_max * (cmd.right - cmd.left) / track_width;
    if omega.abs() < 1e-9 {
        RoverPose {
            x: pose.x + v * dt * pose.heading.cos(),
            y: pose.y + v * dt * pose.heading.sin(),
            heading: pose.heading,
        }
    } else {
        let radius = v / omega;
        let h1 = pose.heading + omega * dt;
        RoverPose {
            x: pose.x + radius * (h1.sin() - pose.heading.sin()),
            y: pose.y - radius * (h1.cos() - pose.heading.cos()),
            heading: wrap_angle(h1),
        }
    }
}

impl World {
    /// Generate a randomized episode: rover at the middle of the map's y=0
    /// edge facing inward, goal and obstacles placed by rejection sampling.
    ///
    /// Identical seeds yield bit-identical worlds.
    pub fn generate(seed: u64, config: &WorldConfig) -> Result<World, WorldError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = Vec2::new(config.map_side / 2.0, 0.0);

        let goal = Self::place_goal(&mut rng, config, start)?;

        let mut obstacles = Vec::with_capacity(config.n_obstacles);
        for _ in 0..config.n_obstacles {
            obstacles.push(Self::place_obstacle(&mut rng, config, start, goal)?);
        }

        let prev_goal_distance = start.dist(goal);
        Ok(World {
            config: config.clone(),
            rover: RoverPose::new(start.x, start.y, FRAC_PI_2),
            goal,
            obstacles,
            seed,
            substeps: 0,
            elapsed: 0.0,
            prev_goal_distance,
            outcome: Outcome::Running,
            rng,
        })
    }

    fn place_goal(rng: &mut ChaCha8Rng, config: &WorldConfig, start: Vec2) -> Result<Vec2, WorldError> {
        let margin = 1.0;
        for _ in 0..MAX_REJECTION_ATTEMPTS {
            let x = rng.gen_range(margin..config.map_side - margin);
            let y = rng.gen_range(margin..config.map_side - margin);
            let goal = Vec2::new(x, y);
            let d = start.dist(goal);
            if d < config.goal_min_dist {
                continue;
            }
            if let Some(max) = config.goal_max_dist {
                if d > max {
                    continue;
                }
            }
            return Ok(goal);
        }
        Err(WorldError::UnsatisfiableConfig {
            what: "goal",
            attempts: MAX_REJECTION_ATTEMPTS,
        })
    }

    fn place_obstacle(
        rng: &mut ChaCha8Rng,
        config: &WorldConfig,
        start: Vec2,
        goal: Vec2,
    ) -> Result<Obstacle, WorldError> {
        // Obstacles may not crowd the start or make the goal unwinnable.
        let goal_clearance = config.win_radius + config.collision_radius;
        for _ in 0..MAX_REJECTION_ATTEMPTS {
            let x = rng.gen_range(0.0..config.map_side);
            let y = rng.gen_range(0.0..config.map_side);
            let center = Vec2::new(x, y);
            if center.dist(start) < config.obstacle_min_dist_from_start {
                continue;
            }
            if center.dist(goal) < goal_clearance {
                continue;
            }
            let (rmin, rmax) = config.obstacle_radius_range;
            let radius = rng.gen_range(rmin..=rmax);
            return Ok(Obstacle { center, radius });
        }
        Err(WorldError::UnsatisfiableConfig {
            what: "obstacle",
            attempts: MAX_REJECTION_ATTEMPTS,
        })
    }

    pub fn goal_distance(&self) -> f64 {
        self.rover.position().dist(self.goal)
    }

    /// Classify the current state. Terminal conditions are evaluated in the
    /// priority order collision > fall > success > timeout.
    pub fn classify(&self) -> Outcome {
        let pos = self.rover.position();
        for obstacle in &self.obstacles {
            if pos.dist(obstacle.center) < self.config.collision_radius {
                return Outcome::Collision;
            }
        }
        if pos.x < 0.0 || pos.x > self.config.map_side || pos.y < 0.0 || pos.y > self.config.map_side {
            return Outcome::Fall;
        }
        if pos.dist(self.goal) < self.config.win_radius {
            return Outcome::Success;
        }
        if self.elapsed >= self.config.max_episode_time {
            return Outcome::Timeout;
        }
        Outcome::Running
    }

    /// Apply one control decision: `substeps_per_action` physics substeps
    /// with termination checked after each, then the Eq.-style reward
    /// `c_veloc * progress - penalty`. Progress accrues on terminal steps
    /// too.
    pub fn control_step(&mut self, cmd: WheelCommand, rewards: &RewardConfig) -> Result<StepResult, WorldError> {
        if self.outcome.is_terminal() {
            return Err(WorldError::EpisodeTerminated(self.outcome));
        }
        for _ in 0..self.config.substeps_per_action {
            self.rover = step_physics(self.rover, cmd, self.config.physics_dt, self.config.v_max, self.config.track_width);
            self.substeps += 1;
            self.elapsed = self.substeps as f64 * self.config.physics_dt;
            let outcome = self.classify();
            if outcome.is_terminal() {
                self.outcome = outcome;
                break;
            }
        }
        let new_distance = self.goal_distance();
        let mut reward = rewards.c_veloc * (self.prev_goal_distance - new_distance);
        match self.outcome {
            Outcome::Collision => reward -= rewards.c_crash,
            Outcome::Fall => reward -= rewards.c_fall,
            Outcome::Timeout => reward -= rewards.c_timeout,
            Outcome::Success | Outcome::Running => {}
        }
        self.prev_goal_distance = new_distance;
        Ok(StepResult {
            reward,
            outcome: self.outcome,
        })
    }

    /// Control steps taken so far.
    pub fn control_steps(&self) -> u64 {
        self.substeps / self.config.substeps_per_action as u64
    }

    /// Serialize to the line-oriented `key=value` snapshot format.
    ///
    /// Floats are printed with Rust's shortest round-trip formatting, so a
    /// parsed snapshot compares bit-identical to the original world.
    pub fn to_snapshot(&self) -> String {
        let mut out = String::new();
        let c = &self.config;
        out.push_str("format=world.v1\n");
        out.push_str(&format!("seed={}\n", self.seed));
        out.push_str(&format!("rng_word_pos={}\n", self.rng.get_word_pos()));
        out.push_str(&format!("map_side={}\n", c.map_side));
        out.push_str(&format!("n_obstacles={}\n", c.n_obstacles));
        out.push_str(&format!("goal_min_dist={}\n", c.goal_min_dist));
        if let Some(max) = c.goal_max_dist {
            out.push_str(&format!("goal_max_dist={max}\n"));
        }
        out.push_str(&format!("obstacle_min_dist_from_start={}\n", c.obstacle_min_dist_from_start));
        out.push_str(&format!("collision_radius={}\n", c.collision_radius));
        out.push_str(&format!("win_radius={}\n", c.win_radius));
        out.push_str(&format!("max_episode_time={}\n", c.max_episode_time));
        out.push_str(&format!("v_max={}\n", c.v_max));
        out.push_str(&format!("track_width={}\n", c.track_width));
        out.push_str(&format!("physics_dt={}\n", c.physics_dt));
        out.push_str(&format!("substeps_per_action={}\n", c.substeps_per_action));
        out.push_str(&format!("obstacle_radius_min={}\n", c.obstacle_radius_range.0));
        out.push_str(&format!("obstacle_radius_max={}\n", c.obstacle_radius_range.1));
        out.push_str(&format!("rover.x={}\n", self.rover.x));
        out.push_str(&format!("rover.y={}\n", self.rover.y));
        out.push_str(&format!("rover.heading={}\n", self.rover.heading));
        out.push_str(&format!("goal.x={}\n", self.goal.x));
        out.push_str(&format!("goal.y={}\n", self.goal.y));
        for (i, ob) in self.obstacles.iter().enumerate() {
            out.push_str(&format!("obstacle.{i}.x={}\n", ob.center.x));
            out.push_str(&format!("obstacle.{i}.y={}\n", ob.center.y));
            out.push_str(&format!("obstacle.{i}.radius={}\n", ob.radius));
        }
        out.push_str(&format!("substeps={}\n", self.substeps));
        out.push_str(&format!("prev_goal_distance={}\n", self.prev_goal_distance));
        out.push_str(&format!("outcome={}\n", self.outcome));
        out
    }

    /// Parse a snapshot produced by [`World::to_snapshot`].
    pub fn from_snapshot(text: &str) -> Result<World, WorldError> {
        let mut map = std::collections::BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| WorldError::BadSnapshot(format!("line {}: missing '='", lineno + 1)))?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        let get = |key: &str| -> Result<&String, WorldError> {
            map.get(key)
                .ok_or_else(|| WorldError::BadSnapshot(format!("missing key {key:?}")))
        };
        let parse_f64 = |key: &str| -> Result<f64, WorldError> {
            get(key)?
                .parse::<f64>()
                .map_err(|e| WorldError::BadSnapshot(format!("key {key:?}: {e}")))
        };
        let parse_u64 = |key: &str| -> Result<u64, WorldError> {
            get(key)?
                .parse::<u64>()
                .map_err(|e| WorldError::BadSnapshot(format!("key {key:?}: {e}")))
        };

        if get("format")? != "world.v1" {
            return Err(WorldError::BadSnapshot(format!("unsupported format {:?}", get("format")?)));
        }
        let n_obstacles = parse_u64("n_obstacles")? as usize;
        let config = WorldConfig {
            map_side: parse_f64("map_side")?,
            n_obstacles,
            goal_min_dist: parse_f64("goal_min_dist")?,
            goal_max_dist: if map.contains_key("goal_max_dist") {
                Some(parse_f64("goal_max_dist")?)
            } else {
                None
            },
            obstacle_min_dist_from_start: parse_f64("obstacle_min_dist_from_start")?,
            collision_radius: parse_f64("collision_radius")?,
            win_radius: parse_f64("win_radius")?,
            max_episode_time: parse_f64("max_episode_time")?,
            v_max: parse_f64("v_max")?,
            track_width: parse_f64("track_width")?,
            physics_dt: parse_f64("physics_dt")?,
            substeps_per_action: parse_u64("substeps_per_action")? as usize,
            obstacle_radius_range: (parse_f64("obstacle_radius_min")?, parse_f64("obstacle_radius_max")?),
        };
        let mut obstacles = Vec::with_capacity(n_obstacles);
        for i in 0..n_obstacles {
            obstacles.push(Obstacle {
                center: Vec2::new(parse_f64(&format!("obstacle.{i}.x"))?, parse_f64(&format!("obstacle.{i}.y"))?),
                radius: parse_f64(&format!("obstacle.{i}.radius"))?,
            });
        }
        let seed = parse_u64("seed")?;
        let word_pos = get("rng_word_pos")?
            .parse::<u128>()
            .map_err(|e| WorldError::BadSnapshot(format!("key \"rng_word_pos\": {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_word_pos(word_pos);
        let substeps = parse_u64("substeps")?;
        let outcome = get("outcome")?
            .parse::<Outcome>()
            .map_err(WorldError::BadSnapshot)?;
        Ok(World {
            rover: RoverPose {
                x: parse_f64("rover.x")?,
                y: parse_f64("rover.y")?,
                heading: parse_f64("rover.heading")?,
            },
            goal: Vec2::new(parse_f64("goal.x")?, parse_f64("goal.y")?),
            obstacles,
            seed,
            substeps,
            elapsed: substeps as f64 * config.physics_dt,
            prev_goal_distance: parse_f64("prev_goal_distance")?,
            outcome,
            rng,
            config,
        })
    }
}
