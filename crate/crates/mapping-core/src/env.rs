//! The disaster-mapping episode: a hidden Bernoulli-sampled building map, a
//! robot with a noisy proximity sensor, blocked-move dynamics, and a reward
//! equal to the per-step drop in belief entropy over a fixed horizon.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{
    BeliefGrid, BeliefError, CellReading, FeatureTensor, Observation, Pose, SensorAccuracy,
};

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("grid side must be at least 2, got {0}")]
    InvalidSide(usize),
    #[error("building density must lie in [0, 1), got {0}")]
    InvalidDensity(f64),
    #[error("horizon must be positive")]
    InvalidHorizon,
    #[error("map has no free cell to place the robot")]
    NoFreeCell,
    #[error("episode already finished after {horizon} steps")]
    EpisodeFinished { horizon: usize },
    #[error(transparent)]
    Belief(#[from] BeliefError),
}

/// The four movement commands. Indices are fixed (Up=0, Down=1, Left=2,
/// Right=3) and match the policy network's output order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        match self {
            Action::Up => 0,
            Action::Down => 1,
            Action::Left => 2,
            Action::Right => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    /// (row, col) displacement.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
        }
    }
}

/// Which cells around the robot the sensor reports on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Neighborhood {
    /// All 8 surrounding cells.
    #[default]
    Moore8,
    /// The 4 edge-adjacent cells only.
    VonNeumann4,
}

impl Neighborhood {
    /// Offsets in fixed row-major order; the center cell is never included.
    pub fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Neighborhood::Moore8 => &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ],
            Neighborhood::VonNeumann4 => &[(-1, 0), (0, -1), (0, 1), (1, 0)],
        }
    }
}

fn default_side() -> usize {
    25
}

fn default_density() -> f64 {
    0.1
}

fn default_accuracy() -> SensorAccuracy {
    SensorAccuracy::new(0.8).expect("0.8 is a valid accuracy")
}

fn default_horizon() -> usize {
    300
}

/// Episode parameters. The defaults are the standard evaluation setting:
/// 25x25 grid, 10% building density, 80% sensor accuracy, 300 steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub side: usize,
    pub building_density: f64,
    pub sensor_accuracy: SensorAccuracy,
    pub horizon: usize,
    pub sense_neighborhood: Neighborhood,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            side: default_side(),
            building_density: default_density(),
            sensor_accuracy: default_accuracy(),
            horizon: default_horizon(),
            sense_neighborhood: Neighborhood::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.side < 2 {
            return Err(EnvError::InvalidSide(self.side));
        }
        if !(self.building_density >= 0.0 && self.building_density < 1.0) {
            return Err(EnvError::InvalidDensity(self.building_density));
        }
        if self.horizon == 0 {
            return Err(EnvError::InvalidHorizon);
        }
        Ok(())
    }
}

/// The hidden true map: which cells contain buildings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridMap {
    side: usize,
    occupied: Vec<bool>,
}

impl GridMap {
    /// Build from row-major occupancy flags; panics on length mismatch.
    pub fn new(side: usize, occupied: Vec<bool>) -> Self {
        assert_eq!(occupied.len(), side * side, "occupancy length must be side^2");
        GridMap { side, occupied }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn occupied(&self, row: usize, col: usize) -> bool {
        self.occupied[row * self.side + col]
    }

    pub fn is_free(&self, row: usize, col: usize) -> bool {
        !self.occupied(row, col)
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    pub fn free_cells(&self) -> Vec<Pose> {
        let mut cells = Vec::new();
        for row in 0..self.side {
            for col in 0..self.side {
                if self.is_free(row, col) {
                    cells.push(Pose::new(row, col));
                }
            }
        }
        cells
    }

    pub fn in_bounds(&self, row: isize, col: isize) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.side && (col as usize) < self.side
    }
}

/// Sample a map with i.i.d. Bernoulli(density) buildings.
pub fn sample_map(rng: &mut ChaCha8Rng, side: usize, density: f64) -> Result<GridMap, EnvError> {
    if side < 2 {
        return Err(EnvError::InvalidSide(side));
    }
    if !(0.0..1.0).contains(&density) {
        return Err(EnvError::InvalidDensity(density));
    }
    let occupied = (0..side * side).map(|_| rng.gen_bool(density)).collect();
    Ok(GridMap { side, occupied })
}

/// Sample a start pose uniformly over the map's free cells.
pub fn sample_pose(rng: &mut ChaCha8Rng, map: &GridMap) -> Result<Pose, EnvError> {
    let free = map.free_cells();
    if free.is_empty() {
        return Err(EnvError::NoFreeCell);
    }
    Ok(free[rng.gen_range(0..free.len())])
}

/// Read every in-bounds neighborhood cell around the pose, flipping each true
/// occupancy bit independently with probability 1 - accuracy. One RNG draw
/// per in-bounds cell, in the neighborhood's fixed offset order.
pub fn sense(
    map: &GridMap,
    pose: Pose,
    accuracy: SensorAccuracy,
    neighborhood: Neighborhood,
    rng: &mut ChaCha8Rng,
) -> Observation {
    let mut readings = Vec::with_capacity(neighborhood.offsets().len());
    for &(dr, dc) in neighborhood.offsets() {
        let r = pose.row as isize + dr;
        let c = pose.col as isize + dc;
        if !map.in_bounds(r, c) {
            continue;
        }
        let (r, c) = (r as usize, c as usize);
        let truth = map.occupied(r, c);
        let correct = rng.gen_bool(accuracy.value());
        readings.push(CellReading {
            row: r,
            col: c,
            occupied: if correct { truth } else { !truth },
        });
    }
    Observation::new(readings)
}

/// What one transition (or the reset) hands back to the caller.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    /// Pose-centered scaled belief features after the transition.
    pub features: FeatureTensor,
    /// Entropy of the belief before minus after this transition's sensing.
    /// Zero for the reset outcome.
    pub reward: f64,
    pub done: bool,
    /// Pose after the (possibly blocked) move.
    pub pose: Pose,
    /// The raw sensor readings applied during this transition.
    pub observation: Observation,
}

/// One running episode: hidden map, robot pose, belief, and step counter.
///
/// The environment owns its RNG stream; policies must use a separate stream
/// so that action choices never perturb map sampling or sensor noise.
#[derive(Clone, Debug)]
pub struct DisasterEnv {
    config: EnvConfig,
    map: GridMap,
    pose: Pose,
    belief: BeliefGrid,
    step_count: usize,
    rng: ChaCha8Rng,
}

impl DisasterEnv {
    /// Start an episode: sample a map (resampling in the degenerate case of
    /// no free cell), place the robot uniformly on a free cell, reset the
    /// belief to all-0.5, and apply one initial sense at the start pose.
    pub fn reset(config: EnvConfig, mut rng: ChaCha8Rng) -> Result<(Self, StepOutcome), EnvError> {
        config.validate()?;
        let map = loop {
            let candidate = sample_map(&mut rng, config.side, config.building_density)?;
            if candidate.occupied_count() < config.side * config.side {
                break candidate;
            }
        };
        let pose = sample_pose(&mut rng, &map)?;
        Self::from_parts(config, map, pose, rng)
    }

    /// Start an episode on a given map and start pose. The pose must be a
    /// free cell. Applies the same initial sense as `reset`.
    pub fn from_parts(
        config: EnvConfig,
        map: GridMap,
        pose: Pose,
        mut rng: ChaCha8Rng,
    ) -> Result<(Self, StepOutcome), EnvError> {
        config.validate()?;
        assert_eq!(map.side(), config.side, "map side must match config");
        assert!(map.is_free(pose.row, pose.col), "start pose must be free");
        let mut belief = BeliefGrid::uniform(config.side);
        let observation = sense(
            &map,
            pose,
            config.sensor_accuracy,
            config.sense_neighborhood,
            &mut rng,
        );
        belief.apply_observation(&observation, config.sensor_accuracy)?;
        let features = belief.centered_features(pose)?;
        let env = DisasterEnv {
            config,
            map,
            pose,
            belief,
            step_count: 0,
            rng,
        };
        let outcome = StepOutcome {
            features,
            reward: 0.0,
            done: false,
            pose,
            observation,
        };
        Ok((env, outcome))
    }

    /// Apply one action: move unless the target cell is out of bounds or
    /// contains a building (the pose then stays put), sense at the resulting
    /// pose, and reward the drop in total belief entropy.
    pub fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        if self.step_count >= self.config.horizon {
            return Err(EnvError::EpisodeFinished {
                horizon: self.config.horizon,
            });
        }
        let (dr, dc) = action.delta();
        let r = self.pose.row as isize + dr;
        let c = self.pose.col as isize + dc;
        if self.map.in_bounds(r, c) && self.map.is_free(r as usize, c as usize) {
            self.pose = Pose::new(r as usize, c as usize);
        }
        let entropy_before = self.belief.total_entropy();
        let observation = sense(
            &self.map,
            self.pose,
            self.config.sensor_accuracy,
            self.config.sense_neighborhood,
            &mut self.rng,
        );
        self.belief
            .apply_observation(&observation, self.config.sensor_accuracy)?;
        let reward = entropy_before - self.belief.total_entropy();
        self.step_count += 1;
        Ok(StepOutcome {
            features: self.belief.centered_features(self.pose)?,
            reward,
            done: self.step_count >= self.config.horizon,
            pose: self.pose,
            observation,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn belief(&self) -> &BeliefGrid {
        &self.belief
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn done(&self) -> bool {
        self.step_count >= self.config.horizon
    }
}
