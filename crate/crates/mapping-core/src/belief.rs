//! Occupancy-grid belief state: log-odds Bayes updates, entropy queries, and
//! pose-centered feature construction.
//!
//! Each cell of the grid is an independent binary random variable ("is this
//! cell occupied?"). The posterior over a cell is kept in log-odds form, so a
//! sensor reading is a single additive update. Cells accumulate sensor
//! evidence as exact (likelihood-ratio, count) terms and sum them in a
//! canonical order, which makes the posterior independent of the order in
//! which a given multiset of observations arrives, bit for bit.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Log-odds magnitude cap. A cell at the cap has posterior within 2.1e-9 of
/// certainty, far below every tolerance used by the evaluation suite.
pub const LOG_ODDS_MAX: f64 = 20.0;

#[derive(Debug, Error, PartialEq)]
pub enum BeliefError {
    #[error("sensor accuracy must lie in (0, 1], got {0}")]
    InvalidAccuracy(f64),
    #[error("cell ({row}, {col}) outside {side}x{side} grid")]
    CellOutOfBounds { row: usize, col: usize, side: usize },
    #[error("pose ({row}, {col}) outside {side}x{side} grid")]
    PoseOutOfBounds { row: usize, col: usize, side: usize },
    #[error("expected {expected} cell probabilities for a {side}x{side} grid, got {found}")]
    BadProbCount {
        side: usize,
        expected: usize,
        found: usize,
    },
}

/// Grid position of the robot (row, column), row 0 at the top.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pose {
    pub row: usize,
    pub col: usize,
}

impl Pose {
    pub fn new(row: usize, col: usize) -> Self {
        Pose { row, col }
    }
}

/// Probability that a sensor reading matches the true cell state.
///
/// The channel is symmetric: a reading is wrong with probability
/// `1 - accuracy` regardless of the true state. `1.0` is the noiseless
/// sensor; its likelihood ratio is infinite and updates saturate the
/// log-odds cap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SensorAccuracy(f64);

impl TryFrom<f64> for SensorAccuracy {
    type Error = BeliefError;

    fn try_from(value: f64) -> Result<Self, BeliefError> {
        SensorAccuracy::new(value)
    }
}

impl From<SensorAccuracy> for f64 {
    fn from(accuracy: SensorAccuracy) -> f64 {
        accuracy.0
    }
}

impl SensorAccuracy {
    pub fn new(value: f64) -> Result<Self, BeliefError> {
        if value > 0.0 && value <= 1.0 {
            Ok(SensorAccuracy(value))
        } else {
            Err(BeliefError::InvalidAccuracy(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `ln(accuracy / (1 - accuracy))`, the additive log-odds evidence of a
    /// single "occupied" reading.
    pub fn log_likelihood_ratio(self) -> f64 {
        (self.0 / (1.0 - self.0)).ln()
    }
}

/// One sensed cell: its grid position and the (possibly wrong) binary reading.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellReading {
    pub row: usize,
    pub col: usize,
    pub occupied: bool,
}

/// One sensing event: readings for each in-bounds cell of the robot's sensed
/// neighborhood. Cells are distinct and inside the grid by construction of
/// the environment's sensor.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub readings: Vec<CellReading>,
}

impl Observation {
    pub fn new(readings: Vec<CellReading>) -> Self {
        Observation { readings }
    }

    pub fn is_empty(&self) -> bool {
        self.readings.is_empty()
    }

    pub fn len(&self) -> usize {
        self.readings.len()
    }
}

fn sigmoid(l: f64) -> f64 {
    // Equivalent to 1 - 1/(1 + e^l), stable in both tails.
    if l >= 0.0 {
        1.0 / (1.0 + (-l).exp())
    } else {
        let e = l.exp();
        e / (1.0 + e)
    }
}

/// Posterior occupancy probability of a log-odds value (clamped to the cap).
pub fn logodds_to_prob(l: f64) -> f64 {
    sigmoid(l.clamp(-LOG_ODDS_MAX, LOG_ODDS_MAX))
}

/// Log-odds of a probability, clamped to the cap.
pub fn prob_to_logodds(p: f64) -> f64 {
    (p / (1.0 - p)).ln().clamp(-LOG_ODDS_MAX, LOG_ODDS_MAX)
}

/// Binary entropy in nats, with the 0 ln 0 = 0 convention.
pub fn cell_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -(p * p.ln()) - (1.0 - p) * (1.0 - p).ln()
}

/// One recursive Bayes-filter update of a single cell's log-odds under a
/// uniform prior: add the reading's log-likelihood ratio and clamp.
pub fn update_cell(l: f64, occupied_reading: bool, accuracy: SensorAccuracy) -> f64 {
    let delta = accuracy.log_likelihood_ratio();
    let updated = if occupied_reading { l + delta } else { l - delta };
    updated.clamp(-LOG_ODDS_MAX, LOG_ODDS_MAX)
}

/// Expected entropy of a cell's posterior after one reading at the given
/// accuracy, averaged over both possible readings. Never exceeds the current
/// entropy of `p`.
pub fn expected_posterior_entropy(p: f64, accuracy: SensorAccuracy) -> f64 {
    let a = accuracy.value();
    let p_occ_reading = p * a + (1.0 - p) * (1.0 - a);
    let p_free_reading = 1.0 - p_occ_reading;
    let mut expected = 0.0;
    if p_occ_reading > 0.0 {
        expected += p_occ_reading * cell_entropy(p * a / p_occ_reading);
    }
    if p_free_reading > 0.0 {
        expected += p_free_reading * cell_entropy(p * (1.0 - a) / p_free_reading);
    }
    expected
}

/// Per-cell posterior state.
///
/// `base` is the log-odds the cell started from; `terms` hold the net count
/// of sensor readings per distinct log-likelihood ratio, keyed by the
/// ratio's bit pattern and kept sorted. The exposed log-odds is the clamped
/// canonical sum, so any permutation of the same evidence multiset yields
/// identical bits.
#[derive(Clone, Debug)]
struct Cell {
    base: f64,
    terms: Vec<(u64, i64)>,
    logodds: f64,
    prob: f64,
    entropy: f64,
}

impl Cell {
    fn with_base(base: f64) -> Self {
        let mut cell = Cell {
            base,
            terms: Vec::new(),
            logodds: 0.0,
            prob: 0.0,
            entropy: 0.0,
        };
        cell.recompute();
        cell
    }

    fn add_evidence(&mut self, delta: f64, sign: i64) {
        let key = delta.to_bits();
        match self.terms.binary_search_by_key(&key, |t| t.0) {
            Ok(i) => self.terms[i].1 += sign,
            Err(i) => self.terms.insert(i, (key, sign)),
        }
        self.recompute();
    }

    fn recompute(&mut self) {
        let mut sum = self.base;
        let mut net_certain: i64 = 0;
        for &(bits, count) in &self.terms {
            // Zero-count terms contribute nothing; skipping them avoids
            // 0 * inf for the noiseless sensor.
            if count == 0 {
                continue;
            }
            let delta = f64::from_bits(bits);
            if delta.is_infinite() {
                // Noiseless evidence is tallied by net count so that
                // contradictory certainties cancel instead of forming NaN.
                net_certain += if delta > 0.0 { count } else { -count };
            } else {
                sum += count as f64 * delta;
            }
        }
        if net_certain != 0 {
            sum = if net_certain > 0 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
        }
        self.logodds = sum.clamp(-LOG_ODDS_MAX, LOG_ODDS_MAX);
        self.prob = sigmoid(self.logodds);
        self.entropy = cell_entropy(self.prob);
    }
}

/// The robot's factorized posterior over an N x N occupancy grid.
#[derive(Clone, Debug)]
pub struct BeliefGrid {
    side: usize,
    cells: Vec<Cell>,
}

impl BeliefGrid {
    /// The maximally uncertain belief: every cell at probability 0.5.
    pub fn uniform(side: usize) -> Self {
        BeliefGrid {
            side,
            cells: vec![Cell::with_base(0.0); side * side],
        }
    }

    /// Build a belief from explicit cell probabilities in row-major order.
    /// Probabilities of 0 and 1 saturate at the log-odds cap.
    pub fn from_probs(side: usize, probs: &[f64]) -> Result<Self, BeliefError> {
        if probs.len() != side * side {
            return Err(BeliefError::BadProbCount {
                side,
                expected: side * side,
                found: probs.len(),
            });
        }
        Ok(BeliefGrid {
            side,
            cells: probs
                .iter()
                .map(|&p| Cell::with_base(prob_to_logodds(p)))
                .collect(),
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    fn idx(&self, row: usize, col: usize) -> usize {
        row * self.side + col
    }

    fn check_cell(&self, row: usize, col: usize) -> Result<(), BeliefError> {
        if row < self.side && col < self.side {
            Ok(())
        } else {
            Err(BeliefError::CellOutOfBounds {
                row,
                col,
                side: self.side,
            })
        }
    }

    pub fn logodds(&self, row: usize, col: usize) -> f64 {
        self.cells[self.idx(row, col)].logodds
    }

    pub fn prob(&self, row: usize, col: usize) -> f64 {
        self.cells[self.idx(row, col)].prob
    }

    pub fn entropy(&self, row: usize, col: usize) -> f64 {
        self.cells[self.idx(row, col)].entropy
    }

    /// Row-major copy of the log-odds matrix.
    pub fn logodds_matrix(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.logodds).collect()
    }

    /// Row-major copy of the probability matrix.
    pub fn prob_matrix(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.prob).collect()
    }

    /// Entropy of the whole belief: the sum of per-cell entropies.
    pub fn total_entropy(&self) -> f64 {
        self.cells.iter().map(|c| c.entropy).sum()
    }

    /// Fold one observation into the belief. Every observed cell gets one
    /// additive log-odds update; unobserved cells are untouched. Fails
    /// without touching anything if any reading is out of bounds.
    pub fn apply_observation(
        &mut self,
        obs: &Observation,
        accuracy: SensorAccuracy,
    ) -> Result<(), BeliefError> {
        for r in &obs.readings {
            self.check_cell(r.row, r.col)?;
        }
        let delta = accuracy.log_likelihood_ratio();
        for r in &obs.readings {
            let idx = self.idx(r.row, r.col);
            self.cells[idx].add_evidence(delta, if r.occupied { 1 } else { -1 });
        }
        Ok(())
    }

    /// The pose-centered (2N-1) x (2N-1) view of the belief, unscaled:
    /// probabilities padded with 1s (outside the map is certainly occupied)
    /// and their point-wise entropies.
    pub fn centered(&self, pose: Pose) -> Result<CenteredBelief, BeliefError> {
        if pose.row >= self.side || pose.col >= self.side {
            return Err(BeliefError::PoseOutOfBounds {
                row: pose.row,
                col: pose.col,
                side: self.side,
            });
        }
        let view_side = 2 * self.side - 1;
        let mut prob = vec![1.0; view_side * view_side];
        let mut entropy = vec![0.0; view_side * view_side];
        // The pose lands at the view's center (N-1, N-1).
        let off_r = pose.row as isize - (self.side as isize - 1);
        let off_c = pose.col as isize - (self.side as isize - 1);
        for vr in 0..view_side {
            let br = vr as isize + off_r;
            if br < 0 || br >= self.side as isize {
                continue;
            }
            for vc in 0..view_side {
                let bc = vc as isize + off_c;
                if bc < 0 || bc >= self.side as isize {
                    continue;
                }
                let cell = &self.cells[self.idx(br as usize, bc as usize)];
                prob[vr * view_side + vc] = cell.prob;
                entropy[vr * view_side + vc] = cell.entropy;
            }
        }
        Ok(CenteredBelief {
            side: view_side,
            prob,
            entropy,
        })
    }

    /// The centered view scaled to [-1, 1]: the policy network's input.
    pub fn centered_features(&self, pose: Pose) -> Result<FeatureTensor, BeliefError> {
        Ok(FeatureTensor::from_centered(self.side, &self.centered(pose)?))
    }
}

/// Unscaled pose-centered belief: the probability window and its point-wise
/// entropy map.
#[derive(Clone, Debug)]
pub struct CenteredBelief {
    side: usize,
    prob: Vec<f64>,
    entropy: Vec<f64>,
}

impl CenteredBelief {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn prob(&self, row: usize, col: usize) -> f64 {
        self.prob[row * self.side + col]
    }

    pub fn entropy(&self, row: usize, col: usize) -> f64 {
        self.entropy[row * self.side + col]
    }
}

/// The 2-channel network input: channel 0 is the centered belief scaled by
/// v -> 2v - 1, channel 1 the centered entropy scaled by v -> 2v/ln2 - 1.
/// Every entry lies in [-1, 1]; the center entry of each channel corresponds
/// to the robot's own cell.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor {
    grid_side: usize,
    side: usize,
    values: Vec<f64>,
}

impl FeatureTensor {
    pub const CHANNELS: usize = 2;

    fn from_centered(grid_side: usize, view: &CenteredBelief) -> Self {
        let side = view.side;
        let area = side * side;
        let mut values = vec![0.0; Self::CHANNELS * area];
        for i in 0..area {
            values[i] = (2.0 * view.prob[i] - 1.0).clamp(-1.0, 1.0);
            values[area + i] = (2.0 * view.entropy[i] / LN_2 - 1.0).clamp(-1.0, 1.0);
        }
        FeatureTensor {
            grid_side,
            side,
            values,
        }
    }

    /// Side length N of the belief grid this view was built from.
    pub fn grid_side(&self) -> usize {
        self.grid_side
    }

    /// Side length 2N-1 of each channel.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.values[channel * self.side * self.side + row * self.side + col]
    }

    /// Flattened channel-major values, the dense-layer input.
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}
