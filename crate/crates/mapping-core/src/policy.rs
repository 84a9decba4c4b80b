//! Exploration policies: uniform random, frontier navigation, myopic
//! expected-information-gain, and the trained network. Policies see only the
//! belief and the pose, never the true map.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{cell_entropy, expected_posterior_entropy, BeliefGrid, Pose, SensorAccuracy};
use crate::env::{Action, Neighborhood};
use crate::nn::{ActorCriticParams, NnError};

/// What a policy is allowed to look at when choosing an action.
pub struct PolicyContext<'a> {
    pub belief: &'a BeliefGrid,
    pub pose: Pose,
    pub rng: &'a mut ChaCha8Rng,
}

pub trait ExplorationPolicy {
    fn select_action(&mut self, ctx: &mut PolicyContext) -> Action;

    /// Called at the start of each episode; stateful policies clear caches.
    fn begin_episode(&mut self) {}
}

/// Draw an index from a discrete distribution; probabilities must sum to 1.
pub fn sample_categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    probs.len() - 1
}

/// Uniform over the four actions, ignoring the belief entirely.
#[derive(Clone, Debug, Default)]
pub struct RandomPolicy;

impl ExplorationPolicy for RandomPolicy {
    fn select_action(&mut self, ctx: &mut PolicyContext) -> Action {
        Action::from_index(ctx.rng.gen_range(0..Action::COUNT)).expect("index in range")
    }
}

/// Expected one-sense entropy drop at a pose: the sum of per-cell expected
/// gains over the in-bounds sensed neighborhood. The belief factorizes over
/// cells, so the sum over all joint sensor outcomes collapses to independent
/// per-cell terms.
pub fn expected_gain(
    belief: &BeliefGrid,
    pose: Pose,
    accuracy: SensorAccuracy,
    neighborhood: Neighborhood,
) -> f64 {
    let side = belief.side() as isize;
    let mut gain = 0.0;
    for &(dr, dc) in neighborhood.offsets() {
        let r = pose.row as isize + dr;
        let c = pose.col as isize + dc;
        if r < 0 || c < 0 || r >= side || c >= side {
            continue;
        }
        let p = belief.prob(r as usize, c as usize);
        gain += cell_entropy(p) - expected_posterior_entropy(p, accuracy);
    }
    gain
}

/// How the myopic policy models the outcome of a move it cannot verify.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionModel {
    /// Weight the target pose's gain by the belief that the target is free,
    /// and the current pose's gain by the belief it is blocked.
    #[default]
    BeliefWeighted,
    /// Assume every in-bounds move succeeds.
    Optimistic,
}

/// Picks the action with the best one-step expected information gain,
/// breaking exact ties uniformly at random.
#[derive(Clone, Debug)]
pub struct MyopicPolicy {
    pub accuracy: SensorAccuracy,
    pub neighborhood: Neighborhood,
    pub motion: MotionModel,
}

impl MyopicPolicy {
    pub fn new(accuracy: SensorAccuracy, neighborhood: Neighborhood) -> Self {
        MyopicPolicy {
            accuracy,
            neighborhood,
            motion: MotionModel::default(),
        }
    }

    /// One score per action, in action-index order.
    pub fn scores(&self, belief: &BeliefGrid, pose: Pose) -> [f64; Action::COUNT] {
        let side = belief.side() as isize;
        let gain_here = expected_gain(belief, pose, self.accuracy, self.neighborhood);
        let mut scores = [0.0; Action::COUNT];
        for action in Action::ALL {
            let (dr, dc) = action.delta();
            let r = pose.row as isize + dr;
            let c = pose.col as isize + dc;
            scores[action.index()] = if r < 0 || c < 0 || r >= side || c >= side {
                // The move surely fails; the robot senses from where it is.
                gain_here
            } else {
                let target = Pose::new(r as usize, c as usize);
                let gain_there = expected_gain(belief, target, self.accuracy, self.neighborhood);
                match self.motion {
                    MotionModel::BeliefWeighted => {
                        let q = belief.prob(target.row, target.col);
                        (1.0 - q) * gain_there + q * gain_here
                    }
                    MotionModel::Optimistic => gain_there,
                }
            };
        }
        scores
    }
}

/// Indices within `1e-12` of the maximum score.
pub fn argmax_set(scores: &[f64]) -> Vec<usize> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= max - 1e-12)
        .map(|(i, _)| i)
        .collect()
}

impl ExplorationPolicy for MyopicPolicy {
    fn select_action(&mut self, ctx: &mut PolicyContext) -> Action {
        let scores = self.scores(ctx.belief, ctx.pose);
        let best = argmax_set(&scores);
        let pick = best[ctx.rng.gen_range(0..best.len())];
        Action::from_index(pick).expect("argmax index in range")
    }
}

/// Cell classification used by the frontier policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum CellClass {
    Unknown,
    Free,
    Occupied,
}

/// Navigates to the nearest frontier: a free-classified cell edge-adjacent
/// to at least one unknown cell. Plans a shortest path over free cells,
/// follows it, and replans when the plan runs out, the robot is blocked, or
/// a fixed number of steps has passed. Falls back to a random action when no
/// frontier is reachable.
#[derive(Clone, Debug)]
pub struct FrontierPolicy {
    /// Cells with entropy above this many nats count as unexplored.
    pub unknown_entropy_threshold: f64,
    /// Maximum plan age in steps before a forced replan.
    pub replan_interval: usize,
    plan: VecDeque<Action>,
    steps_since_plan: usize,
    expected_pose: Option<Pose>,
}

impl Default for FrontierPolicy {
    fn default() -> Self {
        FrontierPolicy::new(0.6, 20)
    }
}

impl FrontierPolicy {
    pub fn new(unknown_entropy_threshold: f64, replan_interval: usize) -> Self {
        FrontierPolicy {
            unknown_entropy_threshold,
            replan_interval,
            plan: VecDeque::new(),
            steps_since_plan: 0,
            expected_pose: None,
        }
    }

    fn classify(&self, belief: &BeliefGrid) -> Vec<CellClass> {
        let side = belief.side();
        let mut classes = Vec::with_capacity(side * side);
        for r in 0..side {
            for c in 0..side {
                classes.push(if belief.entropy(r, c) > self.unknown_entropy_threshold {
                    CellClass::Unknown
                } else if belief.prob(r, c) > 0.5 {
                    CellClass::Occupied
                } else {
                    CellClass::Free
                });
            }
        }
        classes
    }

    /// Breadth-first shortest path from the pose to the nearest frontier
    /// cell, walking only free-classified cells (the start cell is exempt:
    /// the robot is standing on it). Returns the action sequence, or None if
    /// no frontier is reachable.
    fn plan_to_frontier(&self, belief: &BeliefGrid, pose: Pose) -> Option<VecDeque<Action>> {
        let side = belief.side();
        let classes = self.classify(belief);
        let idx = |p: Pose| p.row * side + p.col;

        let is_frontier = |p: Pose| -> bool {
            if classes[idx(p)] != CellClass::Free {
                return false;
            }
            for action in Action::ALL {
                let (dr, dc) = action.delta();
                let r = p.row as isize + dr;
                let c = p.col as isize + dc;
                if r >= 0 && c >= 0 && (r as usize) < side && (c as usize) < side {
                    let n = Pose::new(r as usize, c as usize);
                    if classes[idx(n)] == CellClass::Unknown {
                        return true;
                    }
                }
            }
            false
        };

        let mut parent: Vec<Option<(usize, Action)>> = vec![None; side * side];
        let mut visited = vec![false; side * side];
        let mut queue = VecDeque::new();
        visited[idx(pose)] = true;
        queue.push_back(pose);
        let mut goal = None;
        'search: while let Some(p) = queue.pop_front() {
            for action in Action::ALL {
                let (dr, dc) = action.delta();
                let r = p.row as isize + dr;
                let c = p.col as isize + dc;
                if r < 0 || c < 0 || r as usize >= side || c as usize >= side {
                    continue;
                }
                let n = Pose::new(r as usize, c as usize);
                let ni = idx(n);
                if visited[ni] || classes[ni] != CellClass::Free {
                    continue;
                }
                visited[ni] = true;
                parent[ni] = Some((idx(p), action));
                if is_frontier(n) {
                    goal = Some(ni);
                    break 'search;
                }
                queue.push_back(n);
            }
        }

        let mut goal = goal?;
        let mut actions = VecDeque::new();
        while let Some((prev, action)) = parent[goal] {
            actions.push_front(action);
            goal = prev;
        }
        Some(actions)
    }
}

impl ExplorationPolicy for FrontierPolicy {
    fn begin_episode(&mut self) {
        self.plan.clear();
        self.steps_since_plan = 0;
        self.expected_pose = None;
    }

    fn select_action(&mut self, ctx: &mut PolicyContext) -> Action {
        let blocked = matches!(self.expected_pose, Some(expected) if expected != ctx.pose);
        if blocked || self.plan.is_empty() || self.steps_since_plan >= self.replan_interval {
            self.plan = self
                .plan_to_frontier(ctx.belief, ctx.pose)
                .unwrap_or_default();
            self.steps_since_plan = 0;
        }
        let action = match self.plan.pop_front() {
            Some(a) => a,
            None => RandomPolicy.select_action(ctx),
        };
        self.steps_since_plan += 1;
        let (dr, dc) = action.delta();
        let r = ctx.pose.row as isize + dr;
        let c = ctx.pose.col as isize + dc;
        let side = ctx.belief.side() as isize;
        self.expected_pose = if r >= 0 && c >= 0 && r < side && c < side {
            Some(Pose::new(r as usize, c as usize))
        } else {
            Some(ctx.pose)
        };
        action
    }
}

/// Acts with the trained network: samples from the softmax by default, or
/// takes the most probable action in greedy mode.
pub struct LearnedPolicy {
    params: ActorCriticParams,
    pub greedy: bool,
}

impl LearnedPolicy {
    /// Fails if the weights were trained for a different grid side.
    pub fn new(params: ActorCriticParams, grid_side: usize, greedy: bool) -> Result<Self, NnError> {
        params.check_grid_side(grid_side)?;
        Ok(LearnedPolicy { params, greedy })
    }

    pub fn params(&self) -> &ActorCriticParams {
        &self.params
    }
}

impl ExplorationPolicy for LearnedPolicy {
    fn select_action(&mut self, ctx: &mut PolicyContext) -> Action {
        let features = ctx
            .belief
            .centered_features(ctx.pose)
            .expect("pose inside grid");
        let trace = self.params.forward(&features).expect("feature shape fixed");
        let index = if self.greedy {
            trace
                .probs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite probs"))
                .map(|(i, _)| i)
                .expect("four actions")
        } else {
            sample_categorical(ctx.rng, &trace.probs)
        };
        Action::from_index(index).expect("index in range")
    }
}
