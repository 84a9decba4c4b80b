//! Batch evaluation over paired seed streams. Episode k uses the same map
//! and start pose for every policy, so cross-policy differences can be
//! scored per episode and the parallel schedule cannot change any result.

use anyhow::{Context, Result};
use mapping_core::belief::SensorAccuracy;
use mapping_core::env::{DisasterEnv, EnvConfig, Neighborhood};
use mapping_core::nn::{load_params, ActorCriticParams};
use mapping_core::policy::{
    ExplorationPolicy, FrontierPolicy, LearnedPolicy, MotionModel, MyopicPolicy, PolicyContext,
    RandomPolicy,
};
use mapping_core::rng::{derive_rng, StreamDomain};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{EvalConfig, PolicyConfig, PolicyName};

/// A policy with any weights already loaded and validated, ready to stamp
/// out one instance per evaluation worker.
pub enum PolicySpec {
    Random,
    Frontier {
        unknown_entropy_threshold: f64,
        replan_interval: usize,
    },
    Myopic {
        accuracy: SensorAccuracy,
        neighborhood: Neighborhood,
        motion: MotionModel,
    },
    Learned {
        params: Box<ActorCriticParams>,
        greedy: bool,
    },
}

impl PolicySpec {
    /// Loads weights from disk at most once; a bad path or a shape mismatch
    /// fails here, before any episode runs.
    pub fn resolve(policy: &PolicyConfig, env: &EnvConfig) -> Result<Self> {
        Ok(match &policy.name {
            PolicyName::Random => PolicySpec::Random,
            PolicyName::Frontier => PolicySpec::Frontier {
                unknown_entropy_threshold: policy.unknown_entropy_threshold,
                replan_interval: policy.replan_interval,
            },
            PolicyName::Myopic => PolicySpec::Myopic {
                accuracy: env.sensor_accuracy,
                neighborhood: env.sense_neighborhood,
                motion: policy.myopic_motion,
            },
            PolicyName::Learned(path) => {
                let params = load_params(path)
                    .with_context(|| format!("loading weights from {}", path.display()))?;
                params
                    .check_grid_side(env.side)
                    .context("weights incompatible with the configured environment")?;
                PolicySpec::Learned {
                    params: Box::new(params),
                    greedy: policy.greedy,
                }
            }
        })
    }

    pub fn instantiate(&self) -> Box<dyn ExplorationPolicy + Send> {
        match self {
            PolicySpec::Random => Box::new(RandomPolicy),
            PolicySpec::Frontier {
                unknown_entropy_threshold,
                replan_interval,
            } => Box::new(FrontierPolicy::new(
                *unknown_entropy_threshold,
                *replan_interval,
            )),
            PolicySpec::Myopic {
                accuracy,
                neighborhood,
                motion,
            } => {
                let mut policy = MyopicPolicy::new(*accuracy, *neighborhood);
                policy.motion = *motion;
                Box::new(policy)
            }
            PolicySpec::Learned { params, greedy } => Box::new(
                LearnedPolicy::new((**params).clone(), params.config().grid_side, *greedy)
                    .expect("grid side checked at resolve time"),
            ),
        }
    }
}

/// Outcome of one evaluated episode.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EpisodeSummary {
    pub episode: u64,
    pub reward: f64,
    pub final_entropy: f64,
}

/// Runs one full episode. Environment and policy randomness come from
/// separate streams keyed by (seed, episode), so reruns are bit-identical.
pub fn run_episode(
    env_config: &EnvConfig,
    policy: &mut dyn ExplorationPolicy,
    seed: u64,
    episode: u64,
) -> Result<EpisodeSummary> {
    let env_rng = derive_rng(seed, StreamDomain::Environment, episode);
    let mut policy_rng = derive_rng(seed, StreamDomain::Policy, episode);
    let (mut env, _) = DisasterEnv::reset(*env_config, env_rng)?;
    policy.begin_episode();

    let mut reward = 0.0;
    loop {
        let action = {
            let mut ctx = PolicyContext {
                belief: env.belief(),
                pose: env.pose(),
                rng: &mut policy_rng,
            };
            policy.select_action(&mut ctx)
        };
        let out = env.step(action)?;
        reward += out.reward;
        if out.done {
            break;
        }
    }
    Ok(EpisodeSummary {
        episode,
        reward,
        final_entropy: env.belief().total_entropy(),
    })
}

/// Aggregate statistics for one policy over a batch of episodes.
#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub policy: String,
    pub episodes: usize,
    pub seed: u64,
    pub mean_reward: f64,
    /// Sample standard deviation (n-1 denominator).
    pub std_dev: f64,
    pub std_error: f64,
    pub min_reward: f64,
    pub max_reward: f64,
    /// Per-episode rewards in episode order.
    pub rewards: Vec<f64>,
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

fn summarize(policy: String, eval: &EvalConfig, rewards: Vec<f64>) -> EvalReport {
    let m = mean(&rewards);
    let sd = sample_std(&rewards);
    EvalReport {
        policy,
        episodes: rewards.len(),
        seed: eval.seed,
        mean_reward: m,
        std_dev: sd,
        std_error: sd / (rewards.len().max(1) as f64).sqrt(),
        min_reward: rewards.iter().copied().fold(f64::INFINITY, f64::min),
        max_reward: rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        rewards,
    }
}

fn run_batch(env: &EnvConfig, spec: &PolicySpec, eval: &EvalConfig) -> Result<Vec<f64>> {
    let episodes: Vec<u64> = (0..eval.episodes as u64).collect();
    // Stateful policies reset in begin_episode, so one instance per worker
    // behaves exactly like one instance per episode.
    if eval.workers == 1 {
        let mut policy = spec.instantiate();
        return episodes
            .iter()
            .map(|&e| run_episode(env, policy.as_mut(), eval.seed, e).map(|s| s.reward))
            .collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(eval.workers)
        .build()
        .context("building evaluation worker pool")?;
    pool.install(|| {
        episodes
            .par_iter()
            .map_init(
                || spec.instantiate(),
                |policy, &e| run_episode(env, policy.as_mut(), eval.seed, e).map(|s| s.reward),
            )
            .collect()
    })
}

/// Evaluates one policy; episodes run in parallel unless workers = 1.
pub fn evaluate(env: &EnvConfig, policy: &PolicyConfig, eval: &EvalConfig) -> Result<EvalReport> {
    env.validate()?;
    let spec = PolicySpec::resolve(policy, env)?;
    let rewards = run_batch(env, &spec, eval)?;
    Ok(summarize(policy.label(), eval, rewards))
}

/// Difference of per-episode rewards between two policies on shared maps.
#[derive(Clone, Debug, Serialize)]
pub struct PairwiseDiff {
    pub a: String,
    pub b: String,
    /// Mean of (a - b) over paired episodes.
    pub mean_diff: f64,
    /// Standard error of the paired differences.
    pub std_error: f64,
}

/// Side-by-side evaluation of several policies on identical episode draws.
#[derive(Clone, Debug, Serialize)]
pub struct CompareReport {
    pub episodes: usize,
    pub seed: u64,
    pub rows: Vec<EvalReport>,
    pub pairwise: Vec<PairwiseDiff>,
}

pub fn compare(
    env: &EnvConfig,
    policies: &[PolicyConfig],
    eval: &EvalConfig,
) -> Result<CompareReport> {
    let rows: Vec<EvalReport> = policies
        .iter()
        .map(|p| evaluate(env, p, eval))
        .collect::<Result<_>>()?;

    let mut pairwise = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let diffs: Vec<f64> = rows[i]
                .rewards
                .iter()
                .zip(&rows[j].rewards)
                .map(|(a, b)| a - b)
                .collect();
            let sd = sample_std(&diffs);
            pairwise.push(PairwiseDiff {
                a: rows[i].policy.clone(),
                b: rows[j].policy.clone(),
                mean_diff: mean(&diffs),
                std_error: sd / (diffs.len().max(1) as f64).sqrt(),
            });
        }
    }
    Ok(CompareReport {
        episodes: eval.episodes,
        seed: eval.seed,
        rows,
        pairwise,
    })
}
