//! Single-threaded actor-critic training: roll the stochastic policy in the
//! environment, cut rollouts every n steps, fit with bootstrapped n-step
//! returns, and anneal the learning rate on an episode schedule.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, DisasterEnv, EnvConfig, EnvError};
use crate::nn::{
    a2c_grads, a2c_loss, clip_global_norm, ActorCriticParams, AdamState, ForwardTrace, NnError,
    TrainSample,
};
use crate::policy::sample_categorical;
use crate::rng::{derive_rng, StreamDomain};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at episode {episode}, step {step}: {detail}")]
    NonFiniteLoss {
        episode: usize,
        step: usize,
        detail: String,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

fn default_episodes() -> usize {
    10_000
}

fn default_gamma() -> f64 {
    0.99
}

fn default_n_steps() -> usize {
    20
}

fn default_lr() -> f64 {
    1e-4
}

fn default_lr_halving() -> usize {
    5_000
}

fn default_entropy_coef() -> f64 {
    0.001
}

fn default_value_coef() -> f64 {
    0.5
}

fn default_max_grad_norm() -> f64 {
    50.0
}

fn default_hidden() -> usize {
    256
}

/// Training hyperparameters. Defaults: 10k episodes, discount 0.99, updates
/// every 20 steps, Adam at 1e-4 halved every 5k episodes, entropy bonus
/// 0.001, value weight 0.5, gradient norm cap 50.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    pub gamma: f64,
    pub n_steps: usize,
    pub lr: f64,
    pub lr_halving_interval: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: default_episodes(),
            gamma: default_gamma(),
            n_steps: default_n_steps(),
            lr: default_lr(),
            lr_halving_interval: default_lr_halving(),
            entropy_coef: default_entropy_coef(),
            value_coef: default_value_coef(),
            max_grad_norm: default_max_grad_norm(),
            hidden: default_hidden(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let mut problems = Vec::new();
        if self.episodes == 0 {
            problems.push("episodes must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            problems.push("gamma must lie in (0, 1]");
        }
        if self.n_steps == 0 {
            problems.push("n_steps must be positive");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            problems.push("lr must be positive");
        }
        if self.lr_halving_interval == 0 {
            problems.push("lr_halving_interval must be positive");
        }
        if self.entropy_coef < 0.0 {
            problems.push("entropy_coef must be nonnegative");
        }
        if self.value_coef < 0.0 {
            problems.push("value_coef must be nonnegative");
        }
        if !(self.max_grad_norm.is_finite() && self.max_grad_norm > 0.0) {
            problems.push("max_grad_norm must be positive");
        }
        if self.hidden == 0 {
            problems.push("hidden must be positive");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(TrainError::InvalidConfig(problems.join("; ")))
        }
    }

    /// Step-annealed learning rate for a 0-based episode index: halved once
    /// per full halving interval.
    pub fn lr_at_episode(&self, episode: usize) -> f64 {
        self.lr * 0.5f64.powi((episode / self.lr_halving_interval) as i32)
    }
}

/// Transitions collected since the last update, plus how the rollout ended:
/// cut mid-episode (bootstrap with the critic) or at the horizon (bootstrap
/// zero).
#[derive(Clone, Debug, Default)]
pub struct RolloutBuffer {
    traces: Vec<ForwardTrace>,
    actions: Vec<Action>,
    rewards: Vec<f64>,
}

impl RolloutBuffer {
    pub fn push(&mut self, trace: ForwardTrace, action: Action, reward: f64) {
        self.traces.push(trace);
        self.actions.push(action);
        self.rewards.push(reward);
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn clear(&mut self) {
        self.traces.clear();
        self.actions.clear();
        self.rewards.clear();
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// Consume the buffer into training samples given the n-step returns.
    fn drain_samples(&mut self, returns: &[f64]) -> Vec<TrainSample> {
        debug_assert_eq!(returns.len(), self.traces.len());
        let samples = self
            .traces
            .drain(..)
            .zip(self.actions.drain(..))
            .zip(returns.iter())
            .map(|((trace, action), &n_step_return)| TrainSample {
                trace,
                action,
                n_step_return,
            })
            .collect();
        self.rewards.clear();
        samples
    }
}

/// Discounted n-step returns by one backward sweep:
/// R_t = r_t + gamma * R_{t+1}, seeded with the bootstrap value (the
/// critic's estimate past the cut, or 0 at a terminal).
pub fn compute_returns(rewards: &[f64], bootstrap: f64, gamma: f64) -> Vec<f64> {
    let mut returns = vec![0.0; rewards.len()];
    let mut acc = bootstrap;
    for (slot, &r) in returns.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *slot = acc;
    }
    returns
}

/// Reward history of one training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub entries: Vec<CurveEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveEntry {
    pub episode: usize,
    pub reward: f64,
    pub seconds: f64,
}

impl LearningCurve {
    pub fn rewards(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.reward).collect()
    }

    /// Mean reward of the last `n` episodes (or all, if fewer).
    pub fn trailing_mean(&self, n: usize) -> f64 {
        let rewards = self.rewards();
        let tail = &rewards[rewards.len().saturating_sub(n)..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

/// Discrete Gaussian smoothing with edge renormalization; the output has the
/// same length as the input. A width of 0 (or anything non-positive) returns
/// the series unchanged.
pub fn smooth_curve(values: &[f64], width: f64) -> Vec<f64> {
    if width <= 0.0 || values.is_empty() {
        return values.to_vec();
    }
    let radius = (3.0 * width).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-((d * d) as f64) / (2.0 * width * width)).exp())
        .collect();
    let n = values.len() as isize;
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            let mut weight = 0.0;
            for (k, &w) in kernel.iter().enumerate() {
                let j = i + (k as isize - radius);
                if j >= 0 && j < n {
                    acc += w * values[j as usize];
                    weight += w;
                }
            }
            acc / weight
        })
        .collect()
}

/// Per-episode progress passed to the caller's observer.
#[derive(Clone, Copy, Debug)]
pub struct EpisodeReport<'a> {
    pub episode: usize,
    pub reward: f64,
    pub lr: f64,
    pub params: &'a ActorCriticParams,
}

/// Run the full training loop. Fresh parameters are initialized from the
/// seed; pass an observer to log progress or write checkpoints.
pub fn train(
    env_config: EnvConfig,
    config: &TrainConfig,
    mut observer: impl FnMut(EpisodeReport),
) -> Result<(ActorCriticParams, LearningCurve), TrainError> {
    let mut init_rng = derive_rng(config.seed, StreamDomain::TrainAction, u64::MAX);
    let params = ActorCriticParams::init(
        &mut init_rng,
        crate::nn::NetConfig::new(env_config.side, config.hidden),
    );
    train_from(env_config, config, params, &mut observer)
}

/// As `train`, but continue from existing parameters.
pub fn train_from(
    env_config: EnvConfig,
    config: &TrainConfig,
    mut params: ActorCriticParams,
    observer: &mut impl FnMut(EpisodeReport),
) -> Result<(ActorCriticParams, LearningCurve), TrainError> {
    env_config.validate()?;
    config.validate()?;
    params.check_grid_side(env_config.side)?;

    let mut adam = AdamState::new(&params);
    let mut curve = LearningCurve::default();
    let started = Instant::now();

    for episode in 0..config.episodes {
        let lr = config.lr_at_episode(episode);
        let env_rng = derive_rng(config.seed, StreamDomain::Environment, episode as u64);
        let mut action_rng = derive_rng(config.seed, StreamDomain::TrainAction, episode as u64);
        let (mut env, reset) = DisasterEnv::reset(env_config, env_rng)?;

        let mut features = reset.features;
        let mut buffer = RolloutBuffer::default();
        let mut episode_reward = 0.0;
        let mut step = 0usize;
        loop {
            let trace = params.forward(&features)?;
            let action = Action::from_index(sample_categorical(&mut action_rng, &trace.probs))
                .expect("categorical index in range");
            let outcome = env.step(action)?;
            episode_reward += outcome.reward;
            buffer.push(trace, action, outcome.reward);
            features = outcome.features;
            step += 1;

            if buffer.len() == config.n_steps || outcome.done {
                let bootstrap = if outcome.done {
                    0.0
                } else {
                    params.forward(&features)?.value
                };
                let returns = compute_returns(buffer.rewards(), bootstrap, config.gamma);
                let samples = buffer.drain_samples(&returns);
                let loss = a2c_loss(&samples, config.entropy_coef, config.value_coef);
                if !loss.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        episode,
                        step,
                        detail: dump_batch(&samples),
                    });
                }
                let mut grads =
                    a2c_grads(&params, &samples, config.entropy_coef, config.value_coef)?;
                clip_global_norm(&mut grads, config.max_grad_norm);
                adam.apply(&mut params, &grads, lr);
            }
            if outcome.done {
                break;
            }
        }

        curve.entries.push(CurveEntry {
            episode,
            reward: episode_reward,
            seconds: started.elapsed().as_secs_f64(),
        });
        observer(EpisodeReport {
            episode,
            reward: episode_reward,
            lr,
            params: &params,
        });
    }
    Ok((params, curve))
}

fn dump_batch(samples: &[TrainSample]) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    for (i, s) in samples.iter().enumerate() {
        let _ = write!(
            out,
            "[{i}] action={:?} return={:.6} value={:.6} probs={:?}; ",
            s.action, s.n_step_return, s.trace.value, s.trace.probs
        );
    }
    out
}
