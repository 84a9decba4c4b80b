//! Episode traces: one JSON record per line, the reset first and then one
//! record per step, horizon + 1 lines in total. Rerunning with the same
//! config and seed reproduces the file byte for byte.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use mapping_core::belief::{Observation, Pose};
use mapping_core::env::{Action, DisasterEnv, EnvConfig, GridMap};
use mapping_core::policy::PolicyContext;
use mapping_core::rng::{derive_rng, StreamDomain};
use serde::{Deserialize, Serialize};

use crate::config::PolicyConfig;
use crate::eval::PolicySpec;

/// How a trace run is keyed and how often belief snapshots are embedded.
#[derive(Clone, Copy, Debug)]
pub struct TraceOptions {
    pub seed: u64,
    pub episode: u64,
    /// Embed the belief probability matrix every this many steps; 0 keeps
    /// only the snapshot in the reset record.
    pub snapshot_stride: usize,
}

/// One line of a trace file. The reset record has no action and carries the
/// ground-truth map; belief snapshots appear at the configured stride.
#[derive(Debug, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action: Option<Action>,
    pub pose: Pose,
    pub observation: Observation,
    pub reward: f64,
    pub cumulative_reward: f64,
    /// Ground-truth occupancy as one '.'/'#' string per row; reset only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub belief: Option<Vec<Vec<f64>>>,
}

fn belief_rows(belief: &mapping_core::belief::BeliefGrid) -> Vec<Vec<f64>> {
    belief
        .prob_matrix()
        .chunks(belief.side())
        .map(<[f64]>::to_vec)
        .collect()
}

fn render_map(map: &GridMap) -> Vec<String> {
    (0..map.side())
        .map(|r| {
            (0..map.side())
                .map(|c| if map.occupied(r, c) { '#' } else { '.' })
                .collect()
        })
        .collect()
}

fn write_record(out: &mut dyn Write, record: &TraceRecord) -> Result<()> {
    serde_json::to_writer(&mut *out, record).context("serializing trace record")?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Runs one episode and streams its records to `out`. Returns the episode's
/// cumulative reward, which equals the evaluation reward for the same
/// (seed, episode) pair.
pub fn write_trace(
    env_config: &EnvConfig,
    policy_config: &PolicyConfig,
    opts: &TraceOptions,
    out: &mut dyn Write,
) -> Result<f64> {
    env_config.validate()?;
    let spec = PolicySpec::resolve(policy_config, env_config)?;
    let mut policy = spec.instantiate();

    let env_rng = derive_rng(opts.seed, StreamDomain::Environment, opts.episode);
    let mut policy_rng = derive_rng(opts.seed, StreamDomain::Policy, opts.episode);
    let (mut env, initial) = DisasterEnv::reset(*env_config, env_rng)?;
    policy.begin_episode();

    write_record(
        out,
        &TraceRecord {
            step: 0,
            action: None,
            pose: initial.pose,
            observation: initial.observation,
            reward: 0.0,
            cumulative_reward: 0.0,
            map: Some(render_map(env.map())),
            belief: Some(belief_rows(env.belief())),
        },
    )?;

    let mut cumulative = 0.0;
    for step in 1..=env_config.horizon {
        let action = {
            let mut ctx = PolicyContext {
                belief: env.belief(),
                pose: env.pose(),
                rng: &mut policy_rng,
            };
            policy.select_action(&mut ctx)
        };
        let outcome = env.step(action)?;
        cumulative += outcome.reward;
        let snapshot = opts.snapshot_stride > 0 && step % opts.snapshot_stride == 0;
        write_record(
            out,
            &TraceRecord {
                step,
                action: Some(action),
                pose: outcome.pose,
                observation: outcome.observation,
                reward: outcome.reward,
                cumulative_reward: cumulative,
                map: None,
                belief: snapshot.then(|| belief_rows(env.belief())),
            },
        )?;
        debug_assert_eq!(outcome.done, step == env_config.horizon);
    }
    Ok(cumulative)
}

/// `write_trace` into a freshly created file.
pub fn trace_to_file(
    env_config: &EnvConfig,
    policy_config: &PolicyConfig,
    opts: &TraceOptions,
    path: &Path,
) -> Result<f64> {
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating trace file {}", path.display()))?;
    let mut writer = std::io::BufWriter::new(file);
    let reward = write_trace(env_config, policy_config, opts, &mut writer)?;
    writer.flush()?;
    Ok(reward)
}
