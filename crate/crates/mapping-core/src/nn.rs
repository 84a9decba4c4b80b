//! Dense actor-critic network with hand-derived backpropagation.
//!
//! The architecture is fixed: the flattened 2-channel centered features feed
//! one fully connected hidden layer with a rectifier, which feeds a 4-way
//! softmax policy head and a scalar value head. Gradients of the combined
//! actor-critic loss are computed in closed form; the optimizer is Adam with
//! global gradient-norm clipping.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::FeatureTensor;
use crate::env::Action;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input length {found} does not match the network's input size {expected}")]
    InputShape { expected: usize, found: usize },
    #[error("trace was produced by parameter version {trace_version}, current is {params_version}")]
    StaleTrace {
        trace_version: u64,
        params_version: u64,
    },
    #[error("gradient batch is empty")]
    EmptyBatch,
    #[error("weights were trained for grid side {expected}, harness uses {found}")]
    GridSideMismatch { expected: usize, found: usize },
    #[error("malformed weight file: {0}")]
    BadFormat(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Network shape: everything follows from the belief grid side and the
/// hidden width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub grid_side: usize,
    pub hidden: usize,
}

impl NetConfig {
    pub const ACTIONS: usize = Action::COUNT;

    pub fn new(grid_side: usize, hidden: usize) -> Self {
        NetConfig { grid_side, hidden }
    }

    /// Flattened input size: 2 channels of (2N-1) x (2N-1) entries.
    pub fn input_dim(self) -> usize {
        let view = 2 * self.grid_side - 1;
        2 * view * view
    }
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            grid_side: 25,
            hidden: 256,
        }
    }
}

/// One fully connected layer; weights row-major, one row per output.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    /// Weights uniform in [-1/sqrt(in_dim), +1/sqrt(in_dim)], biases zero.
    fn init(rng: &mut ChaCha8Rng, in_dim: usize, out_dim: usize) -> Self {
        use rand::Rng;
        let bound = 1.0 / (in_dim as f64).sqrt();
        let w = (0..in_dim * out_dim)
            .map(|_| bound * (2.0 * rng.gen::<f64>() - 1.0))
            .collect();
        Dense {
            in_dim,
            out_dim,
            w,
            b: vec![0.0; out_dim],
        }
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        for (o, out_slot) in out.iter_mut().enumerate() {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.b[o];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            *out_slot = acc;
        }
    }
}

/// Everything the backward pass needs about one forward evaluation.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    version: u64,
    input: Vec<f64>,
    trunk_pre: Vec<f64>,
    trunk_post: Vec<f64>,
    pub logits: [f64; NetConfig::ACTIONS],
    pub probs: [f64; NetConfig::ACTIONS],
    pub value: f64,
}

/// Actor-critic parameters: shared trunk plus policy and value heads.
///
/// The version counter is bumped by every optimizer step; traces remember the
/// version they were computed with so gradients can reject stale traces.
#[derive(Clone, Debug)]
pub struct ActorCriticParams {
    config: NetConfig,
    version: u64,
    trunk: Dense,
    policy_head: Dense,
    value_head: Dense,
}

impl ActorCriticParams {
    pub fn init(rng: &mut ChaCha8Rng, config: NetConfig) -> Self {
        let input = config.input_dim();
        ActorCriticParams {
            config,
            version: 0,
            trunk: Dense::init(rng, input, config.hidden),
            policy_head: Dense::init(rng, config.hidden, NetConfig::ACTIONS),
            value_head: Dense::init(rng, config.hidden, 1),
        }
    }

    pub fn config(&self) -> NetConfig {
        self.config
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Error unless the weights were built for this belief grid side.
    pub fn check_grid_side(&self, side: usize) -> Result<(), NnError> {
        if self.config.grid_side == side {
            Ok(())
        } else {
            Err(NnError::GridSideMismatch {
                expected: self.config.grid_side,
                found: side,
            })
        }
    }

    pub fn forward(&self, features: &FeatureTensor) -> Result<ForwardTrace, NnError> {
        self.forward_slice(features.as_slice())
    }

    pub fn forward_slice(&self, input: &[f64]) -> Result<ForwardTrace, NnError> {
        if input.len() != self.config.input_dim() {
            return Err(NnError::InputShape {
                expected: self.config.input_dim(),
                found: input.len(),
            });
        }
        let hidden = self.config.hidden;
        let mut trunk_pre = vec![0.0; hidden];
        self.trunk.forward(input, &mut trunk_pre);
        let trunk_post: Vec<f64> = trunk_pre.iter().map(|&v| v.max(0.0)).collect();

        let mut logits = [0.0; NetConfig::ACTIONS];
        self.policy_head.forward(&trunk_post, &mut logits);
        let probs = stable_softmax(&logits);

        let mut value = [0.0; 1];
        self.value_head.forward(&trunk_post, &mut value);

        Ok(ForwardTrace {
            version: self.version,
            input: input.to_vec(),
            trunk_pre,
            trunk_post,
            logits,
            probs,
            value: value[0],
        })
    }

    /// The six parameter tensors in fixed order: trunk weights, trunk
    /// biases, policy weights, policy biases, value weights, value biases.
    pub fn tensors(&self) -> [&Vec<f64>; 6] {
        [
            &self.trunk.w,
            &self.trunk.b,
            &self.policy_head.w,
            &self.policy_head.b,
            &self.value_head.w,
            &self.value_head.b,
        ]
    }

    /// Mutable view of the tensors in the same order as `tensors`.
    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.trunk.w,
            &mut self.trunk.b,
            &mut self.policy_head.w,
            &mut self.policy_head.b,
            &mut self.value_head.w,
            &mut self.value_head.b,
        ]
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

fn stable_softmax(logits: &[f64; NetConfig::ACTIONS]) -> [f64; NetConfig::ACTIONS] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; NetConfig::ACTIONS];
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    for o in &mut out {
        *o /= sum;
    }
    out
}

/// Entropy of a discrete distribution in nats, with 0 ln 0 = 0.
pub fn distribution_entropy(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

/// One training sample: the forward trace, the action taken, and its n-step
/// bootstrapped return.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub trace: ForwardTrace,
    pub action: Action,
    pub n_step_return: f64,
}

/// Gradients with the same shapes as the parameters.
#[derive(Clone, Debug)]
pub struct GradSet {
    trunk_w: Vec<f64>,
    trunk_b: Vec<f64>,
    policy_w: Vec<f64>,
    policy_b: Vec<f64>,
    value_w: Vec<f64>,
    value_b: Vec<f64>,
}

impl GradSet {
    pub fn zeros_like(params: &ActorCriticParams) -> Self {
        GradSet {
            trunk_w: vec![0.0; params.trunk.w.len()],
            trunk_b: vec![0.0; params.trunk.b.len()],
            policy_w: vec![0.0; params.policy_head.w.len()],
            policy_b: vec![0.0; params.policy_head.b.len()],
            value_w: vec![0.0; params.value_head.w.len()],
            value_b: vec![0.0; params.value_head.b.len()],
        }
    }

    pub fn tensors(&self) -> [&Vec<f64>; 6] {
        [
            &self.trunk_w,
            &self.trunk_b,
            &self.policy_w,
            &self.policy_b,
            &self.value_w,
            &self.value_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.trunk_w,
            &mut self.trunk_b,
            &mut self.policy_w,
            &mut self.policy_b,
            &mut self.value_w,
            &mut self.value_b,
        ]
    }

    /// L2 norm over every entry of every tensor.
    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            for g in t.iter_mut() {
                *g *= factor;
            }
        }
    }
}

/// Scalar value of the combined actor-critic loss over a batch:
/// sum of -log pi(a) * (R - V) (advantage treated as constant)
/// - entropy_coef * H(pi) + value_coef * (R - V)^2.
pub fn a2c_loss(batch: &[TrainSample], entropy_coef: f64, value_coef: f64) -> f64 {
    let mut loss = 0.0;
    for sample in batch {
        let t = &sample.trace;
        let adv = sample.n_step_return - t.value;
        let logp = t.probs[sample.action.index()].ln();
        loss += -logp * adv - entropy_coef * distribution_entropy(&t.probs)
            + value_coef * adv * adv;
    }
    loss
}

/// Exact gradients of `a2c_loss` with the advantage in the policy term held
/// constant (the value head only learns through the squared error).
pub fn a2c_grads(
    params: &ActorCriticParams,
    batch: &[TrainSample],
    entropy_coef: f64,
    value_coef: f64,
) -> Result<GradSet, NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    for sample in batch {
        if sample.trace.version != params.version {
            return Err(NnError::StaleTrace {
                trace_version: sample.trace.version,
                params_version: params.version,
            });
        }
    }

    let hidden = params.config.hidden;
    let mut grads = GradSet::zeros_like(params);
    let mut d_hidden = vec![0.0; hidden];

    for sample in batch {
        let t = &sample.trace;
        let adv = sample.n_step_return - t.value;
        let entropy = distribution_entropy(&t.probs);

        // d loss / d logit_j = adv * (pi_j - [j == a])
        //                    + entropy_coef * pi_j * (ln pi_j + H).
        let mut d_logits = [0.0; NetConfig::ACTIONS];
        for (j, d) in d_logits.iter_mut().enumerate() {
            let pj = t.probs[j];
            let indicator = if j == sample.action.index() { 1.0 } else { 0.0 };
            let ent_term = if pj > 0.0 {
                entropy_coef * pj * (pj.ln() + entropy)
            } else {
                0.0
            };
            *d = adv * (pj - indicator) + ent_term;
        }
        // d loss / d value = -2 * value_coef * (R - V).
        let d_value = -2.0 * value_coef * adv;

        d_hidden.iter_mut().for_each(|d| *d = 0.0);
        for (j, &dl) in d_logits.iter().enumerate() {
            let row = &params.policy_head.w[j * hidden..(j + 1) * hidden];
            for (dh, wj) in d_hidden.iter_mut().zip(row) {
                *dh += dl * wj;
            }
            grads.policy_b[j] += dl;
            let grow = &mut grads.policy_w[j * hidden..(j + 1) * hidden];
            for (g, h) in grow.iter_mut().zip(&t.trunk_post) {
                *g += dl * h;
            }
        }
        {
            let row = &params.value_head.w[..hidden];
            for (dh, wv) in d_hidden.iter_mut().zip(row) {
                *dh += d_value * wv;
            }
            grads.value_b[0] += d_value;
            for (g, h) in grads.value_w.iter_mut().zip(&t.trunk_post) {
                *g += d_value * h;
            }
        }
        // Rectifier subgradient: pass only where the pre-activation was > 0.
        for (u, dh) in d_hidden.iter_mut().enumerate() {
            if t.trunk_pre[u] <= 0.0 {
                *dh = 0.0;
            }
            if *dh != 0.0 {
                grads.trunk_b[u] += *dh;
                let grow = &mut grads.trunk_w[u * t.input.len()..(u + 1) * t.input.len()];
                for (g, x) in grow.iter_mut().zip(&t.input) {
                    *g += *dh * x;
                }
            }
        }
    }
    Ok(grads)
}

/// Scale all gradients down so the global norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut GradSet, max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "max_norm must be positive");
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Adam moment accumulators, one pair per parameter.
#[derive(Clone, Debug)]
pub struct AdamState {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: GradSet,
    v: GradSet,
}

impl AdamState {
    pub fn new(params: &ActorCriticParams) -> Self {
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: GradSet::zeros_like(params),
            v: GradSet::zeros_like(params),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update at the given learning rate.
    pub fn apply(&mut self, params: &mut ActorCriticParams, grads: &GradSet, lr: f64) {
        self.step += 1;
        let b1 = self.beta1;
        let b2 = self.beta2;
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        let p_tensors = params.tensors_mut();
        let g_tensors = grads.tensors();
        let m_tensors = self.m.tensors_mut();
        let v_tensors = self.v.tensors_mut();
        for k in 0..p_tensors.len() {
            let p = &mut *p_tensors[k];
            let g = g_tensors[k];
            let m = &mut *m_tensors[k];
            let v = &mut *v_tensors[k];
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        params.version += 1;
    }
}

const MAGIC: &[u8; 8] = b"MAPAC001";

#[derive(Serialize, Deserialize)]
struct FileHeader {
    grid_side: usize,
    hidden: usize,
    input_dim: usize,
    actions: usize,
}

/// Write the parameters as magic + JSON shape header + little-endian f64
/// payload. The round trip restores every bit.
pub fn save_params(params: &ActorCriticParams, path: &Path) -> Result<(), NnError> {
    let header = FileHeader {
        grid_side: params.config.grid_side,
        hidden: params.config.hidden,
        input_dim: params.config.input_dim(),
        actions: NetConfig::ACTIONS,
    };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| NnError::BadFormat(format!("header serialization: {e}")))?;
    let mut out = Vec::with_capacity(16 + header_bytes.len() + params.param_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for tensor in params.tensors() {
        for &x in tensor {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

fn take<'a>(bytes: &'a [u8], cursor: &mut usize, n: usize) -> Result<&'a [u8], NnError> {
    let end = cursor
        .checked_add(n)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| NnError::BadFormat("file truncated".into()))?;
    let slice = &bytes[*cursor..end];
    *cursor = end;
    Ok(slice)
}

fn read_tensor(bytes: &[u8], cursor: &mut usize, len: usize) -> Result<Vec<f64>, NnError> {
    let raw = take(bytes, cursor, len * 8)?;
    Ok(raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub fn load_params(path: &Path) -> Result<ActorCriticParams, NnError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cursor = 0usize;

    if take(&bytes, &mut cursor, MAGIC.len())? != MAGIC {
        return Err(NnError::BadFormat("bad magic".into()));
    }
    let header_len =
        u32::from_le_bytes(take(&bytes, &mut cursor, 4)?.try_into().expect("4 bytes")) as usize;
    let header: FileHeader = serde_json::from_slice(take(&bytes, &mut cursor, header_len)?)
        .map_err(|e| NnError::BadFormat(format!("header parse: {e}")))?;
    let config = NetConfig::new(header.grid_side, header.hidden);
    if header.input_dim != config.input_dim() || header.actions != NetConfig::ACTIONS {
        return Err(NnError::BadFormat(format!(
            "inconsistent header: input_dim {} for grid side {} (expected {}), actions {}",
            header.input_dim,
            header.grid_side,
            config.input_dim(),
            header.actions
        )));
    }

    let shapes = [
        (config.input_dim(), config.hidden),
        (1, config.hidden),
        (config.hidden, NetConfig::ACTIONS),
        (1, NetConfig::ACTIONS),
        (config.hidden, 1),
        (1, 1),
    ];
    let total: usize = shapes.iter().map(|(a, b)| a * b).sum();
    if bytes.len() - cursor != total * 8 {
        return Err(NnError::BadFormat(format!(
            "payload is {} bytes, expected {}",
            bytes.len() - cursor,
            total * 8
        )));
    }
    let trunk_w = read_tensor(&bytes, &mut cursor, shapes[0].0 * shapes[0].1)?;
    let trunk_b = read_tensor(&bytes, &mut cursor, shapes[1].1)?;
    let policy_w = read_tensor(&bytes, &mut cursor, shapes[2].0 * shapes[2].1)?;
    let policy_b = read_tensor(&bytes, &mut cursor, shapes[3].1)?;
    let value_w = read_tensor(&bytes, &mut cursor, shapes[4].0 * shapes[4].1)?;
    let value_b = read_tensor(&bytes, &mut cursor, shapes[5].1)?;

    Ok(ActorCriticParams {
        config,
        version: 0,
        trunk: Dense {
            in_dim: config.input_dim(),
            out_dim: config.hidden,
            w: trunk_w,
            b: trunk_b,
        },
        policy_head: Dense {
            in_dim: config.hidden,
            out_dim: NetConfig::ACTIONS,
            w: policy_w,
            b: policy_b,
        },
        value_head: Dense {
            in_dim: config.hidden,
            out_dim: 1,
            w: value_w,
            b: value_b,
        },
    })
}
