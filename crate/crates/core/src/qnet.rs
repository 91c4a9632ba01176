//! Value network, manual backpropagation, and optimizer.
//!
//! One shared two-layer ReLU trunk feeds one linear head per agent; each
//! head scores that agent's discrete actions. The joint state-action value
//! is the sum of the per-agent values, so the greedy joint action
//! decomposes into independent per-agent masked argmaxes. Everything is
//! plain `f64` with explicit loops: no autograd, no external math crates.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::marl::Transition;

/// Default trunk widths.
pub const HIDDEN_1: usize = 128;
pub const HIDDEN_2: usize = 64;

/// Adam moment decay rates, stability epsilon, and the global gradient-norm
/// ceiling.
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const GRAD_CLIP_NORM: f64 = 1.0;

/// A dense layer with row-major weights (`n_out` rows of `n_in`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    /// He-normal initialization: weights drawn with variance `2 / n_in`,
    /// biases zero.
    pub fn he(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, (2.0 / n_in as f64).sqrt()).expect("finite stddev");
        let weights = (0..n_in * n_out).map(|_| normal.sample(rng)).collect();
        Linear { n_in, n_out, weights, bias: vec![0.0; n_out] }
    }

    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Linear { n_in, n_out, weights: vec![0.0; n_in * n_out], bias: vec![0.0; n_out] }
    }

    /// `out = W x + b`.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_in);
        let mut out = self.bias.clone();
        for (row, slot) in out.iter_mut().enumerate() {
            let weights = &self.weights[row * self.n_in..(row + 1) * self.n_in];
            let mut acc = 0.0;
            for (w, v) in weights.iter().zip(x) {
                acc += w * v;
            }
            *slot += acc;
        }
        out
    }
}

/// All learnable tensors: shared trunk plus one head per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub trunk1: Linear,
    pub trunk2: Linear,
    pub heads: Vec<Linear>,
}

/// Gradients share the parameter layout exactly.
pub type Gradients = NetworkParams;

impl NetworkParams {
    /// Build a network with explicit layer widths (tests use tiny ones).
    pub fn new(
        state_dim: usize,
        hidden1: usize,
        hidden2: usize,
        n_agents: usize,
        n_actions: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        NetworkParams {
            trunk1: Linear::he(state_dim, hidden1, rng),
            trunk2: Linear::he(hidden1, hidden2, rng),
            heads: (0..n_agents).map(|_| Linear::he(hidden2, n_actions, rng)).collect(),
        }
    }

    /// Build a network with the default trunk widths.
    pub fn standard(state_dim: usize, n_agents: usize, n_actions: usize, rng: &mut ChaCha8Rng) -> Self {
        Self::new(state_dim, HIDDEN_1, HIDDEN_2, n_agents, n_actions, rng)
    }

    pub fn zeros_like(&self) -> Self {
        NetworkParams {
            trunk1: Linear::zeros(self.trunk1.n_in, self.trunk1.n_out),
            trunk2: Linear::zeros(self.trunk2.n_in, self.trunk2.n_out),
            heads: self.heads.iter().map(|h| Linear::zeros(h.n_in, h.n_out)).collect(),
        }
    }

    pub fn n_agents(&self) -> usize {
        self.heads.len()
    }

    pub fn n_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// Every tensor in a fixed order, so params, gradients, and optimizer
    /// moments can be walked in lockstep.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut slices = vec![
            self.trunk1.weights.as_slice(),
            self.trunk1.bias.as_slice(),
            self.trunk2.weights.as_slice(),
            self.trunk2.bias.as_slice(),
        ];
        for head in &self.heads {
            slices.push(head.weights.as_slice());
            slices.push(head.bias.as_slice());
        }
        slices
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut slices = vec![
            self.trunk1.weights.as_mut_slice(),
            self.trunk1.bias.as_mut_slice(),
            self.trunk2.weights.as_mut_slice(),
            self.trunk2.bias.as_mut_slice(),
        ];
        for head in &mut self.heads {
            slices.push(head.weights.as_mut_slice());
            slices.push(head.bias.as_mut_slice());
        }
        slices
    }
}

/// Activations kept from a forward pass for backpropagation. ReLU masks are
/// recovered from the activations themselves (positive means pass-through).
pub struct ForwardCache {
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    /// Per-agent action values.
    pub q: Vec<Vec<f64>>,
}

fn relu_inplace(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Full forward pass with cached activations.
pub fn forward(params: &NetworkParams, state: &[f64]) -> ForwardCache {
    let mut a1 = params.trunk1.forward(state);
    relu_inplace(&mut a1);
    let mut a2 = params.trunk2.forward(&a1);
    relu_inplace(&mut a2);
    let q = params.heads.iter().map(|head| head.forward(&a2)).collect();
    ForwardCache { a1, a2, q }
}

/// Per-agent action values for one state.
pub fn q_values(params: &NetworkParams, state: &[f64]) -> Vec<Vec<f64>> {
    forward(params, state).q
}

/// Highest legal value in one agent's row.
pub fn masked_max(q_row: &[f64], mask: &[bool]) -> f64 {
    debug_assert_eq!(q_row.len(), mask.len());
    q_row
        .iter()
        .zip(mask)
        .filter(|(_, &legal)| legal)
        .map(|(&q, _)| q)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Greedy joint action: per-agent masked argmax, ties to the lowest action
/// index. Because the joint value is an agent-wise sum, this equals the
/// argmax over all legal joint actions.
pub fn greedy_joint(q: &[Vec<f64>], masks: &[Vec<bool>]) -> Vec<usize> {
    q.iter()
        .zip(masks)
        .map(|(row, mask)| {
            let mut best: Option<(usize, f64)> = None;
            for (action, (&value, &legal)) in row.iter().zip(mask).enumerate() {
                if legal && best.map_or(true, |(_, b)| value > b) {
                    best = Some((action, value));
                }
            }
            best.expect("at least one legal action").0
        })
        .collect()
}

/// Mean squared TD error over a batch, with gradients for the online
/// network. Bootstrap values come from the target network's legal-action
/// max in the successor state; terminal transitions use the reward alone.
pub fn td_loss(
    params: &NetworkParams,
    target: &NetworkParams,
    batch: &[&Transition],
    gamma: f64,
) -> (f64, Gradients) {
    assert!(!batch.is_empty(), "empty batch");
    let mut grads = params.zeros_like();
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for transition in batch {
        let cache = forward(params, &transition.state);
        let q_sel: f64 = cache
            .q
            .iter()
            .zip(&transition.actions)
            .map(|(row, &action)| row[action])
            .sum();
        let y = if transition.done {
            transition.team_reward
        } else {
            let next_q = q_values(target, &transition.next_state);
            let bootstrap: f64 = next_q
                .iter()
                .zip(&transition.next_masks)
                .map(|(row, mask)| masked_max(row, mask))
                .sum();
            transition.team_reward + gamma * bootstrap
        };
        let delta = q_sel - y;
        loss += delta * delta * scale;
        backward_sample(params, &cache, &transition.state, &transition.actions, 2.0 * delta * scale, &mut grads);
    }
    (loss, grads)
}

/// Accumulate one sample's gradients. `dq` is the loss derivative with
/// respect to each selected head output (identical across agents, since the
/// joint value is their sum).
fn backward_sample(
    params: &NetworkParams,
    cache: &ForwardCache,
    state: &[f64],
    actions: &[usize],
    dq: f64,
    grads: &mut Gradients,
) {
    let h2 = cache.a2.len();
    let mut d_a2 = vec![0.0; h2];
    for (agent, &action) in actions.iter().enumerate() {
        let head = &params.heads[agent];
        let grad_head = &mut grads.heads[agent];
        let row = &head.weights[action * h2..(action + 1) * h2];
        let grad_row = &mut grad_head.weights[action * h2..(action + 1) * h2];
        for k in 0..h2 {
            grad_row[k] += dq * cache.a2[k];
            d_a2[k] += dq * row[k];
        }
        grad_head.bias[action] += dq;
    }

    // Through the second ReLU into trunk2.
    let h1 = cache.a1.len();
    let mut d_a1 = vec![0.0; h1];
    for k in 0..h2 {
        if cache.a2[k] <= 0.0 {
            continue;
        }
        let dz = d_a2[k];
        let row = &params.trunk2.weights[k * h1..(k + 1) * h1];
        let grad_row = &mut grads.trunk2.weights[k * h1..(k + 1) * h1];
        for (j, (&w, slot)) in row.iter().zip(grad_row.iter_mut()).enumerate() {
            *slot += dz * cache.a1[j];
            d_a1[j] += dz * w;
        }
        grads.trunk2.bias[k] += dz;
    }

    // Through the first ReLU into trunk1.
    let n_in = state.len();
    for j in 0..h1 {
        if cache.a1[j] <= 0.0 {
            continue;
        }
        let dz = d_a1[j];
        let grad_row = &mut grads.trunk1.weights[j * n_in..(j + 1) * n_in];
        for (slot, &x) in grad_row.iter_mut().zip(state) {
            *slot += dz * x;
        }
        grads.trunk1.bias[j] += dz;
    }
}

/// Scale gradients so their global L2 norm is at most `max_norm`; returns
/// the pre-clip norm.
pub fn clip_gradients(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads
        .slices()
        .iter()
        .flat_map(|s| s.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for slice in grads.slices_mut() {
            for g in slice {
                *g *= scale;
            }
        }
    }
    norm
}

/// Adam first and second moments, shaped like the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub m: NetworkParams,
    pub v: NetworkParams,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(like: &NetworkParams) -> Self {
        OptimizerState { m: like.zeros_like(), v: like.zeros_like(), step: 0 }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &Gradients,
    opt: &mut OptimizerState,
    learning_rate: f64,
) {
    opt.step += 1;
    let t = opt.step as i32;
    let m_correction = 1.0 - ADAM_BETA1.powi(t);
    let v_correction = 1.0 - ADAM_BETA2.powi(t);
    let mut p_slices = params.slices_mut();
    let g_slices = grads.slices();
    let mut m_slices = opt.m.slices_mut();
    let mut v_slices = opt.v.slices_mut();
    for idx in 0..p_slices.len() {
        let p = &mut p_slices[idx];
        let g = g_slices[idx];
        let m = &mut m_slices[idx];
        let v = &mut v_slices[idx];
        for k in 0..p.len() {
            m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * g[k];
            v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * g[k] * g[k];
            let m_hat = m[k] / m_correction;
            let v_hat = v[k] / v_correction;
            p[k] -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

/// Central-difference gradient of the TD loss with respect to every
/// parameter; only practical for tiny test networks.
pub fn numeric_gradient(
    params: &NetworkParams,
    target: &NetworkParams,
    batch: &[&Transition],
    gamma: f64,
    epsilon: f64,
) -> Gradients {
    let mut numeric = params.zeros_like();
    let n_slices = params.slices().len();
    for slice_idx in 0..n_slices {
        let len = params.slices()[slice_idx].len();
        for k in 0..len {
            let mut plus = params.clone();
            plus.slices_mut()[slice_idx][k] += epsilon;
            let mut minus = params.clone();
            minus.slices_mut()[slice_idx][k] -= epsilon;
            let up = td_loss(&plus, target, batch, gamma).0;
            let down = td_loss(&minus, target, batch, gamma).0;
            numeric.slices_mut()[slice_idx][k] = (up - down) / (2.0 * epsilon);
        }
    }
    numeric
}

/// Smallest absolute pre-activation across both trunk layers for one
/// state. Finite-difference gradient checks are only valid when every
/// rectifier is comfortably away from its kink, since a unit flipping
/// inside the probe interval makes the central difference measure a slope
/// the analytic gradient legitimately ignores.
pub fn min_preactivation_gap(params: &NetworkParams, state: &[f64]) -> f64 {
    let z1 = params.trunk1.forward(state);
    let mut a1 = z1.clone();
    relu_inplace(&mut a1);
    let z2 = params.trunk2.forward(&a1);
    z1.iter().chain(z2.iter()).map(|z| z.abs()).fold(f64::INFINITY, f64::min)
}

/// Worst relative disagreement between analytic and numeric gradients,
/// using a symmetric denominator floored to dodge division blowups near
/// zero.
pub fn gradient_check(
    params: &NetworkParams,
    target: &NetworkParams,
    batch: &[&Transition],
    gamma: f64,
) -> f64 {
    let (_, analytic) = td_loss(params, target, batch, gamma);
    let numeric = numeric_gradient(params, target, batch, gamma, 1e-5);
    let mut worst = 0.0f64;
    for (a_slice, n_slice) in analytic.slices().iter().zip(numeric.slices().iter()) {
        for (&a, &n) in a_slice.iter().zip(n_slice.iter()) {
            let relative = (a - n).abs() / (a.abs() + n.abs()).max(1e-6);
            worst = worst.max(relative);
        }
    }
    worst
}
