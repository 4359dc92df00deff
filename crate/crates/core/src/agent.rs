//! Deep Q-learning on the maze environment.
//!
//! The Q-function is a small fully connected network (rectifier hidden
//! layers, linear output, one output per action) trained with explicit
//! backpropagation and Adam on the Huber loss against one-step Bellman
//! targets computed by a periodically synchronised target network.

use std::collections::VecDeque;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{baseline_reward, rollout_in, EpisodeConfig, Policy, QuantumMazeEnv, Transition};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// e-folding time of the exploration rate, in epochs.
    pub epsilon_decay: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs between target-network copies.
    pub target_sync: usize,
    pub memory_capacity: usize,
    pub hidden: Vec<usize>,
    pub huber_delta: f64,
    /// Gradient batches drawn after each episode.
    pub updates_per_epoch: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay: 200.0,
            batch_size: 64,
            learning_rate: 1e-3,
            target_sync: 20,
            memory_capacity: 10_000,
            hidden: vec![128, 64],
            huber_delta: 1.0,
            updates_per_epoch: 1,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return invalid(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.epsilon_start)
            || !(0.0..=1.0).contains(&self.epsilon_end)
            || self.epsilon_end > self.epsilon_start
        {
            return invalid(format!(
                "need 0 <= epsilon_end <= epsilon_start <= 1, got {} / {}",
                self.epsilon_end, self.epsilon_start
            ));
        }
        if !(self.epsilon_decay > 0.0) {
            return invalid("epsilon_decay must be positive");
        }
        if self.batch_size == 0 || self.target_sync == 0 || self.memory_capacity == 0 {
            return invalid("batch_size, target_sync and memory_capacity must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return invalid("learning rate must be positive");
        }
        if !(self.huber_delta > 0.0) {
            return invalid("huber_delta must be positive");
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return invalid("hidden layers must be non-empty");
        }
        Ok(())
    }
}

/// `ε(e) = ε_end + (ε_start - ε_end) exp(-e / decay)`.
pub fn epsilon_schedule(cfg: &AgentConfig, epoch: usize) -> f64 {
    cfg.epsilon_end + (cfg.epsilon_start - cfg.epsilon_end) * (-(epoch as f64) / cfg.epsilon_decay).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Dense {
    inputs: usize,
    outputs: usize,
    // row-major, outputs x inputs
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.inputs)
                .zip(&self.bias)
                .map(|(row, b)| b + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>()),
        );
    }
}

/// Feed-forward Q-function approximator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    layers: Vec<Dense>,
}

impl QNetwork {
    /// Uniform `±1/√fan_in` initialisation of weights and biases.
    pub fn new(input_dim: usize, hidden: &[usize], actions: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::zeros(input_dim, hidden, actions)?;
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(input_dim: usize, hidden: &[usize], actions: usize) -> Result<Self> {
        if input_dim == 0 || actions == 0 || hidden.contains(&0) {
            return invalid("network layers must be non-empty");
        }
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(actions);
        let layers = sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Ok(QNetwork { layers })
    }

    /// `[input, hidden..., actions]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].inputs];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn action_count(&self) -> usize {
        self.layers.last().expect("at least one layer").outputs
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return invalid(format!("expected {} parameters, got {}", self.parameter_count(), params.len()));
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|w| w.is_finite()))
    }

    /// Multiply the output layer (weights and bias) by `c`.
    pub fn scale_output(&mut self, c: f64) {
        let last = self.layers.last_mut().expect("at least one layer");
        for w in last.weights.iter_mut().chain(last.bias.iter_mut()) {
            *w *= c;
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return invalid(format!("observation has length {}, network expects {}", x.len(), self.input_dim()));
        }
        Ok(())
    }

    /// Q-values of every action.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (idx, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if idx < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Forward pass keeping every layer's post-activation output.
    fn forward_cached(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::new();
            layer.apply(acts.last().expect("non-empty"), &mut out);
            if idx < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    /// Accumulate into `grads` the gradient of `Σ_a upstream[a] Q(x)_a`.
    fn backward(&self, acts: &[Vec<f64>], upstream: &[f64], grads: &mut QNetwork) {
        let mut delta = upstream.to_vec();
        for (idx, (layer, g)) in self.layers.iter().zip(grads.layers.iter_mut()).enumerate().rev() {
            let input = &acts[idx];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, &x) in row.iter_mut().zip(input) {
                    *gw += d * x;
                }
            }
            if idx == 0 {
                break;
            }
            let mut prev = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, &w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            // rectifier derivative, from the stored post-activation values
            for (p, &a) in prev.iter_mut().zip(input) {
                if a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }

    /// Mean Huber loss of `Q(s_b, a_b)` against `y_b`, and its gradient.
    pub fn huber_loss_and_gradient(
        &self,
        observations: &[&[f64]],
        actions: &[usize],
        targets: &[f64],
        delta: f64,
    ) -> Result<(f64, QNetwork)> {
        let b = observations.len();
        if b == 0 || actions.len() != b || targets.len() != b {
            return invalid("batch must be non-empty with matching lengths");
        }
        let mut grads = self.zeroed_like();
        let mut loss = 0.0;
        let mut upstream = vec![0.0; self.action_count()];
        for ((&x, &a), &y) in observations.iter().zip(actions).zip(targets) {
            self.check_input(x)?;
            if a >= self.action_count() {
                return invalid(format!("action {a} out of range"));
            }
            let acts = self.forward_cached(x);
            let err = acts.last().expect("output")[a] - y;
            loss += huber(err, delta);
            upstream.iter_mut().for_each(|u| *u = 0.0);
            upstream[a] = err.clamp(-delta, delta) / b as f64;
            self.backward(&acts, &upstream, &mut grads);
        }
        Ok((loss / b as f64, grads))
    }

    fn zeroed_like(&self) -> QNetwork {
        QNetwork {
            layers: self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    fn same_architecture(&self, other: &QNetwork) -> bool {
        self.layer_sizes() == other.layer_sizes()
    }

    /// Index of the largest Q-value, lowest index on ties.
    pub fn greedy_action(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }
}

impl Policy for QNetwork {
    fn act(&self, observation: &[f64]) -> Result<usize> {
        self.greedy_action(observation)
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn huber(x: f64, delta: f64) -> f64 {
    if x.abs() <= delta {
        0.5 * x * x
    } else {
        delta * (x.abs() - 0.5 * delta)
    }
}

/// Adam optimiser state for one network.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(net: &QNetwork, lr: f64) -> Self {
        let n = net.parameter_count();
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn step(&mut self, net: &mut QNetwork, grads: &QNetwork) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let mut idx = 0;
        for (l, g) in net.layers.iter_mut().zip(&grads.layers) {
            let params = l.weights.iter_mut().chain(l.bias.iter_mut());
            let gs = g.weights.iter().chain(&g.bias);
            for (w, &gw) in params.zip(gs) {
                let m = &mut self.m[idx];
                let v = &mut self.v[idx];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gw;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gw * gw;
                *w -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
                idx += 1;
            }
        }
    }
}

/// Bounded FIFO pool of recent transitions.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        ReplayMemory { capacity, items: VecDeque::with_capacity(capacity.min(1 << 16)) }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Up to `batch` distinct transitions drawn uniformly.
    pub fn sample(&self, batch: usize, rng: &mut impl Rng) -> Vec<&Transition> {
        let amount = batch.min(self.items.len());
        rand::seq::index::sample(rng, self.items.len(), amount)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }
}

/// ε-greedy choice: a uniform random action with probability `epsilon`,
/// otherwise the greedy one.
pub fn select_action(net: &QNetwork, obs: &[f64], epsilon: f64, rng: &mut impl Rng) -> Result<usize> {
    if !(0.0..=1.0).contains(&epsilon) {
        return invalid(format!("epsilon must lie in [0, 1], got {epsilon}"));
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        Ok(rng.random_range(0..net.action_count()))
    } else {
        net.greedy_action(obs)
    }
}

/// One gradient step of `policy` towards `r + γ max_a' Q_target(s', a')`
/// (just `r` on terminal transitions). Returns the mean Huber loss.
pub fn train_step(
    policy: &mut QNetwork,
    target: &QNetwork,
    batch: &[&Transition],
    cfg: &AgentConfig,
    optimizer: &mut Adam,
) -> Result<f64> {
    if batch.is_empty() {
        return invalid("empty training batch");
    }
    let mut targets = Vec::with_capacity(batch.len());
    for t in batch {
        let y = if t.done {
            t.reward
        } else {
            let next = target.forward(&t.next_observation)?;
            t.reward + cfg.gamma * next.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        };
        targets.push(y);
    }
    let obs: Vec<&[f64]> = batch.iter().map(|t| t.observation.as_slice()).collect();
    let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
    let (loss, grads) = policy.huber_loss_and_gradient(&obs, &actions, &targets, cfg.huber_delta)?;
    if !loss.is_finite() {
        return Err(Error::NumericalInstability(format!("training loss is {loss}")));
    }
    optimizer.step(policy, &grads);
    if !policy.is_finite() {
        return Err(Error::NumericalInstability("non-finite network weights".into()));
    }
    Ok(loss)
}

/// Hard copy of the policy weights into the target network.
pub fn sync_target(policy: &QNetwork, target: &mut QNetwork) -> Result<()> {
    if !policy.same_architecture(target) {
        return invalid(format!(
            "architecture mismatch: {:?} vs {:?}",
            policy.layer_sizes(),
            target.layer_sizes()
        ));
    }
    target.clone_from(policy);
    Ok(())
}

/// Curves and final policy of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingResult {
    pub episode_rewards: Vec<f64>,
    /// Trailing mean over the last ten episodes.
    pub moving_average: Vec<f64>,
    /// Greedy reward of the target network in effect at each epoch.
    pub target_rewards: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub losses: Vec<f64>,
    /// Escape probability without actions.
    pub baseline: f64,
    /// The best target-network snapshot, by greedy reward.
    pub policy: QNetwork,
    pub final_reward: f64,
    pub final_actions: Vec<usize>,
    /// Epoch at which the returned snapshot was taken (0 = initial network).
    pub policy_epoch: usize,
}

impl TrainingResult {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,episode_reward,moving_avg,target_greedy_reward,epsilon")?;
        for e in 0..self.episode_rewards.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                e,
                self.episode_rewards[e],
                self.moving_average[e],
                self.target_rewards[e],
                self.epsilons[e]
            )?;
        }
        Ok(())
    }
}

pub const MOVING_WINDOW: usize = 10;

/// Train a fresh agent on one environment configuration.
///
/// Each epoch plays one ε-greedy episode, stores its transitions, draws
/// `updates_per_epoch` batches for gradient steps and decays ε. Every
/// `target_sync` epochs (and after the last one) the target network is
/// refreshed and its greedy episode is scored; the best-scoring snapshot is
/// the returned policy.
pub fn train(env_cfg: &EpisodeConfig, cfg: &AgentConfig, epochs: usize, seed: u64) -> Result<TrainingResult> {
    let mut env = QuantumMazeEnv::new(env_cfg.clone())?;
    train_in(&mut env, cfg, epochs, seed)
}

pub fn train_in(env: &mut QuantumMazeEnv, cfg: &AgentConfig, epochs: usize, seed: u64) -> Result<TrainingResult> {
    cfg.validate()?;
    let env_cfg = env.config().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = QNetwork::new(env_cfg.observation_len(), &cfg.hidden, env_cfg.action_count(), &mut rng)?;
    let mut target = policy.clone();
    let mut optimizer = Adam::new(&policy, cfg.learning_rate);
    let mut memory = ReplayMemory::new(cfg.memory_capacity);

    let baseline = baseline_reward(&env_cfg)?;
    let first = rollout_in(env, &target)?;
    let mut best = (first.reward, first.actions, target.clone(), 0usize);
    let mut target_reward = first.reward;

    let mut result = TrainingResult {
        episode_rewards: Vec::with_capacity(epochs),
        moving_average: Vec::with_capacity(epochs),
        target_rewards: Vec::with_capacity(epochs),
        epsilons: Vec::with_capacity(epochs),
        losses: Vec::with_capacity(epochs),
        baseline,
        policy: QNetwork::zeros(1, &[], 1)?,
        final_reward: 0.0,
        final_actions: Vec::new(),
        policy_epoch: 0,
    };

    for epoch in 0..epochs {
        let epsilon = epsilon_schedule(cfg, epoch);
        let mut obs = env.reset()?;
        while !env.is_done() {
            let action = select_action(&policy, &obs, epsilon, &mut rng)?;
            let tr = env.step_index_action(action)?;
            obs = tr.next_observation.clone();
            memory.push(tr);
        }
        let episode_reward = env.escape_probability();

        let mut loss = 0.0;
        for _ in 0..cfg.updates_per_epoch {
            let batch = memory.sample(cfg.batch_size, &mut rng);
            if !batch.is_empty() {
                loss = train_step(&mut policy, &target, &batch, cfg, &mut optimizer)?;
            }
        }

        let last = epoch + 1 == epochs;
        if (epoch + 1) % cfg.target_sync == 0 || last {
            sync_target(&policy, &mut target)?;
            let r = rollout_in(env, &target)?;
            target_reward = r.reward;
            if r.reward > best.0 {
                best = (r.reward, r.actions, target.clone(), epoch + 1);
            }
        }

        result.episode_rewards.push(episode_reward);
        let window = &result.episode_rewards[result.episode_rewards.len().saturating_sub(MOVING_WINDOW)..];
        result.moving_average.push(window.iter().sum::<f64>() / window.len() as f64);
        result.target_rewards.push(target_reward);
        result.epsilons.push(epsilon);
        result.losses.push(loss);
    }

    let (final_reward, final_actions, policy, policy_epoch) = best;
    result.final_reward = final_reward;
    result.final_actions = final_actions;
    result.policy = policy;
    result.policy_epoch = policy_epoch;
    Ok(result)
}

/// Serialized description of the environment a policy was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvRecord {
    /// Maze in its text format.
    pub maze: String,
    pub p: f64,
    pub instants: Vec<f64>,
    pub final_time: f64,
    pub observation_mode: crate::env::ObservationMode,
    pub sink_rate: f64,
    pub max_step: f64,
}

impl EnvRecord {
    pub fn from_config(cfg: &EpisodeConfig) -> Self {
        EnvRecord {
            maze: cfg.maze.to_string(),
            p: cfg.p.value(),
            instants: cfg.schedule.instants().to_vec(),
            final_time: cfg.schedule.final_time(),
            observation_mode: cfg.observation_mode,
            sink_rate: cfg.sink_rate,
            max_step: cfg.max_step,
        }
    }

    pub fn to_config(&self) -> Result<EpisodeConfig> {
        let mut cfg = EpisodeConfig::new(
            self.maze.parse()?,
            crate::lindblad::MixParameter::new(self.p)?,
            crate::env::Schedule::new(self.instants.clone(), self.final_time)?,
        );
        cfg.observation_mode = self.observation_mode;
        cfg.sink_rate = self.sink_rate;
        cfg.max_step = self.max_step;
        Ok(cfg)
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained policy with everything needed to re-evaluate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub network: QNetwork,
    pub agent: AgentConfig,
    pub env: EnvRecord,
    pub epochs: usize,
    pub seed: u64,
    pub final_reward: f64,
}

impl PolicyCheckpoint {
    pub fn new(result: &TrainingResult, agent: &AgentConfig, env: &EpisodeConfig, epochs: usize, seed: u64) -> Self {
        PolicyCheckpoint {
            version: CHECKPOINT_VERSION,
            layer_sizes: result.policy.layer_sizes(),
            network: result.policy.clone(),
            agent: agent.clone(),
            env: EnvRecord::from_config(env),
            epochs,
            seed,
            final_reward: result.final_reward,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ck: PolicyCheckpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!("unsupported checkpoint version {}", ck.version)));
        }
        if ck.layer_sizes != ck.network.layer_sizes() {
            return Err(Error::Parse("checkpoint architecture does not match its weights".into()));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maze::Maze;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = QNetwork::zeros(5, &[4, 3], 2).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0, 0.5, 9.0]).unwrap(), vec![0.0, 0.0]);
        assert!(net.forward(&[1.0]).is_err());
    }

    #[test]
    fn epsilon_schedule_values() {
        let cfg = AgentConfig::default();
        assert_eq!(epsilon_schedule(&cfg, 0), 1.0);
        assert!((epsilon_schedule(&cfg, 200) - (0.05 + 0.95 * (-1f64).exp())).abs() < 1e-15);
        assert!((epsilon_schedule(&cfg, 200) - 0.3995).abs() < 1e-4);
        assert!((epsilon_schedule(&cfg, 100_000) - 0.05).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for e in 0..2000 {
            let eps = epsilon_schedule(&cfg, e);
            assert!(eps <= prev);
            prev = eps;
        }
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax(&[1.0, 1.0, 1.0]), 0);
        assert_eq!(argmax(&[0.0, 2.0, 2.0]), 1);
        let net = QNetwork::zeros(3, &[2], 4).unwrap();
        let mut r = rng(0);
        assert_eq!(select_action(&net, &[0.1, 0.2, 0.3], 0.0, &mut r).unwrap(), 0);
        assert!(select_action(&net, &[0.1, 0.2, 0.3], 1.5, &mut r).is_err());
    }

    #[test]
    fn replay_memory_evicts_oldest() {
        let mut mem = ReplayMemory::new(3);
        for k in 0..5 {
            mem.push(Transition {
                observation: vec![k as f64],
                action: 0,
                reward: 0.0,
                next_observation: vec![],
                done: true,
            });
        }
        assert_eq!(mem.len(), 3);
        let kept: Vec<f64> = mem.iter().map(|t| t.observation[0]).collect();
        assert_eq!(kept, vec![2.0, 3.0, 4.0]);
        assert_eq!(mem.sample(10, &mut rng(1)).len(), 3);
    }

    #[test]
    fn sync_copies_and_checks_architecture() {
        let mut r = rng(3);
        let policy = QNetwork::new(4, &[5], 3, &mut r).unwrap();
        let mut target = QNetwork::new(4, &[5], 3, &mut r).unwrap();
        sync_target(&policy, &mut target).unwrap();
        assert_eq!(policy, target);
        sync_target(&policy, &mut target).unwrap();
        assert_eq!(policy, target);
        let mut other = QNetwork::new(4, &[6], 3, &mut r).unwrap();
        assert!(sync_target(&policy, &mut other).is_err());
    }

    #[test]
    fn terminal_zero_batch_has_zero_loss() {
        let mut policy = QNetwork::zeros(3, &[4], 2).unwrap();
        let target = policy.clone();
        let t = Transition {
            observation: vec![1.0, 0.0, 0.5],
            action: 1,
            reward: 0.0,
            next_observation: vec![0.0, 0.0, 1.0],
            done: true,
        };
        let cfg = AgentConfig::default();
        let mut opt = Adam::new(&policy, cfg.learning_rate);
        let loss = train_step(&mut policy, &target, &[&t, &t], &cfg, &mut opt).unwrap();
        assert_eq!(loss, 0.0);
        assert!(train_step(&mut policy, &target, &[], &cfg, &mut opt).is_err());
    }

    #[test]
    fn zero_discount_regresses_on_reward() {
        // with γ = 0 the target is r whatever the target network says
        let mut r = rng(9);
        let mut policy = QNetwork::zeros(2, &[3], 2).unwrap();
        let target = QNetwork::new(2, &[3], 2, &mut r).unwrap();
        let t = Transition {
            observation: vec![1.0, 0.0],
            action: 0,
            reward: 0.7,
            next_observation: vec![0.0, 1.0],
            done: false,
        };
        let cfg = AgentConfig { gamma: 0.0, ..AgentConfig::default() };
        let mut opt = Adam::new(&policy, cfg.learning_rate);
        let loss = train_step(&mut policy, &target, &[&t], &cfg, &mut opt).unwrap();
        assert!((loss - huber(-0.7, 1.0)).abs() < 1e-15);
    }

    #[test]
    fn training_with_zero_epochs() {
        let cfg = EpisodeConfig::equally_spaced(Maze::generate(2, 2, 1).unwrap(), 0.5, 2, 1.0).unwrap();
        let agent = AgentConfig { hidden: vec![8], ..AgentConfig::default() };
        let res = train(&cfg, &agent, 0, 4).unwrap();
        assert!(res.episode_rewards.is_empty());
        assert_eq!(res.policy_epoch, 0);
        let mut r = rng(4);
        let init = QNetwork::new(cfg.observation_len(), &agent.hidden, cfg.action_count(), &mut r).unwrap();
        assert_eq!(res.policy, init);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = EpisodeConfig::equally_spaced(Maze::generate(2, 2, 1).unwrap(), 0.5, 2, 1.0).unwrap();
        let agent = AgentConfig { hidden: vec![8], ..AgentConfig::default() };
        let res = train(&cfg, &agent, 3, 4).unwrap();
        let ck = PolicyCheckpoint::new(&res, &agent, &cfg, 3, 4);
        let path = dir.path().join("policy.json");
        ck.save(&path).unwrap();
        let back = PolicyCheckpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.env.to_config().unwrap(), cfg);
    }
}
