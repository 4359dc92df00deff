//! Episodic environment: a walker evolving through a maze whose walls are
//! edited at scheduled instants.
//!
//! An episode has `N` action instants `t_0 <= t_1 <= ... <= t_{N-1}` and a
//! final time `T`. Reset evolves the walker from `t = 0` to `t_0`. Step `k`
//! applies the chosen action at `t_k` and evolves to `t_{k+1}` (or to `T`
//! after the last action). The reward of a step is the escape probability
//! gained since the previous step, the first step counting from `t = 0`, so
//! the rewards of an episode always sum to the final escape probability.

use std::collections::{HashMap, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lindblad::{
    escape_probability, evolve, initial_state, DensityMatrix, Generator, MixParameter,
    DEFAULT_MAX_STEP,
};
use crate::maze::{Maze, WallAction};

/// Action instants plus the final time of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    instants: Vec<f64>,
    final_time: f64,
}

impl Schedule {
    /// Instants must be finite, non-negative and non-decreasing, and the final
    /// time must not precede the last instant.
    pub fn new(instants: Vec<f64>, final_time: f64) -> Result<Self> {
        if !final_time.is_finite() || final_time < 0.0 {
            return invalid(format!("final time must be finite and non-negative, got {final_time}"));
        }
        let mut prev = 0.0;
        for &t in &instants {
            if !t.is_finite() || t < prev {
                return invalid(format!("action instants must be finite and non-decreasing from 0: {instants:?}"));
            }
            prev = t;
        }
        if prev > final_time {
            return invalid(format!("last action instant {prev} exceeds final time {final_time}"));
        }
        Ok(Schedule { instants, final_time })
    }

    /// `t_k = k τ` for `k < n`, `T = n τ`.
    pub fn equally_spaced(n: usize, tau: f64) -> Result<Self> {
        Self::transient(n, tau, 0.0, 0.0)
    }

    /// Free evolution for `lead`, `n` actions spaced by `tau`, then free
    /// evolution for `tail`: `T = lead + n τ + tail`.
    pub fn transient(n: usize, tau: f64, lead: f64, tail: f64) -> Result<Self> {
        if !(tau >= 0.0 && lead >= 0.0 && tail >= 0.0) {
            return invalid(format!("negative durations: tau={tau}, lead={lead}, tail={tail}"));
        }
        let instants = (0..n).map(|k| lead + k as f64 * tau).collect();
        Self::new(instants, lead + n as f64 * tau + tail)
    }

    pub fn instants(&self) -> &[f64] {
        &self.instants
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    pub fn action_count(&self) -> usize {
        self.instants.len()
    }

    /// End of the interval that follows action `k`.
    pub fn interval_end(&self, k: usize) -> f64 {
        self.instants.get(k + 1).copied().unwrap_or(self.final_time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    /// Real and imaginary parts of the upper triangle of ρ.
    #[default]
    FullRho,
    /// Populations only.
    DiagOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub maze: Maze,
    pub p: MixParameter,
    pub schedule: Schedule,
    pub observation_mode: ObservationMode,
    pub sink_rate: f64,
    pub max_step: f64,
}

impl EpisodeConfig {
    pub fn new(maze: Maze, p: MixParameter, schedule: Schedule) -> Self {
        EpisodeConfig {
            maze,
            p,
            schedule,
            observation_mode: ObservationMode::FullRho,
            sink_rate: 1.0,
            max_step: DEFAULT_MAX_STEP,
        }
    }

    /// `n` actions equally spaced by `tau`.
    pub fn equally_spaced(maze: Maze, p: f64, n: usize, tau: f64) -> Result<Self> {
        Ok(Self::new(maze, MixParameter::new(p)?, Schedule::equally_spaced(n, tau)?))
    }

    pub fn with_schedule(&self, schedule: Schedule) -> Self {
        EpisodeConfig { schedule, ..self.clone() }
    }

    pub fn with_observation_mode(mut self, mode: ObservationMode) -> Self {
        self.observation_mode = mode;
        self
    }

    pub fn action_count(&self) -> usize {
        self.maze.action_count()
    }

    pub fn steps(&self) -> usize {
        self.schedule.action_count()
    }

    pub fn observation_len(&self) -> usize {
        let d = self.maze.node_count() + 1;
        let state = match self.observation_mode {
            ObservationMode::FullRho => d * (d + 1) / 2 + d * (d - 1) / 2,
            ObservationMode::DiagOnly => d,
        };
        state + self.maze.candidate_edges().len() + 1
    }

    fn validate(&self) -> Result<()> {
        if !(self.sink_rate >= 0.0 && self.sink_rate.is_finite()) {
            return invalid(format!("sink rate must be finite and non-negative, got {}", self.sink_rate));
        }
        if !(self.max_step > 0.0 && self.max_step.is_finite()) {
            return invalid(format!("max step must be positive, got {}", self.max_step));
        }
        Ok(())
    }

    pub fn generator(&self, maze: &Maze) -> Result<Generator> {
        Generator::new(maze, self.p, self.sink_rate)?.with_max_step(self.max_step)
    }
}

/// One environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_observation: Vec<f64>,
    pub done: bool,
}

/// One row of an episode trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub t: f64,
    pub action: usize,
    pub reward: f64,
    pub escape: f64,
}

pub fn write_trace_csv<W: Write>(mut w: W, rows: &[TraceRow]) -> Result<()> {
    writeln!(w, "k,t_k,action_index,reward,p_exit_cum")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.k, r.t, r.action, r.reward, r.escape)?;
    }
    Ok(())
}

/// Bounded FIFO memo of walker states keyed by the action prefix that led to
/// them. Transitions are deterministic, so a hit is bit-identical to a recomputation.
#[derive(Debug, Clone)]
struct StateMemo {
    map: HashMap<Vec<u16>, DensityMatrix>,
    order: VecDeque<Vec<u16>>,
    capacity: usize,
}

impl StateMemo {
    fn new(capacity: usize) -> Self {
        StateMemo { map: HashMap::new(), order: VecDeque::new(), capacity }
    }

    fn get(&self, key: &[u16]) -> Option<&DensityMatrix> {
        self.map.get(key)
    }

    fn insert(&mut self, key: Vec<u16>, rho: DensityMatrix) {
        if self.capacity == 0 {
            return;
        }
        while self.map.len() >= self.capacity {
            let Some(old) = self.order.pop_front() else { break };
            self.map.remove(&old);
        }
        self.order.push_back(key.clone());
        self.map.insert(key, rho);
    }
}

/// Default memory budget for memoized states.
pub const DEFAULT_MEMO_BYTES: usize = 48 << 20;

#[derive(Debug, Clone)]
pub struct QuantumMazeEnv {
    config: EpisodeConfig,
    maze: Maze,
    rho: DensityMatrix,
    step: usize,
    escape: f64,
    prefix: Vec<u16>,
    trace: Vec<TraceRow>,
    memo: StateMemo,
}

impl QuantumMazeEnv {
    pub fn new(config: EpisodeConfig) -> Result<Self> {
        Self::with_memo_bytes(config, DEFAULT_MEMO_BYTES)
    }

    /// Build an environment whose memo of visited states may use up to
    /// `memo_bytes` (0 disables memoization).
    pub fn with_memo_bytes(config: EpisodeConfig, memo_bytes: usize) -> Result<Self> {
        config.validate()?;
        if config.maze.action_count() > u16::MAX as usize {
            return invalid("action space too large");
        }
        let d = config.maze.node_count() + 1;
        let capacity = memo_bytes / (d * d * 16);
        let rho = initial_state(&config.maze);
        let mut env = QuantumMazeEnv {
            maze: config.maze.clone(),
            config,
            rho,
            step: 0,
            escape: 0.0,
            prefix: Vec::new(),
            trace: Vec::new(),
            memo: StateMemo::new(capacity),
        };
        env.reset()?;
        Ok(env)
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn maze(&self) -> &Maze {
        &self.maze
    }

    pub fn state(&self) -> &DensityMatrix {
        &self.rho
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.config.steps()
    }

    /// Escape probability accumulated so far.
    pub fn escape_probability(&self) -> f64 {
        self.escape
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    /// Restore the initial maze, put the walker on the entrance and evolve it
    /// freely up to the first action instant (or to `T` if there are none).
    pub fn reset(&mut self) -> Result<Vec<f64>> {
        self.maze = self.config.maze.clone();
        self.step = 0;
        self.prefix.clear();
        self.trace.clear();
        let lead = self
            .config
            .schedule
            .instants()
            .first()
            .copied()
            .unwrap_or(self.config.schedule.final_time());
        self.rho = match self.memo.get(&[]) {
            Some(rho) => rho.clone(),
            None => {
                let rho = initial_state(&self.maze);
                let rho = if lead > 0.0 {
                    evolve(&self.config.generator(&self.maze)?, &rho, lead)?
                } else {
                    rho
                };
                self.memo.insert(Vec::new(), rho.clone());
                rho
            }
        };
        self.escape = escape_probability(&self.rho);
        Ok(self.observation())
    }

    pub fn observation(&self) -> Vec<f64> {
        let d = self.rho.dim();
        let mut obs = Vec::with_capacity(self.config.observation_len());
        let m = self.rho.matrix();
        match self.config.observation_mode {
            ObservationMode::FullRho => {
                for i in 0..d {
                    for j in i..d {
                        obs.push(m[(i, j)].re);
                    }
                }
                for i in 0..d {
                    for j in i + 1..d {
                        obs.push(m[(i, j)].im);
                    }
                }
            }
            ObservationMode::DiagOnly => obs.extend((0..d).map(|i| m[(i, i)].re)),
        }
        obs.extend(self.maze.link_bits().iter().map(|&b| if b { 1.0 } else { 0.0 }));
        let n = self.config.steps().max(1);
        obs.push(self.step as f64 / n as f64);
        obs
    }

    /// Apply `action` at the current instant and evolve to the next one.
    pub fn step(&mut self, action: WallAction) -> Result<Transition> {
        if self.is_done() {
            return Err(Error::Protocol("step called on a finished episode".into()));
        }
        let observation = self.observation();
        let before = if self.step == 0 { 0.0 } else { self.escape };
        self.maze.apply_action_in_place(action)?;
        let index = action.index();
        self.prefix.push(index as u16);

        let k = self.step;
        let t_k = self.config.schedule.instants()[k];
        let dt = self.config.schedule.interval_end(k) - t_k;
        self.rho = match self.memo.get(&self.prefix) {
            Some(rho) => rho.clone(),
            None => {
                let rho = evolve(&self.config.generator(&self.maze)?, &self.rho, dt)?;
                self.memo.insert(self.prefix.clone(), rho.clone());
                rho
            }
        };
        self.escape = escape_probability(&self.rho);
        let reward = self.escape - before;
        self.step += 1;
        self.trace.push(TraceRow { k, t: t_k, action: index, reward, escape: self.escape });
        Ok(Transition {
            observation,
            action: index,
            reward,
            next_observation: self.observation(),
            done: self.is_done(),
        })
    }

    /// Step by action index.
    pub fn step_index_action(&mut self, action: usize) -> Result<Transition> {
        let a = WallAction::from_index(action, self.maze.candidate_edges().len())?;
        self.step(a)
    }
}

/// Anything that maps an observation to an action index.
pub trait Policy {
    fn act(&self, observation: &[f64]) -> Result<usize>;
}

impl<F: Fn(&[f64]) -> usize> Policy for F {
    fn act(&self, observation: &[f64]) -> Result<usize> {
        Ok(self(observation))
    }
}

/// The null policy: never touch the maze.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullPolicy;

impl Policy for NullPolicy {
    fn act(&self, _: &[f64]) -> Result<usize> {
        Ok(WallAction::NoOp.index())
    }
}

/// Replays a fixed action sequence.
#[derive(Debug, Clone)]
pub struct SequencePolicy(pub Vec<usize>);

impl Policy for SequencePolicy {
    fn act(&self, observation: &[f64]) -> Result<usize> {
        // the step index is the last observation component, k / N
        let k = self.0.len() as f64 * observation.last().copied().unwrap_or(0.0);
        self.0
            .get(k.round() as usize)
            .copied()
            .ok_or_else(|| Error::InvalidArgument("sequence shorter than the episode".into()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    /// Final escape probability, equal to the sum of rewards.
    pub reward: f64,
    pub trace: Vec<TraceRow>,
}

/// Run one episode on an existing environment.
pub fn rollout_in(env: &mut QuantumMazeEnv, policy: &dyn Policy) -> Result<Rollout> {
    let mut obs = env.reset()?;
    let mut actions = Vec::with_capacity(env.config().steps());
    let mut rewards = Vec::with_capacity(env.config().steps());
    while !env.is_done() {
        let a = policy.act(&obs)?;
        let tr = env.step_index_action(a)?;
        actions.push(a);
        rewards.push(tr.reward);
        obs = tr.next_observation;
    }
    Ok(Rollout { actions, rewards, reward: env.escape_probability(), trace: env.trace().to_vec() })
}

pub fn rollout(policy: &dyn Policy, config: &EpisodeConfig) -> Result<Rollout> {
    let mut env = QuantumMazeEnv::with_memo_bytes(config.clone(), 0)?;
    rollout_in(&mut env, policy)
}

/// Greedy rollout of `policy`; returns the final escape probability.
pub fn cumulative_reward(policy: &dyn Policy, config: &EpisodeConfig) -> Result<f64> {
    Ok(rollout(policy, config)?.reward)
}

/// Escape probability without any action over the whole schedule.
pub fn baseline_reward(config: &EpisodeConfig) -> Result<f64> {
    cumulative_reward(&NullPolicy, config)
}
