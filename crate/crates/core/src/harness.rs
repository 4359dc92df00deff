//! Experiment drivers: parameter sweeps, multi-maze averages, timing noise,
//! transient timing and cross-policy evaluation.
//!
//! Every driver is a pure function of its configuration. Cells run on a
//! rayon pool of `workers` threads and are folded back in cell order, so the
//! thread count never changes a table.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::agent::{train, AgentConfig, PolicyCheckpoint, QNetwork, TrainingResult};
use crate::env::{baseline_reward, rollout, EpisodeConfig, Schedule};
use crate::error::{invalid, Error, Result};
use crate::lindblad::MixParameter;
use crate::maze::Maze;

pub const DEFAULT_TAU_GRID: [f64; 5] = [1.0, 3.5, 7.0, 14.0, 28.0];

/// `0, 0.1, …, 1`.
pub fn default_p_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

/// Short hex digest of the JSON form of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(&Sha256::digest(&bytes)[..8]))
}

/// Run `f` over `items` on `workers` threads (0 = all cores), keeping input order.
pub fn par_map<T, R, F>(workers: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if workers == 1 {
        return Ok(items.iter().map(&f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Capability(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(&f).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub p_grid: Vec<f64>,
    pub tau_grid: Vec<f64>,
    pub actions: usize,
    pub epochs: usize,
    pub repetitions: usize,
    /// Random-search trials per cell; 0 trains with `agent` as given.
    pub search_budget: usize,
    pub agent: AgentConfig,
    pub seed: u64,
    #[serde(skip)]
    pub workers: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            p_grid: default_p_grid(),
            tau_grid: DEFAULT_TAU_GRID.to_vec(),
            actions: 8,
            epochs: 1000,
            repetitions: 1,
            search_budget: 0,
            agent: AgentConfig::default(),
            seed: 0,
            workers: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p_grid.is_empty() || self.tau_grid.is_empty() {
            return invalid("p and tau grids must be non-empty");
        }
        for &p in &self.p_grid {
            MixParameter::new(p)?;
        }
        if let Some(t) = self.tau_grid.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return invalid(format!("tau values must be positive, got {t}"));
        }
        if self.repetitions == 0 {
            return invalid("repetitions must be at least 1");
        }
        self.agent.validate()
    }

    /// Grid cells in output order: p-major, then τ.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.p_grid.iter().flat_map(|&p| self.tau_grid.iter().map(move |&t| (p, t))).collect()
    }

    pub fn episode(&self, maze: &Maze, p: f64, tau: f64) -> Result<EpisodeConfig> {
        EpisodeConfig::equally_spaced(maze.clone(), p, self.actions, tau)
    }
}

#[derive(Serialize)]
struct CellKey<'a> {
    kind: &'a str,
    maze: String,
    p: f64,
    instants: &'a [f64],
    final_time: f64,
    epochs: usize,
    repetitions: usize,
    search_budget: usize,
    agent: &'a AgentConfig,
    seed: u64,
}

fn cell_hash(kind: &str, cfg: &SweepConfig, env: &EpisodeConfig) -> Result<String> {
    config_hash(&CellKey {
        kind,
        maze: env.maze.to_string(),
        p: env.p.value(),
        instants: env.schedule.instants(),
        final_time: env.schedule.final_time(),
        epochs: cfg.epochs,
        repetitions: cfg.repetitions,
        search_budget: cfg.search_budget,
        agent: &cfg.agent,
        seed: cfg.seed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineCell {
    pub p: f64,
    pub tau: f64,
    pub baseline: f64,
    pub config_hash: String,
}

/// Free-evolution escape probability on every cell.
pub fn baseline_surface(cfg: &SweepConfig, maze: &Maze) -> Result<Vec<BaselineCell>> {
    cfg.validate()?;
    par_map(cfg.workers, &cfg.cells(), |&(p, tau)| {
        let env = cfg.episode(maze, p, tau)?;
        Ok(BaselineCell { p, tau, baseline: baseline_reward(&env)?, config_hash: cell_hash("baseline", cfg, &env)? })
    })?
    .into_iter()
    .collect()
}

pub fn write_baseline_csv<W: Write>(mut w: W, cells: &[BaselineCell]) -> Result<()> {
    writeln!(w, "p,tau,baseline,config_hash")?;
    for c in cells {
        writeln!(w, "{},{},{},{}", c.p, c.tau, c.baseline, c.config_hash)?;
    }
    Ok(())
}

/// Outcome of the best training run of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedRun {
    pub reward: f64,
    pub seed: u64,
    pub agent: AgentConfig,
    pub training: TrainingResult,
    pub checkpoint: PolicyCheckpoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceCell {
    pub p: f64,
    pub tau: f64,
    pub baseline: f64,
    pub seed: u64,
    pub config_hash: String,
    /// Per-cell failures are kept as text so the rest of the sweep survives.
    pub outcome: std::result::Result<TrainedRun, String>,
}

impl SurfaceCell {
    pub fn reward(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|r| r.reward)
    }

    pub fn improvement(&self) -> Option<f64> {
        self.reward().map(|r| r - self.baseline)
    }
}

/// Train (or search) one cell; the best of the repetitions wins, earliest on ties.
pub fn train_cell(cfg: &SweepConfig, env: &EpisodeConfig) -> Result<TrainedRun> {
    let mut best: Option<TrainedRun> = None;
    for rep in 0..cfg.repetitions {
        let seed = cfg.seed.wrapping_add(rep as u64);
        let (agent, training) = if cfg.search_budget == 0 {
            (cfg.agent.clone(), train(env, &cfg.agent, cfg.epochs, seed)?)
        } else {
            let found = hyperparameter_search(env, &cfg.agent, cfg.search_budget, cfg.epochs, seed)?;
            (found.agent, found.training)
        };
        if best.as_ref().map_or(true, |b| training.final_reward > b.reward) {
            let checkpoint = PolicyCheckpoint::new(&training, &agent, env, cfg.epochs, seed);
            best = Some(TrainedRun { reward: training.final_reward, seed, agent, training, checkpoint });
        }
    }
    Ok(best.expect("at least one repetition"))
}

/// Train one agent per cell and report its greedy reward next to the baseline.
pub fn trained_surface(cfg: &SweepConfig, maze: &Maze) -> Result<Vec<SurfaceCell>> {
    cfg.validate()?;
    par_map(cfg.workers, &cfg.cells(), |&(p, tau)| {
        let env = cfg.episode(maze, p, tau)?;
        Ok(SurfaceCell {
            p,
            tau,
            baseline: baseline_reward(&env)?,
            seed: cfg.seed,
            config_hash: cell_hash("trained", cfg, &env)?,
            outcome: train_cell(cfg, &env).map_err(|e| e.to_string()),
        })
    })?
    .into_iter()
    .collect()
}

fn csv_text(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

pub fn write_surface_csv<W: Write>(mut w: W, cells: &[SurfaceCell]) -> Result<()> {
    writeln!(w, "p,tau,reward,baseline,seed,config_hash,status")?;
    for c in cells {
        let (reward, status) = match &c.outcome {
            Ok(run) => (run.reward.to_string(), "ok".to_string()),
            Err(e) => (String::new(), csv_text(e)),
        };
        writeln!(w, "{},{},{},{},{},{},{}", c.p, c.tau, reward, c.baseline, c.seed, c.config_hash, status)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImprovementCell {
    pub p: f64,
    pub tau: f64,
    /// `trained - baseline` per maze, in maze order; failed cells are skipped.
    pub per_maze: Vec<f64>,
    pub failures: usize,
}

impl ImprovementCell {
    pub fn mean(&self) -> f64 {
        self.per_maze.iter().sum::<f64>() / self.per_maze.len() as f64
    }

    /// Sample standard deviation.
    pub fn std_dev(&self) -> f64 {
        let n = self.per_maze.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.per_maze.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    }

    pub fn min(&self) -> f64 {
        self.per_maze.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.per_maze.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Mean of `trained - baseline` over several mazes, cell by cell.
pub fn mean_improvement_surface(cfg: &SweepConfig, mazes: &[Maze]) -> Result<Vec<ImprovementCell>> {
    cfg.validate()?;
    if mazes.len() < 2 {
        return invalid("mean improvement needs at least two mazes");
    }
    let cells = cfg.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..mazes.len()).map(move |m| (c, m))).collect();
    let results = par_map(cfg.workers, &jobs, |&(c, m)| -> Result<Option<f64>> {
        let (p, tau) = cells[c];
        let env = cfg.episode(&mazes[m], p, tau)?;
        let baseline = baseline_reward(&env)?;
        Ok(train_cell(cfg, &env).ok().map(|run| run.reward - baseline))
    })?;
    let mut out: Vec<ImprovementCell> =
        cells.iter().map(|&(p, tau)| ImprovementCell { p, tau, per_maze: Vec::new(), failures: 0 }).collect();
    for (&(c, _), r) in jobs.iter().zip(results) {
        match r? {
            Some(v) => out[c].per_maze.push(v),
            None => out[c].failures += 1,
        }
    }
    Ok(out)
}

pub fn write_improvement_csv<W: Write>(mut w: W, cells: &[ImprovementCell], seed: u64, hash: &str) -> Result<()> {
    writeln!(w, "p,tau,mean,std,min,max,mazes,failures,seed,config_hash")?;
    for c in cells {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            c.p,
            c.tau,
            c.mean(),
            c.std_dev(),
            c.min(),
            c.max(),
            c.per_maze.len(),
            c.failures,
            seed,
            hash
        )?;
    }
    Ok(())
}

/// Draw `n` uniform offsets in `[-ητ, ητ]` and subtract their mean.
pub fn timing_noise(n: usize, eta: f64, tau: f64, rng: &mut impl Rng) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let width = eta * tau;
    let mut u: Vec<f64> = (0..n).map(|_| if width > 0.0 { rng.random_range(-width..=width) } else { 0.0 }).collect();
    let mean = u.iter().sum::<f64>() / n as f64;
    u.iter_mut().for_each(|x| *x -= mean);
    u
}

/// Shift the action instants by `noise`, sort, and clamp into `[0, T]`.
pub fn perturb_schedule(schedule: &Schedule, noise: &[f64]) -> Result<Schedule> {
    if noise.len() != schedule.action_count() {
        return invalid(format!("{} offsets for {} instants", noise.len(), schedule.action_count()));
    }
    let t_final = schedule.final_time();
    let mut instants: Vec<f64> = schedule.instants().iter().zip(noise).map(|(t, u)| t + u).collect();
    instants.sort_by(f64::total_cmp);
    instants.iter_mut().for_each(|t| *t = t.clamp(0.0, t_final));
    Schedule::new(instants, t_final)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingNoiseConfig {
    pub eta_grid: Vec<f64>,
    pub realizations: usize,
    pub seed: u64,
    #[serde(skip)]
    pub workers: usize,
}

impl TimingNoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eta_grid.is_empty() || self.eta_grid.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return invalid(format!("eta values must lie in [0, 1]: {:?}", self.eta_grid));
        }
        if self.realizations == 0 {
            return invalid("need at least one realization");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRow {
    pub eta: f64,
    pub rewards: Vec<f64>,
}

impl NoiseRow {
    pub fn mean(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.rewards.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.rewards.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn spread(&self) -> f64 {
        self.max() - self.min()
    }
}

/// Nominal spacing of a schedule: `T / N`.
fn nominal_tau(schedule: &Schedule) -> f64 {
    schedule.final_time() / schedule.action_count().max(1) as f64
}

/// Roll the frozen policy out on randomly jittered schedules.
pub fn timing_noise_eval(cfg: &TimingNoiseConfig, checkpoint: &PolicyCheckpoint) -> Result<Vec<NoiseRow>> {
    cfg.validate()?;
    let env = checkpoint.env.to_config()?;
    let tau = nominal_tau(&env.schedule);
    let n = env.steps();
    let mut jobs = Vec::with_capacity(cfg.eta_grid.len() * cfg.realizations);
    for (i, &eta) in cfg.eta_grid.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64);
        for _ in 0..cfg.realizations {
            jobs.push((i, perturb_schedule(&env.schedule, &timing_noise(n, eta, tau, &mut rng))?));
        }
    }
    let rewards = par_map(cfg.workers, &jobs, |(_, schedule)| {
        Ok::<_, Error>(rollout(&checkpoint.network, &env.with_schedule(schedule.clone()))?.reward)
    })?;
    let mut rows: Vec<NoiseRow> =
        cfg.eta_grid.iter().map(|&eta| NoiseRow { eta, rewards: Vec::with_capacity(cfg.realizations) }).collect();
    for ((i, _), r) in jobs.iter().zip(rewards) {
        rows[*i].rewards.push(r?);
    }
    Ok(rows)
}

pub fn write_noise_csv<W: Write>(mut w: W, rows: &[NoiseRow], seed: u64, hash: &str) -> Result<()> {
    writeln!(w, "eta,mean,min,max,seed,config_hash")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{},{}", r.eta, r.mean(), r.min(), r.max(), seed, hash)?;
    }
    Ok(())
}

/// Which free-evolution segment the transient scan varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransientScan {
    /// Free evolution before the actions (`T₃ = 0`).
    Lead,
    /// Free evolution after the actions (`T₁ = 0`).
    Tail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransientConfig {
    pub total_time: f64,
    pub actions: usize,
    pub scan: TransientScan,
    /// Durations of the scanned segment; the action window gets the rest.
    pub values: Vec<f64>,
    pub p_grid: Vec<f64>,
    pub epochs: usize,
    pub agent: AgentConfig,
    pub seed: u64,
    #[serde(skip)]
    pub workers: usize,
}

impl TransientConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.total_time >= 0.0 && self.total_time.is_finite()) {
            return invalid(format!("total time must be finite and non-negative, got {}", self.total_time));
        }
        if self.values.is_empty() || self.p_grid.is_empty() {
            return invalid("transient grids must be non-empty");
        }
        if let Some(v) = self.values.iter().find(|v| !(**v >= 0.0 && **v <= self.total_time)) {
            return invalid(format!("segment {v} outside [0, {}]", self.total_time));
        }
        for &p in &self.p_grid {
            MixParameter::new(p)?;
        }
        self.agent.validate()
    }

    /// `(T₁, T₂, T₃)` for a scanned value.
    pub fn split(&self, value: f64) -> (f64, f64, f64) {
        let window = self.total_time - value;
        match self.scan {
            TransientScan::Lead => (value, window, 0.0),
            TransientScan::Tail => (0.0, window, value),
        }
    }

    pub fn schedule(&self, value: f64) -> Result<Schedule> {
        let (lead, window, tail) = self.split(value);
        let tau = if self.actions == 0 { 0.0 } else { window / self.actions as f64 };
        let mut schedule = Schedule::transient(self.actions, tau, lead, tail)?;
        // keep T exact despite rounding in lead + N τ + tail
        if schedule.final_time() != self.total_time {
            schedule = Schedule::new(schedule.instants().iter().map(|t| t.min(self.total_time)).collect(), self.total_time)?;
        }
        Ok(schedule)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientRow {
    pub p: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub reward: Option<f64>,
    /// Escape probability over `T` without actions.
    pub baseline: f64,
    pub seed: u64,
    pub config_hash: String,
    pub error: Option<String>,
}

/// Train and score one policy per `(p, scanned value)`.
pub fn transient_eval(cfg: &TransientConfig, maze: &Maze) -> Result<Vec<TransientRow>> {
    cfg.validate()?;
    let jobs: Vec<(f64, f64)> = cfg.p_grid.iter().flat_map(|&p| cfg.values.iter().map(move |&v| (p, v))).collect();
    par_map(cfg.workers, &jobs, |&(p, v)| {
        let env = EpisodeConfig::new(maze.clone(), MixParameter::new(p)?, cfg.schedule(v)?);
        let (t1, t2, t3) = cfg.split(v);
        let trained = train(&env, &cfg.agent, cfg.epochs, cfg.seed);
        #[derive(Serialize)]
        struct Key<'a> {
            maze: String,
            p: f64,
            instants: &'a [f64],
            total_time: f64,
            epochs: usize,
            agent: &'a AgentConfig,
            seed: u64,
        }
        let hash = config_hash(&Key {
            maze: maze.to_string(),
            p,
            instants: env.schedule.instants(),
            total_time: cfg.total_time,
            epochs: cfg.epochs,
            agent: &cfg.agent,
            seed: cfg.seed,
        })?;
        Ok(TransientRow {
            p,
            t1,
            t2,
            t3,
            reward: trained.as_ref().ok().map(|t| t.final_reward),
            baseline: baseline_reward(&env)?,
            seed: cfg.seed,
            config_hash: hash,
            error: trained.err().map(|e| e.to_string()),
        })
    })?
    .into_iter()
    .collect()
}

pub fn write_transient_csv<W: Write>(mut w: W, rows: &[TransientRow]) -> Result<()> {
    writeln!(w, "p,t1,t2,t3,reward,baseline,seed,config_hash,status")?;
    for r in rows {
        let reward = r.reward.map(|x| x.to_string()).unwrap_or_default();
        let status = r.error.as_deref().map(csv_text).unwrap_or_else(|| "ok".into());
        writeln!(w, "{},{},{},{},{},{},{},{},{}", r.p, r.t1, r.t2, r.t3, reward, r.baseline, r.seed, r.config_hash, status)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossCell {
    pub p: f64,
    pub tau: f64,
    pub reward: f64,
    pub baseline: f64,
    pub actions: Vec<usize>,
    /// Index into [`CrossEval::sequences`].
    pub sequence: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossEval {
    pub cells: Vec<CrossCell>,
    /// Distinct greedy sequences, in order of first appearance on the grid.
    pub sequences: Vec<Vec<usize>>,
}

/// Evaluate a frozen policy on every `(p, τ)` of the grid, on its own maze or on `maze`.
pub fn cross_policy_eval(
    checkpoint: &PolicyCheckpoint,
    p_grid: &[f64],
    tau_grid: &[f64],
    maze: Option<&Maze>,
    workers: usize,
) -> Result<CrossEval> {
    let trained_env = checkpoint.env.to_config()?;
    let maze = maze.cloned().unwrap_or_else(|| trained_env.maze.clone());
    let n = trained_env.steps();
    let probe = EpisodeConfig::equally_spaced(maze.clone(), 0.0, n, 1.0)?.with_observation_mode(trained_env.observation_mode);
    check_dimensions(&checkpoint.network, &probe)?;
    if p_grid.is_empty() || tau_grid.is_empty() {
        return invalid("p and tau grids must be non-empty");
    }
    let cells: Vec<(f64, f64)> = p_grid.iter().flat_map(|&p| tau_grid.iter().map(move |&t| (p, t))).collect();
    let results = par_map(workers, &cells, |&(p, tau)| -> Result<(f64, f64, Vec<usize>)> {
        let mut env = EpisodeConfig::equally_spaced(maze.clone(), p, n, tau)?;
        env.observation_mode = trained_env.observation_mode;
        env.sink_rate = trained_env.sink_rate;
        env.max_step = trained_env.max_step;
        let r = rollout(&checkpoint.network, &env)?;
        Ok((r.reward, baseline_reward(&env)?, r.actions))
    })?;
    let mut index: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut sequences = Vec::new();
    let mut out = Vec::with_capacity(cells.len());
    for (&(p, tau), r) in cells.iter().zip(results) {
        let (reward, baseline, actions) = r?;
        let sequence = *index.entry(actions.clone()).or_insert_with(|| {
            sequences.push(actions.clone());
            sequences.len() - 1
        });
        out.push(CrossCell { p, tau, reward, baseline, actions, sequence });
    }
    Ok(CrossEval { cells: out, sequences })
}

fn check_dimensions(net: &QNetwork, env: &EpisodeConfig) -> Result<()> {
    if net.input_dim() != env.observation_len() || net.action_count() != env.action_count() {
        return invalid(format!(
            "policy expects {} inputs and {} actions, maze provides {} and {}",
            net.input_dim(),
            net.action_count(),
            env.observation_len(),
            env.action_count()
        ));
    }
    Ok(())
}

fn join_actions(actions: &[usize]) -> String {
    actions.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn write_cross_csv<W: Write>(mut w: W, eval: &CrossEval, seed: u64, hash: &str) -> Result<()> {
    writeln!(w, "p,tau,reward,baseline,sequence,actions,seed,config_hash")?;
    for c in &eval.cells {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            c.p,
            c.tau,
            c.reward,
            c.baseline,
            c.sequence,
            join_actions(&c.actions),
            seed,
            hash
        )?;
    }
    Ok(())
}

/// Search ranges for [`hyperparameter_search`].
pub const HIDDEN_CHOICES: [&[usize]; 5] = [&[64], &[128], &[64, 64], &[128, 64], &[256, 128]];
pub const LEARNING_RATE_RANGE: (f64, f64) = (1e-4, 3e-3);
pub const BATCH_CHOICES: [usize; 3] = [32, 64, 128];
pub const MEMORY_CHOICES: [usize; 4] = [2_000, 5_000, 10_000, 20_000];
pub const SYNC_CHOICES: [usize; 3] = [10, 20, 50];
pub const EPSILON_DECAY_RANGE: (f64, f64) = (50.0, 400.0);

/// Trial `index` of the search: trial 0 is `base` itself, later trials
/// resample the searched fields of `base`.
pub fn sample_agent_config(base: &AgentConfig, seed: u64, index: usize) -> AgentConfig {
    if index == 0 {
        return base.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let (lo, hi) = LEARNING_RATE_RANGE;
    AgentConfig {
        hidden: HIDDEN_CHOICES[rng.random_range(0..HIDDEN_CHOICES.len())].to_vec(),
        learning_rate: (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp(),
        batch_size: BATCH_CHOICES[rng.random_range(0..BATCH_CHOICES.len())],
        memory_capacity: MEMORY_CHOICES[rng.random_range(0..MEMORY_CHOICES.len())],
        target_sync: SYNC_CHOICES[rng.random_range(0..SYNC_CHOICES.len())],
        epsilon_decay: rng.random_range(EPSILON_DECAY_RANGE.0..EPSILON_DECAY_RANGE.1),
        ..base.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub agent: AgentConfig,
    pub training: TrainingResult,
    /// Final greedy reward of every trial, in trial order.
    pub trial_rewards: Vec<f64>,
}

/// Seeded random search; the best final greedy reward wins, earliest on ties.
/// Trial `i` trains with seed `seed + i`.
pub fn hyperparameter_search(
    env: &EpisodeConfig,
    base: &AgentConfig,
    budget: usize,
    epochs: usize,
    seed: u64,
) -> Result<SearchResult> {
    if budget == 0 {
        return invalid("search budget must be at least 1");
    }
    let mut best: Option<(AgentConfig, TrainingResult)> = None;
    let mut trial_rewards = Vec::with_capacity(budget);
    for i in 0..budget {
        let agent = sample_agent_config(base, seed, i);
        let training = train(env, &agent, epochs, seed.wrapping_add(i as u64))?;
        trial_rewards.push(training.final_reward);
        if best.as_ref().map_or(true, |(_, b)| training.final_reward > b.final_reward) {
            best = Some((agent, training));
        }
    }
    let (agent, training) = best.expect("budget >= 1");
    Ok(SearchResult { agent, training, trial_rewards })
}
