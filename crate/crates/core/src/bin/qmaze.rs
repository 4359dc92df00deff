use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use qmaze_core::agent::{train, AgentConfig, PolicyCheckpoint};
use qmaze_core::env::EpisodeConfig;
use qmaze_core::harness::{self, SweepConfig, TimingNoiseConfig, TransientConfig, TransientScan};
use qmaze_core::oracle::exhaustive_best_sequence;
use qmaze_core::Maze;

#[derive(Parser, Debug)]
#[command(name = "qmaze", version, about = "Reinforcement-learned control of quantum walks through mazes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Train one agent per (p, tau) cell and report it next to the no-action baseline.
    Sweep(SweepArgs),
    /// No-action escape probability on the (p, tau) grid.
    Baseline(Common),
    /// Mean improvement over several random mazes.
    MeanImprove(MeanArgs),
    /// Robustness of a trained policy to jitter in the action times.
    NoiseEval(NoiseArgs),
    /// Free evolution before or after the action window.
    Transient(TransientArgs),
    /// Evaluate one trained policy across the (p, tau) grid.
    CrossEval(CrossArgs),
    /// Random search over agent hyperparameters on one cell.
    Hypersearch(SearchArgs),
    /// Compare training against exhaustive search on a small maze.
    OracleCheck(Common),
}

#[derive(Args, Debug, Clone, Serialize)]
struct Common {
    /// Maze in text format; overrides the generated maze.
    #[arg(long, conflicts_with = "maze_seed")]
    maze_file: Option<PathBuf>,
    /// Seed of the generated perfect maze.
    #[arg(long)]
    maze_seed: Option<u64>,
    #[arg(long, default_value_t = 6)]
    width: usize,
    #[arg(long, default_value_t = 6)]
    height: usize,
    /// Comma-separated dephasing values.
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    /// Comma-separated action spacings.
    #[arg(long, value_delimiter = ',')]
    tau: Option<Vec<f64>>,
    /// Actions per episode.
    #[arg(long, default_value_t = 8)]
    actions: usize,
    #[arg(long, default_value_t = 1000)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON file with agent hyperparameters (missing fields take defaults).
    #[arg(long)]
    agent_config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    #[serde(skip)]
    out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    #[serde(skip)]
    workers: usize,
    /// Exit with an error if any cell fails.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
    /// Random-search trials per cell (0 = fixed hyperparameters).
    #[arg(long, default_value_t = 0)]
    search_budget: usize,
}

#[derive(Args, Debug, Serialize)]
struct MeanArgs {
    #[command(flatten)]
    common: Common,
    /// Number of generated mazes, seeded from --maze-seed upwards.
    #[arg(long, default_value_t = 30)]
    mazes: usize,
    /// Explicit maze files; replaces generated mazes.
    #[arg(long = "maze-files", value_delimiter = ',')]
    maze_files: Vec<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct NoiseArgs {
    #[command(flatten)]
    common: Common,
    /// Trained policy; without it one is trained on the first p and tau.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6,0.8,1")]
    eta: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    realizations: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ScanArg {
    Lead,
    Tail,
}

#[derive(Args, Debug, Serialize)]
struct TransientArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 224.0)]
    total: f64,
    #[arg(long, value_enum, default_value = "lead")]
    scan: ScanArg,
    /// Durations of the scanned free-evolution segment.
    #[arg(long, value_delimiter = ',', default_value = "0,28,56,84,112,140,168,196,224")]
    values: Vec<f64>,
}

#[derive(Args, Debug, Serialize)]
struct CrossArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Training cell used when no checkpoint is given.
    #[arg(long, default_value_t = 0.0)]
    train_p: f64,
    #[arg(long, default_value_t = 14.0)]
    train_tau: f64,
}

#[derive(Args, Debug, Serialize)]
struct SearchArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 8)]
    budget: usize,
}

#[derive(Serialize)]
struct OutputRecord {
    file: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    program: &'static str,
    version: &'static str,
    command: &'a Command,
    maze: Vec<String>,
    agent: &'a AgentConfig,
    outputs: Vec<OutputRecord>,
    failures: usize,
}

struct Run {
    out: PathBuf,
    written: Vec<PathBuf>,
}

impl Run {
    fn new(out: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Run { out: out.to_path_buf(), written: Vec::new() })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<fs::File>) -> qmaze_core::Result<()>) -> anyhow::Result<()> {
        let path = self.out.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        f(&mut w)?;
        w.flush()?;
        self.written.push(PathBuf::from(name));
        Ok(())
    }

    fn checkpoint(&mut self, name: &str, ck: &PolicyCheckpoint) -> anyhow::Result<()> {
        let path = self.out.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        ck.save(&path)?;
        self.written.push(PathBuf::from(name));
        Ok(())
    }

    fn finish(self, command: &Command, mazes: &[Maze], agent: &AgentConfig, failures: usize) -> anyhow::Result<()> {
        let mut outputs = Vec::new();
        for name in &self.written {
            let bytes = fs::read(self.out.join(name))?;
            outputs.push(OutputRecord { file: name.display().to_string(), sha256: hex::encode(Sha256::digest(&bytes)) });
        }
        let manifest = Manifest {
            program: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            maze: mazes.iter().map(|m| m.to_string()).collect(),
            agent,
            outputs,
            failures,
        };
        fs::write(self.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }
}

impl Common {
    fn maze(&self) -> anyhow::Result<Maze> {
        match &self.maze_file {
            Some(path) => Ok(Maze::load(path).with_context(|| format!("loading {}", path.display()))?),
            None => Ok(Maze::generate(self.width, self.height, self.maze_seed.unwrap_or(0))?),
        }
    }

    fn agent(&self) -> anyhow::Result<AgentConfig> {
        let agent = match &self.agent_config {
            Some(path) => serde_json::from_str(&fs::read_to_string(path)?)
                .with_context(|| format!("parsing {}", path.display()))?,
            None => AgentConfig::default(),
        };
        agent.validate()?;
        Ok(agent)
    }

    fn p_grid(&self) -> Vec<f64> {
        self.p.clone().unwrap_or_else(harness::default_p_grid)
    }

    fn tau_grid(&self) -> Vec<f64> {
        self.tau.clone().unwrap_or_else(|| harness::DEFAULT_TAU_GRID.to_vec())
    }

    fn first_p(&self, default: f64) -> f64 {
        self.p.as_ref().and_then(|v| v.first().copied()).unwrap_or(default)
    }

    fn first_tau(&self, default: f64) -> f64 {
        self.tau.as_ref().and_then(|v| v.first().copied()).unwrap_or(default)
    }

    fn sweep(&self, agent: AgentConfig) -> SweepConfig {
        SweepConfig {
            p_grid: self.p_grid(),
            tau_grid: self.tau_grid(),
            actions: self.actions,
            epochs: self.epochs,
            agent,
            seed: self.seed,
            workers: self.workers,
            ..SweepConfig::default()
        }
    }
}

fn cell_dir(p: f64, tau: f64) -> String {
    format!("cells/p{p}_tau{tau}")
}

fn train_or_load(
    run: &mut Run,
    common: &Common,
    checkpoint: &Option<PathBuf>,
    maze: &Maze,
    agent: &AgentConfig,
    p: f64,
    tau: f64,
) -> anyhow::Result<PolicyCheckpoint> {
    if let Some(path) = checkpoint {
        return Ok(PolicyCheckpoint::load(path).with_context(|| format!("loading {}", path.display()))?);
    }
    let env = EpisodeConfig::equally_spaced(maze.clone(), p, common.actions, tau)?;
    let result = train(&env, agent, common.epochs, common.seed)?;
    run.write("training.csv", |w| result.write_csv(w))?;
    let ck = PolicyCheckpoint::new(&result, agent, &env, common.epochs, common.seed);
    run.checkpoint("checkpoint.json", &ck)?;
    Ok(ck)
}

fn execute(command: &Command) -> anyhow::Result<usize> {
    match command {
        Command::Sweep(args) => {
            let c = &args.common;
            let (maze, agent) = (c.maze()?, c.agent()?);
            let cfg = SweepConfig { repetitions: args.repetitions, search_budget: args.search_budget, ..c.sweep(agent.clone()) };
            let mut run = Run::new(&c.out)?;
            let cells = harness::trained_surface(&cfg, &maze)?;
            run.write("surface.csv", |w| harness::write_surface_csv(w, &cells))?;
            for cell in &cells {
                if let Ok(trained) = &cell.outcome {
                    let dir = cell_dir(cell.p, cell.tau);
                    run.write(&format!("{dir}/training.csv"), |w| trained.training.write_csv(w))?;
                    run.checkpoint(&format!("{dir}/checkpoint.json"), &trained.checkpoint)?;
                }
            }
            let failures = cells.iter().filter(|c| c.outcome.is_err()).count();
            run.finish(command, &[maze], &agent, failures)?;
            Ok(failures)
        }
        Command::Baseline(c) => {
            let (maze, agent) = (c.maze()?, c.agent()?);
            let mut run = Run::new(&c.out)?;
            let cells = harness::baseline_surface(&c.sweep(agent.clone()), &maze)?;
            run.write("baseline.csv", |w| harness::write_baseline_csv(w, &cells))?;
            run.finish(command, &[maze], &agent, 0)?;
            Ok(0)
        }
        Command::MeanImprove(args) => {
            let c = &args.common;
            let agent = c.agent()?;
            let mazes: Vec<Maze> = if args.maze_files.is_empty() {
                let first = c.maze_seed.unwrap_or(0);
                (0..args.mazes as u64).map(|k| Maze::generate(c.width, c.height, first + k)).collect::<Result<_, _>>()?
            } else {
                args.maze_files.iter().map(Maze::load).collect::<Result<_, _>>()?
            };
            let cfg = c.sweep(agent.clone());
            let hash = harness::config_hash(&(&cfg, mazes.iter().map(|m| m.to_string()).collect::<Vec<_>>()))?;
            let mut run = Run::new(&c.out)?;
            let cells = harness::mean_improvement_surface(&cfg, &mazes)?;
            run.write("improvement.csv", |w| harness::write_improvement_csv(w, &cells, cfg.seed, &hash))?;
            run.write("improvement_per_maze.csv", |w| {
                writeln!(w, "p,tau,maze,improvement")?;
                for cell in &cells {
                    for (m, v) in cell.per_maze.iter().enumerate() {
                        writeln!(w, "{},{},{},{}", cell.p, cell.tau, m, v)?;
                    }
                }
                Ok(())
            })?;
            let failures = cells.iter().map(|c| c.failures).sum();
            run.finish(command, &mazes, &agent, failures)?;
            Ok(failures)
        }
        Command::NoiseEval(args) => {
            let c = &args.common;
            let (maze, agent) = (c.maze()?, c.agent()?);
            let mut run = Run::new(&c.out)?;
            let ck = train_or_load(&mut run, c, &args.checkpoint, &maze, &agent, c.first_p(0.4), c.first_tau(14.0))?;
            let cfg = TimingNoiseConfig {
                eta_grid: args.eta.clone(),
                realizations: args.realizations,
                seed: c.seed,
                workers: c.workers,
            };
            let hash = harness::config_hash(&(&cfg, &ck.env, &ck.network))?;
            let rows = harness::timing_noise_eval(&cfg, &ck)?;
            run.write("noise.csv", |w| harness::write_noise_csv(w, &rows, cfg.seed, &hash))?;
            run.finish(command, &[ck.env.maze.parse()?], &ck.agent, 0)?;
            Ok(0)
        }
        Command::Transient(args) => {
            let c = &args.common;
            let (maze, agent) = (c.maze()?, c.agent()?);
            let cfg = TransientConfig {
                total_time: args.total,
                actions: c.actions,
                scan: match args.scan {
                    ScanArg::Lead => TransientScan::Lead,
                    ScanArg::Tail => TransientScan::Tail,
                },
                values: args.values.clone(),
                p_grid: c.p.clone().unwrap_or_else(|| vec![0.0, 1.0]),
                epochs: c.epochs,
                agent: agent.clone(),
                seed: c.seed,
                workers: c.workers,
            };
            let mut run = Run::new(&c.out)?;
            let rows = harness::transient_eval(&cfg, &maze)?;
            run.write("transient.csv", |w| harness::write_transient_csv(w, &rows))?;
            let failures = rows.iter().filter(|r| r.error.is_some()).count();
            run.finish(command, &[maze], &agent, failures)?;
            Ok(failures)
        }
        Command::CrossEval(args) => {
            let c = &args.common;
            let (maze, agent) = (c.maze()?, c.agent()?);
            let mut run = Run::new(&c.out)?;
            let ck = train_or_load(&mut run, c, &args.checkpoint, &maze, &agent, args.train_p, args.train_tau)?;
            let eval_maze = if args.checkpoint.is_some() && (c.maze_file.is_some() || c.maze_seed.is_some()) {
                Some(&maze)
            } else {
                None
            };
            let (p_grid, tau_grid) = (c.p_grid(), c.tau_grid());
            let eval = harness::cross_policy_eval(&ck, &p_grid, &tau_grid, eval_maze, c.workers)?;
            let hash = harness::config_hash(&(&ck.env, &ck.network, &p_grid, &tau_grid))?;
            run.write("cross.csv", |w| harness::write_cross_csv(w, &eval, c.seed, &hash))?;
            run.write("sequences.csv", |w| {
                writeln!(w, "sequence,actions,cells")?;
                for (i, s) in eval.sequences.iter().enumerate() {
                    let count = eval.cells.iter().filter(|cell| cell.sequence == i).count();
                    let actions: Vec<String> = s.iter().map(|a| a.to_string()).collect();
                    writeln!(w, "{},{},{}", i, actions.join(" "), count)?;
                }
                Ok(())
            })?;
            run.finish(command, &[eval_maze.cloned().unwrap_or(ck.env.maze.parse()?)], &ck.agent, 0)?;
            Ok(0)
        }
        Command::Hypersearch(args) => {
            let c = &args.common;
            let (maze, agent) = (c.maze()?, c.agent()?);
            let env = EpisodeConfig::equally_spaced(maze.clone(), c.first_p(0.4), c.actions, c.first_tau(14.0))?;
            let mut run = Run::new(&c.out)?;
            let found = harness::hyperparameter_search(&env, &agent, args.budget, c.epochs, c.seed)?;
            run.write("search.csv", |w| {
                writeln!(w, "trial,reward,config_hash")?;
                for (i, r) in found.trial_rewards.iter().enumerate() {
                    let trial = harness::sample_agent_config(&agent, c.seed, i);
                    writeln!(w, "{},{},{}", i, r, harness::config_hash(&trial)?)?;
                }
                Ok(())
            })?;
            run.write("best_agent.json", |w| {
                serde_json::to_writer_pretty(&mut *w, &found.agent)?;
                writeln!(w)?;
                Ok(())
            })?;
            run.write("training.csv", |w| found.training.write_csv(w))?;
            run.finish(command, &[maze], &found.agent, 0)?;
            Ok(0)
        }
        Command::OracleCheck(c) => {
            let (maze, agent) = (c.maze()?, c.agent()?);
            let (p_grid, tau_grid) = (c.p.clone().unwrap_or_else(|| vec![0.5]), c.tau.clone().unwrap_or_else(|| vec![14.0]));
            let cfg = SweepConfig { p_grid, tau_grid, ..c.sweep(agent.clone()) };
            let mut run = Run::new(&c.out)?;
            let cells = harness::trained_surface(&cfg, &maze)?;
            let mut rows = Vec::new();
            for cell in &cells {
                let oracle = exhaustive_best_sequence(&cfg.episode(&maze, cell.p, cell.tau)?)?;
                rows.push((cell, oracle));
            }
            run.write("oracle.csv", |w| {
                writeln!(w, "p,tau,oracle_reward,oracle_actions,trained_reward,ratio,baseline,seed,config_hash")?;
                for (cell, oracle) in &rows {
                    let trained = cell.reward();
                    let actions: Vec<String> = oracle.best_actions.iter().map(|a| a.to_string()).collect();
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{},{},{}",
                        cell.p,
                        cell.tau,
                        oracle.best_reward,
                        actions.join(" "),
                        trained.map(|r| r.to_string()).unwrap_or_default(),
                        trained.map(|r| (r / oracle.best_reward).to_string()).unwrap_or_default(),
                        cell.baseline,
                        cell.seed,
                        cell.config_hash
                    )?;
                }
                Ok(())
            })?;
            let failures = cells.iter().filter(|c| c.outcome.is_err()).count();
            run.finish(command, &[maze], &agent, failures)?;
            Ok(failures)
        }
    }
}

fn strict(command: &Command) -> bool {
    match command {
        Command::Sweep(a) => a.common.strict,
        Command::Baseline(c) | Command::OracleCheck(c) => c.strict,
        Command::MeanImprove(a) => a.common.strict,
        Command::NoiseEval(a) => a.common.strict,
        Command::Transient(a) => a.common.strict,
        Command::CrossEval(a) => a.common.strict,
        Command::Hypersearch(a) => a.common.strict,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failures) if strict(&cli.command) => {
            eprintln!("error: {failures} cell(s) failed");
            ExitCode::FAILURE
        }
        Ok(failures) => {
            eprintln!("warning: {failures} cell(s) failed; see the status column");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
