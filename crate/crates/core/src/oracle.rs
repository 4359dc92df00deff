//! Ground-truth references for small instances.

use rayon::prelude::*;

use crate::env::{EpisodeConfig, QuantumMazeEnv};
use crate::error::{Error, Result};
use crate::lindblad::DEFAULT_MAX_STEP;
use crate::maze::{Maze, WallAction};

/// Largest number of action sequences [`exhaustive_best_sequence`] will enumerate.
pub const SEQUENCE_GUARD: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub best_actions: Vec<usize>,
    pub best_reward: f64,
    pub evaluated: u64,
}

fn better(candidate: &(f64, Vec<usize>), incumbent: &(f64, Vec<usize>)) -> bool {
    candidate.0 > incumbent.0 || (candidate.0 == incumbent.0 && candidate.1 < incumbent.1)
}

fn search(env: &QuantumMazeEnv, prefix: &mut Vec<usize>, best: &mut (f64, Vec<usize>), count: &mut u64) -> Result<()> {
    if env.is_done() {
        *count += 1;
        let candidate = (env.escape_probability(), prefix.clone());
        if better(&candidate, best) {
            *best = candidate;
        }
        return Ok(());
    }
    let edges = env.maze().candidate_edges().len();
    for a in 0..=edges {
        let mut child = env.clone();
        child.step(WallAction::from_index(a, edges)?)?;
        prefix.push(a);
        search(&child, prefix, best, count)?;
        prefix.pop();
    }
    Ok(())
}

/// Enumerate every action sequence of the episode and return the best one
/// (lexicographically smallest among equal rewards).
pub fn exhaustive_best_sequence(config: &EpisodeConfig) -> Result<OracleResult> {
    let actions = config.action_count() as u64;
    let n = config.steps() as u32;
    let total = actions.checked_pow(n).filter(|&t| t <= SEQUENCE_GUARD).ok_or_else(|| {
        Error::Capability(format!("{actions}^{n} sequences exceed the guard of {SEQUENCE_GUARD}"))
    })?;

    let root = QuantumMazeEnv::with_memo_bytes(config.clone(), 0)?;
    if n == 0 {
        return Ok(OracleResult { best_actions: vec![], best_reward: root.escape_probability(), evaluated: 1 });
    }
    let edges = config.maze.candidate_edges().len();
    let branches: Vec<Result<((f64, Vec<usize>), u64)>> = (0..=edges)
        .into_par_iter()
        .map(|a| {
            let mut env = root.clone();
            env.step(WallAction::from_index(a, edges)?)?;
            let mut best = (f64::NEG_INFINITY, Vec::new());
            let mut count = 0;
            search(&env, &mut vec![a], &mut best, &mut count)?;
            Ok((best, count))
        })
        .collect();

    let mut best = (f64::NEG_INFINITY, Vec::new());
    let mut evaluated = 0;
    for branch in branches {
        let (candidate, count) = branch?;
        evaluated += count;
        if better(&candidate, &best) {
            best = candidate;
        }
    }
    debug_assert_eq!(evaluated, total);
    Ok(OracleResult { best_actions: best.1, best_reward: best.0, evaluated })
}

/// Populations of the classical random walk over time.
#[derive(Debug, Clone, PartialEq)]
pub struct CtmcTrajectory {
    pub times: Vec<f64>,
    /// One row per time, `n + 1` entries (maze nodes, then the sink).
    pub populations: Vec<Vec<f64>>,
}

impl CtmcTrajectory {
    pub fn last(&self) -> &[f64] {
        self.populations.last().expect("at least the initial state")
    }
}

/// Integrate the classical master equation of the maze: hop rate
/// `(A_ij / d_j)²` from `j` to `i` and drain `2 κ` from the exit into the sink.
pub fn classical_ctmc_solve_with(maze: &Maze, t_final: f64, sink_rate: f64, max_step: f64) -> Result<CtmcTrajectory> {
    if !(t_final >= 0.0 && t_final.is_finite()) || !(max_step > 0.0) {
        return Err(Error::InvalidArgument(format!("bad horizon {t_final} or step {max_step}")));
    }
    let n = maze.node_count();
    let degrees = maze.degrees();
    // (target, source, rate)
    let rates: Vec<(usize, usize, f64)> = maze
        .links()
        .flat_map(|(i, j)| [(i, j), (j, i)])
        .map(|(to, from)| (to, from, 1.0 / (degrees[from] * degrees[from]) as f64))
        .collect();
    let exit = maze.exit_node();
    let drain = 2.0 * sink_rate;
    let deriv = |pop: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(to, from, r) in &rates {
            let flow = r * pop[from];
            out[to] += flow;
            out[from] -= flow;
        }
        out[exit] -= drain * pop[exit];
        out[n] += drain * pop[exit];
    };

    let steps = (t_final / max_step).ceil() as usize;
    let h = if steps == 0 { 0.0 } else { t_final / steps as f64 };
    let mut pop = vec![0.0; n + 1];
    pop[maze.entrance()] = 1.0;
    let mut times = vec![0.0];
    let mut populations = vec![pop.clone()];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n + 1], vec![0.0; n + 1], vec![0.0; n + 1], vec![0.0; n + 1]);
    let mut tmp = vec![0.0; n + 1];
    for step in 1..=steps {
        deriv(&pop, &mut k1);
        for i in 0..=n {
            tmp[i] = pop[i] + 0.5 * h * k1[i];
        }
        deriv(&tmp, &mut k2);
        for i in 0..=n {
            tmp[i] = pop[i] + 0.5 * h * k2[i];
        }
        deriv(&tmp, &mut k3);
        for i in 0..=n {
            tmp[i] = pop[i] + h * k3[i];
        }
        deriv(&tmp, &mut k4);
        for i in 0..=n {
            pop[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        times.push(step as f64 * h);
        populations.push(pop.clone());
    }
    Ok(CtmcTrajectory { times, populations })
}

pub fn classical_ctmc_solve(maze: &Maze, t_final: f64) -> Result<CtmcTrajectory> {
    classical_ctmc_solve_with(maze, t_final, 1.0, DEFAULT_MAX_STEP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{baseline_reward, Schedule};
    use crate::lindblad::MixParameter;

    #[test]
    fn no_actions_gives_free_evolution() {
        let maze = Maze::generate(2, 2, 3).unwrap();
        let cfg = EpisodeConfig::new(maze, MixParameter::new(0.5).unwrap(), Schedule::new(vec![], 6.0).unwrap());
        let res = exhaustive_best_sequence(&cfg).unwrap();
        assert_eq!(res.evaluated, 1);
        assert!(res.best_actions.is_empty());
        assert_eq!(res.best_reward, baseline_reward(&cfg).unwrap());
    }

    #[test]
    fn cutting_the_only_link_loses() {
        let maze = Maze::generate(2, 1, 0).unwrap();
        let cfg = EpisodeConfig::equally_spaced(maze, 0.5, 1, 5.0).unwrap();
        let res = exhaustive_best_sequence(&cfg).unwrap();
        assert_eq!(res.evaluated, 2);
        assert_eq!(res.best_actions, vec![0]);
        assert!(res.best_reward > 0.0);
    }

    #[test]
    fn guard_rejects_large_searches() {
        let maze = Maze::generate(6, 6, 1).unwrap();
        let cfg = EpisodeConfig::equally_spaced(maze, 0.5, 8, 1.0).unwrap();
        assert!(matches!(exhaustive_best_sequence(&cfg), Err(Error::Capability(_))));
    }

    #[test]
    fn oracle_dominates_null_sequence() {
        let maze = Maze::generate(2, 2, 8).unwrap();
        let cfg = EpisodeConfig::equally_spaced(maze, 0.2, 2, 2.0).unwrap();
        let res = exhaustive_best_sequence(&cfg).unwrap();
        assert_eq!(res.evaluated, 25);
        assert!(res.best_reward >= baseline_reward(&cfg).unwrap());
    }

    #[test]
    fn walled_maze_keeps_walker_home() {
        let maze = Maze::walled(3, 2).unwrap();
        let traj = classical_ctmc_solve(&maze, 10.0).unwrap();
        assert!(traj.populations.iter().all(|row| row[0] == 1.0));
    }

    #[test]
    fn single_cell_drains_exponentially() {
        let maze = Maze::generate(1, 1, 0).unwrap();
        for t in [0.5, 3.0, 10.0] {
            let traj = classical_ctmc_solve(&maze, t).unwrap();
            assert!((traj.last()[1] - (1.0 - (-2.0 * t).exp())).abs() < 1e-9);
        }
    }

    #[test]
    fn ctmc_conserves_probability() {
        let maze = Maze::generate(4, 3, 2).unwrap();
        let traj = classical_ctmc_solve(&maze, 30.0).unwrap();
        for row in &traj.populations {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
