//! Python bindings for `qmaze-core`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use qmaze_core::agent::{self, AgentConfig, PolicyCheckpoint};
use qmaze_core::env::{self, EpisodeConfig, QuantumMazeEnv, SequencePolicy};
use qmaze_core::lindblad::{self, Generator, MixParameter};
use qmaze_core::{oracle, Error, WallAction};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::Parse(_) | Error::Protocol(_) | Error::Capability(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn episode(maze: &Maze, p: f64, actions: usize, tau: f64) -> PyResult<EpisodeConfig> {
    EpisodeConfig::equally_spaced(maze.inner.clone(), p, actions, tau).map_err(py_err)
}

#[pyclass(module = "qmaze", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Maze {
    inner: qmaze_core::Maze,
}

#[pymethods]
impl Maze {
    /// Random perfect maze on a `width × height` grid.
    #[new]
    #[pyo3(signature = (width, height, seed = 0))]
    fn new(width: usize, height: usize, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: qmaze_core::Maze::generate(width, height, seed).map_err(py_err)? })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self { inner: text.parse().map_err(py_err)? })
    }

    fn to_text(&self) -> String {
        self.inner.to_string()
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn action_count(&self) -> usize {
        self.inner.action_count()
    }

    #[getter]
    fn entrance(&self) -> usize {
        self.inner.entrance()
    }

    #[getter]
    fn exit_node(&self) -> usize {
        self.inner.exit_node()
    }

    fn links(&self) -> Vec<(usize, usize)> {
        self.inner.links().collect()
    }

    fn degrees(&self) -> Vec<usize> {
        self.inner.degrees()
    }

    fn is_connected(&self) -> bool {
        self.inner.is_connected()
    }

    /// Copy of the maze with action `index` applied (0 = no-op).
    fn apply_action(&self, index: usize) -> PyResult<Self> {
        let action = WallAction::from_index(index, self.inner.candidate_edges().len()).map_err(py_err)?;
        Ok(Self { inner: self.inner.apply_action(action).map_err(py_err)? })
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Maze({}x{}, {} links)", self.inner.width(), self.inner.height(), self.inner.link_count())
    }
}

#[pyclass(module = "qmaze")]
struct Env {
    inner: QuantumMazeEnv,
}

#[pymethods]
impl Env {
    #[new]
    fn new(maze: &Maze, p: f64, actions: usize, tau: f64) -> PyResult<Self> {
        Ok(Self { inner: QuantumMazeEnv::new(episode(maze, p, actions, tau)?).map_err(py_err)? })
    }

    fn reset(&mut self) -> PyResult<Vec<f64>> {
        self.inner.reset().map_err(py_err)
    }

    /// Returns `(observation, reward, done)`.
    fn step(&mut self, action: usize) -> PyResult<(Vec<f64>, f64, bool)> {
        let t = self.inner.step_index_action(action).map_err(py_err)?;
        Ok((t.next_observation, t.reward, t.done))
    }

    #[getter]
    fn action_count(&self) -> usize {
        self.inner.config().action_count()
    }

    #[getter]
    fn observation_len(&self) -> usize {
        self.inner.config().observation_len()
    }

    #[getter]
    fn done(&self) -> bool {
        self.inner.is_done()
    }

    fn escape_probability(&self) -> f64 {
        self.inner.escape_probability()
    }

    fn populations(&self) -> Vec<f64> {
        self.inner.state().diagonal()
    }

    fn maze(&self) -> Maze {
        Maze { inner: self.inner.maze().clone() }
    }
}

/// Node populations (sink last) after evolving from the entrance for time `t`.
#[pyfunction]
#[pyo3(signature = (maze, p, t, sink_rate = 1.0))]
fn evolve(maze: &Maze, p: f64, t: f64, sink_rate: f64) -> PyResult<Vec<f64>> {
    let mix = MixParameter::new(p).map_err(py_err)?;
    let g = Generator::new(&maze.inner, mix, sink_rate).map_err(py_err)?;
    let rho = lindblad::evolve(&g, &lindblad::initial_state(&maze.inner), t).map_err(py_err)?;
    Ok(rho.diagonal())
}

#[pyfunction]
fn baseline_reward(maze: &Maze, p: f64, actions: usize, tau: f64) -> PyResult<f64> {
    env::baseline_reward(&episode(maze, p, actions, tau)?).map_err(py_err)
}

#[pyfunction]
fn sequence_reward(maze: &Maze, p: f64, tau: f64, sequence: Vec<usize>) -> PyResult<f64> {
    let cfg = episode(maze, p, sequence.len(), tau)?;
    env::cumulative_reward(&SequencePolicy(sequence), &cfg).map_err(py_err)
}

/// Returns `(best_reward, best_actions, sequences_evaluated)`.
#[pyfunction]
fn best_sequence(maze: &Maze, p: f64, actions: usize, tau: f64) -> PyResult<(f64, Vec<usize>, u64)> {
    let r = oracle::exhaustive_best_sequence(&episode(maze, p, actions, tau)?).map_err(py_err)?;
    Ok((r.best_reward, r.best_actions, r.evaluated))
}

/// Classical random-walk populations at time `t`.
#[pyfunction]
fn classical_populations(maze: &Maze, t: f64) -> PyResult<Vec<f64>> {
    Ok(oracle::classical_ctmc_solve(&maze.inner, t).map_err(py_err)?.last().to_vec())
}

#[pyclass(module = "qmaze", frozen, get_all)]
struct TrainingRun {
    final_reward: f64,
    baseline: f64,
    final_actions: Vec<usize>,
    episode_rewards: Vec<f64>,
    policy_epoch: usize,
    checkpoint_json: String,
}

/// Train a Q-learning agent. `agent` is an optional JSON agent configuration.
#[pyfunction]
#[pyo3(signature = (maze, p, actions, tau, epochs, seed = 0, agent = None))]
fn train(
    py: Python<'_>,
    maze: &Maze,
    p: f64,
    actions: usize,
    tau: f64,
    epochs: usize,
    seed: u64,
    agent: Option<&str>,
) -> PyResult<TrainingRun> {
    let cfg: AgentConfig = match agent {
        Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => AgentConfig::default(),
    };
    let env_cfg = episode(maze, p, actions, tau)?;
    let result = py.detach(|| agent::train(&env_cfg, &cfg, epochs, seed)).map_err(py_err)?;
    let checkpoint = PolicyCheckpoint::new(&result, &cfg, &env_cfg, epochs, seed);
    Ok(TrainingRun {
        final_reward: result.final_reward,
        baseline: result.baseline,
        final_actions: result.final_actions,
        episode_rewards: result.episode_rewards,
        policy_epoch: result.policy_epoch,
        checkpoint_json: serde_json::to_string(&checkpoint).map_err(|e| PyRuntimeError::new_err(e.to_string()))?,
    })
}

#[pymodule]
fn qmaze(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Maze>()?;
    m.add_class::<Env>()?;
    m.add_class::<TrainingRun>()?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(baseline_reward, m)?)?;
    m.add_function(wrap_pyfunction!(sequence_reward, m)?)?;
    m.add_function(wrap_pyfunction!(best_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(classical_populations, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
