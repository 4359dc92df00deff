//! Reinforcement learning of maze topology edits that speed up the escape of
//! a stochastic quantum walker.
//!
//! The crate is layered bottom-up:
//!
//! - [`maze`]: grid mazes, perfect-maze generation and wall actions;
//! - [`lindblad`]: the walker's master equation and its integrators;
//! - [`env`]: an episodic environment scheduling actions over the evolution;
//! - [`agent`]: a deep Q-learning agent with replay memory and target network;
//! - [`oracle`]: brute-force and classical-limit references;
//! - [`harness`]: the experiment drivers behind the `qmaze` binary.

pub mod agent;
pub mod env;
pub mod error;
pub mod harness;
pub mod lindblad;
pub mod maze;
pub mod oracle;

pub use error::{Error, Result};
pub use lindblad::{DensityMatrix, Generator, MixParameter};
pub use maze::{Maze, WallAction};
