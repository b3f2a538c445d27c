//! Online goal-conditioned navigation with a fast neural policy and a slow
//! transition-memory planner.
//!
//! The crate is organised bottom-up:
//!
//! * [`gridworld`] – the n×n environment with static and wall-switching layouts.
//! * [`oracle`] – BFS shortest paths and greedy axis-biased labels.
//! * [`memory`] – transition banks with conflict eviction, visit counts and
//!   branched lookahead.
//! * [`neural`] – a small MLP with softmax heads trained by Adam.
//! * [`agent`] – the combined explore/plan/act/replay loop.
//! * [`baselines`] – tabular Q-learning and the ablated agents.
//! * [`prediction`] – next-action vs next-state learning-speed benchmark.
//! * [`harness`] – experiment configs, metrics, sweeps and CSV output.

pub mod agent;
pub mod baselines;
pub mod error;
pub mod gridworld;
pub mod harness;
pub mod memory;
pub mod neural;
pub mod oracle;
pub mod prediction;
pub mod seed;

pub use error::{Error, Result};
pub use gridworld::{EnvAction, EnvMode, GridPos, GridWorld, GridWorldConfig, Obstacles};
