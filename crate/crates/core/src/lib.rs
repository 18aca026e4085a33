//! Condition-based maintenance scheduling on simulated flow lines.
//!
//! The crate simulates a serial production line whose machines degrade
//! stochastically while they work, and provides the scheduling toolkit
//! around it:
//!
//! - [`sim`]: the discrete-event flow-line simulator (part flow, Markov
//!   degradation, breakdowns, a single shared maintenance resource);
//! - [`env`]: the episodic MDP view with decision points and the two reward
//!   designs (output quantity vs. cost-based);
//! - [`nn`] / [`ddqn`]: a from-scratch MLP with Adam and the double-DQN
//!   trainer with replay memory, target network and best-checkpoint guard;
//! - [`policy`]: FIFO and random baselines plus the threshold sweep;
//! - [`oracle`]: exact enumeration + value iteration for toy instances;
//! - [`eval`]: the seeded evaluation harness and CSV outputs.

pub mod config;
pub mod ddqn;
pub mod env;
pub mod error;
pub mod eval;
pub mod nn;
pub mod oracle;
pub mod policy;
pub mod sim;

pub use config::{
    DecayGranularity, LineConfig, MachineConfig, RewardConfig, RewardMode, RunConfig,
    TrainingConfig,
};
pub use error::{Error, Result};
