//! Tabular finite-horizon MDPs with exact oracles, the stationary-pair
//! sample collection schedule, truncated estimators, pessimistic robust
//! planning and numeric checkers for the supporting inequalities.

pub mod collector;
pub mod estimate;
pub mod error;
pub mod format;
pub mod generators;
pub mod mdp;
pub mod oracle;
pub mod planner;
pub mod verify;
pub mod sim;

pub use error::{Error, Result};
pub use mdp::{FiniteMdp, MarkovChain, Policy, RewardDist, Sample, Trajectory, TrajectoryDataset};
