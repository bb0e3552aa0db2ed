//! Choosing the billboard slots that reach the most people.
//!
//! Given a billboard table and a trajectory table, every billboard is split
//! into fixed-length time slots and each slot reaches the users that pass
//! within a radius during its window. The goal is the `k` slots with the
//! largest expected number of influenced users. This crate provides the
//! influence model, an incremental greedy selector, ground-set pruning with a
//! pruned submodularity graph, overlap-driven slot clustering, the usual
//! baselines, and an experiment harness.

pub mod corpus;
pub mod error;
pub mod exec;
pub mod influence;
pub mod partition;
pub mod pipelines;
pub mod psg;
pub mod selection;

pub use corpus::{Billboard, ExposureModel, Slot, TrajectoryRecord};
pub use error::{Error, Result};
pub use influence::ResidualState;
pub use partition::{Cluster, Partition};
pub use pipelines::{Algorithm, ExperimentRow, Instance, RunConfig};
pub use psg::{PsgParams, PsgReduction};
pub use selection::SelectionResult;
