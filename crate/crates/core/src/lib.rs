//! Two-task asynchronous coordinate descent for generalized linear models.
//!
//! One group of workers keeps refreshing coordinate-wise duality gaps in a
//! gap memory (task A) while a second group runs asynchronous coordinate
//! descent on the coordinates with the largest stored gaps (task B). The
//! coordinator alternates between selecting a batch, running both tasks
//! concurrently for one epoch, and checking the global duality gap.

pub mod baselines;
pub mod coordinator;
pub mod data;
pub mod error;
pub mod gap_task;
pub mod glm;
pub mod scalar;
pub mod seed;
pub mod solver;
pub mod tuner;
pub mod trace;

pub use error::{Error, Result};
pub use scalar::Scalar;
