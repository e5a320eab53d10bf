//! AdaBelief, the plateau scheduler with restarts, and gradient accumulation.

mod accumulate;
mod adabelief;
mod scheduler;

pub use accumulate::GradAccumulator;
pub use adabelief::{AdaBelief, AdaBeliefConfig};
pub use scheduler::{RestartMode, Scheduler, SchedulerConfig};
