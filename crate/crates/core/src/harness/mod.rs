//! Experiment plumbing: configuration, training runs, sweeps, gradient
//! checks and plot data.

pub mod config;
pub mod gradcheck;
pub mod plotdata;
pub mod sweep;
pub mod train;

pub use config::{AgentKind, ExperimentConfig};
pub use gradcheck::{run_gradcheck, GradcheckReport, Suite};
pub use plotdata::emit_plotdata;
pub use sweep::{run_sweep, SweepGrid, SweepResult};
pub use train::{run_seed, run_training, EpisodeRecord, RunOutcome};
