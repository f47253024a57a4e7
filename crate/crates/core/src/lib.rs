//! Constrained actor-critic learning with meta-gradient Lagrangian and
//! reward-shaping adaptation.

pub mod agents;
pub mod approx;
pub mod env;
pub mod error;
pub mod harness;
pub mod mesh;
pub mod metal;
pub mod metrics;
pub mod replay;

pub use agents::{ActorCritic, AgentConfig, LagrangeRule, Learner, Networks, ShapedLearner};
pub use approx::{Activation, MlpShape, OutputActivation, ParamVector};
pub use env::{CmdpSpec, ConstrainedEnv, EnvKind, SafetyConfig, StepResult};
pub use error::{AgentError, ApproxError, EnvError, HarnessError, MetricsError, ReplayError};
pub use mesh::{Formulation, MeshConfig, MeshLearner, MeshState, MetaShaper};
pub use metal::{MetaState, MetalLearner, OuterLossKind};
pub use metrics::{overshoot, penalized_return, RunSummary};
pub use replay::{Batch, EpisodePenalty, PenaltyBuffer, ReplayBuffer, Transition};
