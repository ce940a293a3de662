//! Differentiable planar rigid-body simulation and parameter identification.

pub mod autodiff;
pub mod dynamics;
pub mod error;
pub mod identify;
pub mod model;
pub mod objective;
pub mod scalar;
pub mod traj;

pub use autodiff::{grad_rollout_loss, Dual, GradientResult};
pub use dynamics::{rollout, step, ControlInput, RolloutConfig, RolloutResult};
pub use error::{Error, Result};
pub use identify::{sample_fragments, Fragment};
pub use model::{EffectiveModel, ModelParams, ParamClass, ParamKey, ParamLayout, RobotModel, State};
pub use objective::{LossBreakdown, LossSpec};
pub use traj::{load_trajectory, save_trajectory, StanceSchedule, Trajectory};
