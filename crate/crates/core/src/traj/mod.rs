//! Synthetic trajectory generation, stance-foot correction, and file I/O.

mod excitation;
mod foot;
mod generate;
mod trajectory;

pub use excitation::{Excitation, ExcitationProfile};
pub use foot::{foot_height, foot_height_qp, process_trajectory, FootCorrection, FOOT_TOLERANCE, MAX_QP_ITERATIONS};
pub use generate::{
    finite_difference_velocities, generate_real, ground_truth, BaseMismatch, NoiseSpec, PerturbationSetting, LEFT_HAND,
    RIGHT_HAND, TORSO,
};
pub use trajectory::{load_trajectory, save_trajectory, sidecar_path, StanceSchedule, Trajectory};
