//! Gradient-descent and evolutionary system identification over sampled
//! trajectory fragments.

mod cma;
mod gd;
mod report;
mod sampler;
mod two_stage;

pub use cma::{cma_identify, cma_minimize, CmaConfig, CmaOutcome, InitialSigma, REJECTED_LOSS};
pub use gd::{gd_identify, GdConfig, GdSettings, LearningRates, MIN_MASS};
pub use report::{IdentificationReport, IterationRecord, StageLabel, CONVERGENCE_RTOL, CONVERGENCE_WINDOW};
pub use sampler::{fragment_starts, sample_fragments, Fragment};
pub use two_stage::{one_stage_identify, payload_mask, two_stage_identify, TwoStageResult};
