//! Test-time optimization: data terms, regularizers, the two-stage fit and
//! the generation and in-betweening tasks built on it.

pub mod energy;
pub mod fit;
pub mod losses;
pub mod metrics;
pub mod observation;
pub mod tasks;

pub use energy::{energy_stage1, energy_stage2, EnergyTerms, EnergyWeights, Gradient, Problem, Stage, Variables};
pub use fit::{fit_sequence, initial_sequence, ContactConfig, FitConfig, FitReport, FitResult, FitStop, StageReport, StepScales};
pub use losses::{contact_heuristic, loss_contact, loss_data_2d, loss_data_3d, loss_data_pc, loss_reg, Contacts};
pub use metrics::{acceleration_error, geodesic_error_per_joint, mpjpe_mm, mpjpe_mm_masked, MetricsReport};
pub use observation::{Joints2dFrame, Joints3dFrame, Observation, ObservationKind, PinholeCamera};
pub use tasks::{generate_motion, geodesic_inbetween, inbetween, GenerateConfig, Generated};
