//! Projection onto the field zero level sets and the projected rollout.

pub mod integrate;
pub mod project;

pub use integrate::{integrate, Compose, IntegratorConfig, Rollout, RolloutTrace};
pub use project::{
    project_acceleration, project_pose, project_sequence, project_state, project_velocity, Consistency, ProjectionConfig,
    ProjectorConfig, StateTrace, Stop, Trace,
};
