//! Motion states and sequences, angular velocity/acceleration estimation,
//! forward kinematics and root canonicalization.

pub mod estimate;
pub mod io;
pub mod sequence;
pub mod skeleton;

pub use estimate::{
    acceleration_adjoint, estimate_acceleration, estimate_dynamics, estimate_velocity, forward_differences, AccelerationScheme,
    velocity_adjoint, VelocityScheme,
};
pub use io::MotionFile;
pub use sequence::{canonicalize, rebuild_states, rebuild_states_with_translation, MotionSequence, MotionState, DEFAULT_FPS};
pub use skeleton::{bone_lengths, fk_adjoint, forward_kinematics, forward_kinematics_full, FkResult, JointPositions, Skeleton};
