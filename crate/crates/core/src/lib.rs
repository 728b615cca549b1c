//! Riemannian motion fields for articulated bodies.
//!
//! Poses live on SO(3)^K, velocities in so(3)^K and accelerations in
//! R^{3K}. Three learned unsigned distance fields score the plausibility of
//! each order; their zero level sets define the set of plausible motions.
//! The crate provides the geometry, synthetic training corpora, the fields
//! and their training, projection onto the zero level sets, a projected
//! geometric Euler integrator and multi-stage test-time fitting.

pub mod cli;
pub mod datagen;
pub mod dynamics;
pub mod error;
pub mod fields;
pub mod kinematics;
pub mod optim;
pub mod product;
pub mod so3;

pub use error::{Error, Result};
