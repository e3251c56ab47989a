//! Hybrid surrogate/finite-difference simulation of a gravity-draining tank
//! cascade.
//!
//! A single physics-trained network predicts the velocity of every flow path
//! over one time step from `(head, initial velocity, step)`; an explicit
//! finite-difference mass balance then advances the tank levels, so mass is
//! conserved exactly in the discrete sense.

pub mod autodiff;
pub mod config;
pub mod coupler;
pub mod error;
pub mod fdm;
pub mod napinn;
pub mod tank;
pub mod verify;

pub use error::{Error, Result};
