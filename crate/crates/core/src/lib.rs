//! Model-reference inertia emulation for diesel-wind microgrids.
//!
//! Pipeline: DFIG equilibrium and linearization ([`equilibrium`]), selective
//! modal reduction to a first-order wind model ([`sma`]), delay-dependent
//! H-infinity model-reference synthesis ([`synthesis`]), closed-loop
//! simulation ([`sim`]) and evaluation metrics ([`metrics`]). The
//! [`pipeline`] module chains the stages with content-hashed artifacts.

pub mod artifact;
pub mod config;
pub mod defaults;
pub mod equilibrium;
pub mod metrics;
pub mod error;
pub mod models;
pub mod pipeline;
pub mod registry;
pub mod sim;
pub mod sma;
pub mod synthesis;
mod serde_mat;

pub use error::{CoreError, Result};
pub use serde_mat::Mat;
