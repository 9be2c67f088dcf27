//! Closed-loop quantum optimal control with a chopped random-basis pulse
//! ansatz, exact state-vector propagation, and a reproducible experiment
//! harness.

pub mod costs;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod models;
pub mod observables;
pub mod optimizer;
pub mod pulse;

pub use error::{CrabError, Result};
