//! Numerical Calabi-Yau reconstruction of Vaisman metrics.
//!
//! Exterior algebra, two explicit Vaisman model manifolds (diagonal Hopf and
//! a Heisenberg-type nilmanifold), spectral calculus on their leaf spaces, a
//! damped Newton solver for the transversal complex Monge-Ampère equation and
//! the end-to-end reconstruction pipeline.

pub mod error;
pub mod exterior;
pub mod leafspace;
pub mod models;
pub mod pipeline;
pub mod solver;

pub use error::{Error, Result};
