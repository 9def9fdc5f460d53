//! Distributionally robust cascading-failure risk for linear consensus
//! networks with communication delay.
//!
//! The pipeline runs graph → Laplacian spectrum → steady covariance of the
//! centred observables → ambiguity radii for an uncertain parameter →
//! worst-case conditional risk per agent, with analytic bounds alongside.
//! [`oracles`] and [`sde_sim`] provide independent numerical references.

pub mod ambiguity;
pub mod bounds;
pub mod covariance;
pub mod error;
pub mod graph;
pub mod oracles;
pub mod risk;
pub mod sde_sim;

pub use error::{Error, Result, Warning};
