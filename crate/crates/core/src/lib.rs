//! Decoherence and equilibration of finite quantum systems under
//! nondestructive (quantum nondemolition) measurements.
//!
//! The crate evolves the reduced density matrix of a system coupled to a
//! measuring device through interactions that commute with both Hamiltonians,
//! evaluates decoherence factors as characteristic functions of effect
//! densities, and cross-checks the closed forms against brute-force stepping.

pub mod cli;
pub mod decoherence;
pub mod error;
pub mod evolution;
pub mod linalg;
pub mod model;
pub mod observables;
pub mod output;
pub mod protocol;
pub mod random;
pub mod scenario;

pub use error::{Error, Result};
