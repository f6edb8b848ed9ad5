//! Simulation and search of dynamical-decoupling pulse sequences for a single
//! qubit coupled to a small random spin bath.

pub mod dd;
pub mod ga;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod propagator;
pub mod sequence;
pub mod sweep;
