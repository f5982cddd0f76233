//! Second-order cone relaxations of optimal power flow on radial distribution
//! feeders: branch-flow model, augmented relaxations, load-flow verification
//! and exactness auditing.

pub mod exactness;
pub mod formulation;
pub mod harness;
pub mod loadflow;
pub mod network;

pub use distrelax_conic as conic;
