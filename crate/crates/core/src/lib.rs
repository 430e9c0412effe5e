//! Continuous dynamical decoupling of a qubit by geodesic optimal control.
//!
//! The bath is purified into a single ancilla qubit, the gate problem becomes
//! a geodesic boundary-value problem on the reachable SU(2)×SU(2) subgroup,
//! and the resulting control fields are verified against second-order
//! master equations. A small MLP learns the target → costate map to seed the
//! solver.

pub mod algebra;
pub mod ampdamp;
pub mod atlas;
pub mod cli;
pub mod config;
pub mod error;
pub mod field;
pub mod geodesic;
pub mod noise;
pub mod optim;
pub mod simulator;
pub mod special;
pub mod su2;
pub mod surrogate;
pub mod synthesis;

pub use error::{Error, Result};
