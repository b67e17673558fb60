//! Finite element discretisation of linear parabolic SPDEs on a periodic
//! lattice, with verification of the element conditions, coupled multi-level
//! solves and Richardson extrapolation in space.

pub mod assembly;
pub mod checker;
pub mod element;
pub mod error;
pub mod experiment;
pub mod expr;
pub mod integrator;
pub mod lattice;
pub mod richardson;

pub use error::{Error, Result};
