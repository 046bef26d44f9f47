//! Peeling explorations of random planar quadrangulations with a boundary.

pub mod error;
pub mod map;
pub mod markov;
pub mod metric;
pub mod peeling;
pub mod census;
pub mod cli;
pub mod decorated;
pub mod boltzmann;
pub mod par;
pub mod quad;
pub mod stats;

pub use error::{Error, Result};
