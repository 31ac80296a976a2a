pub mod analytic;
pub mod cli;
pub mod error;
pub mod mdp;
pub mod model;
pub mod policies;
pub mod sim;
pub mod solvers;

pub use error::{Error, Result};
