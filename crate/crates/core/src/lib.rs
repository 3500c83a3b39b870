//! Analysis, optimization and simulation of job-level release delays as a
//! defense against schedule-based attacks on fixed-priority control tasks.

pub mod control;
pub mod cosim;
pub mod detector;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod milp;
pub mod model;
pub mod overlap;
pub mod plants;
pub mod rta;
pub mod scenarios;
pub mod sim;

pub use error::{Error, Result};
