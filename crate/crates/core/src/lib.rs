pub mod config;
pub mod error;
pub mod gateway;
pub mod harness;
pub mod kinematics;
pub mod mission;
pub mod sim;
pub mod solver;
pub mod tasks;

pub use error::{Error, Result};
