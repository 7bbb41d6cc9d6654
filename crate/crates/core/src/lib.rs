//! Swarm foraging simulation and swarm-level metrics: Karp-Flatt style
//! scalability, interference-based self-organization, and reactivity and
//! adaptability to temporally varying conditions.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod controllers;
pub mod curves;
pub mod error;
pub mod geom;
mod io;
pub mod metrics;
pub mod runner;
pub mod sim;
pub mod variance;

pub use error::{Error, Result};
