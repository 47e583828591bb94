pub mod cli;
pub mod config;
pub mod envs;
pub mod error;
pub mod eval;
pub mod model;
pub mod nets;
pub mod selftest;
pub mod training;

pub use error::{Error, Result};
