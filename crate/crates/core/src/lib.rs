pub mod analysis;
pub mod config;
pub mod data;
pub mod dump;
pub mod error;
pub mod experiment;
pub mod flow;
pub mod gradkit;
pub mod priors;
pub mod rng;
pub mod vae;

pub use error::{Error, Result};
