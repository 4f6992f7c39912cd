//! Neuron-astrocyte synapse models, their stability analysis, and a
//! working-memory network built from them.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod export;
pub mod network;
pub mod reduced;
pub mod stability;
pub mod tripartite;

pub use error::{Error, Result};
