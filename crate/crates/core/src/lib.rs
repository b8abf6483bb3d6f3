//! Decentralized collaborative learning for wearable-sensor activity
//! recognition.
//!
//! Every agent owns a small 1-D convolutional classifier and a private set
//! of sensor windows. After each training batch agents exchange parameters
//! with their neighbors and replace their own with a data-size weighted
//! mean. The crate provides the model and optimizer, dataset loaders for
//! PAMAP2 and HARTH plus a synthetic generator, the round scheduler, the
//! evaluation harnesses and the `collab-har` command-line runner.

pub mod agent;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod network;
pub mod nn;
pub mod seed;

pub use error::{Error, Result};
