//! Event-driven training of single-spike spiking neural networks.
//!
//! The pipeline has three stages, each usable on its own:
//!
//! 1. [`encoding`]: on/off-center preprocessing and latency coding of images
//!    into sorted spike trains.
//! 2. [`feature`]: a convolutional single-spike integrate-and-fire layer
//!    trained with unsupervised multiplicative STDP under winner-takes-all
//!    competition, followed by max pooling over spike timestamps.
//! 3. [`classifier`]: a fully-connected output layer trained with one of the
//!    supervised STDP rules in [`plasticity`] (SSTDP, S2-STDP, R-STDP),
//!    optionally with paired competing neurons per class.
//!
//! [`harness`] drives epochs, early stopping, k-fold evaluation and sweeps,
//! and [`dataset`] / [`config`] / [`cache`] cover the file formats.

mod binio;
pub mod cache;
pub mod classifier;
pub mod config;
pub mod dataset;
pub mod encoding;
pub mod error;
pub mod feature;
pub mod harness;
pub mod neuron;
pub mod pipeline;
pub mod plasticity;

pub use error::{Error, Result};
