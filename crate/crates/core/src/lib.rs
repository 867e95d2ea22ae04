//! Discrete-time min-plus calculus with non-stationary (bivariate) service
//! curves, applied to duty-cycled links that sleep until a random wake-up slot.

pub mod arrivals;
pub mod bivariate;
pub mod bounds;
pub mod cli;
pub mod config;
pub mod error;
pub mod estimate;
pub mod figures;
pub mod formats;
pub mod markov;
pub mod minplus;
pub mod optimize;
pub mod rng;
pub mod service;
pub mod sim;
pub mod stats;
pub mod trace;

pub use bivariate::{BacklogSeries, BivariateFunction, CumulativePath, TimeGrid};
pub use error::{Error, Result};
