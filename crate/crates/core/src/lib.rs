pub mod cli;
pub mod controller;
pub mod dataset;
pub mod eci;
pub mod error;
pub mod learners;
pub mod localsearch;
pub mod metrics;
pub mod proposers;
pub mod rng;
pub mod space;
pub mod surrogate;

pub use error::{Error, Result};
