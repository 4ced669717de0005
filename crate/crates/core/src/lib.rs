pub mod config;
pub mod error;
pub mod geodesy;
pub mod gof;
pub mod ingest;
pub mod logit;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
