//! Streaming walking-guidance runtime: domain types, annotation files, object
//! priors, the trigger gate, prompt planning, the stream engine, and metrics.

pub mod annotation;
pub mod domain;
pub mod error;
pub mod polm;
pub mod tap;
pub mod synth;
pub mod hplanner;
pub mod engine;
pub mod metrics;
