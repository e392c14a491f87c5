//! Transformer semantic transceiver over a RIS-assisted fading link.
//!
//! The pipeline is text → semantic encoder → channel encoder → link →
//! channel decoder → semantic decoder → text, trained end to end.

pub mod channel;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod results;
pub mod seed;
pub mod text;

pub use error::{Error, Result};
