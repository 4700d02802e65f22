//! Conversation-aware hashtag generation.
//!
//! A post and its conversation are encoded by two stacked Bi-GRUs, fused by a
//! bi-attention and merge layer, and decoded word by word by an attentive GRU.
//! The crate carries its own tensor/gradient engine, training loop, beam
//! search, and evaluation metrics.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod numcore;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
