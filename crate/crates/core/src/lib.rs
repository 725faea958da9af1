//! Heterogeneity-adaptive speculative decoding over surrogate language models.
//!
//! A draft model grows a token tree, the target model verifies it greedily, and
//! the adaptive controller uses the draft's own Top-K entropy along its most
//! confident path to decide, per cycle, whether to draft deeper and verify fewer
//! candidates. Everything runs on small n-gram and synthetic models so the
//! device-independent metrics (acceptance length, target calls, verified tokens)
//! can be checked exactly.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod binning;
pub mod controller;
pub mod entropy;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod tree;
pub mod verify;

pub use error::{Error, Result};
