//! Self-labeling pipeline for human intention recognition from tray-weight
//! streams: ingestion, state-change detection, interaction-time fitting,
//! label generation and agreement scoring, plus a synthetic trace generator.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod corpus;
pub mod detect;
pub mod error;
pub mod eval;
pub mod io;
pub mod labels;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod slb;
pub mod synthgen;

pub use error::{Error, Result};
