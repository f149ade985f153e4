//! Annotation service: recording listings, downsampled streams with the
//! detector overlay, and label CRUD persisted as label files.

pub mod downsample;
pub mod error;
pub mod service;

pub use downsample::{downsample_min_max, Bucket};
pub use error::{AnnotateError, Result};
pub use service::{router, serve, AppState, ServiceConfig};
