//! Deterministic augmentation and experiment-preparation toolkit for CT
//! lung-lesion segmentation.
//!
//! Every random decision is drawn from a stream keyed by
//! `(master_seed, phase, epoch, item_index)`, so results do not depend on
//! thread count or processing order.

pub mod bindings;
pub mod compositor;
pub mod datasetprep;
pub mod error;
pub mod io;
pub mod manifest;
pub mod metrics;
pub mod raster;
pub mod rng;
pub mod scheduler;
pub mod stats;
pub mod synthetic;
pub mod transforms;

pub use error::{Error, Result};
pub use manifest::{ManifestRecord, Split};
pub use raster::{Image, LabelSpace, Mask, Raster, Sample};
pub use rng::{derive_stream, RngStream};
pub use transforms::{apply_transform, Category, TransformKind, TransformParams, TransformSpec};

/// Crate version, stamped into generated artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
