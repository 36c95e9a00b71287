//! HDR environment-map estimation toolkit: equirectangular geometry, tone
//! mapping, training losses, parametric light extraction, clustering,
//! architecture shape audits and benchmark metrics.

pub mod archspec;
pub mod benchmark;
pub mod clusters;
pub mod error;
pub mod geometry;
pub mod image;
pub mod io;
pub mod lights;
pub mod losses;
pub mod masks;
pub mod metrics;
pub mod tonemap;

pub use error::{Error, Result};
pub use geometry::{CameraPose, Direction};
pub use image::{BinaryMask, Domain, EnvironmentMap, Image, WeightMap};

/// Sizes the global worker pool used by parallel feature extraction and
/// light/metric batches. Can only succeed once per process.
pub fn set_global_threads(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}
