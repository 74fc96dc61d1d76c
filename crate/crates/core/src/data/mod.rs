//! Synthetic shape classes, image rendering and file formats.

mod dataset;
pub mod io;
mod render;
mod shapes;

pub use dataset::{
    make_dataset, make_sample, read_dataset, read_manifest, sample_image, write_dataset, Dataset, DatasetSplit,
    ManifestRecord, Sample, SplitKind, MANIFEST,
};
pub use io::{read_cloud, read_image, write_cloud, write_image, CloudFormat};
pub use render::{render_image, View, DEFAULT_IMAGE_SIZE, VIEW_HALF_WIDTH};
pub use shapes::{
    generate_shape, generate_shape_points, normalize_primitives, sample_surface, Primitive, ShapeClass,
    DEFAULT_POINTS, NORMALIZED_HALF,
};

use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("config error: {0}")]
    Config(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("{path}: parse error at {location}: {message}")]
    Parse { path: String, location: String, message: String },
    #[error("{0} already exists (use --force to overwrite)")]
    Exists(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}
