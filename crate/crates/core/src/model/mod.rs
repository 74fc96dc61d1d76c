//! The learned networks and the full reconstruction pipeline.

mod checkpoint;
mod config;
mod layers;
mod network;

pub use checkpoint::{MAGIC, VERSION};
pub use config::{Ablations, ModelConfig, CONV_KERNEL, CONV_PAD};
pub use layers::{ConvLayer, Dense, ImageEncoder, Mlp};
pub use network::{
    halton, halton_offsets, ForwardTrace, LocalTrace, Model, ParamCounts, PatternBank, RowMode, SplitReference,
};

use crate::geometry::GeometryError;
use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("config error: {0}")]
    Config(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("pipeline error: {0}")]
    Pipeline(String),
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
