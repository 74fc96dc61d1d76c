//! Losses, optimizer, training loop, evaluation and sweeps.

mod adam;
mod config;
mod interpolate;
mod loss;
mod metrics;
mod sweep;
mod train;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use config::{lr_at, TrainConfig};
pub use interpolate::interpolate_latent;
pub use loss::{gt_regions, loss_region, loss_shape, total_loss, LossNodes, LossValues};
pub use metrics::{
    aggregate, cloud_metrics, metrics_csv, CloudMetrics, MetricsRecord, SampleMetrics, CSV_HEADER, CSV_NOTE,
    IOU_RESOLUTION, MEAN_CLASS,
};
pub use sweep::{sweep, sweep_csv, SweepData, SweepOutcome, SweepParameter, SweepRow, SWEEP_HEADER};
pub use train::{evaluate, evaluate_parallel, evaluate_sample, train, EvalOptions, StepReport, TrainReport};

use crate::data::DataError;
use crate::geometry::GeometryError;
use crate::model::ModelError;
use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("config error: {0}")]
    Config(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Data(#[from] DataError),
}
