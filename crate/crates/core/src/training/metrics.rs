use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::geometry::{bounding_box, chamfer_eval, downsample, iou, voxelize, DownsampleMethod, PointCloud};

use super::loss::LossValues;
use super::TrainError;

pub const IOU_RESOLUTION: usize = 32;
pub const CSV_HEADER: &str = "epoch,split,class,cd_eval,iou,loss_shape,loss_region,loss_total,wall_ms";
pub const CSV_NOTE: &str = "# cd_eval: 0.5*(mean nearest-neighbour L2 distance pred->gt + gt->pred) at matched cardinality; \
iou: 32^3 occupancy on the union box; loss_*: raw-sum Chamfer terms; shapes normalized to [-0.45,0.45]^3";
/// Class label of the per-split aggregate row.
pub const MEAN_CLASS: &str = "mean";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub split: String,
    pub class: String,
    pub cd_eval: f64,
    pub iou: f64,
    pub loss_shape: f64,
    pub loss_region: f64,
    pub loss_total: f64,
    pub wall_ms: u64,
}

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.split,
            self.class,
            self.cd_eval,
            self.iou,
            self.loss_shape,
            self.loss_region,
            self.loss_total,
            self.wall_ms
        )
    }
}

pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut out = format!("{CSV_NOTE}\n{CSV_HEADER}\n");
    for r in records {
        writeln!(out, "{}", r.csv_row()).expect("writing to a String");
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CloudMetrics {
    pub cd: f64,
    pub iou: f64,
}

/// Evaluation Chamfer and voxel IoU of a prediction.
///
/// Both clouds are brought to a common size by farthest-point sampling: the
/// larger one down to the smaller, or both down to `points` when given.
pub fn cloud_metrics(pred: &PointCloud, gt: &PointCloud, points: Option<usize>) -> Result<CloudMetrics, TrainError> {
    let target = points.unwrap_or(usize::MAX).min(pred.len()).min(gt.len());
    let fit = |c: &PointCloud| -> Result<PointCloud, TrainError> {
        Ok(if c.len() > target { downsample(c, target, DownsampleMethod::Fps)? } else { c.clone() })
    };
    let (p, g) = (fit(pred)?, fit(gt)?);
    let cd = chamfer_eval(&p, &g)?;
    let bounds = bounding_box(&p, 0.0)?.union(&bounding_box(&g, 0.0)?);
    let iou = iou(&voxelize(&p, IOU_RESOLUTION, bounds)?, &voxelize(&g, IOU_RESOLUTION, bounds)?)?;
    Ok(CloudMetrics { cd, iou })
}

/// Per-sample numbers before aggregation.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMetrics {
    pub class: String,
    pub metrics: CloudMetrics,
    pub losses: LossValues,
}

/// One row per class (sorted by name) plus a `mean` row averaging the
/// per-class rows.
pub fn aggregate(epoch: usize, split: &str, samples: &[SampleMetrics], wall_ms: u64) -> Vec<MetricsRecord> {
    let mut by_class: BTreeMap<&str, Vec<&SampleMetrics>> = BTreeMap::new();
    for s in samples {
        by_class.entry(&s.class).or_default().push(s);
    }
    let row = |class: String, vals: [f64; 5]| MetricsRecord {
        epoch,
        split: split.to_string(),
        class,
        cd_eval: vals[0],
        iou: vals[1],
        loss_shape: vals[2],
        loss_region: vals[3],
        loss_total: vals[4],
        wall_ms,
    };
    let mut rows: Vec<MetricsRecord> = by_class
        .into_iter()
        .map(|(class, list)| {
            let n = list.len() as f64;
            let mut acc = [0.0; 5];
            for s in list {
                let v = [s.metrics.cd, s.metrics.iou, s.losses.shape, s.losses.region, s.losses.total];
                for k in 0..5 {
                    acc[k] += v[k];
                }
            }
            row(class.to_string(), acc.map(|a| a / n))
        })
        .collect();
    if !rows.is_empty() {
        let n = rows.len() as f64;
        let mut acc = [0.0; 5];
        for r in &rows {
            let v = [r.cd_eval, r.iou, r.loss_shape, r.loss_region, r.loss_total];
            for k in 0..5 {
                acc[k] += v[k];
            }
        }
        rows.push(row(MEAN_CLASS.to_string(), acc.map(|a| a / n)));
    }
    rows
}
