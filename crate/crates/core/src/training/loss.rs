use std::ops::Range;

use crate::geometry::{chamfer, split_regions, GeometryError, PointCloud, RegionSet};
use crate::model::{Ablations, ForwardTrace, Model};
use crate::numerics::{Graph, Tensor, Var};

use super::TrainError;

/// Raw-sum Chamfer between the initial prediction and the ground truth.
pub fn loss_shape(g: &mut Graph<'_>, s_cloud: Var, gt: Var) -> Result<Var, TrainError> {
    Ok(chamfer(g, s_cloud, gt)?)
}

/// Ground-truth regions on the voxel grid of the ground truth's own box, with
/// room for every point.
pub fn gt_regions(gt: &PointCloud, regions: usize) -> Result<RegionSet, GeometryError> {
    split_regions(gt, gt, regions, gt.len())
}

/// Mean Chamfer over region pairs where both sides hold points.
///
/// `rows[m]` are the real rows of region `m` inside `u`; padded rows never
/// enter the sum.
pub fn loss_region(g: &mut Graph<'_>, u: Var, rows: &[Range<usize>], gt: &RegionSet) -> Result<Var, TrainError> {
    if rows.len() != gt.len() {
        return Err(TrainError::Contract(format!(
            "{} predicted regions against {} ground-truth regions",
            rows.len(),
            gt.len()
        )));
    }
    let mut terms = Vec::new();
    for (range, region) in rows.iter().zip(&gt.regions) {
        if range.is_empty() || region.is_empty() {
            continue;
        }
        let pred = g.slice_rows(u, range.start, range.end)?;
        let target = g.leaf(region.real_points().to_tensor());
        terms.push(chamfer(g, pred, target)?);
    }
    if terms.is_empty() {
        return Err(TrainError::Domain("no region pair has points on both sides".into()));
    }
    let pairs = terms.len();
    let mut sum = terms[0];
    for &t in &terms[1..] {
        sum = g.add(sum, t)?;
    }
    Ok(g.scale(sum, 1.0 / pairs as f64)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossNodes {
    pub shape: Var,
    /// Region term actually optimised; absent under `no_local`.
    pub region: Option<Var>,
    pub total: Var,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossValues {
    pub shape: f64,
    pub region: f64,
    pub total: f64,
}

impl LossNodes {
    pub fn values(&self, g: &Graph<'_>) -> LossValues {
        let v = |x: Var| g.value(x).data()[0];
        LossValues { shape: v(self.shape), region: self.region.map_or(0.0, v), total: v(self.total) }
    }
}

/// `L_Region + α·L_Shape` with the ablation variants:
/// `no_l_shape` drops the shape term, `no_l_region` swaps the region term for
/// a Chamfer between F and the ground truth, `no_local` optimises the shape
/// term alone. When no region pair has points on both sides the region term
/// is zero.
pub fn total_loss(
    g: &mut Graph<'_>,
    model: &Model,
    trace: &ForwardTrace,
    gt: &PointCloud,
    alpha: f64,
) -> Result<LossNodes, TrainError> {
    let ab: &Ablations = &model.config().ablations;
    let gt_var = g.leaf(gt.to_tensor());
    let shape = loss_shape(g, trace.s_cloud, gt_var)?;
    let Some(local) = &trace.local else {
        return Ok(LossNodes { shape, region: None, total: shape });
    };
    let region = if ab.no_l_region {
        chamfer(g, trace.f_cloud, gt_var)?
    } else {
        let rows: Vec<Range<usize>> = (0..local.regions.len()).map(|m| local.kept_range(m)).collect();
        let gt_set = gt_regions(gt, model.config().regions)?;
        match loss_region(g, local.u, &rows, &gt_set) {
            // A prediction collapsed into voxels the ground truth leaves
            // empty has no region term; the shape term still applies.
            Err(TrainError::Domain(msg)) => {
                log::debug!("region term skipped: {msg}");
                g.leaf(Tensor::scalar(0.0))
            }
            other => other?,
        }
    };
    let total = if ab.no_l_shape {
        region
    } else {
        let weighted = g.scale(shape, alpha)?;
        g.add(region, weighted)?
    };
    Ok(LossNodes { shape, region: Some(region), total })
}
