use crate::numerics::{Graph, Var};

use super::kdtree::KdTree;
use super::{GeometryError, PointCloud};

/// Nearest indices and distances from `a` into `b`, then from `b` into `a`.
pub type Pairing = (Vec<usize>, Vec<f64>, Vec<usize>, Vec<f64>);

/// Nearest-neighbour pairing in both directions: for every point of `a` its
/// nearest index in `b`, and vice versa.
pub fn nearest_pairs(a: &PointCloud, b: &PointCloud) -> Result<Pairing, GeometryError> {
    if a.is_empty() || b.is_empty() {
        return Err(GeometryError::Domain("chamfer distance with an empty point set".into()));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(GeometryError::Domain("chamfer distance with non-finite coordinates".into()));
    }
    let tree_b = KdTree::build(b.points())?;
    let tree_a = KdTree::build(a.points())?;
    let (ab, dab): (Vec<usize>, Vec<f64>) = a.points().iter().map(|p| tree_b.nearest(p)).unzip();
    let (ba, dba): (Vec<usize>, Vec<f64>) = b.points().iter().map(|p| tree_a.nearest(p)).unzip();
    Ok((ab, dab, ba, dba))
}

/// Raw-sum Chamfer distance recorded on the tape:
/// `Σ_{b∈B} min_a ‖a−b‖ + Σ_{a∈A} min_b ‖a−b‖`.
///
/// Both inputs must be `n×3` nodes; the nearest-neighbour pairing is fixed
/// at forward time and the gradient flows through the paired points.
pub fn chamfer(g: &mut Graph<'_>, a: Var, b: Var) -> Result<Var, GeometryError> {
    let ca = PointCloud::from_tensor(g.value(a))?;
    let cb = PointCloud::from_tensor(g.value(b))?;
    let (ab, _, ba, _) = nearest_pairs(&ca, &cb)?;
    Ok(g.paired_distance_sum(a, b, &ab, &ba)?)
}

/// Raw-sum Chamfer distance without a tape.
pub fn chamfer_value(a: &PointCloud, b: &PointCloud) -> Result<f64, GeometryError> {
    let (_, dab, _, dba) = nearest_pairs(a, b)?;
    let forward: f64 = dab.iter().sum();
    let reverse: f64 = dba.iter().sum();
    Ok(forward + reverse)
}

/// Per-point normalised Chamfer distance used for reporting:
/// `½·(mean_a min_b ‖a−b‖ + mean_b min_a ‖a−b‖)`.
pub fn chamfer_eval(a: &PointCloud, b: &PointCloud) -> Result<f64, GeometryError> {
    let (_, dab, _, dba) = nearest_pairs(a, b)?;
    let forward = dab.iter().sum::<f64>() / dab.len() as f64;
    let reverse = dba.iter().sum::<f64>() / dba.len() as f64;
    Ok(0.5 * (forward + reverse))
}
