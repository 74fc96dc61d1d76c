//! Non-learned point cloud machinery: boxes, region splitting, lattices,
//! nearest neighbours, Chamfer distance, voxel occupancy and downsampling.

mod chamfer;
mod kdtree;
mod lattice;
mod regions;
mod sampling;
mod voxel;

pub use chamfer::{chamfer, chamfer_eval, chamfer_value, nearest_pairs, Pairing};
pub use kdtree::{nearest_neighbor, KdTree};
pub use lattice::{grid_lattice, lattice_dims, SamplingMode};
pub use regions::{center_region, decenter, split_regions, voxel_of, Region, RegionSet};
pub use sampling::{downsample, farthest_point_indices, DownsampleMethod};
pub use voxel::{iou, voxelize, VoxelGrid};

use crate::numerics::{NumericsError, Tensor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Point3 = [f64; 3];

/// Ordered list of 3-D points.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self { points }
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self, GeometryError> {
        let (n, c) = t.dims2()?;
        if c != 3 {
            return Err(GeometryError::Contract(format!("expected n×3 points, got {:?}", t.shape())));
        }
        Ok(Self { points: (0..n).map(|i| t.row(i).try_into().expect("3 columns")).collect() })
    }

    pub fn to_tensor(&self) -> Tensor {
        let data = self.points.iter().flat_map(|p| p.iter().copied()).collect();
        Tensor::new(vec![self.points.len(), 3], data).expect("n×3")
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().flatten().all(|v| v.is_finite())
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self { points: indices.iter().map(|&i| self.points[i]).collect() }
    }

    pub fn translated(&self, by: Point3) -> Self {
        Self { points: self.points.iter().map(|p| [p[0] + by[0], p[1] + by[1], p[2] + by[2]]).collect() }
    }

    pub fn mean(&self) -> Option<Point3> {
        if self.points.is_empty() {
            return None;
        }
        let mut m = [0.0; 3];
        for p in &self.points {
            for c in 0..3 {
                m[c] += p[c];
            }
        }
        let n = self.points.len() as f64;
        Some([m[0] / n, m[1] / n, m[2] / n])
    }
}

impl From<Vec<Point3>> for PointCloud {
    fn from(points: Vec<Point3>) -> Self {
        Self::new(points)
    }
}

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn side(&self, axis: usize) -> f64 {
        self.max[axis] - self.min[axis]
    }

    pub fn max_side(&self) -> f64 {
        (0..3).map(|a| self.side(a)).fold(0.0, f64::max)
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut out = *self;
        for a in 0..3 {
            out.min[a] = out.min[a].min(other.min[a]);
            out.max[a] = out.max[a].max(other.max[a]);
        }
        out
    }
}

/// Tight box around `cloud` with every upper bound pushed out by `epsilon`,
/// so points on the max face fall strictly inside the last cell of any
/// subdivision.
pub fn bounding_box(cloud: &PointCloud, epsilon: f64) -> Result<Aabb, GeometryError> {
    let first = cloud
        .points()
        .first()
        .ok_or_else(|| GeometryError::Domain("bounding box of an empty cloud".into()))?;
    let mut b = Aabb { min: *first, max: *first };
    for p in cloud.points() {
        for a in 0..3 {
            b.min[a] = b.min[a].min(p[a]);
            b.max[a] = b.max[a].max(p[a]);
        }
    }
    for a in 0..3 {
        b.max[a] += epsilon;
    }
    Ok(b)
}

/// Epsilon used for region splitting: `1e-6 · max side`, or `1e-6` for a
/// degenerate (single-point) box.
pub fn split_epsilon(tight: &Aabb) -> f64 {
    let s = tight.max_side();
    if s > 0.0 {
        1e-6 * s
    } else {
        1e-6
    }
}

