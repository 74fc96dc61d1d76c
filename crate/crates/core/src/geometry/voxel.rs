use super::regions::voxel_of;
use super::{Aabb, GeometryError, PointCloud};

/// Boolean occupancy grid over a fixed box.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    pub resolution: usize,
    /// `resolution³` cells, x slowest.
    pub occupancy: Vec<bool>,
    pub bounds: Aabb,
}

impl VoxelGrid {
    pub fn occupied(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    pub fn cell(&self, i: usize, j: usize, k: usize) -> bool {
        self.occupancy[(i * self.resolution + j) * self.resolution + k]
    }
}

/// Marks every cell that holds at least one point; points outside `bounds`
/// land in the nearest boundary cell.
pub fn voxelize(cloud: &PointCloud, resolution: usize, bounds: Aabb) -> Result<VoxelGrid, GeometryError> {
    if resolution == 0 {
        return Err(GeometryError::Domain("voxel resolution must be at least 1".into()));
    }
    let mut occupancy = vec![false; resolution * resolution * resolution];
    for p in cloud.points() {
        let [i, j, k] = voxel_of(p, &bounds, resolution);
        occupancy[(i * resolution + j) * resolution + k] = true;
    }
    Ok(VoxelGrid { resolution, occupancy, bounds })
}

/// Intersection over union of two grids sharing resolution and bounds.
pub fn iou(a: &VoxelGrid, b: &VoxelGrid) -> Result<f64, GeometryError> {
    if a.resolution != b.resolution || a.bounds != b.bounds {
        return Err(GeometryError::Contract(format!(
            "grids differ: resolution {} vs {}, bounds {:?} vs {:?}",
            a.resolution, b.resolution, a.bounds, b.bounds
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.occupancy.iter().zip(&b.occupancy) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        return Err(GeometryError::Domain("IoU of two empty grids".into()));
    }
    Ok(inter as f64 / union as f64)
}
