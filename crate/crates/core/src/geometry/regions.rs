use super::{bounding_box, split_epsilon, Aabb, GeometryError, Point3, PointCloud};

/// One voxel's worth of source points, padded with zero rows to capacity.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    /// `capacity` rows; real points first in source order, then zero rows.
    pub points: Vec<Point3>,
    /// `mask[i]` is true iff row `i` is a real point.
    pub mask: Vec<bool>,
    /// Mean of the real points, zero for an empty region.
    pub center: Point3,
    pub voxel_index: [usize; 3],
    /// Source-cloud index of each real row.
    pub source_indices: Vec<usize>,
}

impl Region {
    pub fn real_count(&self) -> usize {
        self.source_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_indices.is_empty()
    }

    pub fn real_points(&self) -> PointCloud {
        PointCloud::new(
            self.points.iter().zip(&self.mask).filter(|(_, &m)| m).map(|(p, _)| *p).collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionSet {
    pub regions: Vec<Region>,
    pub capacity: usize,
    pub per_edge: usize,
    /// Box the voxels subdivide (reference box, upper faces pushed out).
    pub bounds: Aabb,
    /// Real points dropped because their region was full.
    pub truncated: usize,
}

impl RegionSet {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn real_count(&self) -> usize {
        self.regions.iter().map(Region::real_count).sum()
    }
}

fn cube_root(m: usize) -> Option<usize> {
    (1..=m).take_while(|k| k * k * k <= m).find(|k| k * k * k == m)
}

/// Voxel of `p` in a `per_edge³` subdivision of `bounds`, clamping points
/// outside the box to the nearest boundary voxel.
pub fn voxel_of(p: &Point3, bounds: &Aabb, per_edge: usize) -> [usize; 3] {
    let mut v = [0; 3];
    for a in 0..3 {
        let side = bounds.side(a);
        let cell = if side > 0.0 { (p[a] - bounds.min[a]) / side * per_edge as f64 } else { 0.0 };
        v[a] = if cell.is_nan() || cell < 0.0 { 0 } else { (cell.floor() as usize).min(per_edge - 1) };
    }
    v
}

/// Splits `source` into `regions` voxels of the bounding box of `reference`.
///
/// Each region holds at most `capacity` real points; extra points are dropped
/// keeping the lowest source indices, and a warning is logged.
pub fn split_regions(
    source: &PointCloud,
    reference: &PointCloud,
    regions: usize,
    capacity: usize,
) -> Result<RegionSet, GeometryError> {
    let per_edge = cube_root(regions)
        .ok_or_else(|| GeometryError::Domain(format!("region count {regions} is not a perfect cube")))?;
    let tight = bounding_box(reference, 0.0)?;
    let bounds = bounding_box(reference, split_epsilon(&tight))?;

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); regions];
    for (i, p) in source.points().iter().enumerate() {
        let [x, y, z] = voxel_of(p, &bounds, per_edge);
        members[(x * per_edge + y) * per_edge + z].push(i);
    }

    let mut truncated = 0;
    let regions = members
        .into_iter()
        .enumerate()
        .map(|(m, mut idx)| {
            if idx.len() > capacity {
                truncated += idx.len() - capacity;
                idx.truncate(capacity);
            }
            let mut points = vec![[0.0; 3]; capacity];
            let mut mask = vec![false; capacity];
            for (row, &i) in idx.iter().enumerate() {
                points[row] = source.points()[i];
                mask[row] = true;
            }
            let center = source.select(&idx).mean().unwrap_or([0.0; 3]);
            let voxel_index = [m / (per_edge * per_edge), (m / per_edge) % per_edge, m % per_edge];
            Region { points, mask, center, voxel_index, source_indices: idx }
        })
        .collect();
    if truncated > 0 {
        log::warn!("region capacity {capacity} exceeded; dropped {truncated} points");
    }
    Ok(RegionSet { regions, capacity, per_edge, bounds, truncated })
}

/// Translates the real rows of a region by minus its centroid. Padded rows
/// stay zero; an empty region is returned unchanged.
pub fn center_region(region: &Region) -> Region {
    let mut out = region.clone();
    if region.is_empty() {
        out.center = [0.0; 3];
        return out;
    }
    let c = region.real_points().mean().expect("non-empty");
    out.center = c;
    for (p, &m) in out.points.iter_mut().zip(&region.mask) {
        if m {
            *p = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
        }
    }
    out
}

/// Adds `center` to every row.
pub fn decenter(points: &[Point3], center: Point3) -> Vec<Point3> {
    points.iter().map(|p| [p[0] + center[0], p[1] + center[1], p[2] + center[2]]).collect()
}
