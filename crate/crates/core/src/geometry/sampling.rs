use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kdtree::sq_dist;
use super::{GeometryError, PointCloud};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DownsampleMethod {
    /// Farthest-point sampling seeded at index 0.
    Fps,
    /// Uniform choice without replacement.
    Random { seed: u64 },
}

/// Greedy farthest-point selection of `k` indices starting from index 0.
/// Ties go to the lowest index.
pub fn farthest_point_indices(cloud: &PointCloud, k: usize) -> Result<Vec<usize>, GeometryError> {
    let n = cloud.len();
    if k > n {
        return Err(GeometryError::Domain(format!("cannot select {k} of {n} points")));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let pts = cloud.points();
    let mut chosen = Vec::with_capacity(k);
    let mut min_d = vec![f64::INFINITY; n];
    let mut current = 0;
    for _ in 0..k {
        chosen.push(current);
        let c = pts[current];
        let mut next = 0;
        let mut best = f64::NEG_INFINITY;
        for (i, p) in pts.iter().enumerate() {
            let d = sq_dist(p, &c);
            if d < min_d[i] {
                min_d[i] = d;
            }
            if min_d[i] > best {
                best = min_d[i];
                next = i;
            }
        }
        current = next;
    }
    Ok(chosen)
}

/// Reduces `cloud` to `k` points.
pub fn downsample(cloud: &PointCloud, k: usize, method: DownsampleMethod) -> Result<PointCloud, GeometryError> {
    let n = cloud.len();
    if k > n {
        return Err(GeometryError::Domain(format!("cannot downsample {n} points to {k}")));
    }
    let idx = match method {
        DownsampleMethod::Fps => farthest_point_indices(cloud, k)?,
        DownsampleMethod::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
            idx.sort_unstable();
            idx
        }
    };
    Ok(cloud.select(&idx))
}
