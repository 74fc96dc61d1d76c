use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::{Point3, PointCloud};
use crate::numerics::Tensor;

pub const DEFAULT_IMAGE_SIZE: usize = 64;
/// Half-width of the orthographic window in world units.
pub const VIEW_HALF_WIDTH: f64 = 0.8;
/// Shade of the farthest possible point; the nearest gets 1.
const MIN_SHADE: f64 = 0.25;

/// Camera for orthographic rendering.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum View {
    /// Looking along −(1,1,1)/√3.
    Default,
    /// Direction drawn uniformly on the sphere from the seed.
    Seeded(u64),
    /// Viewer sits at `+dir` and looks toward the origin.
    Direction(Point3),
}

fn normalize(v: Point3) -> Point3 {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn cross(a: Point3, b: Point3) -> Point3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl View {
    /// Unit vector from the origin toward the viewer.
    pub fn direction(&self) -> Point3 {
        match *self {
            View::Default => normalize([1.0, 1.0, 1.0]),
            View::Direction(d) => normalize(d),
            View::Seeded(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let z: f64 = rng.random_range(-1.0..1.0);
                let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let r = (1.0 - z * z).sqrt();
                [r * phi.cos(), r * phi.sin(), z]
            }
        }
    }

    /// Orthonormal camera frame `(right, up, toward_viewer)`.
    pub fn frame(&self) -> (Point3, Point3, Point3) {
        let d = self.direction();
        // Right axis is horizontal (no z) unless looking straight up or down.
        let right = if d[0].abs() < 1e-9 && d[1].abs() < 1e-9 { [1.0, 0.0, 0.0] } else { normalize([-d[1], d[0], 0.0]) };
        let up = cross(d, right);
        (right, up, d)
    }
}

/// Grayscale `1×size×size` image of the cloud. Every point covers a 2×2 pixel
/// footprint; each pixel keeps the nearest point, shaded brighter when
/// closer. Empty pixels are 0 and points outside the window are clipped.
pub fn render_image(cloud: &PointCloud, view: View, size: usize) -> Tensor {
    let (right, up, toward) = view.frame();
    let mut depth = vec![f64::NEG_INFINITY; size * size];
    let cell = 2.0 * VIEW_HALF_WIDTH / size as f64;
    for p in cloud.points() {
        let (u, v, d) = (dot(*p, right), dot(*p, up), dot(*p, toward));
        // Splat anchored at the pixel containing the point, extending right and down.
        let col = ((u + VIEW_HALF_WIDTH) / cell).floor();
        let row = ((VIEW_HALF_WIDTH - v) / cell).floor();
        for dr in 0..2 {
            for dc in 0..2 {
                let (r, c) = (row + dr as f64, col + dc as f64);
                if r < 0.0 || c < 0.0 || r >= size as f64 || c >= size as f64 {
                    continue;
                }
                let idx = r as usize * size + c as usize;
                if d > depth[idx] {
                    depth[idx] = d;
                }
            }
        }
    }
    // Depth along the view axis of anything inside the window lies in
    // [−√3·w, √3·w]; map that onto [MIN_SHADE, 1].
    let reach = 3f64.sqrt() * VIEW_HALF_WIDTH;
    let data = depth
        .into_iter()
        .map(|d| {
            if d == f64::NEG_INFINITY {
                0.0
            } else {
                let t = ((d + reach) / (2.0 * reach)).clamp(0.0, 1.0);
                MIN_SHADE + (1.0 - MIN_SHADE) * t
            }
        })
        .collect();
    Tensor::new(vec![1, size, size], data).expect("shape matches data length")
}
