use std::fmt;
use std::str::FromStr;

use super::{GeometryError, Point3};

/// Where pattern learners sample their input points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// Regular 3-D lattice.
    #[default]
    Voxel,
    /// Square lattice on the `z = 0` plane.
    Plane,
}

impl fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingMode::Voxel => "voxel",
            SamplingMode::Plane => "plane",
        })
    }
}

impl FromStr for SamplingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "voxel" => Ok(SamplingMode::Voxel),
            "plane" => Ok(SamplingMode::Plane),
            other => Err(format!("unknown sampling mode `{other}` (expected voxel or plane)")),
        }
    }
}

/// Lattice resolution per axis for `count` points.
///
/// Voxel mode picks the exact factor triple with the smallest max/min ratio,
/// preferring larger leading factors (256 → 8×8×4). Plane mode does the same
/// with a pair and a unit z extent (256 → 16×16×1).
pub fn lattice_dims(count: usize, mode: SamplingMode) -> Result<[usize; 3], GeometryError> {
    if count == 0 {
        return Err(GeometryError::Domain("lattice needs at least one point".into()));
    }
    let ratio = |d: &[usize]| {
        let max = *d.iter().max().unwrap() as f64;
        let min = *d.iter().min().unwrap() as f64;
        max / min
    };
    let mut best: Option<[usize; 3]> = None;
    let better = |cand: [usize; 3], cur: Option<[usize; 3]>, dims: usize| match cur {
        None => true,
        Some(cur) => {
            let (rc, rb) = (ratio(&cand[..dims]), ratio(&cur[..dims]));
            rc < rb || (rc == rb && cand > cur)
        }
    };
    match mode {
        SamplingMode::Voxel => {
            for nx in 1..=count {
                if !count.is_multiple_of(nx) {
                    continue;
                }
                let rest = count / nx;
                for ny in 1..=rest {
                    if rest.is_multiple_of(ny) {
                        let cand = [nx, ny, rest / ny];
                        if better(cand, best, 3) {
                            best = Some(cand);
                        }
                    }
                }
            }
        }
        SamplingMode::Plane => {
            for nx in 1..=count {
                if count.is_multiple_of(nx) {
                    let cand = [nx, count / nx, 1];
                    if better(cand, best, 2) {
                        best = Some(cand);
                    }
                }
            }
        }
    }
    Ok(best.expect("count ≥ 1 has a factorisation"))
}

fn axis_values(n: usize, extent: f64) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    let span = (n - 1) as f64;
    (0..n).map(|i| extent * (((2 * i) as f64 - span) / span)).collect()
}

/// `count` lattice points spanning `[−extent, extent]` on each used axis,
/// x varying slowest.
pub fn grid_lattice(count: usize, extent: f64, mode: SamplingMode) -> Result<Vec<Point3>, GeometryError> {
    let [nx, ny, nz] = lattice_dims(count, mode)?;
    let (xs, ys) = (axis_values(nx, extent), axis_values(ny, extent));
    let zs = match mode {
        SamplingMode::Voxel => axis_values(nz, extent),
        SamplingMode::Plane => vec![0.0],
    };
    let mut out = Vec::with_capacity(count);
    for &x in &xs {
        for &y in &ys {
            for &z in &zs {
                out.push([x, y, z]);
            }
        }
    }
    Ok(out)
}
