use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Point3, PointCloud};

/// Half-width of the cube every generated shape is scaled into.
pub const NORMALIZED_HALF: f64 = 0.45;
pub const DEFAULT_POINTS: usize = 2048;

/// Procedural object classes. Several share legs, slabs and poles so that
/// unseen classes still contain familiar local structure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeClass {
    Table,
    Chair,
    CrossPlane,
    Lamp,
    SofaBlock,
    Ring,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 6] = [
        ShapeClass::Table,
        ShapeClass::Chair,
        ShapeClass::CrossPlane,
        ShapeClass::Lamp,
        ShapeClass::SofaBlock,
        ShapeClass::Ring,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::Table => "table",
            ShapeClass::Chair => "chair",
            ShapeClass::CrossPlane => "cross_plane",
            ShapeClass::Lamp => "lamp",
            ShapeClass::SofaBlock => "sofa_block",
            ShapeClass::Ring => "ring",
        }
    }

    /// Un-normalized primitive assembly for one random draw of the class
    /// parameters.
    pub fn primitives<R: Rng + ?Sized>(self, rng: &mut R) -> Vec<Primitive> {
        let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
        match self {
            ShapeClass::Table => {
                let (w, d, h) = (u(0.8, 1.2), u(0.5, 0.9), u(0.5, 0.8));
                let (t, s) = (u(0.04, 0.08), u(0.04, 0.08));
                let mut p = vec![Primitive::cuboid([0.0, 0.0, h - t / 2.0], [w / 2.0, d / 2.0, t / 2.0])];
                p.extend(legs(w, d, h - t, s));
                p
            }
            ShapeClass::Chair => {
                let (w, d, hs) = (u(0.45, 0.6), u(0.45, 0.6), u(0.4, 0.5));
                let (t, s, hb, tb) = (u(0.04, 0.07), u(0.03, 0.06), u(0.4, 0.6), u(0.04, 0.07));
                let mut p = vec![
                    Primitive::cuboid([0.0, 0.0, hs - t / 2.0], [w / 2.0, d / 2.0, t / 2.0]),
                    Primitive::cuboid([0.0, -d / 2.0 + tb / 2.0, hs + hb / 2.0], [w / 2.0, tb / 2.0, hb / 2.0]),
                ];
                p.extend(legs(w, d, hs - t, s));
                p
            }
            ShapeClass::CrossPlane => {
                let (len, r) = (u(1.0, 1.4), u(0.06, 0.1));
                let (span, chord, thick) = (u(0.9, 1.3), u(0.2, 0.3), 0.03);
                let (fin_h, tail_span) = (u(0.2, 0.3), u(0.3, 0.45));
                let rear = -len / 2.0 + 0.1;
                vec![
                    Primitive::Cylinder { center: [0.0; 3], axis: 0, radius: r, half_height: len / 2.0, caps: true },
                    Primitive::cuboid([0.05, 0.0, 0.0], [chord / 2.0, span / 2.0, thick / 2.0]),
                    Primitive::cuboid([rear, 0.0, r + fin_h / 2.0], [0.075, thick / 2.0, fin_h / 2.0]),
                    Primitive::cuboid([rear, 0.0, 0.0], [0.075, tail_span / 2.0, thick / 2.0]),
                ]
            }
            ShapeClass::Lamp => {
                let (base_r, base_h) = (u(0.15, 0.25), u(0.04, 0.06));
                let (pole_r, pole_h) = (u(0.02, 0.035), u(0.5, 0.8));
                let (shade_r, shade_h) = (u(0.15, 0.25), u(0.15, 0.25));
                vec![
                    Primitive::Cylinder { center: [0.0, 0.0, base_h / 2.0], axis: 2, radius: base_r, half_height: base_h / 2.0, caps: true },
                    Primitive::Cylinder {
                        center: [0.0, 0.0, base_h + pole_h / 2.0],
                        axis: 2,
                        radius: pole_r,
                        half_height: pole_h / 2.0,
                        caps: false,
                    },
                    Primitive::Cylinder {
                        center: [0.0, 0.0, base_h + pole_h],
                        axis: 2,
                        radius: shade_r,
                        half_height: shade_h / 2.0,
                        caps: false,
                    },
                ]
            }
            ShapeClass::SofaBlock => {
                let (w, d, h) = (u(1.2, 1.8), u(0.6, 0.8), u(0.25, 0.35));
                let (bh, bt) = (u(0.3, 0.45), u(0.15, 0.2));
                let (at, ah) = (u(0.12, 0.18), u(0.15, 0.25));
                vec![
                    Primitive::cuboid([0.0, 0.0, h / 2.0], [w / 2.0, d / 2.0, h / 2.0]),
                    Primitive::cuboid([0.0, -d / 2.0 + bt / 2.0, h + bh / 2.0], [w / 2.0, bt / 2.0, bh / 2.0]),
                    Primitive::cuboid([-w / 2.0 + at / 2.0, 0.0, h + ah / 2.0], [at / 2.0, d / 2.0, ah / 2.0]),
                    Primitive::cuboid([w / 2.0 - at / 2.0, 0.0, h + ah / 2.0], [at / 2.0, d / 2.0, ah / 2.0]),
                ]
            }
            ShapeClass::Ring => {
                let (r, hh) = (u(0.4, 0.5), u(0.05, 0.12));
                vec![Primitive::Cylinder { center: [0.0; 3], axis: 2, radius: r, half_height: hh, caps: false }]
            }
        }
    }
}

/// Four square legs under a `w×d` footprint, reaching height `h`.
fn legs(w: f64, d: f64, h: f64, s: f64) -> Vec<Primitive> {
    let (x, y) = (w / 2.0 - s, d / 2.0 - s);
    [(-x, -y), (-x, y), (x, -y), (x, y)]
        .into_iter()
        .map(|(cx, cy)| Primitive::cuboid([cx, cy, h / 2.0], [s / 2.0, s / 2.0, h / 2.0]))
        .collect()
}

impl fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ShapeClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = ShapeClass::ALL.iter().map(|c| c.name()).collect();
                format!("unknown shape class `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// Axis-aligned surface primitive.
#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    Cuboid { center: Point3, half: [f64; 3] },
    /// Open tube along `axis`, optionally closed by two discs.
    Cylinder { center: Point3, axis: usize, radius: f64, half_height: f64, caps: bool },
}

impl Primitive {
    pub fn cuboid(center: Point3, half: [f64; 3]) -> Self {
        Primitive::Cuboid { center, half }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Primitive::Cuboid { half: [a, b, c], .. } => 8.0 * (a * b + b * c + a * c),
            Primitive::Cylinder { radius, half_height, caps, .. } => {
                let side = 2.0 * PI * radius * 2.0 * half_height;
                if caps {
                    side + 2.0 * PI * radius * radius
                } else {
                    side
                }
            }
        }
    }

    pub fn bounds(&self) -> (Point3, Point3) {
        let (center, ext) = match *self {
            Primitive::Cuboid { center, half } => (center, half),
            Primitive::Cylinder { center, axis, radius, half_height, .. } => {
                let mut e = [radius; 3];
                e[axis] = half_height;
                (center, e)
            }
        };
        (
            [center[0] - ext[0], center[1] - ext[1], center[2] - ext[2]],
            [center[0] + ext[0], center[1] + ext[1], center[2] + ext[2]],
        )
    }

    /// `(p − shift)·scale` applied to the whole primitive.
    pub fn transformed(&self, shift: Point3, scale: f64) -> Self {
        let tc = |c: Point3| [(c[0] - shift[0]) * scale, (c[1] - shift[1]) * scale, (c[2] - shift[2]) * scale];
        match *self {
            Primitive::Cuboid { center, half } => Primitive::Cuboid { center: tc(center), half: half.map(|h| h * scale) },
            Primitive::Cylinder { center, axis, radius, half_height, caps } => Primitive::Cylinder {
                center: tc(center),
                axis,
                radius: radius * scale,
                half_height: half_height * scale,
                caps,
            },
        }
    }

    /// Uniform point on the surface.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point3 {
        match *self {
            Primitive::Cuboid { center, half } => {
                let face_area = [half[1] * half[2], half[0] * half[2], half[0] * half[1]];
                let total: f64 = face_area.iter().sum();
                let mut pick = rng.random_range(0.0..total);
                let mut axis = 2;
                for (a, &fa) in face_area.iter().enumerate() {
                    if pick < fa {
                        axis = a;
                        break;
                    }
                    pick -= fa;
                }
                let mut p = center;
                for a in 0..3 {
                    p[a] += if a == axis {
                        if rng.random_bool(0.5) { half[a] } else { -half[a] }
                    } else {
                        rng.random_range(-half[a]..=half[a])
                    };
                }
                p
            }
            Primitive::Cylinder { center, axis, radius, half_height, caps } => {
                let side = 2.0 * PI * radius * 2.0 * half_height;
                let cap = if caps { PI * radius * radius } else { 0.0 };
                let pick = rng.random_range(0.0..side + 2.0 * cap);
                let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                let mut p = center;
                if pick < side {
                    let t = rng.random_range(0.0..2.0 * PI);
                    p[u] += radius * t.cos();
                    p[v] += radius * t.sin();
                    p[axis] += rng.random_range(-half_height..=half_height);
                } else {
                    let t = rng.random_range(0.0..2.0 * PI);
                    let r = radius * rng.random_range(0.0f64..=1.0).sqrt();
                    p[u] += r * t.cos();
                    p[v] += r * t.sin();
                    p[axis] += if pick < side + cap { half_height } else { -half_height };
                }
                p
            }
        }
    }
}

/// Centers the primitives' joint bounding box on the origin and scales the
/// largest half-side to [`NORMALIZED_HALF`].
pub fn normalize_primitives(prims: &[Primitive]) -> Vec<Primitive> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in prims {
        let (a, b) = p.bounds();
        for k in 0..3 {
            lo[k] = lo[k].min(a[k]);
            hi[k] = hi[k].max(b[k]);
        }
    }
    let mid = [0, 1, 2].map(|k| 0.5 * (lo[k] + hi[k]));
    let half = (0..3).map(|k| 0.5 * (hi[k] - lo[k])).fold(0.0, f64::max);
    let scale = if half > 0.0 { NORMALIZED_HALF / half } else { 1.0 };
    prims.iter().map(|p| p.transformed(mid, scale)).collect()
}

/// Area-weighted surface samples plus the primitive index of every point.
pub fn sample_surface<R: Rng + ?Sized>(prims: &[Primitive], n: usize, rng: &mut R) -> (Vec<Point3>, Vec<usize>) {
    let areas: Vec<f64> = prims.iter().map(Primitive::area).collect();
    let total: f64 = areas.iter().sum();
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut pick = rng.random_range(0.0..total);
        let mut k = prims.len() - 1;
        for (i, &a) in areas.iter().enumerate() {
            if pick < a {
                k = i;
                break;
            }
            pick -= a;
        }
        let p = prims[k].sample(rng);
        points.push(p.map(|v| v.clamp(-NORMALIZED_HALF, NORMALIZED_HALF)));
        labels.push(k);
    }
    (points, labels)
}

/// `n` surface points of one instance of `class`. The same `(class, seed)`
/// always yields the same cloud.
pub fn generate_shape_points(class: ShapeClass, seed: u64, n: usize) -> (PointCloud, Vec<Primitive>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prims = normalize_primitives(&class.primitives(&mut rng));
    let (points, labels) = sample_surface(&prims, n, &mut rng);
    (PointCloud::new(points), prims, labels)
}

pub fn generate_shape(class: ShapeClass, seed: u64) -> PointCloud {
    generate_shape_points(class, seed, DEFAULT_POINTS).0
}
