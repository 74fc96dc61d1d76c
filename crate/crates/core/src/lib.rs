//! Single-image point cloud reconstruction through learned local region
//! patterns.

pub mod data;
pub mod geometry;
pub mod model;
pub mod numerics;
pub mod training;
