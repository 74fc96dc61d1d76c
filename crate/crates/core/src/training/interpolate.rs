use crate::geometry::PointCloud;
use crate::model::Model;
use crate::numerics::Tensor;

use super::TrainError;

/// Reconstructions from `steps` image features spaced uniformly between
/// those of `a` and `b`, paired with their λ. The endpoints reuse the
/// features of `a` and `b` unchanged.
pub fn interpolate_latent(model: &Model, a: &Tensor, b: &Tensor, steps: usize) -> Result<Vec<(f64, PointCloud)>, TrainError> {
    if steps < 2 {
        return Err(TrainError::Config(format!("interpolation needs at least 2 steps, got {steps}")));
    }
    let fa = model.image_feature(a)?;
    let fb = model.image_feature(b)?;
    (0..steps)
        .map(|k| {
            let lambda = k as f64 / (steps - 1) as f64;
            let f = if k == 0 {
                fa.clone()
            } else if k == steps - 1 {
                fb.clone()
            } else {
                let data = fa.data().iter().zip(fb.data()).map(|(x, y)| (1.0 - lambda) * x + lambda * y).collect();
                Tensor::new(fa.shape().to_vec(), data)?
            };
            Ok((lambda, model.predict_from_feature(&f)?))
        })
        .collect()
}
