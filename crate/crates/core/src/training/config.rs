use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight of the whole-shape term.
    pub alpha: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub lr_decay: f64,
    pub decay_every_epochs: usize,
    pub epochs: usize,
    /// Seeds the model initialisation and the per-epoch shuffles.
    pub seed: u64,
    /// Worker threads for batch members; 1 runs strictly sequentially.
    pub threads: usize,
    /// Final checkpoint, also written every `checkpoint_every` epochs when
    /// that is nonzero.
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_every: usize,
    /// Evaluate held-out splits every this many epochs (and after the last);
    /// 0 evaluates after the last epoch only.
    pub eval_every: usize,
    /// Evaluation cardinality; `None` matches prediction and ground truth.
    pub eval_points: Option<usize>,
    /// Fill `wall_ms`; off by default so that metrics files are reproducible.
    pub record_wall_time: bool,
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            lr: 1e-4,
            batch_size: 4,
            lr_decay: 0.95,
            decay_every_epochs: 70,
            epochs: 100,
            seed: 0,
            threads: 1,
            checkpoint: None,
            checkpoint_every: 0,
            eval_every: 0,
            eval_points: None,
            record_wall_time: false,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad(format!("alpha must be finite and non-negative, got {}", self.alpha));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad(format!("lr must be finite and non-negative, got {}", self.lr));
        }
        if !(self.lr_decay.is_finite() && self.lr_decay > 0.0) {
            return bad(format!("lr_decay must be positive, got {}", self.lr_decay));
        }
        if self.batch_size == 0 || self.decay_every_epochs == 0 || self.threads == 0 {
            return bad("batch_size, decay_every_epochs and threads must be at least 1".into());
        }
        if self.eval_points == Some(0) {
            return bad("eval_points must be positive".into());
        }
        Ok(())
    }
}

/// Step-decayed learning rate: `lr · decay^⌊epoch / every⌋`.
pub fn lr_at(epoch: usize, config: &TrainConfig) -> f64 {
    let k = (epoch / config.decay_every_epochs) as i32;
    config.lr * config.lr_decay.powi(k)
}
