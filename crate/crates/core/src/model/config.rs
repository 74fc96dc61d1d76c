use serde::{Deserialize, Serialize};

use crate::geometry::SamplingMode;

use super::ModelError;

/// Kernel size and padding shared by every conv layer.
pub const CONV_KERNEL: usize = 3;
pub const CONV_PAD: usize = 1;

/// Ablation switches. All off is the full model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablations {
    /// Image encoder and shape decoder only; the final cloud is `S`.
    pub no_local: bool,
    /// Customizer consumes the centered region points instead of pattern output.
    pub no_patterns: bool,
    /// Shift `t` forced to zero, no customizer network.
    pub no_shift: bool,
    /// Region loss replaced by a whole-shape Chamfer on `F`.
    pub no_l_region: bool,
    /// Drops the `α·L_Shape` term.
    pub no_l_shape: bool,
}

impl Ablations {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.no_local && (self.no_patterns || self.no_shift || self.no_l_region || self.no_l_shape) {
            return Err(ModelError::Config(
                "no_local cannot be combined with no_patterns, no_shift, no_l_region or no_l_shape".into(),
            ));
        }
        Ok(())
    }

    /// Short tag such as `full` or `no_shift+no_l_shape`.
    pub fn tag(&self) -> String {
        let names = [
            (self.no_local, "no_local"),
            (self.no_patterns, "no_patterns"),
            (self.no_shift, "no_shift"),
            (self.no_l_region, "no_l_region"),
            (self.no_l_shape, "no_l_shape"),
        ];
        let on: Vec<&str> = names.iter().filter(|(f, _)| *f).map(|(_, n)| *n).collect();
        if on.is_empty() {
            "full".into()
        } else {
            on.join("+")
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Initial prediction size `S`.
    pub points: usize,
    /// Final reconstruction size `F`.
    pub output_points: usize,
    /// Region count `M`, a perfect cube.
    pub regions: usize,
    /// Pattern count `N`.
    pub patterns: usize,
    /// Points per pattern `P`.
    pub pattern_points: usize,
    /// Image feature width `H`.
    pub image_feature: usize,
    /// Region feature width `E`.
    pub region_feature: usize,
    pub image_size: usize,
    pub image_channels: usize,
    pub conv_channels: Vec<usize>,
    pub conv_strides: Vec<usize>,
    /// Width of the first fully connected encoder layer.
    pub encoder_hidden: usize,
    pub learner_hidden: Vec<usize>,
    pub modularizer_hidden: Vec<usize>,
    pub customizer_hidden: Vec<usize>,
    pub sampling_mode: SamplingMode,
    /// Half-width of the base lattice.
    pub pattern_extent: f64,
    /// Half-width of the cube the per-learner offsets are drawn from.
    pub offset_extent: f64,
    pub ablations: Ablations,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            points: 2048,
            output_points: 2048,
            regions: 8,
            patterns: 8,
            pattern_points: 256,
            image_feature: 1024,
            region_feature: 64,
            image_size: 64,
            image_channels: 1,
            conv_channels: vec![16, 32, 32, 64, 64, 128, 128],
            conv_strides: vec![2, 1, 2, 1, 2, 1, 2],
            encoder_hidden: 1024,
            learner_hidden: vec![64, 256],
            modularizer_hidden: vec![512, 256, 128],
            customizer_hidden: vec![512, 128],
            sampling_mode: SamplingMode::Voxel,
            pattern_extent: 0.5,
            offset_extent: 0.25,
            ablations: Ablations::default(),
        }
    }
}

impl ModelConfig {
    /// Tiny configuration used for exhaustive gradient checks: the full
    /// structure at S=F=32, M=8, N=2, P=8, H=16, E=8 on an 8×8 image, with
    /// narrow hidden layers.
    pub fn miniature() -> Self {
        Self {
            points: 32,
            output_points: 32,
            regions: 8,
            patterns: 2,
            pattern_points: 8,
            image_feature: 16,
            region_feature: 8,
            image_size: 8,
            image_channels: 1,
            conv_channels: vec![4; 7],
            conv_strides: vec![2, 1, 2, 1, 2, 1, 2],
            encoder_hidden: 8,
            learner_hidden: vec![6, 6],
            modularizer_hidden: vec![6, 6, 6],
            customizer_hidden: vec![6, 6],
            ..Self::default()
        }
    }

    /// Row capacity of a padded region, `N·P`.
    pub fn region_capacity(&self) -> usize {
        self.patterns * self.pattern_points
    }

    pub fn regions_per_edge(&self) -> Option<usize> {
        (1..=self.regions).take_while(|k| k * k * k <= self.regions).find(|k| k * k * k == self.regions)
    }

    /// Spatial size after each conv layer.
    pub fn conv_sizes(&self) -> Vec<usize> {
        let mut s = self.image_size;
        self.conv_strides
            .iter()
            .map(|&st| {
                s = (s + 2 * CONV_PAD).saturating_sub(CONV_KERNEL) / st.max(1) + 1;
                s
            })
            .collect()
    }

    /// Length of the flattened conv output.
    pub fn conv_output_len(&self) -> usize {
        let side = self.conv_sizes().last().copied().unwrap_or(self.image_size);
        let ch = self.conv_channels.last().copied().unwrap_or(self.image_channels);
        ch * side * side
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Config(m));
        self.ablations.validate()?;
        let positive = [
            ("points", self.points),
            ("output_points", self.output_points),
            ("regions", self.regions),
            ("patterns", self.patterns),
            ("pattern_points", self.pattern_points),
            ("image_feature", self.image_feature),
            ("region_feature", self.region_feature),
            ("image_size", self.image_size),
            ("image_channels", self.image_channels),
            ("encoder_hidden", self.encoder_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return err(format!("{name} must be positive"));
            }
        }
        if self.points != self.output_points {
            return err(format!("points ({}) must equal output_points ({})", self.points, self.output_points));
        }
        if self.regions_per_edge().is_none() {
            return err(format!("regions ({}) must be a perfect cube", self.regions));
        }
        if self.conv_channels.len() != self.conv_strides.len() {
            return err("conv_channels and conv_strides differ in length".into());
        }
        if self.conv_channels.contains(&0) || self.conv_strides.contains(&0) {
            return err("conv channels and strides must be positive".into());
        }
        if self.image_size + 2 * CONV_PAD < CONV_KERNEL {
            return err(format!("image_size {} is too small for the conv stack", self.image_size));
        }
        for (name, w) in [
            ("learner_hidden", &self.learner_hidden),
            ("modularizer_hidden", &self.modularizer_hidden),
            ("customizer_hidden", &self.customizer_hidden),
        ] {
            if w.is_empty() || w.contains(&0) {
                return err(format!("{name} needs at least one positive width"));
            }
        }
        if !(self.pattern_extent > 0.0 && self.pattern_extent.is_finite()) {
            return err("pattern_extent must be positive".into());
        }
        if !(self.offset_extent >= 0.0 && self.offset_extent.is_finite()) {
            return err("offset_extent must be non-negative".into());
        }
        Ok(())
    }
}
