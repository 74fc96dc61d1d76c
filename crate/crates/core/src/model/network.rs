use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::{farthest_point_indices, grid_lattice, split_regions, Point3, PointCloud, RegionSet};
use crate::numerics::{Graph, ParamStore, Tensor, Var};

use super::layers::{Dense, ImageEncoder, Mlp};
use super::{ModelConfig, ModelError};

/// Which rows of the pattern-modularized regions get computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RowMode {
    /// Only rows whose index is a real point of the region. These are the
    /// only rows that survive padded-index removal, so `F` is unchanged.
    #[default]
    Compact,
    /// All `N·P` rows of every region, padded ones included.
    Full,
}

/// Box used to split the initial prediction into regions.
#[derive(Clone, Copy, Debug)]
pub enum SplitReference<'a> {
    /// Training: the ground-truth cloud.
    GroundTruth(&'a PointCloud),
    /// Inference: the model's own initial prediction.
    Prediction,
}

/// Shared base lattice plus one fixed offset per learner.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternBank {
    pub lattice: Vec<Point3>,
    pub offsets: Vec<Point3>,
}

impl PatternBank {
    /// Input points of learner `n`: the lattice translated by its offset.
    pub fn input(&self, n: usize) -> Tensor {
        let o = self.offsets[n];
        let rows: Vec<[f64; 3]> = self.lattice.iter().map(|p| [p[0] + o[0], p[1] + o[1], p[2] + o[2]]).collect();
        Tensor::from_rows(&rows)
    }
}

/// Radical inverse of `index` in `base`.
pub fn halton(mut index: usize, base: usize) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

/// `n` Halton points (bases 2, 3, 5, starting at index 1) scaled to `[−e, e]³`.
pub fn halton_offsets(n: usize, extent: f64) -> Vec<Point3> {
    (1..=n).map(|i| [2, 3, 5].map(|b| extent * (2.0 * halton(i, b) - 1.0))).collect()
}

/// Local part of a forward pass. Absent under `no_local`.
///
/// All per-row matrices (`r_prime_local`, `r_prime`, `t`, `u`) stack the
/// regions in index order; region `m` owns `row_ranges[m]`. In full row mode
/// every range is `N·P` rows long, in compact mode it covers the region's
/// real points only.
#[derive(Debug)]
pub struct LocalTrace {
    pub regions: RegionSet,
    pub row_mode: RowMode,
    /// Region centers, `M×3`.
    pub centers: Var,
    /// Region features, `M×E`.
    pub f_r: Var,
    /// Learner outputs, one `P×3` node each. Empty under `no_patterns`.
    pub patterns: Vec<Var>,
    pub r_prime_local: Var,
    /// Modularized regions moved back to object coordinates.
    pub r_prime: Var,
    pub t: Option<Var>,
    pub u: Var,
    pub row_ranges: Vec<Range<usize>>,
    /// Rows of `u` that survive padded-index removal, in order.
    pub kept: Vec<usize>,
}

impl LocalTrace {
    /// Rows of region `m` in the stacked matrices that hold real points.
    pub fn kept_range(&self, m: usize) -> Range<usize> {
        let start = self.row_ranges[m].start;
        start..start + self.regions.regions[m].real_count()
    }
}

#[derive(Debug)]
pub struct ForwardTrace {
    pub f_i: Var,
    /// Initial prediction `S`, `S×3`.
    pub s_cloud: Var,
    pub local: Option<LocalTrace>,
    /// Final reconstruction.
    pub f_cloud: Var,
}

/// Trainable scalars per component.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParamCounts {
    pub encoder: usize,
    pub decoder: usize,
    pub learners: Vec<usize>,
    pub region_encoder: usize,
    pub modularizers: Vec<usize>,
    pub customizer: usize,
    pub total: usize,
}

impl ParamCounts {
    pub fn from_store(store: &ParamStore, patterns: usize) -> Self {
        let per = |kind: &str| -> Vec<usize> {
            let v: Vec<usize> = (0..patterns).map(|n| store.scalars_with_prefix(&format!("{kind}.{n}."))).collect();
            if v.iter().all(|&c| c == 0) {
                Vec::new()
            } else {
                v
            }
        };
        Self {
            encoder: store.scalars_with_prefix("encoder."),
            decoder: store.scalars_with_prefix("decoder."),
            learners: per("learner"),
            region_encoder: store.scalars_with_prefix("region_encoder."),
            modularizers: per("modularizer"),
            customizer: store.scalars_with_prefix("customizer."),
            total: store.trainable_scalars(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    encoder: ImageEncoder,
    decoder: Dense,
    bank: PatternBank,
    learners: Vec<Mlp>,
    region_encoder: Option<Dense>,
    modularizers: Vec<Mlp>,
    customizer: Option<Mlp>,
}

impl Model {
    /// Builds a freshly initialized model. Components switched off by the
    /// ablation flags are not created.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let c = &config;
        let abl = c.ablations;

        let encoder = ImageEncoder::register(
            &mut params,
            &mut rng,
            [c.image_channels, c.image_size, c.image_size],
            &c.conv_channels,
            &c.conv_strides,
            c.conv_output_len(),
            c.encoder_hidden,
            c.image_feature,
        )?;
        let decoder = Dense::register(&mut params, &mut rng, "decoder", c.image_feature, 3 * c.points)?;

        let bank = PatternBank {
            lattice: grid_lattice(c.pattern_points, c.pattern_extent, c.sampling_mode)?,
            offsets: halton_offsets(c.patterns, c.offset_extent),
        };

        let (mut learners, mut modularizers) = (Vec::new(), Vec::new());
        let mut region_encoder = None;
        let mut customizer = None;
        if !abl.no_local {
            region_encoder = Some(Dense::register(&mut params, &mut rng, "region_encoder", 3, c.region_feature)?);
            if !abl.no_patterns {
                for n in 0..c.patterns {
                    let widths = [&[3][..], &c.learner_hidden, &[3]].concat();
                    learners.push(Mlp::register(&mut params, &mut rng, &format!("learner.{n}."), &widths)?);
                }
                for n in 0..c.patterns {
                    let widths = [&[3 + c.region_feature][..], &c.modularizer_hidden, &[3]].concat();
                    modularizers.push(Mlp::register(&mut params, &mut rng, &format!("modularizer.{n}."), &widths)?);
                }
            }
            if !abl.no_shift {
                let widths = [&[3 + c.image_feature][..], &c.customizer_hidden, &[3]].concat();
                customizer = Some(Mlp::register(&mut params, &mut rng, "customizer.", &widths)?);
            }
        }
        Ok(Self { config, params, encoder, decoder, bank, learners, region_encoder, modularizers, customizer })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn bank(&self) -> &PatternBank {
        &self.bank
    }

    pub fn param_count(&self) -> ParamCounts {
        ParamCounts::from_store(&self.params, self.config.patterns)
    }

    pub fn encode_image(&self, g: &mut Graph<'_>, image: &Tensor) -> Result<Var, ModelError> {
        let x = g.leaf(image.clone());
        self.encoder.forward(g, x)
    }

    /// `S×3` initial prediction from a `1×H` feature.
    pub fn decode_shape(&self, g: &mut Graph<'_>, f_i: Var) -> Result<Var, ModelError> {
        let h = self.decoder.forward(g, f_i)?;
        let h = g.tanh(h)?;
        Ok(g.reshape(h, &[self.config.points, 3])?)
    }

    /// Current learner outputs, one `P×3` node per pattern.
    pub fn patterns(&self, g: &mut Graph<'_>) -> Result<Vec<Var>, ModelError> {
        self.learners
            .iter()
            .enumerate()
            .map(|(n, mlp)| {
                let x = g.leaf(self.bank.input(n));
                mlp.forward(g, x)
            })
            .collect()
    }

    fn region_encoder(&self) -> Result<&Dense, ModelError> {
        self.region_encoder
            .as_ref()
            .ok_or_else(|| ModelError::Contract("model has no region encoder (no_local)".into()))
    }

    /// `1×E` feature of one centered region; only rows with a true mask
    /// entry take part in the max-pool. No real rows gives the zero feature.
    pub fn encode_region(&self, g: &mut Graph<'_>, points: Var, mask: Option<&[bool]>) -> Result<Var, ModelError> {
        let h = self.region_encoder()?.forward(g, points)?;
        let h = g.relu(h)?;
        Ok(g.max_over_rows_masked(h, mask)?)
    }

    /// All `N·P` modularized rows of one region from its `1×E` feature.
    pub fn modularize(&self, g: &mut Graph<'_>, f_r: Var, patterns: &[Var]) -> Result<Var, ModelError> {
        self.modularize_rows(g, f_r, patterns, &[self.config.region_capacity()])
    }

    /// Modularized rows for several regions at once, region-major. Region `m`
    /// gets rows `0..rows_of[m]`; row `i` comes from pattern `i / P`.
    fn modularize_rows(
        &self,
        g: &mut Graph<'_>,
        f_r: Var,
        patterns: &[Var],
        rows_of: &[usize],
    ) -> Result<Var, ModelError> {
        let p = self.config.pattern_points;
        if patterns.len() != self.modularizers.len() || patterns.is_empty() {
            return Err(ModelError::Contract(format!(
                "{} patterns for {} modularizers",
                patterns.len(),
                self.modularizers.len()
            )));
        }
        let span = |rows: usize, n: usize| (n * p).min(rows)..((n + 1) * p).min(rows);

        let mut pieces = Vec::new();
        let mut piece_start = vec![0; patterns.len()];
        let mut total = 0;
        for (n, (mlp, &pattern)) in self.modularizers.iter().zip(patterns).enumerate() {
            let mut lat = Vec::new();
            let mut reg = Vec::new();
            for (m, &rows) in rows_of.iter().enumerate() {
                for i in span(rows, n) {
                    lat.push(i - n * p);
                    reg.push(m);
                }
            }
            if lat.is_empty() {
                continue;
            }
            let (w_point, feat) = mlp.split_first(g, f_r)?;
            let point_term = g.matmul(pattern, w_point)?;
            let a = g.gather_rows(point_term, &lat)?;
            let b = g.gather_rows(feat, &reg)?;
            let pre = g.add(a, b)?;
            piece_start[n] = total;
            total += lat.len();
            pieces.push(mlp.finish(g, pre)?);
        }
        let stacked = if pieces.len() == 1 { pieces[0] } else { g.concat(&pieces, 0)? };

        // pieces are pattern-major; reorder to region-major
        let mut offset_in_piece = vec![0; patterns.len()];
        let mut perm = Vec::with_capacity(total);
        for &rows in rows_of {
            for (n, off) in offset_in_piece.iter_mut().enumerate() {
                let r = span(rows, n);
                let len = r.len();
                perm.extend((0..len).map(|k| piece_start[n] + *off + k));
                *off += len;
            }
        }
        if perm.iter().enumerate().all(|(i, &j)| i == j) {
            return Ok(stacked);
        }
        Ok(g.gather_rows(stacked, &perm)?)
    }

    /// Shift `t` and customized rows `U = R' + t` for object-frame rows `R'`.
    pub fn customize(&self, g: &mut Graph<'_>, r_prime: Var, f_i: Var) -> Result<(Var, Var), ModelError> {
        let mlp = self
            .customizer
            .as_ref()
            .ok_or_else(|| ModelError::Contract("model has no customizer (no_shift)".into()))?;
        let (w_point, feat) = mlp.split_first(g, f_i)?;
        let pre = g.matmul(r_prime, w_point)?;
        let pre = g.add(pre, feat)?;
        let t = mlp.finish(g, pre)?;
        let u = g.add(r_prime, t)?;
        Ok((t, u))
    }

    /// Keeps the rows of `u` listed in `kept`; if that exceeds `F`, reduces
    /// to `F` points by farthest-point sampling.
    pub fn assemble_final(&self, g: &mut Graph<'_>, u: Var, kept: &[usize]) -> Result<Var, ModelError> {
        if kept.is_empty() {
            return Err(ModelError::Pipeline("every region is empty; nothing to assemble".into()));
        }
        let f = g.gather_rows(u, kept)?;
        if kept.len() <= self.config.output_points {
            return Ok(f);
        }
        let cloud = PointCloud::from_tensor(g.value(f))?;
        let idx = farthest_point_indices(&cloud, self.config.output_points)?;
        Ok(g.gather_rows(f, &idx)?)
    }

    pub fn forward(
        &self,
        g: &mut Graph<'_>,
        image: &Tensor,
        reference: SplitReference<'_>,
        mode: RowMode,
    ) -> Result<ForwardTrace, ModelError> {
        let f_i = self.encode_image(g, image)?;
        self.forward_from_feature(g, f_i, reference, mode)
    }

    /// Everything downstream of the image encoder.
    pub fn forward_from_feature(
        &self,
        g: &mut Graph<'_>,
        f_i: Var,
        reference: SplitReference<'_>,
        mode: RowMode,
    ) -> Result<ForwardTrace, ModelError> {
        let cfg = &self.config;
        let s = self.decode_shape(g, f_i)?;
        if cfg.ablations.no_local {
            return Ok(ForwardTrace { f_i, s_cloud: s, local: None, f_cloud: s });
        }
        let s_points = PointCloud::from_tensor(g.value(s))?;
        let reference = match reference {
            SplitReference::GroundTruth(gt) => gt,
            SplitReference::Prediction => &s_points,
        };
        let regions = split_regions(&s_points, reference, cfg.regions, cfg.region_capacity())?;

        // real points, region-major
        let mut src = Vec::new();
        let mut real_ranges = Vec::with_capacity(cfg.regions);
        let mut real_region = Vec::new();
        for (m, r) in regions.regions.iter().enumerate() {
            let start = src.len();
            src.extend_from_slice(&r.source_indices);
            real_region.extend(std::iter::repeat_n(m, r.real_count()));
            real_ranges.push(start..src.len());
        }
        if src.is_empty() {
            return Err(ModelError::Pipeline("every region is empty".into()));
        }
        let real = g.gather_rows(s, &src)?;

        let mut center_rows = Vec::with_capacity(cfg.regions);
        for range in &real_ranges {
            center_rows.push(if range.is_empty() {
                g.leaf(Tensor::zeros(&[1, 3]))
            } else {
                let rows = g.slice_rows(real, range.start, range.end)?;
                g.mean_rows(rows)?
            });
        }
        let centers = g.concat(&center_rows, 0)?;
        let real_centers = g.gather_rows(centers, &real_region)?;
        let centered = g.sub(real, real_centers)?;

        let h = self.region_encoder()?.forward(g, centered)?;
        let h = g.relu(h)?;
        let mut features = Vec::with_capacity(cfg.regions);
        for range in &real_ranges {
            features.push(if range.is_empty() {
                g.leaf(Tensor::zeros(&[1, cfg.region_feature]))
            } else {
                let rows = g.slice_rows(h, range.start, range.end)?;
                g.max_over_rows_masked(rows, None)?
            });
        }
        let f_r = g.concat(&features, 0)?;

        let rows_of: Vec<usize> = match mode {
            RowMode::Compact => real_ranges.iter().map(|r| r.len()).collect(),
            RowMode::Full => vec![cfg.region_capacity(); cfg.regions],
        };
        let mut row_ranges = Vec::with_capacity(cfg.regions);
        let mut row_region = Vec::new();
        let mut start = 0;
        for (m, &rows) in rows_of.iter().enumerate() {
            row_ranges.push(start..start + rows);
            row_region.extend(std::iter::repeat_n(m, rows));
            start += rows;
        }

        let (patterns, r_prime_local) = if cfg.ablations.no_patterns {
            let local = match mode {
                RowMode::Compact => centered,
                RowMode::Full => {
                    let zero = g.leaf(Tensor::zeros(&[1, 3]));
                    let padded = g.concat(&[centered, zero], 0)?;
                    let pad_row = src.len();
                    let idx: Vec<usize> = rows_of
                        .iter()
                        .zip(&real_ranges)
                        .flat_map(|(&rows, real)| (0..rows).map(move |i| if i < real.len() { real.start + i } else { pad_row }))
                        .collect();
                    g.gather_rows(padded, &idx)?
                }
            };
            (Vec::new(), local)
        } else {
            let patterns = self.patterns(g)?;
            let local = self.modularize_rows(g, f_r, &patterns, &rows_of)?;
            (patterns, local)
        };

        let row_centers = g.gather_rows(centers, &row_region)?;
        let r_prime = g.add(r_prime_local, row_centers)?;
        let (t, u) = if cfg.ablations.no_shift {
            (None, r_prime)
        } else {
            let (t, u) = self.customize(g, r_prime, f_i)?;
            (Some(t), u)
        };

        let kept: Vec<usize> = row_ranges
            .iter()
            .zip(&real_ranges)
            .flat_map(|(rows, real)| rows.start..rows.start + real.len())
            .collect();
        let f_cloud = self.assemble_final(g, u, &kept)?;

        let local = LocalTrace {
            regions,
            row_mode: mode,
            centers,
            f_r,
            patterns,
            r_prime_local,
            r_prime,
            t,
            u,
            row_ranges,
            kept,
        };
        Ok(ForwardTrace { f_i, s_cloud: s, local: Some(local), f_cloud })
    }

    /// Inference reconstruction: regions come from the model's own initial
    /// prediction, so no ground truth is involved.
    pub fn predict(&self, image: &Tensor) -> Result<PointCloud, ModelError> {
        let mut g = Graph::with_params(&self.params);
        let trace = self.forward(&mut g, image, SplitReference::Prediction, RowMode::Compact)?;
        Ok(PointCloud::from_tensor(g.value(trace.f_cloud))?)
    }

    /// Inference reconstruction from a given image feature.
    pub fn predict_from_feature(&self, f_i: &Tensor) -> Result<PointCloud, ModelError> {
        let mut g = Graph::with_params(&self.params);
        let f = g.leaf(f_i.clone());
        let trace = self.forward_from_feature(&mut g, f, SplitReference::Prediction, RowMode::Compact)?;
        Ok(PointCloud::from_tensor(g.value(trace.f_cloud))?)
    }

    /// `1×H` image feature without keeping a tape around.
    pub fn image_feature(&self, image: &Tensor) -> Result<Tensor, ModelError> {
        let mut g = Graph::with_params(&self.params);
        let f = self.encode_image(&mut g, image)?;
        Ok(g.value(f).clone())
    }

    /// Rebuilds a model around an existing parameter store (checkpoint load).
    pub(crate) fn with_params(config: ModelConfig, params: ParamStore) -> Result<Self, ModelError> {
        let mut model = Self::new(config, 0)?;
        if model.params.len() != params.len() {
            return Err(ModelError::Format(format!(
                "checkpoint holds {} parameters, configuration expects {}",
                params.len(),
                model.params.len()
            )));
        }
        for ((_, want), (_, got)) in model.params.iter().zip(params.iter()) {
            if want.name != got.name || want.tensor.shape() != got.tensor.shape() {
                return Err(ModelError::Format(format!(
                    "parameter `{}` {:?} does not match expected `{}` {:?}",
                    got.name,
                    got.tensor.shape(),
                    want.name,
                    want.tensor.shape()
                )));
            }
        }
        model.params = params;
        Ok(model)
    }
}
