use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use patmod::data::{DatasetSplit, ShapeClass};
use patmod::geometry::SamplingMode;
use patmod::model::ModelConfig;
use patmod::training::TrainConfig;

use crate::error::CliError;

/// Everything a run needs, read from a flat `key = value` file.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DatasetSplit,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            data: DatasetSplit::default(),
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("run"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: Display,
{
    value.parse().map_err(|e| CliError::Config(format!("{key}: cannot parse `{value}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError>
where
    T::Err: Display,
{
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn opt<T: Display>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_else(|| "none".into())
}

fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>, CliError>
where
    T::Err: Display,
{
    if value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

impl RunConfig {
    /// Applies one setting; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let (m, t, d) = (&mut self.model, &mut self.train, &mut self.data);
        let v = value.trim();
        match key {
            "points" => {
                m.points = parse(key, v)?;
                m.output_points = m.points;
            }
            "output_points" => m.output_points = parse(key, v)?,
            "regions" | "M" => m.regions = parse(key, v)?,
            "patterns" | "N" => m.patterns = parse(key, v)?,
            "pattern_points" | "P" => m.pattern_points = parse(key, v)?,
            "image_feature" | "H" => m.image_feature = parse(key, v)?,
            "region_feature" | "E" => m.region_feature = parse(key, v)?,
            "image_size" => m.image_size = parse(key, v)?,
            "image_channels" => m.image_channels = parse(key, v)?,
            "conv_channels" => m.conv_channels = parse_list(key, v)?,
            "conv_strides" => m.conv_strides = parse_list(key, v)?,
            "encoder_hidden" => m.encoder_hidden = parse(key, v)?,
            "learner_hidden" => m.learner_hidden = parse_list(key, v)?,
            "modularizer_hidden" => m.modularizer_hidden = parse_list(key, v)?,
            "customizer_hidden" => m.customizer_hidden = parse_list(key, v)?,
            "sampling_mode" => m.sampling_mode = parse::<SamplingMode>(key, v)?,
            "pattern_extent" => m.pattern_extent = parse(key, v)?,
            "offset_extent" => m.offset_extent = parse(key, v)?,
            "no_local" => m.ablations.no_local = parse(key, v)?,
            "no_patterns" => m.ablations.no_patterns = parse(key, v)?,
            "no_shift" => m.ablations.no_shift = parse(key, v)?,
            "no_l_region" => m.ablations.no_l_region = parse(key, v)?,
            "no_l_shape" => m.ablations.no_l_shape = parse(key, v)?,
            "alpha" => t.alpha = parse(key, v)?,
            "lr" => t.lr = parse(key, v)?,
            "batch_size" => t.batch_size = parse(key, v)?,
            "lr_decay" => t.lr_decay = parse(key, v)?,
            "decay_every_epochs" => t.decay_every_epochs = parse(key, v)?,
            "epochs" => t.epochs = parse(key, v)?,
            "seed" => t.seed = parse(key, v)?,
            "checkpoint_every" => t.checkpoint_every = parse(key, v)?,
            "eval_every" => t.eval_every = parse(key, v)?,
            "eval_points" => t.eval_points = parse_opt(key, v)?,
            "record_wall_time" => t.record_wall_time = parse(key, v)?,
            "max_steps" => t.max_steps = parse_opt(key, v)?,
            "seen_classes" => d.seen = parse_list::<ShapeClass>(key, v)?,
            "unseen_classes" => d.unseen = parse_list::<ShapeClass>(key, v)?,
            "train_per_class" => d.train_per_class = parse(key, v)?,
            "test_per_class" => d.test_per_class = parse(key, v)?,
            "master_seed" => d.master_seed = parse(key, v)?,
            "data_dir" => self.data_dir = PathBuf::from(v),
            "out_dir" => self.out_dir = PathBuf::from(v),
            other => return Err(CliError::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let (m, t, d) = (&self.model, &self.train, &self.data);
        let ab = &m.ablations;
        let classes = |c: &[ShapeClass]| join(c);
        vec![
            ("points", m.points.to_string()),
            ("output_points", m.output_points.to_string()),
            ("regions", m.regions.to_string()),
            ("patterns", m.patterns.to_string()),
            ("pattern_points", m.pattern_points.to_string()),
            ("image_feature", m.image_feature.to_string()),
            ("region_feature", m.region_feature.to_string()),
            ("image_size", m.image_size.to_string()),
            ("image_channels", m.image_channels.to_string()),
            ("conv_channels", join(&m.conv_channels)),
            ("conv_strides", join(&m.conv_strides)),
            ("encoder_hidden", m.encoder_hidden.to_string()),
            ("learner_hidden", join(&m.learner_hidden)),
            ("modularizer_hidden", join(&m.modularizer_hidden)),
            ("customizer_hidden", join(&m.customizer_hidden)),
            ("sampling_mode", m.sampling_mode.to_string()),
            ("pattern_extent", m.pattern_extent.to_string()),
            ("offset_extent", m.offset_extent.to_string()),
            ("no_local", ab.no_local.to_string()),
            ("no_patterns", ab.no_patterns.to_string()),
            ("no_shift", ab.no_shift.to_string()),
            ("no_l_region", ab.no_l_region.to_string()),
            ("no_l_shape", ab.no_l_shape.to_string()),
            ("alpha", t.alpha.to_string()),
            ("lr", t.lr.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("lr_decay", t.lr_decay.to_string()),
            ("decay_every_epochs", t.decay_every_epochs.to_string()),
            ("epochs", t.epochs.to_string()),
            ("seed", t.seed.to_string()),
            ("checkpoint_every", t.checkpoint_every.to_string()),
            ("eval_every", t.eval_every.to_string()),
            ("eval_points", opt(&t.eval_points)),
            ("record_wall_time", t.record_wall_time.to_string()),
            ("max_steps", opt(&t.max_steps)),
            ("seen_classes", classes(&d.seen)),
            ("unseen_classes", classes(&d.unseen)),
            ("train_per_class", d.train_per_class.to_string()),
            ("test_per_class", d.test_per_class.to_string()),
            ("master_seed", d.master_seed.to_string()),
            ("data_dir", self.data_dir.display().to_string()),
            ("out_dir", self.out_dir.display().to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# resolved configuration\n");
        for (k, v) in self.entries() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{origin}:{}: expected `key = value`, got `{line}`", i + 1)))?;
            self.set(k.trim(), v.trim()).map_err(|e| match e {
                CliError::Config(msg) => CliError::Config(format!("{origin}:{}: {msg}", i + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    /// Dataset sizes follow the model's point count and image size.
    pub fn dataset_split(&self) -> DatasetSplit {
        DatasetSplit { points: self.model.points, image_size: self.model.image_size, ..self.data.clone() }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate()?;
        self.train.validate()?;
        self.dataset_split().validate()?;
        Ok(())
    }
}
