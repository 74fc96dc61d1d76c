use std::fs;
use std::hash::Hasher;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::{self, CloudFormat};
use super::render::{render_image, View, DEFAULT_IMAGE_SIZE};
use super::shapes::{generate_shape_points, ShapeClass, DEFAULT_POINTS};
use super::DataError;
use crate::geometry::PointCloud;
use crate::numerics::Tensor;

pub const MANIFEST: &str = "manifest.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Train,
    TestSeen,
    TestUnseen,
}

impl SplitKind {
    pub const ALL: [SplitKind; 3] = [SplitKind::Train, SplitKind::TestSeen, SplitKind::TestUnseen];

    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::TestSeen => "test_seen",
            SplitKind::TestUnseen => "test_unseen",
        }
    }
}

impl std::str::FromStr for SplitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(SplitKind::Train),
            "test_seen" | "seen" => Ok(SplitKind::TestSeen),
            "test_unseen" | "unseen" => Ok(SplitKind::TestUnseen),
            other => Err(format!("unknown split `{other}` (expected train, seen or unseen)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `1×s×s`, quantised to the 8-bit grid so that the PGM on disk holds it
    /// exactly.
    pub image: Tensor,
    pub cloud: PointCloud,
    pub class: ShapeClass,
    pub seed: u64,
}

impl Sample {
    pub fn class_name(&self) -> &'static str {
        self.class.name()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seen: Vec<ShapeClass>,
    pub unseen: Vec<ShapeClass>,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub master_seed: u64,
    pub points: usize,
    pub image_size: usize,
}

impl Default for DatasetSplit {
    fn default() -> Self {
        Self {
            seen: vec![ShapeClass::Table, ShapeClass::Chair, ShapeClass::CrossPlane],
            unseen: vec![ShapeClass::Lamp, ShapeClass::SofaBlock],
            train_per_class: 16,
            test_per_class: 4,
            master_seed: 0,
            points: DEFAULT_POINTS,
            image_size: DEFAULT_IMAGE_SIZE,
        }
    }
}

impl DatasetSplit {
    pub fn validate(&self) -> Result<(), DataError> {
        if let Some(c) = self.seen.iter().find(|c| self.unseen.contains(c)) {
            return Err(DataError::Config(format!("class {c} is listed as both seen and unseen")));
        }
        if self.seen.is_empty() {
            return Err(DataError::Config("at least one seen class is required".into()));
        }
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(DataError::Config("per-class sample counts must be at least 1".into()));
        }
        if self.points == 0 || self.image_size == 0 {
            return Err(DataError::Config("points and image_size must be positive".into()));
        }
        Ok(())
    }

    /// Per-sample seed: FNV-1a over the master seed, class, split and index.
    pub fn sample_seed(&self, class: ShapeClass, split: SplitKind, index: usize) -> u64 {
        let mut h = FnvHasher::default();
        h.write(&self.master_seed.to_le_bytes());
        h.write(class.name().as_bytes());
        h.write(&[0xff]);
        h.write(split.name().as_bytes());
        h.write(&[0xff]);
        h.write(&(index as u64).to_le_bytes());
        h.finish()
    }

    fn entries(&self, split: SplitKind) -> Vec<(ShapeClass, u64)> {
        let (classes, per) = match split {
            SplitKind::Train => (&self.seen, self.train_per_class),
            SplitKind::TestSeen => (&self.seen, self.test_per_class),
            SplitKind::TestUnseen => (&self.unseen, self.test_per_class),
        };
        classes
            .iter()
            .flat_map(|&c| (0..per).map(move |i| (c, i)))
            .map(|(c, i)| (c, self.sample_seed(c, split, i)))
            .collect()
    }
}

/// Rendered image with values snapped to `q/255`.
pub fn sample_image(cloud: &PointCloud, size: usize) -> Tensor {
    let mut img = render_image(cloud, View::Default, size);
    for v in img.data_mut() {
        *v = io::quantize(*v) as f64 / 255.0;
    }
    img
}

pub fn make_sample(class: ShapeClass, seed: u64, points: usize, image_size: usize) -> Sample {
    let cloud = generate_shape_points(class, seed, points).0;
    let image = sample_image(&cloud, image_size);
    Sample { image, cloud, class, seed }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub test_seen: Vec<Sample>,
    pub test_unseen: Vec<Sample>,
}

impl Dataset {
    pub fn split(&self, kind: SplitKind) -> &[Sample] {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::TestSeen => &self.test_seen,
            SplitKind::TestUnseen => &self.test_unseen,
        }
    }

    fn split_mut(&mut self, kind: SplitKind) -> &mut Vec<Sample> {
        match kind {
            SplitKind::Train => &mut self.train,
            SplitKind::TestSeen => &mut self.test_seen,
            SplitKind::TestUnseen => &mut self.test_unseen,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.test_seen.len() + self.test_unseen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn make_dataset(split: &DatasetSplit) -> Result<Dataset, DataError> {
    split.validate()?;
    let mut out = Dataset::default();
    for kind in SplitKind::ALL {
        *out.split_mut(kind) = split
            .entries(kind)
            .into_par_iter()
            .map(|(c, seed)| make_sample(c, seed, split.points, split.image_size))
            .collect();
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub class: ShapeClass,
    pub seed: u64,
    pub cloud_path: String,
    pub image_path: String,
    pub split: SplitKind,
}

/// Writes clouds (xyz), images (PGM) and the manifest under `dir`. An
/// existing directory is refused unless `force` is set.
pub fn write_dataset(dir: &Path, data: &Dataset, force: bool) -> Result<Vec<ManifestRecord>, DataError> {
    if dir.exists() && !force {
        return Err(DataError::Exists(dir.display().to_string()));
    }
    let mkdir = |p: &Path| fs::create_dir_all(p).map_err(|e| DataError::Io { path: p.display().to_string(), source: e });
    let mut records = Vec::with_capacity(data.len());
    for kind in SplitKind::ALL {
        let sub = dir.join(kind.name());
        mkdir(&sub)?;
        for (i, s) in data.split(kind).iter().enumerate() {
            let stem = format!("{}/{}_{i:04}", kind.name(), s.class.name());
            let rec = ManifestRecord {
                class: s.class,
                seed: s.seed,
                cloud_path: format!("{stem}.xyz"),
                image_path: format!("{stem}.pgm"),
                split: kind,
            };
            io::write_cloud(&dir.join(&rec.cloud_path), &s.cloud, CloudFormat::XyzText)?;
            io::write_image(&dir.join(&rec.image_path), &s.image)?;
            records.push(rec);
        }
    }
    let mut text = String::new();
    for r in &records {
        text.push_str(&serde_json::to_string(r).expect("manifest records serialise"));
        text.push('\n');
    }
    io::write_file(&dir.join(MANIFEST), text.as_bytes())?;
    Ok(records)
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestRecord>, DataError> {
    let path = dir.join(MANIFEST);
    let bytes = io::read_file(&path)?;
    let text = String::from_utf8_lossy(&bytes);
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| DataError::Parse {
                path: path.display().to_string(),
                location: format!("line {}", i + 1),
                message: e.to_string(),
            })
        })
        .collect()
}

fn resolve(dir: &Path, rel: &str) -> PathBuf {
    dir.join(rel)
}

/// Loads the samples listed in the manifest, optionally only one split.
pub fn read_dataset(dir: &Path, only: Option<SplitKind>) -> Result<Dataset, DataError> {
    let mut out = Dataset::default();
    for rec in read_manifest(dir)? {
        if only.is_some_and(|k| k != rec.split) {
            continue;
        }
        let cloud = io::read_cloud(&resolve(dir, &rec.cloud_path), CloudFormat::XyzText)?;
        let image = io::read_image(&resolve(dir, &rec.image_path))?;
        out.split_mut(rec.split).push(Sample { image, cloud, class: rec.class, seed: rec.seed });
    }
    Ok(out)
}
