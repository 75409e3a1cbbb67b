//! Paired H&E / IHC datasets: folder ingestion, crops, brightness
//! normalization and the synthetic paired-stain generator.
//!
//! Layout: `<root>/<split>/<id>_HE.png` and `<root>/<split>/<id>_IHC.png`,
//! 8-bit RGB mapped to `[-1, 1]` on load.

mod png_io;
pub mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use asp_core::sampling::derive_seed;
use asp_core::Image;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use png_io::{from_u8, png_dimensions, read_png, to_u8, write_png, write_png_bytes};
pub use synth::{stain_map, synth_generate, Corruption, StainMap, SynthConfig};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("no complete pairs in {0}")]
    Empty(PathBuf),
    #[error("unknown sample id {0}")]
    UnknownId(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid synthetic config: {0}")]
    Config(String),
}

impl DataError {
    pub(crate) fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self::Io { path: path.to_path_buf(), message: e.to_string() }
    }

    pub(crate) fn decode(path: &Path, e: impl fmt::Display) -> Self {
        Self::Decode { path: path.to_path_buf(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split `{s}` (expected train or test)")),
        }
    }
}

/// One aligned pair. `inconsistency_mask` (row-major, 1 = corrupted target
/// pixel) is only known for synthetic data.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub sample_id: String,
    pub he_image: Image,
    pub ihc_image: Image,
    pub inconsistency_mask: Option<Vec<u8>>,
}

impl PairedSample {
    pub fn new(sample_id: impl Into<String>, he_image: Image, ihc_image: Image) -> Result<Self, DataError> {
        if he_image.shape() != ihc_image.shape() {
            return Err(DataError::Shape(format!("{:?} vs {:?}", he_image.shape(), ihc_image.shape())));
        }
        Ok(Self { sample_id: sample_id.into(), he_image, ihc_image, inconsistency_mask: None })
    }
}

/// The complete pairs of one split, sorted by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub split: Split,
    pub ids: Vec<String>,
    /// `(height, width)` of the first pair.
    pub patch_size: (usize, usize),
}

/// A problem with one file that did not stop the load.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadWarning {
    pub path: PathBuf,
    pub message: String,
}

impl fmt::Display for LoadWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path.display(), self.message)
    }
}

const HE_SUFFIX: &str = "_HE.png";
const IHC_SUFFIX: &str = "_IHC.png";

/// Scans `<root>/<split>` for complete pairs. Orphans and unreadable files are
/// returned as warnings and skipped.
pub fn load_paired_dataset(root: &Path, split: Split) -> Result<(DatasetManifest, Vec<LoadWarning>), DataError> {
    let dir = root.join(split.name());
    let entries = std::fs::read_dir(&dir).map_err(|e| DataError::io(&dir, e))?;
    let mut found: BTreeMap<String, (bool, bool)> = BTreeMap::new();
    for entry in entries {
        let entry = entry.map_err(|e| DataError::io(&dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(id) = name.strip_suffix(HE_SUFFIX) {
            found.entry(id.to_string()).or_default().0 = true;
        } else if let Some(id) = name.strip_suffix(IHC_SUFFIX) {
            found.entry(id.to_string()).or_default().1 = true;
        }
    }
    let mut warnings = Vec::new();
    let mut ids = Vec::new();
    let mut patch_size = None;
    for (id, (he, ihc)) in found {
        let (he_path, ihc_path) = (dir.join(format!("{id}{HE_SUFFIX}")), dir.join(format!("{id}{IHC_SUFFIX}")));
        if !(he && ihc) {
            let (path, missing) = if he { (he_path, "IHC") } else { (ihc_path, "H&E") };
            warnings.push(LoadWarning { path, message: format!("no matching {missing} image, skipped") });
            continue;
        }
        let dims = match (png_dimensions(&he_path), png_dimensions(&ihc_path)) {
            (Ok(a), Ok(b)) if a == b => a,
            (Ok(a), Ok(b)) => {
                warnings.push(LoadWarning { path: ihc_path, message: format!("size {b:?} differs from H&E {a:?}, skipped") });
                continue;
            }
            (Err(e), _) | (_, Err(e)) => {
                let (path, message) = match e {
                    DataError::Io { path, message } | DataError::Decode { path, message } => (path, message),
                    other => (dir.clone(), other.to_string()),
                };
                warnings.push(LoadWarning { path, message: format!("unreadable ({message}), skipped") });
                continue;
            }
        };
        patch_size.get_or_insert(dims);
        ids.push(id);
    }
    match patch_size {
        Some(patch_size) => Ok((DatasetManifest { root: root.to_path_buf(), split, ids, patch_size }, warnings)),
        None => Err(DataError::Empty(dir)),
    }
}

impl DatasetManifest {
    pub fn dir(&self) -> PathBuf {
        self.root.join(self.split.name())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn load(&self, id: &str) -> Result<PairedSample, DataError> {
        if !self.ids.iter().any(|i| i == id) {
            return Err(DataError::UnknownId(id.to_string()));
        }
        let dir = self.dir();
        let he = read_png(&dir.join(format!("{id}{HE_SUFFIX}")))?;
        let ihc = read_png(&dir.join(format!("{id}{IHC_SUFFIX}")))?;
        let mut pair = PairedSample::new(id, he, ihc)?;
        let mask_path = dir.join(format!("{id}_mask.png"));
        if mask_path.exists() {
            let mask = read_png(&mask_path)?;
            pair.inconsistency_mask = Some(mask.data().chunks(3).map(|p| u8::from(p[0] > 0.0)).collect());
        }
        Ok(pair)
    }

    pub fn load_all(&self) -> Result<Vec<PairedSample>, DataError> {
        self.ids.iter().map(|id| self.load(id)).collect()
    }
}

/// Pair index visited at step `t`: a fresh seeded permutation every epoch.
pub fn schedule_index(num_pairs: usize, t: u64, data_seed: u64) -> usize {
    let epoch = t / num_pairs as u64;
    let mut order: Vec<usize> = (0..num_pairs).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(data_seed, epoch)));
    order[(t % num_pairs as u64) as usize]
}

/// The same `crop x crop` window taken from both images (and the mask).
pub fn random_crop_pair(pair: &PairedSample, crop: usize, seed: u64) -> Result<PairedSample, DataError> {
    let (h, w, _) = pair.he_image.shape();
    if crop == 0 || crop > h.min(w) {
        return Err(DataError::Shape(format!("crop {crop} does not fit a {h}x{w} pair")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let top = rng.random_range(0..=h - crop);
    let left = rng.random_range(0..=w - crop);
    let cut = |img: &Image| img.crop(top, left, crop, crop).map_err(|e| DataError::Shape(e.to_string()));
    let mask = pair
        .inconsistency_mask
        .as_ref()
        .map(|m| (top..top + crop).flat_map(|y| m[y * w + left..y * w + left + crop].iter().copied()).collect());
    Ok(PairedSample {
        sample_id: pair.sample_id.clone(),
        he_image: cut(&pair.he_image)?,
        ihc_image: cut(&pair.ihc_image)?,
        inconsistency_mask: mask,
    })
}

/// Shifts every channel by one constant so the mean luminance reaches
/// `target_mean`, clipping to `[-1, 1]`. The shift is found by bisection so
/// clipped pixels are accounted for.
pub fn brightness_normalize(image: &Image, target_mean: f64) -> Image {
    let mean_after = |shift: f64| {
        let shifted = shifted(image, shift);
        let l = shifted.luminance();
        l.iter().sum::<f64>() / l.len() as f64
    };
    let (mut lo, mut hi) = (-2.0f64, 2.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mean_after(mid) < target_mean {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    shifted(image, 0.5 * (lo + hi))
}

fn shifted(image: &Image, shift: f64) -> Image {
    let mut out = image.clone();
    out.data_mut().iter_mut().for_each(|v| *v = (*v as f64 + shift).clamp(-1.0, 1.0) as f32);
    out
}
