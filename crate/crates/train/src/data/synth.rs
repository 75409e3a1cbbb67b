//! Synthetic paired-stain corpus.
//!
//! Each H&E image is rendered from a random "tissue": a smooth stroma field
//! plus Gaussian nuclei. The IHC target is a fixed per-channel monotone map of
//! the quantized H&E pixels, so an exact translator exists. A chosen fraction
//! of training targets is then corrupted; test targets are always clean.

use std::path::Path;

use asp_core::sampling::derive_seed;
use asp_core::Image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{from_u8, load_paired_dataset, to_u8, write_png, write_png_bytes, DataError, DatasetManifest, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    /// Half of the target (left or right) replaced by empty background.
    EraseHalf,
    /// Content inside a square window displaced by a smooth field.
    LocalWarp,
    /// A dark stain artifact painted over an elliptical region.
    Blotch,
}

impl std::str::FromStr for Corruption {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "erase_half" => Ok(Self::EraseHalf),
            "local_warp" => Ok(Self::LocalWarp),
            "blotch" => Ok(Self::Blotch),
            _ => Err(format!("unknown corruption `{s}` (expected erase_half, local_warp or blotch)")),
        }
    }
}

impl Corruption {
    pub fn name(self) -> &'static str {
        match self {
            Self::EraseHalf => "erase_half",
            Self::LocalWarp => "local_warp",
            Self::Blotch => "blotch",
        }
    }
}

/// `ihc_c = tanh(gain_c * he_c + offset_c)` on `[-1, 1]` pixel values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StainMap {
    pub gain: [f64; 3],
    pub offset: [f64; 3],
}

impl Default for StainMap {
    fn default() -> Self {
        Self { gain: [-1.8, 2.2, 1.4], offset: [0.3, 0.6, -0.2] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_train: usize,
    pub num_test: usize,
    pub image_size: usize,
    pub structure_seed: u64,
    pub stain: StainMap,
    pub inconsistency_rate: f64,
    pub corruption: Corruption,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_train: 200,
            num_test: 50,
            image_size: 64,
            structure_seed: 0,
            stain: StainMap::default(),
            inconsistency_rate: 0.0,
            corruption: Corruption::EraseHalf,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if !(0.0..=1.0).contains(&self.inconsistency_rate) {
            return Err(DataError::Config(format!("inconsistency_rate {} is outside [0, 1]", self.inconsistency_rate)));
        }
        if self.image_size < 8 {
            return Err(DataError::Config("image_size must be at least 8".into()));
        }
        if self.num_train == 0 || self.num_test == 0 {
            return Err(DataError::Config("both splits need at least one pair".into()));
        }
        if self.stain.gain.iter().any(|g| *g == 0.0 || !g.is_finite()) {
            return Err(DataError::Config("stain gains must be finite and non-zero".into()));
        }
        Ok(())
    }
}

/// Applies the stain map to every pixel.
pub fn stain_map(he: &Image, map: &StainMap) -> Image {
    let c = he.channels();
    let mut out = he.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let ch = (i % c).min(2);
        *v = (map.gain[ch] * *v as f64 + map.offset[ch]).tanh() as f32;
    }
    out
}

fn quantize(img: &Image) -> Image {
    let mut out = img.clone();
    out.data_mut().iter_mut().for_each(|v| *v = from_u8(to_u8(*v)));
    out
}

const BACKGROUND: [f64; 3] = [0.94, 0.86, 0.90];
const EOSIN: [f64; 3] = [0.86, 0.42, 0.62];
const HEMATOXYLIN: [f64; 3] = [0.30, 0.18, 0.52];

/// A quantized synthetic H&E tile.
fn render_he(size: usize, rng: &mut impl Rng) -> Image {
    let n = size as f64;
    // Stroma: a few random low-frequency waves squashed to [0, 1].
    let waves: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            let freq = rng.random_range(1.0..4.0) * std::f64::consts::TAU / n;
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            (freq * angle.cos(), freq * angle.sin(), rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.5..1.0))
        })
        .collect();
    let density = n * n / (64.0 * 64.0);
    let count = (rng.random_range(10.0..22.0) * density).round() as usize;
    let nuclei: Vec<(f64, f64, f64, f64)> = (0..count)
        .map(|_| (rng.random_range(0.0..n), rng.random_range(0.0..n), rng.random_range(1.5..3.5), rng.random_range(0.7..1.0)))
        .collect();
    let mut stroma = vec![0.0; size * size];
    let mut nucleus = vec![0.0f64; size * size];
    for y in 0..size {
        for x in 0..size {
            let (fy, fx) = (y as f64, x as f64);
            let s: f64 = waves.iter().map(|&(ky, kx, ph, a)| a * (ky * fy + kx * fx + ph).sin()).sum();
            stroma[y * size + x] = 1.0 / (1.0 + (-1.2 * s).exp());
        }
    }
    for &(cy, cx, r, strength) in &nuclei {
        let reach = (3.0 * r).ceil() as isize;
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let (y, x) = (cy as isize + dy, cx as isize + dx);
                if y < 0 || x < 0 || y >= size as isize || x >= size as isize {
                    continue;
                }
                let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                let v = strength * (-(d2 / (r * r)).powi(2)).exp();
                let cell = &mut nucleus[y as usize * size + x as usize];
                *cell = cell.max(v);
            }
        }
    }
    let img = Image::from_fn(size, size, 3, |y, x, c| {
        let s = stroma[y * size + x];
        let h = nucleus[y * size + x];
        let tissue = BACKGROUND[c] + 0.85 * s * (EOSIN[c] - BACKGROUND[c]);
        let rgb = tissue + h * (HEMATOXYLIN[c] - tissue);
        (2.0 * rgb - 1.0) as f32
    });
    quantize(&img)
}

/// Corrupts `ihc` in place and returns the mask (1 = corrupted).
fn corrupt(ihc: &mut Image, kind: Corruption, background: [f32; 3], rng: &mut impl Rng) -> Vec<u8> {
    let (h, w, _) = ihc.shape();
    let mut mask = vec![0u8; h * w];
    match kind {
        Corruption::EraseHalf => {
            let left = rng.random_bool(0.5);
            let cols = if left { 0..w / 2 } else { w - w / 2..w };
            for y in 0..h {
                for x in cols.clone() {
                    for (c, &b) in background.iter().enumerate() {
                        ihc.set(y, x, c, b);
                    }
                    mask[y * w + x] = 1;
                }
            }
        }
        Corruption::LocalWarp => {
            let side = (h.min(w) / 2).max(4);
            let (top, left) = (rng.random_range(0..=h - side), rng.random_range(0..=w - side));
            let amp = side as f64 / 6.0;
            let (ay, ax) = (rng.random_range(-amp..amp), rng.random_range(-amp..amp));
            let src = ihc.clone();
            for y in top..top + side {
                for x in left..left + side {
                    // Bump-shaped displacement: zero at the window border.
                    let u = (y - top) as f64 / (side - 1) as f64;
                    let v = (x - left) as f64 / (side - 1) as f64;
                    let bump = (std::f64::consts::PI * u).sin().powi(2) * (std::f64::consts::PI * v).sin().powi(2);
                    let sy = (y as f64 + ay * bump).round().clamp(0.0, (h - 1) as f64) as usize;
                    let sx = (x as f64 + ax * bump).round().clamp(0.0, (w - 1) as f64) as usize;
                    if (sy, sx) != (y, x) {
                        for c in 0..3 {
                            ihc.set(y, x, c, src.get(sy, sx, c));
                        }
                        mask[y * w + x] = 1;
                    }
                }
            }
        }
        Corruption::Blotch => {
            let (cy, cx) = (rng.random_range(0.0..h as f64), rng.random_range(0.0..w as f64));
            let (ry, rx) = (rng.random_range(0.15..0.3) * h as f64, rng.random_range(0.15..0.3) * w as f64);
            let color = [-0.45f32, -0.7, -0.85];
            for y in 0..h {
                for x in 0..w {
                    let d = ((y as f64 - cy) / ry).powi(2) + ((x as f64 - cx) / rx).powi(2);
                    if d <= 1.0 {
                        for (c, &col) in color.iter().enumerate() {
                            ihc.set(y, x, c, col);
                        }
                        mask[y * w + x] = 1;
                    }
                }
            }
        }
    }
    mask
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthPairRecord {
    pub id: String,
    pub split: Split,
    pub seed: u64,
    pub corrupted: bool,
    /// Fraction of target pixels covered by the inconsistency mask.
    pub mask_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub version: u32,
    pub config: SynthConfig,
    pub pairs: Vec<SynthPairRecord>,
}

fn pair_seed(structure_seed: u64, split: Split, index: usize) -> u64 {
    let stream = match split {
        Split::Train => 0,
        Split::Test => 1u64 << 40,
    };
    derive_seed(structure_seed, stream + index as u64)
}

/// Renders both splits under `out_root` and writes `manifest.json`.
/// Returns the train and test manifests.
pub fn synth_generate(cfg: &SynthConfig, out_root: &Path) -> Result<(DatasetManifest, DatasetManifest), DataError> {
    cfg.validate()?;
    let background_he = Image::from_fn(1, 1, 3, |_, _, c| (2.0 * BACKGROUND[c] - 1.0) as f32);
    let bg = quantize(&stain_map(&quantize(&background_he), &cfg.stain));
    let background = [bg.get(0, 0, 0), bg.get(0, 0, 1), bg.get(0, 0, 2)];
    let corrupted_count = (cfg.inconsistency_rate * cfg.num_train as f64).round() as usize;
    let mut pick = ChaCha8Rng::seed_from_u64(derive_seed(cfg.structure_seed, 0x00C0_FFEE));
    let corrupted: Vec<usize> = rand::seq::index::sample(&mut pick, cfg.num_train, corrupted_count).into_vec();
    let mut records = Vec::new();
    for (split, count) in [(Split::Train, cfg.num_train), (Split::Test, cfg.num_test)] {
        let dir = out_root.join(split.name());
        std::fs::create_dir_all(&dir).map_err(|e| DataError::io(&dir, e))?;
        for i in 0..count {
            let id = format!("s{i:05}");
            let seed = pair_seed(cfg.structure_seed, split, i);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let he = render_he(cfg.image_size, &mut rng);
            let mut ihc = quantize(&stain_map(&he, &cfg.stain));
            let is_corrupted = split == Split::Train && corrupted.contains(&i);
            let mut fraction = 0.0;
            if is_corrupted {
                let mask = corrupt(&mut ihc, cfg.corruption, background, &mut rng);
                fraction = mask.iter().map(|&m| m as f64).sum::<f64>() / mask.len() as f64;
                let bytes: Vec<u8> = mask.iter().map(|&m| m * 255).collect();
                write_png_bytes(&dir.join(format!("{id}_mask.png")), cfg.image_size, cfg.image_size, 1, &bytes)?;
            }
            write_png(&dir.join(format!("{id}_HE.png")), &he)?;
            write_png(&dir.join(format!("{id}_IHC.png")), &ihc)?;
            records.push(SynthPairRecord { id, split, seed, corrupted: is_corrupted, mask_fraction: fraction });
        }
    }
    let manifest = SynthManifest { version: 1, config: cfg.clone(), pairs: records };
    let path = out_root.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| DataError::io(&path, e))?;
    std::fs::write(&path, json).map_err(|e| DataError::io(&path, e))?;
    let (train, _) = load_paired_dataset(out_root, Split::Train)?;
    let (test, _) = load_paired_dataset(out_root, Split::Test)?;
    Ok((train, test))
}
