//! Anchor-positive similarity artifacts: per-layer heat maps and a pooled
//! histogram, as JSON and as PNG renderings.

use std::path::Path;

use asp_core::sampling::{derive_seed, sample_locations};
use asp_core::{similarity_heatmap, similarity_histogram, Histogram, SimilarityMap};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::data::{write_png_bytes, PairedSample};
use crate::nn::Tensor;
use crate::train::{ModelParams, Models, TrainError};

/// Layers with at most this many cells are mapped densely; larger ones are sampled.
pub const DENSE_CELLS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub iter: u64,
    pub pair_id: String,
    pub maps: Vec<SimilarityMap>,
    pub histogram: Histogram,
    pub edges: Vec<f64>,
}

/// Similarity between embeddings of `G(x)` and `y` at every tap.
pub fn similarity_report(
    models: &Models,
    params: &ModelParams<f32>,
    cfg: &Config,
    pair: &PairedSample,
    iter: u64,
) -> Result<SimilarityReport, TrainError> {
    let g = &models.generator;
    let x = Tensor::<f32>::from_image(&pair.he_image);
    let y = Tensor::<f32>::from_image(&pair.ihc_image);
    let fake = g.forward(&params.g, &x)?;
    let taps = &g.spec.taps;
    let (fake_taps, _) = g.encode(&params.g, &fake, taps, false)?;
    let (y_taps, _) = g.encode(&params.g, &y, taps, false)?;
    let seed = derive_seed(cfg.seeds().location, u64::MAX - iter);
    let locations = fake_taps
        .iter()
        .enumerate()
        .map(|(l, f)| {
            let cells = f.h * f.w;
            Ok(sample_locations(f.h, f.w, cells.min(DENSE_CELLS), derive_seed(seed, l as u64))?)
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    let (out, _) = models.projector.forward(&params.f, &fake_taps, &locations, taps)?;
    let (gt, _) = models.projector.forward(&params.f, &y_taps, &locations, taps)?;
    let maps = taps.iter().map(|&id| similarity_heatmap(&out, &gt, id)).collect::<Result<Vec<_>, _>>()?;
    let histogram = similarity_histogram(&maps, cfg.histogram_bins)?;
    let edges = histogram.edges();
    Ok(SimilarityReport { iter, pair_id: pair.sample_id.clone(), maps, histogram, edges })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), TrainError> {
    let text = serde_json::to_string_pretty(value).expect("artifact serializes");
    std::fs::write(path, text).map_err(|e| TrainError::io(path, e))
}

/// Diverging blue-white-red color for a similarity in `[-1, 1]`; unsampled cells are gray.
fn color(v: Option<f64>) -> [u8; 3] {
    match v {
        None => [128, 128, 128],
        Some(v) => {
            let v = v.clamp(-1.0, 1.0);
            let fade = |a: f64| (255.0 * (1.0 - a)).round() as u8;
            if v >= 0.0 {
                [255, fade(v), fade(v)]
            } else {
                [fade(-v), fade(-v), 255]
            }
        }
    }
}

/// Heat map as RGB, each cell scaled up so the image is at least 256 pixels wide.
pub fn render_heatmap(map: &SimilarityMap) -> (usize, usize, Vec<u8>) {
    let [h, w] = map.grid_shape;
    let scale = (256 / w.max(1)).max(1);
    let (oh, ow) = (h * scale, w * scale);
    let mut px = Vec::with_capacity(oh * ow * 3);
    for y in 0..oh {
        for x in 0..ow {
            px.extend_from_slice(&color(map.get(y / scale, x / scale)));
        }
    }
    (ow, oh, px)
}

/// Bar chart of the histogram counts on a white background.
pub fn render_histogram(hist: &Histogram) -> (usize, usize, Vec<u8>) {
    let bins = hist.bins();
    let bar = 8;
    let (w, h) = (bins * bar, 200);
    let peak = hist.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let mut px = vec![255u8; w * h * 3];
    for (b, &c) in hist.counts.iter().enumerate() {
        let top = h - ((c as f64 / peak) * (h as f64 - 1.0)).round() as usize;
        for y in top..h {
            for x in b * bar + 1..(b + 1) * bar - 1 {
                let i = (y * w + x) * 3;
                px[i..i + 3].copy_from_slice(&[40, 70, 140]);
            }
        }
    }
    (w, h, px)
}

/// Writes `<stem>.json`, `<stem>_hist.png` and one `<stem>_layer<id>.png` per tap.
pub fn write_report(dir: &Path, stem: &str, report: &SimilarityReport) -> Result<(), TrainError> {
    std::fs::create_dir_all(dir).map_err(|e| TrainError::io(dir, e))?;
    write_json(&dir.join(format!("{stem}.json")), report)?;
    let (w, h, px) = render_histogram(&report.histogram);
    let path = dir.join(format!("{stem}_hist.png"));
    write_png_bytes(&path, w, h, 3, &px)?;
    for map in &report.maps {
        let (w, h, px) = render_heatmap(map);
        write_png_bytes(&dir.join(format!("{stem}_layer{}.png", map.layer_id)), w, h, 3, &px)?;
    }
    Ok(())
}
