//! Translation with a trained (or identity) generator and test-set metrics.

use std::path::{Path, PathBuf};

use asp_core::metrics::{fid, kid, phv, ssim, FeatureSet, MetricRow};
use asp_core::Image;

use crate::data::{read_png, write_png, DatasetManifest};
use crate::features::{FeatureExtractor, Features};
use crate::networks::Generator;
use crate::nn::{ParamSet, Tensor};
use crate::train::{load_checkpoint, Loaded, TrainError, TrainState};

pub const PHV_THRESHOLD: f64 = 0.01;
const KID_SUBSET: usize = 100;
const KID_SUBSETS: usize = 10;
const KID_SEED: u64 = 0x4B1D;

/// Maps H&E images to IHC images.
#[derive(Debug, Clone)]
pub enum Translator {
    /// Returns its input.
    Identity,
    Model {
        generator: Generator,
        params: ParamSet<f32>,
        method: String,
    },
}

impl Translator {
    pub fn from_state(state: &TrainState) -> Self {
        let c = &state.config;
        let method = if c.lambda_asp > 0.0 {
            format!("asp_{}_{}", c.weight_family.name(), c.schedule_family.name())
        } else if c.lambda_patchnce > 0.0 {
            "patchnce".into()
        } else {
            "baseline".into()
        };
        Translator::Model { generator: state.models.generator.clone(), params: state.params.g.clone(), method }
    }

    pub fn from_checkpoint(path: &Path) -> Result<Self, TrainError> {
        Ok(match load_checkpoint(path)? {
            Loaded::Identity => Translator::Identity,
            Loaded::Model(state) => Self::from_state(&state),
        })
    }

    pub fn method(&self) -> &str {
        match self {
            Translator::Identity => "identity",
            Translator::Model { method, .. } => method,
        }
    }

    pub fn translate(&self, image: &Image) -> Result<Image, TrainError> {
        match self {
            Translator::Identity => Ok(image.clone()),
            Translator::Model { generator, params, .. } => {
                let x = Tensor::<f32>::from_image(image);
                Ok(generator.forward(params, &x)?.to_image())
            }
        }
    }
}

/// Metrics of one evaluation plus the per-image SSIM values.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub row: MetricRow,
    pub per_image_ssim: Vec<(String, f64)>,
    pub extractor: String,
}

struct ImageResult {
    id: String,
    ssim: f64,
    fake: Features,
    real: Features,
}

fn evaluate_one(
    translator: &Translator,
    extractor: &FeatureExtractor,
    manifest: &DatasetManifest,
    id: &str,
) -> Result<ImageResult, TrainError> {
    let pair = manifest.load(id)?;
    let fake = translator.translate(&pair.he_image)?;
    let feature = |img: &Image| extractor.extract(img).map_err(|m| TrainError::Data(crate::data::DataError::Shape(m)));
    Ok(ImageResult { id: id.to_string(), ssim: ssim(&fake, &pair.ihc_image)?, fake: feature(&fake)?, real: feature(&pair.ihc_image)? })
}

/// Translates every image of `manifest` and scores it against its pair.
/// Images are processed in parallel; results do not depend on the thread count.
pub fn evaluate(translator: &Translator, manifest: &DatasetManifest, extractor: &FeatureExtractor) -> Result<Evaluation, TrainError> {
    if manifest.is_empty() {
        return Err(TrainError::Data(crate::data::DataError::Empty(manifest.dir())));
    }
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(manifest.len());
    let chunk = manifest.len().div_ceil(threads);
    let results: Vec<ImageResult> = std::thread::scope(|s| {
        let handles: Vec<_> = manifest
            .ids
            .chunks(chunk)
            .map(|ids| s.spawn(move || ids.iter().map(|id| evaluate_one(translator, extractor, manifest, id)).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("evaluation thread")).collect::<Result<_, _>>()
    })?;

    let n = results.len() as f64;
    let mean_ssim = results.iter().map(|r| r.ssim).sum::<f64>() / n;
    let mut phv_sum = [0.0; 4];
    for r in &results {
        let scores = phv(&r.fake.stages, &r.real.stages, PHV_THRESHOLD)?;
        for (acc, v) in phv_sum.iter_mut().zip(&scores.per_layer) {
            *acc += v;
        }
    }
    let phv_per_layer = phv_sum.map(|v| v / n);
    let phv_avg = phv_per_layer.iter().sum::<f64>() / 4.0;
    let fake_set = FeatureSet::from_rows(&results.iter().map(|r| r.fake.pooled.clone()).collect::<Vec<_>>())?;
    let real_set = FeatureSet::from_rows(&results.iter().map(|r| r.real.pooled.clone()).collect::<Vec<_>>())?;
    let (fid_value, kid_value) = if results.len() >= 2 {
        let k = kid(&fake_set, &real_set, KID_SUBSET.min(results.len()), KID_SUBSETS, KID_SEED)?;
        (fid(&fake_set, &real_set)?, k.x1000())
    } else {
        log::warn!("FID and KID need at least two images; reporting NaN");
        (f64::NAN, f64::NAN)
    };
    let dataset = manifest.root.file_name().map_or_else(|| manifest.root.display().to_string(), |n| n.to_string_lossy().into_owned());
    Ok(Evaluation {
        row: MetricRow {
            dataset,
            method: translator.method().to_string(),
            ssim: mean_ssim,
            phv_per_layer,
            phv_avg,
            fid: fid_value,
            kid_x1000: kid_value,
        },
        per_image_ssim: results.into_iter().map(|r| (r.id, r.ssim)).collect(),
        extractor: extractor.name.clone(),
    })
}

/// Writes the header and `rows` as CSV in table column order.
pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<(), TrainError> {
    let io = |e: csv::Error| TrainError::io(path, e);
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(MetricRow::HEADER).map_err(io)?;
    for r in rows {
        let mut rec = vec![r.dataset.clone(), r.method.clone(), r.ssim.to_string()];
        rec.extend(r.phv_per_layer.iter().map(|v| v.to_string()));
        rec.extend([r.phv_avg.to_string(), r.fid.to_string(), r.kid_x1000.to_string()]);
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| TrainError::io(path, e))
}

/// Outcome of translating one file.
#[derive(Debug)]
pub struct TranslateOutcome {
    pub input: PathBuf,
    pub result: Result<PathBuf, TrainError>,
}

/// Translates every `.png` in `input_dir` into `output_dir` (same file
/// names). A file that fails is reported and the rest continue.
pub fn translate_dir(translator: &Translator, input_dir: &Path, output_dir: &Path) -> Result<Vec<TranslateOutcome>, TrainError> {
    let mut inputs: Vec<PathBuf> = std::fs::read_dir(input_dir)
        .map_err(|e| TrainError::io(input_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    inputs.sort();
    std::fs::create_dir_all(output_dir).map_err(|e| TrainError::io(output_dir, e))?;
    Ok(inputs
        .into_iter()
        .map(|input| {
            let result = (|| {
                let image = read_png(&input)?;
                let out = translator.translate(&image)?;
                let path = output_dir.join(input.file_name().expect("file has a name"));
                write_png(&path, &out)?;
                Ok(path)
            })();
            TranslateOutcome { input, result }
        })
        .collect())
}
