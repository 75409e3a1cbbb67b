//! Checkpoints are safetensors files. Every parameter set is stored under a
//! prefix (`G/`, `D/`, `F/`, `opt_G/m/`, ...) and a JSON manifest in the
//! header metadata carries the config text and counters.

use std::collections::HashMap;
use std::path::Path;

use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use serde::{Deserialize, Serialize};

use super::{TrainError, TrainState};
use crate::config::Config;
use crate::nn::ParamSet;

pub const CHECKPOINT_VERSION: u32 = 1;
const MANIFEST_KEY: &str = "asp_manifest";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Kind {
    Model,
    Identity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    kind: Kind,
    #[serde(default)]
    config: String,
    #[serde(default)]
    current_iter: u64,
    #[serde(default)]
    adam_steps: [u64; 3],
}

/// A loaded checkpoint: a trained model, or the identity stub that passes
/// inputs through unchanged.
#[derive(Debug, Clone)]
pub enum Loaded {
    Model(Box<TrainState>),
    Identity,
}

fn groups(state: &TrainState) -> [(&'static str, &ParamSet<f32>); 9] {
    [
        ("G", &state.params.g),
        ("D", &state.params.d),
        ("F", &state.params.f),
        ("opt_G/m", &state.opt_g.m),
        ("opt_G/v", &state.opt_g.v),
        ("opt_D/m", &state.opt_d.m),
        ("opt_D/v", &state.opt_d.v),
        ("opt_F/m", &state.opt_f.m),
        ("opt_F/v", &state.opt_f.v),
    ]
}

fn write(path: &Path, manifest: &Manifest, tensors: Vec<(String, Vec<usize>, Vec<u8>)>) -> Result<(), TrainError> {
    let views: Vec<(String, TensorView<'_>)> = tensors
        .iter()
        .map(|(name, shape, bytes)| {
            TensorView::new(Dtype::F32, shape.clone(), bytes).map(|v| (name.clone(), v)).map_err(|e| TrainError::io(path, e))
        })
        .collect::<Result<_, _>>()?;
    let meta = HashMap::from([(MANIFEST_KEY.to_string(), serde_json::to_string(manifest).expect("manifest serializes"))]);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| TrainError::io(dir, e))?;
    }
    let tmp = path.with_extension("safetensors.tmp");
    safetensors::serialize_to_file(views, Some(meta), &tmp).map_err(|e| TrainError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| TrainError::io(path, e))
}

pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<(), TrainError> {
    let mut tensors = Vec::new();
    for (prefix, set) in groups(state) {
        for p in &set.params {
            let bytes = p.data.iter().flat_map(|v| v.to_le_bytes()).collect();
            tensors.push((format!("{prefix}/{}", p.name), p.shape.clone(), bytes));
        }
    }
    let manifest = Manifest {
        version: CHECKPOINT_VERSION,
        kind: Kind::Model,
        config: state.config.to_text(),
        current_iter: state.iter,
        adam_steps: [state.opt_g.step, state.opt_d.step, state.opt_f.step],
    };
    write(path, &manifest, tensors)
}

/// A checkpoint whose "generator" returns its input.
pub fn write_identity_stub(path: &Path) -> Result<(), TrainError> {
    let manifest =
        Manifest { version: CHECKPOINT_VERSION, kind: Kind::Identity, config: String::new(), current_iter: 0, adam_steps: [0; 3] };
    write(path, &manifest, Vec::new())
}

pub fn load_checkpoint(path: &Path) -> Result<Loaded, TrainError> {
    let bad = |message: String| TrainError::Checkpoint { path: path.to_path_buf(), message };
    let buf = std::fs::read(path).map_err(|e| bad(e.to_string()))?;
    let (_, meta) = SafeTensors::read_metadata(&buf).map_err(|e| bad(e.to_string()))?;
    let manifest_text =
        meta.metadata().as_ref().and_then(|m| m.get(MANIFEST_KEY)).ok_or_else(|| bad(format!("missing `{MANIFEST_KEY}` metadata")))?;
    let manifest: Manifest = serde_json::from_str(manifest_text).map_err(|e| bad(format!("bad manifest: {e}")))?;
    if manifest.version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {}", manifest.version)));
    }
    if manifest.kind == Kind::Identity {
        return Ok(Loaded::Identity);
    }
    let config = Config::parse(&manifest.config).map_err(|e| bad(format!("embedded config: {e}")))?;
    let mut state = TrainState::new(config)?;
    let file = SafeTensors::deserialize(&buf).map_err(|e| bad(e.to_string()))?;
    let mut expected = 0;
    {
        let TrainState { params, opt_g, opt_d, opt_f, .. } = &mut state;
        let targets: [(&str, &mut ParamSet<f32>); 9] = [
            ("G", &mut params.g),
            ("D", &mut params.d),
            ("F", &mut params.f),
            ("opt_G/m", &mut opt_g.m),
            ("opt_G/v", &mut opt_g.v),
            ("opt_D/m", &mut opt_d.m),
            ("opt_D/v", &mut opt_d.v),
            ("opt_F/m", &mut opt_f.m),
            ("opt_F/v", &mut opt_f.v),
        ];
        for (prefix, set) in targets {
            for p in &mut set.params {
                let name = format!("{prefix}/{}", p.name);
                let view = file.tensor(&name).map_err(|_| bad(format!("missing tensor `{name}`")))?;
                if view.dtype() != Dtype::F32 || view.shape() != p.shape.as_slice() {
                    return Err(bad(format!("tensor `{name}` is {:?} {:?}, expected F32 {:?}", view.dtype(), view.shape(), p.shape)));
                }
                for (dst, chunk) in p.data.iter_mut().zip(view.data().chunks_exact(4)) {
                    *dst = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
                }
                expected += 1;
            }
        }
    }
    if file.len() != expected {
        return Err(bad(format!("{} tensors, expected {expected}", file.len())));
    }
    state.iter = manifest.current_iter;
    [state.opt_g.step, state.opt_d.step, state.opt_f.step] = manifest.adam_steps;
    Ok(Loaded::Model(Box::new(state)))
}
