use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamSet, Tensor};
use crate::error::{Error, Result};

use super::{ModelConfig, ModelState};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";
const FORMAT: &str = "fcgshift-checkpoint-v1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the parameter file.
    offset: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    config: ModelConfig,
    class_names: Vec<String>,
    tensors: Vec<TensorRecord>,
}

/// Writes `manifest.json` and `params.bin` (little-endian `f64`) into `dir`.
pub fn save_checkpoint(state: &ModelState, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut bytes = Vec::new();
    let mut tensors = Vec::new();
    for p in state.params.iter() {
        tensors.push(TensorRecord { name: p.name.clone(), shape: p.value.shape().to_vec(), offset: bytes.len() });
        for v in p.value.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        config: state.config.clone(),
        class_names: state.class_names.clone(),
        tensors,
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    fs::write(dir.join(MANIFEST_FILE), json)?;
    fs::write(dir.join(PARAMS_FILE), bytes)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<ModelState> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    if manifest.format != FORMAT {
        return Err(Error::Format(format!("unknown checkpoint format {:?}", manifest.format)));
    }
    manifest.config.validate()?;
    if manifest.class_names.len() != manifest.config.classes {
        return Err(Error::Shape(format!(
            "{} class names for {} classes",
            manifest.class_names.len(),
            manifest.config.classes
        )));
    }
    let layout = manifest.config.tensor_layout();
    if manifest.tensors.len() != layout.len() {
        return Err(Error::Shape(format!(
            "checkpoint lists {} tensors, configuration implies {}",
            manifest.tensors.len(),
            layout.len()
        )));
    }
    let bytes = fs::read(dir.join(PARAMS_FILE))?;
    let mut params = ParamSet::new();
    let mut expected_offset = 0;
    for (rec, (name, shape, trainable)) in manifest.tensors.iter().zip(layout) {
        if rec.name != name {
            return Err(Error::Shape(format!("tensor {}: expected tensor {name} at this position", rec.name)));
        }
        if rec.shape != shape {
            return Err(Error::Shape(format!("tensor {name}: shape {:?}, configuration implies {shape:?}", rec.shape)));
        }
        if rec.offset != expected_offset {
            return Err(Error::Format(format!("tensor {name}: offset {} but expected {expected_offset}", rec.offset)));
        }
        let len: usize = shape.iter().product();
        let end = expected_offset + len * 8;
        if bytes.len() < end {
            return Err(Error::Truncated { expected: end, found: bytes.len() });
        }
        let data = bytes[expected_offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        params.insert(name, Tensor::new(shape, data)?, trainable)?;
        expected_offset = end;
    }
    if bytes.len() != expected_offset {
        return Err(Error::Format(format!(
            "{PARAMS_FILE} holds {} bytes, manifest accounts for {expected_offset}",
            bytes.len()
        )));
    }
    Ok(ModelState { config: manifest.config, params, class_names: manifest.class_names })
}
