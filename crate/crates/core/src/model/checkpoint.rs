//! JSON checkpoints of model parameters.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::ModelConfig;
use super::transformer::LatentModel;
use crate::error::{Error, IoContext, Result};
use crate::numkernel::{ParamStore, Tensor};
use crate::scalar::Scalar;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredParam {
    name: String,
    shape: Vec<usize>,
    data: Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Stored {
    format_version: u32,
    scalar: String,
    config: ModelConfig,
    config_hash: String,
    seed: u64,
    params: Vec<StoredParam>,
}

fn data_value<T: Scalar>(data: &[T]) -> Value {
    // f32 values are written as f32 so the text stays short and reloads exactly.
    if T::NAME == "f32" {
        serde_json::to_value(data.iter().map(|v| v.as_f64() as f32).collect::<Vec<f32>>())
    } else {
        serde_json::to_value(data.iter().map(|v| v.as_f64()).collect::<Vec<f64>>())
    }
    .expect("finite numbers serialize")
}

fn parse_data<T: Scalar>(scalar: &str, v: Value) -> Result<Vec<T>> {
    Ok(match scalar {
        "f32" => serde_json::from_value::<Vec<f32>>(v)?.into_iter().map(|x| T::lit(x as f64)).collect(),
        "f64" => serde_json::from_value::<Vec<f64>>(v)?.into_iter().map(T::lit).collect(),
        other => return Err(Error::Checkpoint(format!("unknown scalar type {other:?}"))),
    })
}

/// Serializes a model and its init seed.
pub fn to_json<T: Scalar>(model: &LatentModel<T>, seed: u64) -> Result<String> {
    if let Some((n, _)) = model.params.names.iter().zip(&model.params.tensors).find(|(_, t)| !t.all_finite()) {
        return Err(Error::NonFinite(format!("parameter {n}")));
    }
    let stored = Stored {
        format_version: FORMAT_VERSION,
        scalar: T::NAME.to_string(),
        config: model.config.clone(),
        config_hash: model.config.hash(),
        seed,
        params: model
            .params
            .names
            .iter()
            .zip(&model.params.tensors)
            .map(|(n, t)| StoredParam { name: n.clone(), shape: t.shape.clone(), data: data_value(&t.data) })
            .collect(),
    };
    Ok(serde_json::to_string(&stored)?)
}

/// Parses a checkpoint; returns the model and its init seed.
pub fn from_json<T: Scalar>(text: &str) -> Result<(LatentModel<T>, u64)> {
    let stored: Stored = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if stored.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {}", stored.format_version)));
    }
    if stored.config.hash() != stored.config_hash {
        return Err(Error::Checkpoint("config hash does not match the stored config".into()));
    }
    let mut params = ParamStore::default();
    for p in stored.params {
        let data = parse_data(&stored.scalar, p.data).map_err(|e| Error::Checkpoint(format!("{}: {e}", p.name)))?;
        params.push(p.name, Tensor::new(p.shape, data)?);
    }
    Ok((LatentModel::from_params(stored.config, params)?, stored.seed))
}

pub fn save<T: Scalar>(model: &LatentModel<T>, seed: u64, path: &Path) -> Result<()> {
    fs::write(path, to_json(model, seed)?).io_ctx("writing checkpoint", path)
}

pub fn load<T: Scalar>(path: &Path) -> Result<(LatentModel<T>, u64)> {
    let text = fs::read_to_string(path).io_ctx("reading checkpoint", path)?;
    from_json(&text)
}
