//! Model persistence: a JSON architecture descriptor next to a flat
//! binary of named little-endian f64 tensors, concatenated in the order
//! the descriptor lists them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bcsr::nn::{Network, NetworkSpec};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    architecture: NetworkSpec,
    tensors: Vec<TensorMeta>,
}

fn bin_path(json_path: &Path) -> PathBuf {
    json_path.with_extension("bin")
}

/// Writes `<path>.json` (descriptor) and `<path>.bin` (parameters).
/// `path` should carry a `.json` extension or none.
pub fn save(net: &Network, json_path: &Path) -> Result<()> {
    let json_path = if json_path.extension().is_none() {
        json_path.with_extension("json")
    } else {
        json_path.to_path_buf()
    };
    let layout = net.tensor_layout();
    let meta = CheckpointMeta {
        architecture: net.spec.clone(),
        tensors: layout
            .iter()
            .map(|(name, _, shape)| TensorMeta {
                name: name.clone(),
                shape: shape.clone(),
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&meta)?;
    fs::write(&json_path, text).map_err(|e| Error::io(json_path.display().to_string(), e))?;

    let params = net.params_flat();
    let mut bytes = Vec::with_capacity(params.len() * 8);
    for v in &params {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let bp = bin_path(&json_path);
    fs::write(&bp, bytes).map_err(|e| Error::io(bp.display().to_string(), e))?;
    Ok(())
}

/// Loads a checkpoint written by [`save`].
pub fn load(json_path: &Path) -> Result<Network> {
    let json_path = if json_path.extension().is_none() {
        json_path.with_extension("json")
    } else {
        json_path.to_path_buf()
    };
    let text = fs::read_to_string(&json_path)
        .map_err(|e| Error::io(json_path.display().to_string(), e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text)?;
    let mut net = Network::init(&meta.architecture, 0)?;

    // Validate the descriptor against the architecture it claims.
    let layout = net.tensor_layout();
    if layout.len() != meta.tensors.len() {
        return Err(Error::BadCheckpoint(format!(
            "tensor count {} != architecture's {}",
            meta.tensors.len(),
            layout.len()
        )));
    }
    let mut expected_len = 0usize;
    for ((name, _, shape), tm) in layout.iter().zip(&meta.tensors) {
        if name != &tm.name || shape != &tm.shape {
            return Err(Error::BadCheckpoint(format!(
                "tensor `{}` {:?} does not match architecture tensor `{}` {:?}",
                tm.name, tm.shape, name, shape
            )));
        }
        expected_len += shape.iter().product::<usize>();
    }

    let bp = bin_path(&json_path);
    let bytes = fs::read(&bp).map_err(|e| Error::io(bp.display().to_string(), e))?;
    if bytes.len() != expected_len * 8 {
        return Err(Error::BadCheckpoint(format!(
            "binary holds {} bytes, descriptor implies {}",
            bytes.len(),
            expected_len * 8
        )));
    }
    let params: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if params.iter().any(|v| !v.is_finite()) {
        return Err(Error::BadCheckpoint("non-finite parameter".into()));
    }
    net.set_params_flat(&params)?;
    Ok(net)
}
