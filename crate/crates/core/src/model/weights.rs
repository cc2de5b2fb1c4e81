//! Weight files: magic, version byte, a length-prefixed JSON header with
//! configuration, labels and parameter shapes, then little-endian `f32`
//! parameter values in header order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FcnConfig, FcnModel, Preprocessing};
use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"FCNW";
pub const WEIGHTS_VERSION: u8 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: FcnConfig,
    labels: Vec<String>,
    params: Vec<(String, Vec<usize>)>,
    preprocessing: Option<Preprocessing>,
}

pub(crate) fn encode(model: &FcnModel) -> Vec<u8> {
    let header = Header {
        config: model.config.clone(),
        labels: model.label_set.clone(),
        params: model.params.iter().map(|(n, t)| (n.clone(), t.shape().to_vec())).collect(),
        preprocessing: model.preprocessing.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(9 + json.len() + 4 * model.param_count());
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.push(WEIGHTS_VERSION);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in &model.params {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub(crate) fn decode(bytes: &[u8]) -> Result<FcnModel> {
    if bytes.len() < 5 || &bytes[..4] != WEIGHTS_MAGIC {
        return Err(Error::Format("not a weight file (bad magic)".into()));
    }
    if bytes[4] != WEIGHTS_VERSION {
        return Err(Error::Format(format!(
            "weight file version {} is not supported (expected {WEIGHTS_VERSION})",
            bytes[4]
        )));
    }
    let rest = &bytes[5..];
    if rest.len() < 4 {
        return Err(Error::Corruption("weight file truncated in header".into()));
    }
    let hlen = u32::from_le_bytes(rest[..4].try_into().expect("4 bytes")) as usize;
    let rest = &rest[4..];
    if rest.len() < hlen {
        return Err(Error::Corruption("weight file truncated in header".into()));
    }
    let header: Header = serde_json::from_slice(&rest[..hlen])
        .map_err(|e| Error::Corruption(format!("unreadable weight header: {e}")))?;
    let mut data = &rest[hlen..];
    let expected: usize = header.params.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    if data.len() != 4 * expected {
        return Err(Error::Corruption(format!(
            "header describes {expected} parameters, file holds {} bytes of values",
            data.len()
        )));
    }
    let mut params = Vec::with_capacity(header.params.len());
    for (name, shape) in header.params {
        let n: usize = shape.iter().product();
        let (chunk, tail) = data.split_at(4 * n);
        data = tail;
        let values = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        let t = Tensor::new(&shape, values).map_err(|e| Error::Corruption(e.to_string()))?;
        params.push((name, t));
    }
    FcnModel::from_parts(header.config, header.labels, params, header.preprocessing)
}

/// Writes the model atomically (temporary file, then rename).
pub fn save_weights(model: &FcnModel, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&encode(model)).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: &Path) -> Result<FcnModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
