//! Parameter file layout (all integers little-endian):
//!
//! ```text
//! "PSTM"              4-byte magic
//! u32                 format version (1)
//! u32                 header length in bytes
//! header              JSON {"config": ModelConfig, "model_version": string}
//! f64 × N             tensors in order: embedding, w_input, w_recurrent,
//!                     b_gates, w_dense1, b_dense1, w_dense2, b_dense2
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

use super::{ModelConfig, ModelParams, Tensors};

pub const PARAMS_MAGIC: &[u8; 4] = b"PSTM";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    model_version: String,
}

pub fn encode_params<T: Scalar>(params: &ModelParams<T>) -> Vec<u8> {
    let header = serde_json::to_vec(&Header { config: params.config, model_version: params.version.clone() })
        .expect("header serializes");
    let mut out = Vec::with_capacity(12 + header.len() + params.tensors.len() * 8);
    out.extend_from_slice(PARAMS_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for s in params.tensors.slices() {
        for v in s {
            out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
    }
    out
}

fn take<'a>(buf: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if buf.len() < n {
        return Err(Error::Format(format!("file truncated while reading {what}")));
    }
    let (head, rest) = buf.split_at(n);
    *buf = rest;
    Ok(head)
}

fn read_u32(buf: &mut &[u8], what: &str) -> Result<u32> {
    Ok(u32::from_le_bytes(take(buf, 4, what)?.try_into().expect("4 bytes")))
}

pub fn decode_params<T: Scalar>(bytes: &[u8]) -> Result<ModelParams<T>> {
    let mut buf = bytes;
    if take(&mut buf, 4, "magic")? != PARAMS_MAGIC {
        return Err(Error::Format("bad magic, not a parameter file".into()));
    }
    let version = read_u32(&mut buf, "format version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let header_len = read_u32(&mut buf, "header length")? as usize;
    let header: Header = serde_json::from_slice(take(&mut buf, header_len, "header")?)
        .map_err(|e| Error::Format(format!("header: {e}")))?;
    header.config.validate().map_err(|e| Error::Format(e.to_string()))?;

    let mut tensors = Tensors::<T>::zeros(&header.config);
    for (name, s) in Tensors::<T>::NAMES.iter().zip(tensors.slices_mut()) {
        let raw = take(&mut buf, s.len() * 8, name)?;
        for (v, chunk) in s.iter_mut().zip(raw.chunks_exact(8)) {
            let x = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            if !x.is_finite() {
                return Err(Error::Format(format!("non-finite value in {name}")));
            }
            *v = T::from_f64_lossy(x);
        }
    }
    if !buf.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after tensors", buf.len())));
    }
    Ok(ModelParams { config: header.config, version: header.model_version, tensors })
}

pub fn save_params<T: Scalar>(params: &ModelParams<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_params(params))?;
    Ok(())
}

pub fn load_params<T: Scalar>(path: impl AsRef<Path>) -> Result<ModelParams<T>> {
    decode_params(&fs::read(path)?)
}
