//! Parameter files: `VNET1\n`, a little-endian u32 header length, a JSON
//! header describing the network, then every parameter as little-endian f64.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::layers::ConvShape;
use crate::net::{NetSpec, Params};
use crate::tensor::Real;
use crate::{NetError, Result};

pub const PARAMS_MAGIC: &[u8; 6] = b"VNET1\n";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    spec: NetSpec,
    seed: u64,
    output_scale: f64,
    count: usize,
    layout: Vec<ConvShape>,
}

pub fn write_params<T: Real>(path: impl AsRef<Path>, params: &Params<T>) -> Result<()> {
    let path = path.as_ref();
    let header = Header {
        version: 1,
        spec: *params.spec(),
        seed: params.seed(),
        output_scale: params.output_scale(),
        count: params.len(),
        layout: params.spec().layout(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut bytes = Vec::with_capacity(PARAMS_MAGIC.len() + 4 + json.len() + 8 * params.len());
    bytes.extend_from_slice(PARAMS_MAGIC);
    bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&json);
    for v in params.values() {
        bytes.extend_from_slice(&v.f64().to_le_bytes());
    }
    fs::write(path, bytes).map_err(|source| NetError::Io { path: path.into(), source })
}

pub fn read_params<T: Real>(path: impl AsRef<Path>) -> Result<Params<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| NetError::Io { path: path.into(), source })?;
    let fail = |reason: String| NetError::Format { path: path.into(), reason };
    if bytes.len() < PARAMS_MAGIC.len() + 4 || &bytes[..PARAMS_MAGIC.len()] != PARAMS_MAGIC {
        return Err(fail("not a parameter file (bad magic)".into()));
    }
    let at = PARAMS_MAGIC.len();
    let len = u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let body = &bytes[at + 4..];
    if body.len() < len {
        return Err(fail(format!("header truncated: {} of {len} bytes", body.len())));
    }
    let header: Header =
        serde_json::from_slice(&body[..len]).map_err(|e| fail(format!("bad header: {e}")))?;
    if header.version != 1 {
        return Err(fail(format!("unsupported version {}", header.version)));
    }
    header.spec.validate()?;
    if header.layout != header.spec.layout() || header.count != header.spec.param_count() {
        return Err(fail("layout does not match the network spec".into()));
    }
    let payload = &body[len..];
    if payload.len() != 8 * header.count {
        return Err(fail(format!("expected {} payload bytes, found {}", 8 * header.count, payload.len())));
    }
    let mut values = Vec::with_capacity(header.count);
    for chunk in payload.chunks_exact(8) {
        let v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        if !v.is_finite() {
            return Err(fail("non-finite parameter".into()));
        }
        values.push(T::of(v));
    }
    Params::from_parts(header.spec, header.seed, header.output_scale, values)
}
