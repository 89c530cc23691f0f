//! VVOL on-disk format.
//!
//! Layout: the 6-byte magic `VVOL1\n`, a little-endian `u32` header length
//! `L`, `L` bytes of UTF-8 JSON header, then one little-endian value per
//! voxel in x-fastest order (`u8` for binary volumes, `f32` for scalar).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BinaryVolume, GridMeta, Result, ScalarVolume, Volume, VolumeError};

pub const MAGIC: &[u8; 6] = b"VVOL1\n";
const ORDER: &str = "x-fastest";

#[derive(Serialize, Deserialize)]
struct Header {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    dtype: String,
    order: String,
}

pub fn write_volume(path: impl AsRef<Path>, volume: &Volume) -> Result<()> {
    let path = path.as_ref();
    let meta = volume.meta();
    let (dtype, payload) = match volume {
        Volume::Binary(v) => ("u8", v.voxels().to_vec()),
        Volume::Scalar(v) => {
            if let Some(index) = v.voxels().iter().position(|x| !x.is_finite()) {
                return Err(VolumeError::NonFinite { index });
            }
            let mut bytes = Vec::with_capacity(4 * v.voxels().len());
            for x in v.voxels() {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
            ("f32", bytes)
        }
    };
    let header = Header {
        dims: meta.dims(),
        spacing: meta.spacing(),
        origin: meta.origin(),
        dtype: dtype.to_string(),
        order: ORDER.to_string(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let header_len = u32::try_from(header.len()).expect("header fits in u32");

    let mut bytes = Vec::with_capacity(MAGIC.len() + 4 + header.len() + payload.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&header_len.to_le_bytes());
    bytes.extend_from_slice(&header);
    bytes.extend_from_slice(&payload);
    fs::write(path, bytes).map_err(|source| VolumeError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| VolumeError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(path, &bytes)
}

pub fn read_binary(path: impl AsRef<Path>) -> Result<BinaryVolume> {
    let path = path.as_ref();
    match read_volume(path)? {
        Volume::Binary(v) => Ok(v),
        other => Err(VolumeError::WrongKind {
            path: path.to_path_buf(),
            expected: "binary",
            found: other.kind(),
        }),
    }
}

pub fn read_scalar(path: impl AsRef<Path>) -> Result<ScalarVolume> {
    let path = path.as_ref();
    match read_volume(path)? {
        Volume::Scalar(v) => Ok(v),
        other => Err(VolumeError::WrongKind {
            path: path.to_path_buf(),
            expected: "scalar",
            found: other.kind(),
        }),
    }
}

fn decode(path: &Path, bytes: &[u8]) -> Result<Volume> {
    let truncated = |what, expected, found| VolumeError::Truncated {
        path: path.to_path_buf(),
        what,
        expected,
        found,
    };
    if bytes.len() < MAGIC.len() {
        if !MAGIC.starts_with(bytes) {
            return Err(VolumeError::BadMagic {
                path: path.to_path_buf(),
                found: bytes.to_vec(),
            });
        }
        return Err(truncated("magic", MAGIC.len(), bytes.len()));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(VolumeError::BadMagic {
            path: path.to_path_buf(),
            found: bytes[..MAGIC.len()].to_vec(),
        });
    }
    let rest = &bytes[MAGIC.len()..];
    if rest.len() < 4 {
        return Err(truncated("header length", 4, rest.len()));
    }
    let header_len = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
    let rest = &rest[4..];
    if rest.len() < header_len {
        return Err(truncated("header", header_len, rest.len()));
    }
    let bad_header = |reason: String| VolumeError::BadHeader {
        path: path.to_path_buf(),
        reason,
    };
    let text = std::str::from_utf8(&rest[..header_len]).map_err(|e| bad_header(e.to_string()))?;
    let header: Header = serde_json::from_str(text).map_err(|e| bad_header(e.to_string()))?;
    if header.order != ORDER {
        return Err(VolumeError::UnknownOrder {
            path: path.to_path_buf(),
            order: header.order,
        });
    }
    let meta = GridMeta::new(header.dims, header.spacing, header.origin)
        .map_err(|e| bad_header(e.to_string()))?;
    let width = match header.dtype.as_str() {
        "u8" => 1,
        "f32" => 4,
        _ => {
            return Err(VolumeError::UnknownDtype {
                path: path.to_path_buf(),
                dtype: header.dtype,
            })
        }
    };
    let payload = &rest[header_len..];
    let expected = meta.len() * width;
    if payload.len() < expected {
        return Err(truncated("payload", expected, payload.len()));
    }
    if payload.len() > expected {
        return Err(VolumeError::PayloadLength {
            path: path.to_path_buf(),
            dims: meta.dims(),
            expected,
            found: payload.len(),
        });
    }
    let volume = if width == 1 {
        Volume::Binary(BinaryVolume::new(meta, payload.to_vec())?)
    } else {
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Volume::Scalar(ScalarVolume::new(meta, values)?)
    };
    Ok(volume)
}
