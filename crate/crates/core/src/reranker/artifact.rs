//! Binary container shared by model and embedding-store files.
//!
//! Layout: 4-byte magic, u32 version, u32 header length, JSON header,
//! then little-endian f64 payload.

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::RerankError;

pub(crate) const VERSION: u32 = 1;

pub(crate) fn encode<H: Serialize>(magic: &[u8; 4], header: &H, arrays: &[&[f64]]) -> Vec<u8> {
    let header = serde_json::to_vec(header).expect("in-memory serialization");
    let floats: usize = arrays.iter().map(|a| a.len()).sum();
    let mut out = Vec::with_capacity(12 + header.len() + 8 * floats);
    out.extend_from_slice(magic);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for a in arrays {
        for v in *a {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub(crate) struct Decoded<H> {
    pub header: H,
    pub payload: Vec<f64>,
}

pub(crate) fn decode<H: DeserializeOwned>(magic: &[u8; 4], bytes: &[u8]) -> Result<Decoded<H>, RerankError> {
    let bad = |m: &str| RerankError::Artifact(m.to_string());
    if bytes.len() < 12 || &bytes[..4] != magic {
        return Err(bad("unrecognized file type"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(RerankError::Artifact(format!("unsupported version {version}")));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes.get(12..12 + header_len).ok_or_else(|| bad("truncated header"))?;
    let header = serde_json::from_slice(body).map_err(|e| RerankError::Artifact(e.to_string()))?;
    let rest = &bytes[12 + header_len..];
    if rest.len() % 8 != 0 {
        return Err(bad("payload is not a whole number of f64 values"));
    }
    let payload = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Decoded { header, payload })
}

pub(crate) fn read(path: &std::path::Path) -> Result<Vec<u8>, RerankError> {
    std::fs::read(path).map_err(|e| RerankError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

pub(crate) fn write(path: &std::path::Path, bytes: &[u8]) -> Result<(), RerankError> {
    crate::corpus::write_file(path, bytes).map_err(|e| RerankError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}
