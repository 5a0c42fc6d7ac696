//! Model file: one JSON header line followed by the raw parameter payload
//! (little-endian `f64`, weights then biases).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use slangbot_core::classifier::{IntentModel, LabelCodec, SoftmaxRegression, REFERENCE_BACKEND};
use slangbot_core::corpus::IntentLabel;
use slangbot_core::features::FeatureSpec;
use thiserror::Error;

use crate::error::{Error, Result};

pub const MODEL_MAGIC: &str = "slangbot-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    magic: String,
    format_version: u32,
    backend_id: String,
    labels: Vec<IntentLabel>,
    feature_spec: FeatureSpec,
    n_params: usize,
    payload_bytes: usize,
    /// CRC-32 of the payload, lowercase hex.
    checksum: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelFileError {
    #[error("empty model file")]
    Empty,
    #[error("missing header line")]
    MissingHeader,
    #[error("bad header: {0}")]
    Header(String),
    #[error("not a model file")]
    Magic,
    #[error("unsupported format version {0} (expected {MODEL_FORMAT_VERSION})")]
    Version(u32),
    #[error("unsupported backend {0:?}")]
    Backend(String),
    #[error("payload is {actual} bytes, header says {expected}")]
    Truncated { expected: usize, actual: usize },
    #[error("payload checksum mismatch")]
    Checksum,
    #[error("parameter count does not match labels × dimension")]
    Shape,
}

fn crc_hex(bytes: &[u8]) -> String {
    format!("{:08x}", crc32fast::hash(bytes))
}

pub fn encode_model(model: &IntentModel) -> Vec<u8> {
    let params = model.parameters.params();
    let mut payload = Vec::with_capacity(params.len() * 8);
    for p in &params {
        payload.extend_from_slice(&p.to_le_bytes());
    }
    let header = Header {
        magic: MODEL_MAGIC.to_string(),
        format_version: MODEL_FORMAT_VERSION,
        backend_id: model.backend_id.clone(),
        labels: model.codec.labels().to_vec(),
        feature_spec: model.feature_spec.clone(),
        n_params: params.len(),
        payload_bytes: payload.len(),
        checksum: crc_hex(&payload),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    out.extend_from_slice(&payload);
    out
}

pub fn decode_model(bytes: &[u8]) -> std::result::Result<IntentModel, ModelFileError> {
    if bytes.is_empty() {
        return Err(ModelFileError::Empty);
    }
    let newline = bytes.iter().position(|&b| b == b'\n').ok_or(ModelFileError::MissingHeader)?;
    let header: Header =
        serde_json::from_slice(&bytes[..newline]).map_err(|e| ModelFileError::Header(e.to_string()))?;
    if header.magic != MODEL_MAGIC {
        return Err(ModelFileError::Magic);
    }
    if header.format_version != MODEL_FORMAT_VERSION {
        return Err(ModelFileError::Version(header.format_version));
    }
    if header.backend_id != REFERENCE_BACKEND {
        return Err(ModelFileError::Backend(header.backend_id));
    }
    let payload = &bytes[newline + 1..];
    if payload.len() != header.payload_bytes || header.payload_bytes != header.n_params * 8 {
        return Err(ModelFileError::Truncated { expected: header.payload_bytes, actual: payload.len() });
    }
    if crc_hex(payload) != header.checksum {
        return Err(ModelFileError::Checksum);
    }
    let params: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let codec = LabelCodec::new(header.labels).map_err(|e| ModelFileError::Header(e.to_string()))?;
    if !header.feature_spec.is_valid() {
        return Err(ModelFileError::Header("invalid feature spec".into()));
    }
    let weights = SoftmaxRegression::from_params(codec.len(), header.feature_spec.dimension as usize, &params)
        .ok_or(ModelFileError::Shape)?;
    Ok(IntentModel::new(codec, &header.backend_id, header.feature_spec, weights))
}

pub fn save_model(model: &IntentModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<IntentModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes).map_err(|e| Error::format(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use slangbot_core::classifier::IntentClassifier;

    fn small_model() -> IntentModel {
        let codec = LabelCodec::new(vec!["greeting".into(), "farewell".into()]).unwrap();
        let spec = FeatureSpec { dimension: 16, ..FeatureSpec::default() };
        let n = 2 * 16 + 2;
        let params: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let weights = SoftmaxRegression::from_params(2, 16, &params).unwrap();
        IntentModel::new(codec, REFERENCE_BACKEND, spec, weights)
    }

    #[test]
    fn round_trip_predicts_identically() {
        let m = small_model();
        let back = decode_model(&encode_model(&m)).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.predict("wadii"), m.predict("wadii"));
    }

    #[test]
    fn empty_and_truncated_files_fail() {
        assert_eq!(decode_model(b""), Err(ModelFileError::Empty));
        let bytes = encode_model(&small_model());
        assert!(matches!(decode_model(&bytes[..bytes.len() - 3]), Err(ModelFileError::Truncated { .. })));
        let header_only = &bytes[..bytes.iter().position(|&b| b == b'\n').unwrap()];
        assert_eq!(decode_model(header_only), Err(ModelFileError::MissingHeader));
    }

    #[test]
    fn flipped_payload_byte_fails_checksum() {
        let mut bytes = encode_model(&small_model());
        let last = bytes.len() - 1;
        bytes[last] ^= 0x01;
        assert_eq!(decode_model(&bytes), Err(ModelFileError::Checksum));
    }

    #[test]
    fn version_mismatch_fails() {
        let bytes = encode_model(&small_model());
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        let header = std::str::from_utf8(&bytes[..nl]).unwrap();
        let mut patched = header.replacen("\"format_version\":1", "\"format_version\":9", 1).into_bytes();
        patched.extend_from_slice(&bytes[nl..]);
        assert_eq!(decode_model(&patched), Err(ModelFileError::Version(9)));
    }
}
