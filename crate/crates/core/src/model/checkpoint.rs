//! Checkpoint files: a magic line, a JSON header, a terminator line, then
//! every tensor as little-endian `f32` in declaration order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ArchitectureConfig;
use super::weights::{init_weights, ModelWeights, Params};
use crate::datagen::NormStats;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "DYNCGAN-CHECKPOINT";
pub const CHECKPOINT_SCHEMA: u32 = 1;
const END_HEADER: &str = "END-HEADER";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    architecture: ArchitectureConfig,
    normalization: NormStats,
    re_range: [f64; 2],
    #[serde(default)]
    provenance: BTreeMap<String, String>,
    tensors: Vec<TensorEntry>,
    blob_bytes: usize,
}

const KNOWN_KEYS: &[&str] = &[
    "schema_version",
    "architecture",
    "normalization",
    "re_range",
    "provenance",
    "tensors",
    "blob_bytes",
];

pub fn save_checkpoint(w: &ModelWeights<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = w.clone();
    let mut tensors = Vec::new();
    let mut blob = Vec::new();
    w.visit_params(&mut |name, v| {
        tensors.push(TensorEntry { name, len: v.len() });
        for x in v.iter() {
            blob.extend_from_slice(&x.to_le_bytes());
        }
    });
    let header = Header {
        schema_version: CHECKPOINT_SCHEMA,
        architecture: w.arch.clone(),
        normalization: w.normalization,
        re_range: [w.re_range.0, w.re_range.1],
        provenance: w.provenance.clone(),
        tensors,
        blob_bytes: blob.len(),
    };
    let json = serde_json::to_string_pretty(&header)
        .map_err(|e| Error::format(path, format!("cannot encode header: {e}")))?;
    let mut bytes = format!("{CHECKPOINT_MAGIC}\n{json}\n{END_HEADER}\n").into_bytes();
    bytes.extend_from_slice(&blob);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint, logging any header warnings.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelWeights<f32>> {
    let (w, warnings) = read_checkpoint(path)?;
    for msg in warnings {
        log::warn!("{msg}");
    }
    Ok(w)
}

/// Loads a checkpoint and returns the non-fatal header warnings.
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(ModelWeights<f32>, Vec<String>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let magic = format!("{CHECKPOINT_MAGIC}\n");
    if !bytes.starts_with(magic.as_bytes()) {
        return Err(Error::format(path, "not a checkpoint (missing magic line)"));
    }
    let terminator = format!("\n{END_HEADER}\n");
    let rest = &bytes[magic.len()..];
    let end = rest
        .windows(terminator.len())
        .position(|w| w == terminator.as_bytes())
        .ok_or_else(|| Error::format(path, "header terminator not found"))?;
    let header_text = std::str::from_utf8(&rest[..end])
        .map_err(|_| Error::format(path, "header is not UTF-8"))?;
    let blob = &rest[end + terminator.len()..];

    let raw: serde_json::Value = serde_json::from_str(header_text)
        .map_err(|e| Error::format(path, format!("bad header: {e}")))?;
    let version = raw.get("schema_version").and_then(|v| v.as_u64());
    if version != Some(CHECKPOINT_SCHEMA as u64) {
        return Err(Error::format(
            path,
            format!("unsupported schema version {version:?} (expected {CHECKPOINT_SCHEMA})"),
        ));
    }
    let mut warnings = Vec::new();
    if let Some(obj) = raw.as_object() {
        for key in obj.keys().filter(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            warnings.push(format!("{}: ignoring unknown header key '{key}'", path.display()));
        }
    }
    let header: Header = serde_json::from_value(raw)
        .map_err(|e| Error::format(path, format!("bad header: {e}")))?;
    header
        .architecture
        .validate()
        .map_err(|e| Error::format(path, e.to_string()))?;

    let mut w = init_weights::<f32>(&header.architecture, 0)?;
    let mut expected = Vec::new();
    w.visit_params(&mut |name, v| expected.push((name, v.len())));
    let declared: Vec<(String, usize)> = header.tensors.iter().map(|t| (t.name.clone(), t.len)).collect();
    if declared != expected {
        return Err(Error::format(path, "tensor list does not match the architecture"));
    }
    let total: usize = expected.iter().map(|(_, n)| n).sum();
    if header.blob_bytes != total * 4 || blob.len() != total * 4 {
        return Err(Error::format(
            path,
            format!(
                "weight blob has {} bytes (header says {}), architecture needs {}",
                blob.len(),
                header.blob_bytes,
                total * 4
            ),
        ));
    }
    let mut offset = 0;
    w.visit_params(&mut |_, v| {
        for x in v.iter_mut() {
            let b = &blob[offset..offset + 4];
            *x = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            offset += 4;
        }
    });
    w.normalization = header.normalization;
    w.re_range = (header.re_range[0], header.re_range[1]);
    w.provenance = header.provenance;
    Ok((w, warnings))
}
