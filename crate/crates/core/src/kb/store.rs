//! On-disk layout of a knowledge base directory:
//!
//! ```text
//! <dir>/manifest.json        catalog, sequences and the feature index
//! <dir>/features/f000000.bin one binary matrix per feature sequence
//! ```
//!
//! Feature files start with a 28-byte little-endian header
//! (`b"NSPF"`, format version `u32`, dimension `u32`, frame count `u32`,
//! snippet span `u32`, fps `f64`) followed by `frames × dim` row-major `f32`
//! values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_kb, ActionSequenceRecord, Catalog, FeatureSequence, KbError, KnowledgeBase, Result};

pub const SCHEMA_VERSION: u32 = 1;

const MANIFEST: &str = "manifest.json";
const FEATURE_DIR: &str = "features";
const MAGIC: &[u8; 4] = b"NSPF";
const FEATURE_FORMAT: u32 = 1;
const HEADER_LEN: usize = 28;

#[derive(Serialize, Deserialize)]
struct FeatureEntry {
    #[serde(rename = "ref")]
    feature_ref: String,
    file: String,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    catalog: Catalog,
    sequences: Vec<ActionSequenceRecord>,
    features: Vec<FeatureEntry>,
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: u32,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> KbError + '_ {
    move |source| KbError::IoFailure { path: path.display().to_string(), source }
}

pub fn save_kb(kb: &KnowledgeBase, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let feature_dir = dir.join(FEATURE_DIR);
    fs::create_dir_all(&feature_dir).map_err(io_err(&feature_dir))?;

    let mut entries = Vec::with_capacity(kb.features().len());
    for (i, (feature_ref, fs)) in kb.features().iter().enumerate() {
        let file = format!("{FEATURE_DIR}/f{i:06}.bin");
        let path = dir.join(&file);
        fs::write(&path, encode_features(fs)).map_err(io_err(&path))?;
        entries.push(FeatureEntry { feature_ref: feature_ref.clone(), file });
    }

    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        catalog: kb.catalog().clone(),
        sequences: kb.sequences().to_vec(),
        features: entries,
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| KbError::CorruptManifest(e.to_string()))?;
    let path = dir.join(MANIFEST);
    fs::write(&path, text).map_err(io_err(&path))
}

pub fn load_kb(dir: impl AsRef<Path>) -> Result<KnowledgeBase> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;

    let probe: VersionProbe =
        serde_json::from_str(&text).map_err(|e| KbError::CorruptManifest(e.to_string()))?;
    if probe.schema_version != SCHEMA_VERSION {
        return Err(KbError::SchemaVersionMismatch {
            expected: SCHEMA_VERSION,
            found: probe.schema_version,
        });
    }
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| KbError::CorruptManifest(e.to_string()))?;

    let mut features = BTreeMap::new();
    for entry in manifest.features {
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let fs = decode_features(&bytes).map_err(|reason| KbError::CorruptFeatureFile {
            path: path.display().to_string(),
            reason,
        })?;
        features.insert(entry.feature_ref, fs);
    }
    build_kb(manifest.catalog, manifest.sequences, features)
}

/// Writes one feature sequence in the binary format above.
pub fn write_feature_file(path: impl AsRef<Path>, fs: &FeatureSequence) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_features(fs)).map_err(io_err(path))
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_features(&bytes).map_err(|reason| KbError::CorruptFeatureFile { path: path.display().to_string(), reason })
}

/// Reads every `<ref>.bin` file of a directory, keyed by `<ref>`.
pub fn read_feature_dir(dir: impl AsRef<Path>) -> Result<BTreeMap<String, FeatureSequence>> {
    let dir = dir.as_ref();
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().is_some_and(|e| e == "bin") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), read_feature_file(&path)?);
            }
        }
    }
    Ok(out)
}

/// Writes each feature sequence to `<dir>/<ref>.bin`.
pub fn write_feature_dir(dir: impl AsRef<Path>, features: &BTreeMap<String, FeatureSequence>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (name, fs) in features {
        write_feature_file(dir.join(format!("{name}.bin")), fs)?;
    }
    Ok(())
}

pub(crate) fn encode_features(fs: &FeatureSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * fs.as_flat().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FEATURE_FORMAT.to_le_bytes());
    out.extend_from_slice(&(fs.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(fs.len() as u32).to_le_bytes());
    out.extend_from_slice(&fs.snippet_span().to_le_bytes());
    out.extend_from_slice(&fs.fps().to_le_bytes());
    for v in fs.as_flat() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

pub(crate) fn decode_features(bytes: &[u8]) -> std::result::Result<FeatureSequence, String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!("{} bytes is shorter than the header", bytes.len()));
    }
    if &bytes[..4] != MAGIC {
        return Err("bad magic".into());
    }
    let format = read_u32(bytes, 4);
    if format != FEATURE_FORMAT {
        return Err(format!("unsupported feature format {format}"));
    }
    let dim = read_u32(bytes, 8) as usize;
    let frames = read_u32(bytes, 12) as usize;
    let span = read_u32(bytes, 16);
    let fps = f64::from_le_bytes(bytes[20..28].try_into().expect("8-byte slice"));
    let expected = dim
        .checked_mul(frames)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or("header sizes overflow")?;
    if bytes.len() != expected {
        return Err(format!("expected {expected} bytes, found {}", bytes.len()));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    FeatureSequence::from_flat(dim, data)
        .and_then(|fs| fs.with_timing(span, fps))
        .map_err(|e| e.to_string())
}
