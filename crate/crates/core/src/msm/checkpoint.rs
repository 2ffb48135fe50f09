//! Checkpoint files: a magic line, a one-line JSON manifest naming every
//! parameter with its shape, then the parameter values as little-endian
//! `f64` in manifest order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Manifest, MsmModel, FORMAT_VERSION};
use crate::error::{Error, Result};

const MAGIC: &str = "MSM-CNN-CHECKPOINT";

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: [usize; 4],
}

#[derive(Debug, Serialize, Deserialize)]
struct FileManifest {
    #[serde(flatten)]
    model: Manifest,
    parameters: Vec<ParamEntry>,
}

pub fn save_model<W: Write>(m: &MsmModel, mut sink: W) -> Result<()> {
    let fm = FileManifest {
        model: m.manifest.clone(),
        parameters: m.parameters().iter().map(|p| ParamEntry { name: p.name.clone(), shape: p.shape() }).collect(),
    };
    writeln!(sink, "{MAGIC}")?;
    writeln!(sink, "{}", serde_json::to_string(&fm)?)?;
    let mut buf = Vec::with_capacity(8 * m.num_weights());
    for p in m.parameters() {
        for v in p.value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    sink.write_all(&buf)?;
    sink.flush()?;
    Ok(())
}

fn take_line<'a>(bytes: &'a [u8], what: &str) -> Result<(&'a str, &'a [u8])> {
    let end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format(format!("missing {what} line")))?;
    let line = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::Format(format!("{what} line is not UTF-8")))?;
    Ok((line, &bytes[end + 1..]))
}

pub fn load_model<R: Read>(mut source: R) -> Result<MsmModel> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let (magic, rest) = take_line(&bytes, "header")?;
    if magic != MAGIC {
        return Err(Error::Format(format!("not a model checkpoint (header {magic:?})")));
    }
    let (json, payload) = take_line(rest, "manifest")?;
    let raw: serde_json::Value = serde_json::from_str(json)?;
    let version = raw
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Format("manifest has no version".into()))?;
    if version != u64::from(FORMAT_VERSION) {
        return Err(Error::Version { found: version.min(u64::from(u32::MAX)) as u32, expected: FORMAT_VERSION });
    }
    let fm: FileManifest = serde_json::from_value(raw)?;
    let mut model = MsmModel::zeros(fm.model.config())?;

    let expected: Vec<(String, [usize; 4])> = model.parameters().iter().map(|p| (p.name.clone(), p.shape())).collect();
    if expected.len() != fm.parameters.len() {
        return Err(Error::Shape(format!(
            "manifest declares n={} ({} parameter tensors) but lists {}",
            fm.model.n,
            expected.len(),
            fm.parameters.len()
        )));
    }
    for ((name, shape), e) in expected.iter().zip(&fm.parameters) {
        if *name != e.name || *shape != e.shape {
            return Err(Error::Shape(format!(
                "parameter {} {:?} does not match expected {name} {shape:?}",
                e.name, e.shape
            )));
        }
    }

    let need = 8 * model.num_weights();
    if payload.len() < need {
        return Err(Error::Truncated { expected: need, found: payload.len() });
    }
    if payload.len() > need {
        return Err(Error::Format(format!("{} trailing bytes after parameter payload", payload.len() - need)));
    }
    let mut chunks = payload.chunks_exact(8);
    for p in model.parameters_mut() {
        for v in p.value.data_mut() {
            *v = f64::from_le_bytes(chunks.next().expect("length checked").try_into().expect("8 bytes"));
        }
    }
    model.manifest = fm.model;
    let norm = model.manifest.normalization;
    model.set_normalization(norm);
    Ok(model)
}

pub fn save_model_file(m: &MsmModel, path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    save_model(m, std::io::BufWriter::new(f))
}

pub fn load_model_file(path: impl AsRef<Path>) -> Result<MsmModel> {
    load_model(std::io::BufReader::new(std::fs::File::open(path)?))
}
