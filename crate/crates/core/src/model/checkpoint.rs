//! Binary checkpoint: magic, LE u32 version, LE u32 header length,
//! a JSON header describing the tensors, then every tensor as LE f64.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tape::Mat;
use super::{ArchConfig, Model, ModelError};
use crate::codec::Vocabulary;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SYMODEM1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    arch: ArchConfig,
    vocab: Vocabulary,
    tensors: Vec<TensorInfo>,
}

pub fn save_model(model: &Model, path: &Path) -> Result<(), ModelError> {
    let header = Header {
        arch: model.arch.clone(),
        vocab: model.vocab.clone(),
        tensors: model
            .names
            .iter()
            .zip(&model.params)
            .map(|(name, p)| TensorInfo {
                name: name.clone(),
                rows: p.rows,
                cols: p.cols,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let len = u32::try_from(json.len()).map_err(|_| ModelError::Checkpoint("header too large".into()))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&json)?;
    for p in &model.params {
        for x in &p.data {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32, ModelError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn load_model(path: &Path) -> Result<Model, ModelError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| ModelError::Checkpoint("file too short".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(ModelError::Checkpoint("not a model checkpoint".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
    }
    let len = read_u32(&mut r)? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let mut params = Vec::with_capacity(header.tensors.len());
    let mut buf = [0u8; 8];
    for t in &header.tensors {
        let mut data = Vec::with_capacity(t.rows * t.cols);
        for _ in 0..t.rows * t.cols {
            r.read_exact(&mut buf)
                .map_err(|_| ModelError::Checkpoint(format!("truncated tensor {}", t.name)))?;
            data.push(f64::from_le_bytes(buf));
        }
        params.push(Mat::from_vec(t.rows, t.cols, data));
    }
    if r.read(&mut buf)? != 0 {
        return Err(ModelError::Checkpoint("trailing bytes".into()));
    }
    let model = Model::from_parts(header.arch, header.vocab, params)?;
    if header.tensors.iter().zip(&model.names).any(|(t, n)| &t.name != n) {
        return Err(ModelError::Checkpoint("tensor names do not match the architecture".into()));
    }
    Ok(model)
}
