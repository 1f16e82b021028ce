//! Checkpoint container: a JSON header (step counter, optimizer and
//! architecture metadata) followed by named dense arrays stored as 32-bit
//! IEEE-754 little-endian row-major payloads.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"EVCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint<F: Scalar> {
    pub step: u64,
    pub meta: serde_json::Value,
    pub arrays: BTreeMap<String, Tensor<F>>,
}

impl<F: Scalar> Checkpoint<F> {
    pub fn new(step: u64, meta: serde_json::Value) -> Self {
        Self {
            step,
            meta,
            arrays: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, t: Tensor<F>) {
        self.arrays.insert(name.to_string(), t);
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let header = serde_json::json!({ "step": self.step, "meta": self.meta });
        let header = serde_json::to_vec(&header)?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        w.write_all(&(self.arrays.len() as u32).to_le_bytes())?;
        for (name, t) in &self.arrays {
            let nb = name.as_bytes();
            w.write_all(&(nb.len() as u32).to_le_bytes())?;
            w.write_all(nb)?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for &v in t.data() {
                w.write_all(&(v.to_f64_c() as f32).to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(TensorError::CheckpointFormat("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(TensorError::CheckpointFormat(format!(
                "unsupported version {version}"
            )));
        }
        let hlen = read_u32(&mut r)? as usize;
        let mut hbuf = vec![0u8; hlen];
        r.read_exact(&mut hbuf)?;
        let header: serde_json::Value = serde_json::from_slice(&hbuf)?;
        let step = header
            .get("step")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| TensorError::CheckpointFormat("missing step".into()))?;
        let meta = header.get("meta").cloned().unwrap_or(serde_json::Value::Null);
        let count = read_u32(&mut r)? as usize;
        let mut arrays = BTreeMap::new();
        for _ in 0..count {
            let nlen = read_u32(&mut r)? as usize;
            let mut nbuf = vec![0u8; nlen];
            r.read_exact(&mut nbuf)?;
            let name = String::from_utf8(nbuf)
                .map_err(|_| TensorError::CheckpointFormat("non-utf8 name".into()))?;
            let ndim = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(read_u32(&mut r)? as usize);
            }
            let numel: usize = shape.iter().product();
            let mut payload = vec![0u8; numel * 4];
            r.read_exact(&mut payload)?;
            let data = payload
                .chunks_exact(4)
                .map(|b| F::from_f64_c(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
                .collect();
            arrays.insert(name, Tensor::new(&shape, data)?);
        }
        Ok(Self { step, meta, arrays })
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
