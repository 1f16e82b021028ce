//! Binary file formats: event streams and single dense arrays.
//!
//! Event file layout (little-endian throughout):
//!   header, 16 bytes: magic "EVST", version u32, H u16, W u16, count u32
//!   records, 16 bytes each: t u64 (microseconds), x u16, y u16,
//!                           p u8 (0 = negative, 1 = positive), 3 pad bytes
//!
//! Dense-array file layout:
//!   magic "DARR", version u32, name_len u32 + UTF-8 name, dtype u8 (1 = f32),
//!   ndim u32, dims u32 each, payload f32 row-major

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use evhand_tensor::{Scalar, Tensor};

use crate::error::{EventError, Result};
use crate::stream::{Event, EventStream, Polarity};

const EVST_MAGIC: &[u8; 4] = b"EVST";
const EVST_VERSION: u32 = 1;
const DARR_MAGIC: &[u8; 4] = b"DARR";
const DARR_VERSION: u32 = 1;
const DTYPE_F32: u8 = 1;

pub fn write_event_file(path: &Path, stream: &EventStream) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(EVST_MAGIC)?;
    w.write_all(&EVST_VERSION.to_le_bytes())?;
    w.write_all(&(stream.height() as u16).to_le_bytes())?;
    w.write_all(&(stream.width() as u16).to_le_bytes())?;
    w.write_all(&(stream.len() as u32).to_le_bytes())?;
    for e in stream.events() {
        w.write_all(&e.t.to_le_bytes())?;
        w.write_all(&e.x.to_le_bytes())?;
        w.write_all(&e.y.to_le_bytes())?;
        let p: u8 = match e.polarity {
            Polarity::Negative => 0,
            Polarity::Positive => 1,
        };
        w.write_all(&[p, 0, 0, 0])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_event_file(path: &Path) -> Result<EventStream> {
    let mut r = BufReader::new(File::open(path)?);
    let mut head = [0u8; 16];
    r.read_exact(&mut head)?;
    if &head[0..4] != EVST_MAGIC {
        return Err(EventError::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != EVST_VERSION {
        return Err(EventError::Format(format!("unsupported version {version}")));
    }
    let h = u16::from_le_bytes(head[8..10].try_into().unwrap()) as usize;
    let w = u16::from_le_bytes(head[10..12].try_into().unwrap()) as usize;
    let count = u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize;
    let mut events = Vec::with_capacity(count);
    let mut rec = [0u8; 16];
    for _ in 0..count {
        r.read_exact(&mut rec)?;
        let polarity = match rec[12] {
            0 => Polarity::Negative,
            1 => Polarity::Positive,
            other => return Err(EventError::Format(format!("bad polarity byte {other}"))),
        };
        events.push(Event {
            t: u64::from_le_bytes(rec[0..8].try_into().unwrap()),
            x: u16::from_le_bytes(rec[8..10].try_into().unwrap()),
            y: u16::from_le_bytes(rec[10..12].try_into().unwrap()),
            polarity,
        });
    }
    EventStream::new(h, w, events)
}

/// Writes one named dense array, converting values to f32.
pub fn write_array<F: Scalar>(path: &Path, name: &str, t: &Tensor<F>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DARR_MAGIC)?;
    w.write_all(&DARR_VERSION.to_le_bytes())?;
    let nb = name.as_bytes();
    w.write_all(&(nb.len() as u32).to_le_bytes())?;
    w.write_all(nb)?;
    w.write_all(&[DTYPE_F32])?;
    w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&(v.to_f64_c() as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dense array back in the caller's scalar type.
pub fn read_array<F: Scalar>(path: &Path) -> Result<(String, Tensor<F>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DARR_MAGIC {
        return Err(EventError::Format("bad array magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != DARR_VERSION {
        return Err(EventError::Format(format!("unsupported version {version}")));
    }
    let nlen = read_u32(&mut r)? as usize;
    let mut nbuf = vec![0u8; nlen];
    r.read_exact(&mut nbuf)?;
    let name =
        String::from_utf8(nbuf).map_err(|_| EventError::Format("non-utf8 name".into()))?;
    let mut dtype = [0u8; 1];
    r.read_exact(&mut dtype)?;
    if dtype[0] != DTYPE_F32 {
        return Err(EventError::Format(format!("unknown dtype {}", dtype[0])));
    }
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
    let t = Tensor::new(&shape, data)
        .map_err(|e| EventError::Format(format!("array payload: {e}")))?;
    Ok((name, t))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
