//! `SCNN` model container.
//!
//! ```text
//! "SCNN"                      4 bytes
//! version                     u32 (= 1)
//! input_width, input_height   u32, u32
//! conv1_filters, conv2_filters, kernel, pool
//!                             u32 x 4
//! activation                  u32 (0 = relu, 1 = identity)
//! head                        u32 (0 = dense, 1 = global max)
//! tensor_count                u32
//! per tensor:
//!   name_len, name            u32, UTF-8 bytes
//!   rank, dims                u32, u32 x rank
//!   values                    f64 x prod(dims)
//! metadata_len, metadata      u32, UTF-8 JSON
//! ```
//!
//! All integers and floats are little-endian.

use std::io::{Read, Write};

use super::cnn::{Activation, Architecture, CnnModel, Head, TrainingMetadata};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"SCNN";
const VERSION: u32 = 1;

pub fn write_model<W: Write>(mut out: W, model: &CnnModel) -> Result<()> {
    let a = model.architecture();
    let mut buf = Vec::new();
    buf.extend_from_slice(MODEL_MAGIC);
    let act = match a.activation {
        Activation::Relu => 0u32,
        Activation::Identity => 1,
    };
    for v in [
        VERSION,
        a.input_width as u32,
        a.input_height as u32,
        a.conv1_filters as u32,
        a.conv2_filters as u32,
        a.kernel as u32,
        a.pool as u32,
        act,
        match a.head {
            Head::Dense => 0,
            Head::GlobalMax => 1,
        },
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let tensors = model.layout().tensors(a);
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, dims, range) in tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in dims {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &model.params()[range] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let meta = serde_json::to_vec(&model.metadata).expect("metadata serializes");
    buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    buf.extend_from_slice(&meta);
    out.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.at < n {
            return Err(Error::Model(format!(
                "truncated at byte offset {} reading {what}",
                self.at
            )));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn read_model<R: Read>(mut source: R) -> Result<CnnModel> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let mut c = Cursor {
        bytes: &bytes,
        at: 0,
    };
    if c.take(4, "magic")? != MODEL_MAGIC {
        return Err(Error::Model(
            "bad magic at byte offset 0, expected \"SCNN\"".into(),
        ));
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(Error::Model(format!("unsupported version {version}")));
    }
    let mut next = |what| c.u32(what).map(|v| v as usize);
    let input_width = next("input_width")?;
    let input_height = next("input_height")?;
    let conv1_filters = next("conv1_filters")?;
    let conv2_filters = next("conv2_filters")?;
    let kernel = next("kernel")?;
    let pool = next("pool")?;
    let activation = match next("activation")? {
        0 => Activation::Relu,
        1 => Activation::Identity,
        other => return Err(Error::Model(format!("unknown activation code {other}"))),
    };
    let head = match next("head")? {
        0 => Head::Dense,
        1 => Head::GlobalMax,
        other => return Err(Error::Model(format!("unknown head code {other}"))),
    };
    let arch = Architecture {
        input_width,
        input_height,
        conv1_filters,
        conv2_filters,
        kernel,
        pool,
        activation,
        head,
    };
    let layout = arch.layout().map_err(|e| Error::Model(e.to_string()))?;
    let expected = layout.tensors(&arch);
    let count = c.u32("tensor count")? as usize;
    if count != expected.len() {
        return Err(Error::Model(format!(
            "expected {} tensors, found {count}",
            expected.len()
        )));
    }
    let mut params = vec![0.0; layout.len()];
    for (name, dims, range) in expected {
        let len = c.u32("tensor name length")? as usize;
        let found = c.take(len, "tensor name")?;
        if found != name.as_bytes() {
            return Err(Error::Model(format!(
                "expected tensor {name}, found {:?}",
                String::from_utf8_lossy(found)
            )));
        }
        let rank = c.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u32("dimension")? as usize);
        }
        if shape != dims {
            return Err(Error::Model(format!(
                "tensor {name} has shape {shape:?}, architecture needs {dims:?}"
            )));
        }
        for v in &mut params[range] {
            *v = c.f64(name)?;
        }
    }
    let meta_len = c.u32("metadata length")? as usize;
    let metadata: TrainingMetadata = serde_json::from_slice(c.take(meta_len, "metadata")?)
        .map_err(|e| Error::Model(format!("metadata: {e}")))?;
    if c.at != bytes.len() {
        return Err(Error::Model(format!(
            "{} trailing bytes at offset {}",
            bytes.len() - c.at,
            c.at
        )));
    }
    CnnModel::from_parts(arch, params, metadata)
}
