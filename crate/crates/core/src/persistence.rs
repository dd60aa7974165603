//! `.pcnn` model files. All integers and floats are little-endian.
//!
//! ```text
//! magic       "PCNN"
//! version     u32
//! input_h     u32
//! input_w     u32
//! input_c     u32
//! num_classes u32
//! n_blocks    u32
//! per block   filters u32, pool u8 (0 or 1)
//! blobs       per block: conv weights, conv bias, gain, shift,
//!             running mean, running variance; then dense weights,
//!             dense bias. Each blob is a u32 element count followed
//!             by that many f32 values.
//! crc32       u32 (IEEE) over every preceding byte
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{ArchSpec, BatchNorm, BlockSpec, Conv2d, ConvBlock, Dense, Model};

pub const MAGIC: &[u8; 4] = b"PCNN";
pub const FORMAT_VERSION: u32 = 1;
pub const EXTENSION: &str = "pcnn";

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("dimension fits in u32");
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn blob(&mut self, values: &[f32]) {
        self.u32(values.len());
        for v in values {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn model_to_bytes(model: &Model) -> Vec<u8> {
    let arch = model.arch();
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [arch.input_h, arch.input_w, arch.input_c, arch.num_classes, arch.blocks.len()] {
        w.u32(v);
    }
    for block in &arch.blocks {
        w.u32(block.filters);
        w.buf.push(u8::from(block.pool));
    }
    for block in &model.blocks {
        for blob in [
            &block.conv.weights,
            &block.conv.bias,
            &block.bn.gamma,
            &block.bn.beta,
            &block.bn.running_mean,
            &block.bn.running_var,
        ] {
            w.blob(blob);
        }
    }
    w.blob(&model.dense.weights);
    w.blob(&model.dense.bias);
    let crc = crc32fast::hash(&w.buf);
    w.buf.extend_from_slice(&crc.to_le_bytes());
    w.buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Truncated(format!("{what} needs {n} bytes at offset {}", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        Ok(self.u32(what)? as usize)
    }

    fn blob(&mut self, expected: usize, what: &str) -> Result<Vec<f32>> {
        let count = self.usize(what)?;
        if count != expected {
            return Err(Error::ShapeMismatch(format!(
                "{what} holds {count} values, architecture needs {expected}"
            )));
        }
        let raw = self.take(count * 4, what)?;
        Ok(raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
    }
}

/// Parses a model; checks, in order: magic, version, structure, checksum.
pub fn model_from_bytes(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < 12 {
        return Err(Error::Truncated(format!("{} bytes", bytes.len())));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let mut r = Reader { bytes: body, pos: 4 };
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }

    let input_h = r.usize("input height")?;
    let input_w = r.usize("input width")?;
    let input_c = r.usize("input channels")?;
    let num_classes = r.usize("class count")?;
    let n_blocks = r.usize("block count")?;
    // Each block descriptor is 5 bytes; reject absurd counts before allocating.
    if n_blocks > body.len() / 5 {
        return Err(Error::Truncated(format!("{n_blocks} blocks declared")));
    }
    let mut specs = Vec::with_capacity(n_blocks);
    for i in 0..n_blocks {
        let filters = r.usize("block filters")?;
        let pool = match r.take(1, "block pool flag")?[0] {
            0 => false,
            1 => true,
            other => {
                return Err(Error::InvalidArch(format!("block {i} pool flag {other}")));
            }
        };
        specs.push(BlockSpec { filters, pool });
    }
    let arch = ArchSpec { input_h, input_w, input_c, blocks: specs, num_classes };
    arch.validate()?;

    let mut blocks = Vec::with_capacity(n_blocks);
    let mut in_c = input_c;
    for spec in &arch.blocks {
        let f = spec.filters;
        let conv = Conv2d {
            in_channels: in_c,
            filters: f,
            weights: r.blob(f * in_c * 9, "conv weights")?,
            bias: r.blob(f, "conv bias")?,
        };
        let bn = BatchNorm {
            gamma: r.blob(f, "batchnorm gain")?,
            beta: r.blob(f, "batchnorm shift")?,
            running_mean: r.blob(f, "running mean")?,
            running_var: r.blob(f, "running variance")?,
        };
        blocks.push(ConvBlock { conv, bn, pool: spec.pool });
        in_c = f;
    }
    let inputs = arch.dense_inputs();
    let dense = Dense {
        inputs,
        outputs: num_classes,
        weights: r.blob(inputs * num_classes, "dense weights")?,
        bias: r.blob(num_classes, "dense bias")?,
    };
    if r.pos != body.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} unexpected bytes after the parameters",
            body.len() - r.pos
        )));
    }

    let stored = u32::from_le_bytes([trailer[0], trailer[1], trailer[2], trailer[3]]);
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::CrcMismatch { stored, computed });
    }
    Model::from_parts(arch, blocks, dense)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_bytes(model)).map_err(|e| Error::io(path, e))
}

/// Loads a model, returned in infer mode.
pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}
