//! Binary checkpoint format, all integers and reals little-endian:
//!
//! ```text
//! "TFR1"
//! u32 input_height, input_width, input_channels, kernel_size, depth
//! u32 × depth       encoder channel ladder
//! u64               parameter count P
//! f64 × P           parameters in declaration order
//! u64               Adam step counter
//! f64 × P           Adam first moments
//! f64 × P           Adam second moments
//! ```

use std::path::Path;

use super::{AdamState, Architecture, ModelWeights};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TFR1";

pub fn write_checkpoint(model: &ModelWeights) -> Vec<u8> {
    let arch = model.architecture();
    let n = model.param_count();
    let mut out = Vec::with_capacity(4 + 4 * (5 + arch.depth()) + 16 + 24 * n);
    out.extend_from_slice(MAGIC);
    for v in [
        arch.input_height,
        arch.input_width,
        arch.input_channels,
        arch.kernel_size,
        arch.depth(),
    ]
    .into_iter()
    .chain(arch.encoder_channels.iter().copied())
    {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&(n as u64).to_le_bytes());
    let put = |out: &mut Vec<u8>, xs: &[f64]| {
        for x in xs {
            out.extend_from_slice(&x.to_le_bytes());
        }
    };
    put(&mut out, model.params());
    out.extend_from_slice(&model.adam().step.to_le_bytes());
    put(&mut out, &model.adam().m);
    put(&mut out, &model.adam().v);
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated(format!(
                "needed {n} bytes for {what} at offset {}, {} left",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Format("size overflow".into()))?,
            what,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<ModelWeights> {
    if bytes.len() < 4 {
        return Err(Error::Truncated("missing magic".into()));
    }
    let magic = &bytes[..4];
    if magic != MAGIC {
        if magic.starts_with(b"TFR") {
            return Err(Error::VersionMismatch {
                expected: String::from_utf8_lossy(MAGIC).into_owned(),
                found: String::from_utf8_lossy(magic).into_owned(),
            });
        }
        return Err(Error::Format(format!("bad magic bytes {magic:02x?}")));
    }
    let mut cur = Cursor { bytes, pos: 4 };
    let input_height = cur.u32("input_height")?;
    let input_width = cur.u32("input_width")?;
    let input_channels = cur.u32("input_channels")?;
    let kernel_size = cur.u32("kernel_size")?;
    let depth = cur.u32("depth")?;
    if depth > 64 {
        return Err(Error::Format(format!("implausible depth {depth}")));
    }
    let encoder_channels = (0..depth)
        .map(|_| cur.u32("encoder channels"))
        .collect::<Result<Vec<_>>>()?;
    let arch = Architecture {
        input_height,
        input_width,
        input_channels,
        encoder_channels,
        kernel_size,
    };
    arch.validate()
        .map_err(|e| Error::Format(format!("invalid architecture: {e}")))?;
    let n = cur.u64("parameter count")? as usize;
    if n != arch.param_count() {
        return Err(Error::Format(format!(
            "parameter count {n} does not match architecture ({})",
            arch.param_count()
        )));
    }
    let params = cur.f64s(n, "parameters")?;
    let step = cur.u64("adam step")?;
    let m = cur.f64s(n, "adam first moments")?;
    let v = cur.f64s(n, "adam second moments")?;
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes",
            bytes.len() - cur.pos
        )));
    }
    ModelWeights::from_parts(arch, params, AdamState { step, m, v })
}

pub fn save_checkpoint(model: &ModelWeights, path: &Path) -> Result<()> {
    std::fs::write(path, write_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelWeights> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}
