//! Little-endian header and payload helpers shared by the binary file formats
//! (SBAT tensors, SBAV vector batches, SBAP models).

use crate::error::{Result, SbaError};
use crate::scalar::Real;

pub(crate) const VERSION: u32 = 1;

pub(crate) fn put_header(out: &mut Vec<u8>, magic: &[u8; 4], fields: &[u32]) {
    out.extend_from_slice(magic);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for f in fields {
        out.extend_from_slice(&f.to_le_bytes());
    }
}

pub(crate) fn put_reals<T: Real>(out: &mut Vec<u8>, values: &[T]) {
    out.reserve(values.len() * 4);
    for v in values {
        let v = v.to_f32().expect("Real converts to f32");
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn to_u32(value: usize, what: &str) -> Result<u32> {
    u32::try_from(value).map_err(|_| SbaError::Value(format!("{what} {value} exceeds u32 range")))
}

/// Cursor over an in-memory file image.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    /// Checks magic and version, leaving the cursor just past the version word.
    pub(crate) fn open(bytes: &'a [u8], magic: &[u8; 4], what: &'static str) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(SbaError::Format(format!(
                "{what}: {} bytes is too short for a header",
                bytes.len()
            )));
        }
        if &bytes[0..4] != magic {
            return Err(SbaError::Format(format!(
                "{what}: bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&bytes[0..4]),
                String::from_utf8_lossy(magic)
            )));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(SbaError::Format(format!("{what}: unsupported version {version}")));
        }
        Ok(Self { bytes, pos: 8, what })
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        if end > self.bytes.len() {
            return Err(SbaError::Format(format!("{}: truncated header", self.what)));
        }
        let v = u32::from_le_bytes(self.bytes[self.pos..end].try_into().unwrap());
        self.pos = end;
        Ok(v)
    }

    /// Reads `count` f32 values, failing with `Corrupt` when the payload is short.
    pub(crate) fn reals<T: Real>(&mut self, count: usize) -> Result<Vec<T>> {
        let need = count
            .checked_mul(4)
            .ok_or_else(|| SbaError::Corrupt(format!("{}: payload size overflows", self.what)))?;
        let available = self.bytes.len() - self.pos;
        if available < need {
            return Err(SbaError::Corrupt(format!(
                "{}: payload has {available} bytes, header requires {need}",
                self.what
            )));
        }
        let out = self.bytes[self.pos..self.pos + need]
            .chunks_exact(4)
            .map(|b| T::of(f32::from_le_bytes(b.try_into().unwrap()) as f64))
            .collect();
        self.pos += need;
        Ok(out)
    }

    pub(crate) fn finish(self) -> Result<()> {
        let extra = self.bytes.len() - self.pos;
        if extra != 0 {
            return Err(SbaError::Corrupt(format!(
                "{}: {extra} trailing bytes after payload",
                self.what
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_finite<T: Real>(values: &[T], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(SbaError::Value(format!("{what}: non-finite value at index {i}"))),
        None => Ok(()),
    }
}
