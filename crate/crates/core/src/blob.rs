//! Little-endian blob encoding shared by the serializable sketches.
//!
//! Layout: 4-byte magic, 1-byte version, then fixed-width little-endian
//! fields in the order each sketch documents.

use crate::error::{Result, SketchError};

pub(crate) const VERSION: u8 = 1;

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub(crate) fn new(magic: &[u8; 4]) -> Self {
        let mut buf = magic.to_vec();
        buf.push(VERSION);
        Self { buf }
    }

    pub(crate) fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub(crate) fn f64(&mut self, v: f64) -> &mut Self {
        self.u64(v.to_bits())
    }

    pub(crate) fn u64s(&mut self, vs: &[u64]) -> &mut Self {
        for &v in vs {
            self.u64(v);
        }
        self
    }

    pub(crate) fn finish(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.buf)
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        if buf.len() < 5 || &buf[..4] != magic {
            return Err(SketchError::Blob("bad magic".into()));
        }
        if buf[4] != VERSION {
            return Err(SketchError::Blob(format!("unsupported version {}", buf[4])));
        }
        Ok(Self { buf, pos: 5 })
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        let end = self.pos + 8;
        let bytes = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| SketchError::Blob("truncated".into()))?;
        self.pos = end;
        Ok(u64::from_le_bytes(bytes.try_into().expect("slice of length 8")))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    pub(crate) fn u64s(&mut self, count: usize) -> Result<Vec<u64>> {
        (0..count).map(|_| self.u64()).collect()
    }

    pub(crate) fn finish(self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(SketchError::Blob("trailing bytes".into()))
        }
    }
}
