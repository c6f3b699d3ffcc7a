//! Little-endian byte cursor that reports the offset of every decode failure.

use crate::error::{Error, Result};

pub(crate) const VERSION: u32 = 1;

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub fn fail<T>(&self, at: u64, message: impl Into<String>) -> Result<T> {
        Err(Error::Decode {
            offset: at,
            message: message.into(),
        })
    }

    pub fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let remaining = self.buf.len() - self.pos;
        if n > remaining {
            return self.fail(
                self.pos as u64,
                format!("truncated {what}: need {n} bytes, {remaining} left"),
            );
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    /// A count that must fit in memory alongside `unit` bytes per element.
    pub fn count(&mut self, what: &str, unit: usize) -> Result<usize> {
        let at = self.offset();
        let n = self.u64(what)?;
        let remaining = (self.buf.len() - self.pos) as u64;
        if n.checked_mul(unit as u64).map_or(true, |b| b > remaining) {
            return self.fail(at, format!("{what} {n} exceeds the remaining {remaining} bytes"));
        }
        Ok(n as usize)
    }

    /// 8-byte magic, version and a 4-byte tag; returns the tag.
    pub fn header(&mut self, magic: &[u8; 8]) -> Result<u32> {
        let found = self.take(8, "magic")?;
        if found != magic {
            return self.fail(0, format!("bad magic {:?}", String::from_utf8_lossy(found)));
        }
        let at = self.offset();
        let version = self.u32("version")?;
        if version != VERSION {
            return self.fail(at, format!("unsupported version {version}"));
        }
        self.u32("header tag")
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return self.fail(
                self.pos as u64,
                format!("{} trailing bytes", self.buf.len() - self.pos),
            );
        }
        Ok(())
    }
}

pub(crate) struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 8], tag: u32) -> Self {
        let mut w = Self { buf: Vec::new() };
        w.buf.extend_from_slice(magic);
        w.u32(VERSION);
        w.u32(tag);
        w
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
}
