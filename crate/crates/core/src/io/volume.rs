//! Voxel container: 16-byte magic/version header, grid counts (3 x u64), spacing and
//! origin (6 x f64), a value-kind byte, then voxel data with x fastest. All little-endian.

use crate::error::{Error, Result};
use crate::fft::C64;
use crate::grid::Grid3;
use crate::volume::ScatteringVolume;
use crate::wave::ComplexField;

use super::binary::{Reader, Writer};

pub const VOLUME_MAGIC: &[u8; 8] = b"SCLOCVOL";

const KIND_REAL: u8 = 0;
const KIND_COMPLEX: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum VolumeData {
    Real(ScatteringVolume),
    Complex(ComplexField),
}

fn write_grid(w: &mut Writer, grid: &Grid3) {
    for c in grid.counts() {
        w.u64(c as u64);
    }
    for s in grid.spacing() {
        w.f64(s);
    }
    for o in grid.origin() {
        w.f64(o);
    }
}

pub fn encode_volume(v: &ScatteringVolume) -> Vec<u8> {
    let mut w = Writer::new(VOLUME_MAGIC, 0);
    write_grid(&mut w, v.grid());
    w.u8(KIND_REAL);
    for &x in v.values() {
        w.f64(x);
    }
    w.buf
}

pub fn encode_field(v: &ComplexField) -> Vec<u8> {
    let mut w = Writer::new(VOLUME_MAGIC, 0);
    write_grid(&mut w, v.grid());
    w.u8(KIND_COMPLEX);
    for x in v.values() {
        w.f64(x.re);
        w.f64(x.im);
    }
    w.buf
}

pub fn decode_volume_data(bytes: &[u8]) -> Result<VolumeData> {
    let mut r = Reader::new(bytes);
    r.header(VOLUME_MAGIC)?;
    let at = r.offset();
    let mut counts = [0usize; 3];
    for c in &mut counts {
        *c = r.u64("grid count")? as usize;
    }
    let mut spacing = [0.0; 3];
    for s in &mut spacing {
        *s = r.f64("spacing")?;
    }
    let mut origin = [0.0; 3];
    for o in &mut origin {
        *o = r.f64("origin")?;
    }
    let grid = Grid3::new(counts, spacing, origin).or_else(|e| r.fail(at, format!("invalid grid: {e}")))?;
    let kind_at = r.offset();
    let kind = r.u8("value kind")?;
    let unit = match kind {
        KIND_REAL => 8,
        KIND_COMPLEX => 16,
        other => return r.fail(kind_at, format!("unknown value kind {other}")),
    };
    let data_at = r.offset();
    let n = grid.len();
    let data = r.take(n * unit, "voxel data")?;
    r.finish()?;
    let word = |i: usize| f64::from_le_bytes(data[8 * i..8 * i + 8].try_into().unwrap());
    let out = if kind == KIND_REAL {
        ScatteringVolume::new(grid, (0..n).map(word).collect()).map(VolumeData::Real)
    } else {
        ComplexField::new(grid, (0..n).map(|i| C64::new(word(2 * i), word(2 * i + 1))).collect())
            .map(VolumeData::Complex)
    };
    out.or_else(|e| r.fail(data_at, e.to_string()))
}

pub fn decode_volume(bytes: &[u8]) -> Result<ScatteringVolume> {
    match decode_volume_data(bytes)? {
        VolumeData::Real(v) => Ok(v),
        VolumeData::Complex(_) => Err(Error::Decode {
            offset: 88,
            message: "expected a real-valued volume, found complex".into(),
        }),
    }
}
