//! Frame-stack file: 16-byte magic/version/dtype header, the measurement layout
//! (planes, Mx, My as u64), frame count L, the camera configuration as a
//! length-prefixed key-value text block, the acquisition index of each stored
//! frame (L x u64), then L frames in measurement order as f64 or u32.

use crate::config::FrameDtype;
use crate::error::{Error, Result};
use crate::sensor::{BiplaneConfig, Frame, FrameStack};

use super::binary::{Reader, Writer};

pub const FRAMES_MAGIC: &[u8; 8] = b"SCLOCFRM";

fn dtype_tag(d: FrameDtype) -> u32 {
    match d {
        FrameDtype::F64 => 0,
        FrameDtype::U32 => 1,
    }
}

/// Decoded contents of a frame-stack file.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFile {
    pub config: BiplaneConfig,
    pub order: Vec<usize>,
    pub dtype: FrameDtype,
    pub values: Vec<Vec<f64>>,
}

fn encode_values(config: &BiplaneConfig, order: &[usize], values: &[&[f64]], dtype: FrameDtype) -> Result<Vec<u8>> {
    let [mx, my] = config.camera_counts;
    let m = 2 * mx * my;
    let mut w = Writer::new(FRAMES_MAGIC, dtype_tag(dtype));
    w.u64(2);
    w.u64(mx as u64);
    w.u64(my as u64);
    w.u64(values.len() as u64);
    let text = toml::to_string(config).map_err(|e| Error::invalid(format!("camera config: {e}")))?;
    w.u64(text.len() as u64);
    w.buf.extend_from_slice(text.as_bytes());
    for &o in order {
        w.u64(o as u64);
    }
    for (l, frame) in values.iter().enumerate() {
        if frame.len() != m {
            return Err(Error::invalid(format!("frame {l} has {} values, expected {m}", frame.len())));
        }
        for &v in frame.iter() {
            match dtype {
                FrameDtype::F64 => w.f64(v),
                FrameDtype::U32 => {
                    if !(v >= 0.0 && v <= u32::MAX as f64 && v.fract() == 0.0) {
                        return Err(Error::invalid(format!(
                            "frame {l} value {v} is not representable as a u32 count"
                        )));
                    }
                    w.u32(v as u32)
                }
            }
        }
    }
    Ok(w.buf)
}

/// Encodes the measured values of every frame.
pub fn encode_frames(stack: &FrameStack, dtype: FrameDtype) -> Result<Vec<u8>> {
    let values: Vec<&[f64]> = stack.frames().iter().map(|f| f.values.as_slice()).collect();
    encode_values(stack.config(), stack.order(), &values, dtype)
}

/// Encodes the per-frame backgrounds in the same container (always f64).
pub fn encode_backgrounds(stack: &FrameStack) -> Result<Vec<u8>> {
    let values: Vec<&[f64]> = stack.frames().iter().map(|f| f.background.as_slice()).collect();
    encode_values(stack.config(), stack.order(), &values, FrameDtype::F64)
}

pub fn decode_frame_file(bytes: &[u8]) -> Result<FrameFile> {
    let mut r = Reader::new(bytes);
    let tag = r.header(FRAMES_MAGIC)?;
    let dtype = match tag {
        0 => FrameDtype::F64,
        1 => FrameDtype::U32,
        other => return r.fail(12, format!("unknown frame dtype {other}")),
    };
    let at = r.offset();
    let planes = r.u64("plane count")?;
    if planes != 2 {
        return r.fail(at, format!("expected 2 planes, found {planes}"));
    }
    let at = r.offset();
    let mx = r.u64("camera width")? as usize;
    let my = r.u64("camera height")? as usize;
    let l = r.count("frame count", 8)?;
    let text_at = r.offset();
    let text_len = r.count("config block length", 1)?;
    let text = std::str::from_utf8(r.take(text_len, "config block")?)
        .or_else(|e| r.fail(text_at + 8, format!("config block is not UTF-8: {e}")))?;
    let config: BiplaneConfig =
        toml::from_str(text).or_else(|e| r.fail(text_at + 8, format!("config block: {e}")))?;
    if config.camera_counts != [mx, my] {
        return r.fail(at, format!("layout {mx}x{my} disagrees with the camera config"));
    }
    let mut order = Vec::with_capacity(l);
    for _ in 0..l {
        order.push(r.u64("acquisition index")? as usize);
    }
    let m = 2 * mx * my;
    let unit = match dtype {
        FrameDtype::F64 => 8,
        FrameDtype::U32 => 4,
    };
    let mut values = Vec::with_capacity(l);
    for _ in 0..l {
        let data = r.take(m * unit, "frame data")?;
        let frame: Vec<f64> = match dtype {
            FrameDtype::F64 => data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
            FrameDtype::U32 => data
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
        };
        values.push(frame);
    }
    r.finish()?;
    Ok(FrameFile {
        config,
        order,
        dtype,
        values,
    })
}

/// Frames with zero backgrounds, plus the stored dtype.
pub fn decode_frames(bytes: &[u8]) -> Result<(FrameStack, FrameDtype)> {
    let file = decode_frame_file(bytes)?;
    let frames = file
        .values
        .into_iter()
        .map(|v| {
            let n = v.len();
            Frame::new(v, vec![0.0; n])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((FrameStack::with_order(file.config, frames, file.order)?, file.dtype))
}

/// Installs backgrounds read from a file written by [`encode_backgrounds`].
pub fn attach_backgrounds(stack: &mut FrameStack, bytes: &[u8]) -> Result<()> {
    let file = decode_frame_file(bytes)?;
    if &file.config != stack.config() || file.order != stack.order() {
        return Err(Error::invalid("background file does not match the frame stack"));
    }
    stack.set_backgrounds(file.values)
}
