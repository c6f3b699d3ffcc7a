//! Orthogonal maximum projections as 8-bit grayscale PNG images.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::ScatteringVolume;

/// Linear gray mapping: `0 -> 0`, `max_value -> 255`, clipped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderScale {
    pub max_value: f64,
}

/// Maximum over z, `nx x ny`, row-major with x fastest.
pub fn max_projection_xy(v: &ScatteringVolume) -> (Vec<f64>, [usize; 2]) {
    let [nx, ny, nz] = v.grid().counts();
    let vals = v.values();
    let mut out = vec![f64::NEG_INFINITY; nx * ny];
    for k in 0..nz {
        for (o, x) in out.iter_mut().zip(&vals[k * nx * ny..(k + 1) * nx * ny]) {
            *o = o.max(*x);
        }
    }
    (out, [nx, ny])
}

/// Maximum over y, `nx x nz`, with the top (exit) face as the first row.
pub fn max_projection_xz(v: &ScatteringVolume) -> (Vec<f64>, [usize; 2]) {
    let [nx, ny, nz] = v.grid().counts();
    let vals = v.values();
    let mut out = vec![f64::NEG_INFINITY; nx * nz];
    for k in 0..nz {
        let row = nz - 1 - k;
        for j in 0..ny {
            for i in 0..nx {
                let o = &mut out[i + nx * row];
                *o = o.max(vals[i + nx * (j + ny * k)]);
            }
        }
    }
    (out, [nx, nz])
}

pub fn encode_gray_png(values: &[f64], dims: [usize; 2], scale: RenderScale) -> Result<Vec<u8>> {
    if values.len() != dims[0] * dims[1] {
        return Err(Error::invalid("image size does not match its dimensions"));
    }
    if !(scale.max_value > 0.0) {
        return Err(Error::invalid("render scale must be > 0"));
    }
    let bytes: Vec<u8> = values
        .iter()
        .map(|v| ((v / scale.max_value).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, dims[0] as u32, dims[1] as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::invalid(format!("png encoding failed: {e}")))?;
        writer
            .write_image_data(&bytes)
            .map_err(|e| Error::invalid(format!("png encoding failed: {e}")))?;
    }
    Ok(out)
}

/// XY and XZ projections of `v` encoded with a shared scale.
pub fn render_projections(v: &ScatteringVolume, scale: RenderScale) -> Result<[Vec<u8>; 2]> {
    let (xy, dxy) = max_projection_xy(v);
    let (xz, dxz) = max_projection_xz(v);
    Ok([encode_gray_png(&xy, dxy, scale)?, encode_gray_png(&xz, dxz, scale)?])
}
