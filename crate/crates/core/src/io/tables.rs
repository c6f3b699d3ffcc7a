//! UTF-8 CSV tables: fluorophore sets and objective traces. Floats are written
//! with 17 significant digits so every value reads back exactly.

use crate::error::{Error, Result};
use crate::fluorophore::Fluorophore;
use crate::inverse::ObjectiveRecord;

pub const FLUOROPHORE_HEADER: [&str; 5] = ["id", "x_um", "y_um", "z_um", "amplitude"];
pub const TRACE_HEADER: [&str; 5] = ["outer", "block", "objective", "data", "tv"];

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::invalid(format!("csv buffer: {e}")))
}

/// Rows of `id,x_um,y_um,z_um,amplitude`.
pub fn encode_fluorophores(rows: &[(usize, Fluorophore)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(FLUOROPHORE_HEADER)?;
    for (id, m) in rows {
        let [x, y, z] = m.position;
        w.write_record([id.to_string(), num(x), num(y), num(z), num(m.amplitude)])?;
    }
    finish(w)
}

fn decode_error(pos: Option<&csv::Position>, message: impl Into<String>) -> Error {
    Error::Decode {
        offset: pos.map_or(0, |p| p.byte()),
        message: message.into(),
    }
}

pub fn decode_fluorophores(bytes: &[u8]) -> Result<Vec<(usize, Fluorophore)>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let header = r.headers().map_err(|e| decode_error(e.position(), e.to_string()))?;
    if header.iter().ne(FLUOROPHORE_HEADER) {
        return Err(decode_error(None, format!("expected header {}", FLUOROPHORE_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| decode_error(e.position(), e.to_string()))?;
        let pos = rec.position();
        let line = pos.map_or(0, |p| p.line());
        let field = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| decode_error(pos, format!("line {line}, column {}: {e}", FLUOROPHORE_HEADER[i])))
        };
        let id = rec[0]
            .parse::<usize>()
            .map_err(|e| decode_error(pos, format!("line {line}, column id: {e}")))?;
        let m = Fluorophore::new([field(1)?, field(2)?, field(3)?], field(4)?)
            .map_err(|e| decode_error(pos, format!("line {line}: {e}")))?;
        out.push((id, m));
    }
    Ok(out)
}

pub fn encode_trace(history: &[ObjectiveRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER)?;
    for h in history {
        let block = serde_json::to_value(h.block)?;
        w.write_record([
            h.outer.to_string(),
            block.as_str().unwrap_or_default().to_string(),
            num(h.objective),
            num(h.data),
            num(h.tv),
        ])?;
    }
    finish(w)
}

pub fn decode_trace(bytes: &[u8]) -> Result<Vec<ObjectiveRecord>> {
    let mut r = csv::ReaderBuilder::new().from_reader(bytes);
    let header = r.headers().map_err(|e| decode_error(e.position(), e.to_string()))?;
    if header.iter().ne(TRACE_HEADER) {
        return Err(decode_error(None, format!("expected header {}", TRACE_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| decode_error(e.position(), e.to_string()))?;
        let pos = rec.position().cloned();
        let bad = |what: &str| decode_error(pos.as_ref(), format!("bad {what}"));
        out.push(ObjectiveRecord {
            outer: rec[0].parse().map_err(|_| bad("outer"))?,
            block: serde_json::from_value(serde_json::Value::String(rec[1].to_string())).map_err(|_| bad("block"))?,
            objective: rec[2].parse().map_err(|_| bad("objective"))?,
            data: rec[3].parse().map_err(|_| bad("data"))?,
            tv: rec[4].parse().map_err(|_| bad("tv"))?,
        });
    }
    Ok(out)
}
