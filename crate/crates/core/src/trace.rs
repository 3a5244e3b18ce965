//! CSV trace files.
//!
//! ```text
//! # station_id=A,start_utc_us=1700000001000000,interval_ms=1,angle_range_deg=360,length=5000,channels=pot_raw;photo0;photo1;photo2;photo3
//! interval_index,pot_raw,photo0,photo1,photo2,photo3
//! 0,0.500000,0.000000,0.142857,0.000000,0.857143
//! ```
//!
//! Values carry six decimals. Captures produced by the rig are already
//! rounded to that precision, so they survive a write/read cycle unchanged.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::codec::DIGIT_COUNT;
use crate::rig::RawCapture;

pub const CHANNELS: [&str; 1 + DIGIT_COUNT] = ["pot_raw", "photo0", "photo1", "photo2", "photo3"];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
}

fn format_err(line: usize, msg: impl Into<String>) -> TraceError {
    TraceError::Format { line, msg: msg.into() }
}

pub fn write_trace<W: Write>(w: W, capture: &RawCapture) -> Result<(), TraceError> {
    let mut w = std::io::BufWriter::new(w);
    writeln!(
        w,
        "# station_id={},start_utc_us={},interval_ms={},angle_range_deg={},length={},channels={}",
        capture.station_id,
        capture.start_utc_us,
        capture.interval_ms,
        capture.angle_range_deg,
        capture.len(),
        CHANNELS.join(";")
    )?;
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["interval_index"];
    header.extend(CHANNELS);
    out.write_record(&header).map_err(csv_io)?;
    for (i, (pot, photo)) in capture.pot.iter().zip(&capture.photo).enumerate() {
        let mut row = vec![i.to_string(), format!("{pot:.6}")];
        row.extend(photo.iter().map(|v| format!("{v:.6}")));
        out.write_record(&row).map_err(csv_io)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> TraceError {
    TraceError::Io(std::io::Error::other(e))
}

pub fn read_trace<R: Read>(r: R) -> Result<RawCapture, TraceError> {
    let mut r = BufReader::new(r);
    let mut meta_line = String::new();
    r.read_line(&mut meta_line)?;
    let meta = meta_line
        .trim_end()
        .strip_prefix('#')
        .ok_or_else(|| format_err(1, "missing metadata line"))?;
    let mut station_id = None;
    let mut start_utc_us = None;
    let mut interval_ms = None;
    let mut angle_range_deg = None;
    let mut length = None;
    for field in meta.trim().split(',') {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| format_err(1, format!("malformed metadata field `{field}`")))?;
        let bad = |_| format_err(1, format!("bad value for {k}: `{v}`"));
        match k.trim() {
            "station_id" => station_id = Some(v.to_string()),
            "start_utc_us" => start_utc_us = Some(v.parse::<i64>().map_err(|e| bad(e.to_string()))?),
            "interval_ms" => interval_ms = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            "angle_range_deg" => angle_range_deg = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            "length" => length = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "channels" => {
                if v.split(';').ne(CHANNELS.iter().copied()) {
                    return Err(format_err(1, format!("unexpected channels `{v}`")));
                }
            }
            other => return Err(format_err(1, format!("unknown metadata field `{other}`"))),
        }
    }
    let missing = |name: &str| format_err(1, format!("metadata lacks {name}"));
    let station_id = station_id.ok_or_else(|| missing("station_id"))?;
    let start_utc_us = start_utc_us.ok_or_else(|| missing("start_utc_us"))?;
    let interval_ms = interval_ms.ok_or_else(|| missing("interval_ms"))?;
    let angle_range_deg = angle_range_deg.ok_or_else(|| missing("angle_range_deg"))?;
    let length = length.ok_or_else(|| missing("length"))?;

    let mut rows = csv::Reader::from_reader(r);
    let header = rows.headers().map_err(|e| format_err(2, e.to_string()))?;
    if header.len() != 1 + CHANNELS.len() || &header[0] != "interval_index" || header.iter().skip(1).ne(CHANNELS) {
        return Err(format_err(2, "unexpected column header"));
    }
    let mut pot = Vec::with_capacity(length);
    let mut photo = Vec::with_capacity(length);
    for (i, rec) in rows.records().enumerate() {
        let line = i + 3;
        let rec = rec.map_err(|e| format_err(line, e.to_string()))?;
        if rec.len() != 1 + CHANNELS.len() {
            return Err(format_err(line, format!("expected {} columns, found {}", 1 + CHANNELS.len(), rec.len())));
        }
        let idx: usize = rec[0]
            .parse()
            .map_err(|_| format_err(line, format!("bad interval_index `{}`", &rec[0])))?;
        if idx != i {
            return Err(format_err(line, format!("interval_index {idx}, expected {i}")));
        }
        let mut vals = [0.0; 1 + DIGIT_COUNT];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = rec[k + 1]
                .parse()
                .map_err(|_| format_err(line, format!("bad {} value `{}`", CHANNELS[k], &rec[k + 1])))?;
        }
        pot.push(vals[0]);
        photo.push([vals[1], vals[2], vals[3], vals[4]]);
    }
    if pot.len() != length {
        return Err(format_err(1, format!("declared length {length}, found {} rows", pot.len())));
    }
    Ok(RawCapture {
        station_id,
        start_utc_us,
        interval_ms,
        angle_range_deg,
        pot,
        photo,
    })
}

pub fn read_trace_file(path: &Path) -> Result<RawCapture, TraceError> {
    read_trace(std::fs::File::open(path)?)
}

pub fn trace_to_string(capture: &RawCapture) -> String {
    let mut buf = Vec::new();
    write_trace(&mut buf, capture).expect("writing to memory");
    String::from_utf8(buf).expect("trace is ASCII")
}
