//! The `FTCGRID 1` grid file format.
//!
//! ```text
//! FTCGRID 1
//! <nx> <ny>
//! <x_min> <x_max> <y_min> <y_max>
//! <key>=<value>          zero or more, sorted by key
//! payload=<csv|binary|int>
//! <payload>
//! ```
//!
//! The `payload` line always closes the header. A `csv` payload holds `ny`
//! lines of `nx` comma-separated values (row `j = 0` first) with 17
//! significant digits and `nan` for masked cells; `binary` holds `nx·ny`
//! little-endian `f64`s in the same order; `int` is the CSV layout with
//! integer entries.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{FtcError, Result};
use crate::fields::{FieldGrid, GridSpec};
use crate::geometry::Bounds;

pub const MAGIC: &str = "FTCGRID 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Payload {
    Csv,
    Binary,
    Int,
}

impl Payload {
    pub fn as_str(&self) -> &'static str {
        match self {
            Payload::Csv => "csv",
            Payload::Binary => "binary",
            Payload::Int => "int",
        }
    }
}

impl std::str::FromStr for Payload {
    type Err = FtcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Payload::Csv),
            "binary" => Ok(Payload::Binary),
            "int" => Ok(Payload::Int),
            other => Err(FtcError::Config(format!("unknown payload `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridHeader {
    pub spec: GridSpec,
    pub meta: BTreeMap<String, String>,
    pub payload: Payload,
}

/// Shortest text that parses back to the same `f64`.
fn exact(v: f64) -> String {
    format!("{v:?}")
}

/// Fixed 17-significant-digit scientific form used for payload values.
pub fn format_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "nan".to_string()
    }
}

pub fn write_header<W: Write>(w: &mut W, header: &GridHeader) -> Result<()> {
    let b = header.spec.bounds;
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "{} {}", header.spec.nx, header.spec.ny)?;
    writeln!(w, "{} {} {} {}", exact(b.x_min), exact(b.x_max), exact(b.y_min), exact(b.y_max))?;
    for (k, v) in &header.meta {
        if k.is_empty() || k.contains(['=', '\n', '\r']) || k == "payload" {
            return Err(FtcError::Format(format!("invalid metadata key `{k}`")));
        }
        writeln!(w, "{k}={}", v.replace(['\n', '\r'], " "))?;
    }
    writeln!(w, "payload={}", header.payload.as_str())?;
    Ok(())
}

fn next_line<R: BufRead>(r: &mut R, what: &str) -> Result<String> {
    let mut line = String::new();
    if r.read_line(&mut line)? == 0 {
        return Err(FtcError::Format(format!("unexpected end of file reading {what}")));
    }
    Ok(line.trim_end_matches(['\n', '\r']).to_string())
}

fn parse_f64(s: &str) -> Result<f64> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("nan") {
        return Ok(f64::NAN);
    }
    s.parse().map_err(|_| FtcError::Format(format!("bad number `{s}`")))
}

pub fn read_header<R: BufRead>(r: &mut R) -> Result<GridHeader> {
    let magic = next_line(r, "magic")?;
    if magic != MAGIC {
        return Err(FtcError::Format(format!("bad magic line `{magic}`")));
    }
    let dims = next_line(r, "dimensions")?;
    let dims: Vec<usize> = dims
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| FtcError::Format(format!("bad dimension `{s}`"))))
        .collect::<Result<_>>()?;
    let bounds = next_line(r, "bounds")?;
    let bounds: Vec<f64> = bounds.split_whitespace().map(parse_f64).collect::<Result<_>>()?;
    if dims.len() != 2 || bounds.len() != 4 {
        return Err(FtcError::Format("malformed dimension or bounds line".into()));
    }
    let spec = GridSpec::new(dims[0], dims[1], Bounds::new(bounds[0], bounds[1], bounds[2], bounds[3]))
        .map_err(|e| FtcError::Format(e.to_string()))?;
    let mut meta = BTreeMap::new();
    loop {
        let line = next_line(r, "header")?;
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| FtcError::Format(format!("expected key=value header line, got `{line}`")))?;
        if k == "payload" {
            let payload = match v {
                "csv" => Payload::Csv,
                "binary" => Payload::Binary,
                "int" => Payload::Int,
                other => return Err(FtcError::Format(format!("unknown payload `{other}`"))),
            };
            return Ok(GridHeader { spec, meta, payload });
        }
        meta.insert(k.to_string(), v.to_string());
    }
}

fn write_rows<W: Write>(w: &mut W, nx: usize, cells: impl Iterator<Item = String>) -> Result<()> {
    let mut row = Vec::with_capacity(nx);
    for s in cells {
        row.push(s);
        if row.len() == nx {
            writeln!(w, "{}", row.join(","))?;
            row.clear();
        }
    }
    Ok(())
}

pub fn write_grid<W: Write>(w: &mut W, field: &FieldGrid, payload: Payload) -> Result<()> {
    let header = GridHeader { spec: field.spec(), meta: field.meta.clone(), payload };
    write_header(w, &header)?;
    let cells = field.values.iter().zip(&field.valid).map(|(v, ok)| if *ok { *v } else { f64::NAN });
    match payload {
        Payload::Csv => write_rows(w, field.nx, cells.map(format_value))?,
        Payload::Binary => {
            for v in cells {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Payload::Int => write_rows(
            w,
            field.nx,
            cells.map(|v| if v.is_finite() { format!("{}", v.round() as i64) } else { "nan".to_string() }),
        )?,
    }
    Ok(())
}

/// Integer grid such as a label image.
pub fn write_int_grid<W: Write>(w: &mut W, header: &GridHeader, values: &[i64]) -> Result<()> {
    if values.len() != header.spec.len() {
        return Err(FtcError::Format("integer payload length does not match dimensions".into()));
    }
    write_header(w, &GridHeader { payload: Payload::Int, ..header.clone() })?;
    write_rows(w, header.spec.nx, values.iter().map(|v| v.to_string()))
}

fn read_csv_payload<R: BufRead>(r: &mut R, spec: GridSpec) -> Result<Vec<f64>> {
    let mut values = Vec::with_capacity(spec.len());
    for j in 0..spec.ny {
        let line = next_line(r, &format!("payload row {j}"))?;
        let row: Vec<f64> = line.split(',').map(parse_f64).collect::<Result<_>>()?;
        if row.len() != spec.nx {
            return Err(FtcError::Format(format!("row {j} has {} values, expected {}", row.len(), spec.nx)));
        }
        values.extend(row);
    }
    Ok(values)
}

/// Reads any payload kind into a scalar field.
pub fn read_grid<R: BufRead>(r: &mut R) -> Result<FieldGrid> {
    let header = read_header(r)?;
    let values = match header.payload {
        Payload::Csv | Payload::Int => read_csv_payload(r, header.spec)?,
        Payload::Binary => {
            let mut bytes = vec![0u8; 8 * header.spec.len()];
            r.read_exact(&mut bytes)
                .map_err(|e| FtcError::Format(format!("short binary payload: {e}")))?;
            bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect()
        }
    };
    let mut field = FieldGrid::from_values(header.spec, values)?;
    field.meta = header.meta;
    Ok(field)
}

/// Reads an integer grid; masked cells are rejected.
pub fn read_int_grid<R: BufRead>(r: &mut R) -> Result<(GridHeader, Vec<i64>)> {
    let header = read_header(r)?;
    if header.payload != Payload::Int {
        return Err(FtcError::Format("expected an integer payload".into()));
    }
    let mut values = Vec::with_capacity(header.spec.len());
    for j in 0..header.spec.ny {
        let line = next_line(r, &format!("payload row {j}"))?;
        for s in line.split(',') {
            values.push(s.trim().parse::<i64>().map_err(|_| FtcError::Format(format!("bad integer `{s}`")))?);
        }
    }
    if values.len() != header.spec.len() {
        return Err(FtcError::Format("integer payload length does not match dimensions".into()));
    }
    Ok((header, values))
}

pub fn save_grid(path: impl AsRef<Path>, field: &FieldGrid, payload: Payload) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_grid(&mut w, field, payload)?;
    w.flush()?;
    Ok(())
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<FieldGrid> {
    read_grid(&mut BufReader::new(File::open(path)?))
}

pub fn load_header(path: impl AsRef<Path>) -> Result<GridHeader> {
    read_header(&mut BufReader::new(File::open(path)?))
}

pub fn load_int_grid(path: impl AsRef<Path>) -> Result<(GridHeader, Vec<i64>)> {
    read_int_grid(&mut BufReader::new(File::open(path)?))
}

/// Reads the remainder of a stream; used by tests that inspect raw payloads.
pub fn read_rest<R: Read>(r: &mut R) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    Ok(buf)
}
