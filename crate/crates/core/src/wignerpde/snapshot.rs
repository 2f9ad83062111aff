//! Field snapshots: a JSON header next to a flat little-endian f64 array
//! (`.bin`) or a CSV table (`.csv`) of x, p, value rows.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FieldKind, PhaseGrid, WignerField};
use crate::error::{QseError, Result};

pub const SNAPSHOT_SCHEMA: &str = "qse-wigner-snapshot/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnapshotFormat {
    Binary,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub schema: String,
    pub grid: PhaseGrid,
    pub nx: usize,
    pub np: usize,
    pub t: f64,
    pub clock: f64,
    pub kind: FieldKind,
    pub format: SnapshotFormat,
    /// Always "x-outer,p-inner".
    pub layout: String,
    /// "little-endian f64" for binary payloads.
    pub encoding: String,
    pub data_file: String,
}

/// Writes `<base>.json` plus `<base>.bin` or `<base>.csv`; returns the header path.
pub fn write_snapshot(field: &WignerField, base: &Path, format: SnapshotFormat) -> Result<PathBuf> {
    let (ext, encoding) = match format {
        SnapshotFormat::Binary => ("bin", "little-endian f64"),
        SnapshotFormat::Csv => ("csv", "decimal text"),
    };
    let data_path = base.with_extension(ext);
    let header_path = base.with_extension("json");
    let header = SnapshotHeader {
        schema: SNAPSHOT_SCHEMA.to_string(),
        grid: field.grid.clone(),
        nx: field.grid.nx,
        np: field.grid.np,
        t: field.t,
        clock: field.clock,
        kind: field.kind,
        format,
        layout: "x-outer,p-inner".to_string(),
        encoding: encoding.to_string(),
        data_file: data_path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
    };
    let mut out = BufWriter::new(fs::File::create(&data_path)?);
    match format {
        SnapshotFormat::Binary => {
            for v in &field.values {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        SnapshotFormat::Csv => {
            writeln!(out, "x,p,value")?;
            for i in 0..field.grid.nx {
                let x = field.grid.x(i);
                for j in 0..field.grid.np {
                    writeln!(out, "{:e},{:e},{:e}", x, field.grid.p(j), field.values[field.grid.index(i, j)])?;
                }
            }
        }
    }
    out.flush()?;
    fs::write(&header_path, serde_json::to_string_pretty(&header)?)?;
    Ok(header_path)
}

/// Reads a snapshot given the path of its JSON header.
pub fn read_snapshot(header_path: &Path) -> Result<WignerField> {
    let header: SnapshotHeader = serde_json::from_str(&fs::read_to_string(header_path)?)?;
    if header.schema != SNAPSHOT_SCHEMA {
        return Err(QseError::Io(format!("unknown snapshot schema {}", header.schema)));
    }
    let data_path = header_path.with_file_name(&header.data_file);
    let n = header.nx * header.np;
    let values: Vec<f64> = match header.format {
        SnapshotFormat::Binary => {
            let bytes = fs::read(&data_path)?;
            if bytes.len() != 8 * n {
                return Err(QseError::Io(format!("expected {} bytes, found {}", 8 * n, bytes.len())));
            }
            bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect()
        }
        SnapshotFormat::Csv => {
            let text = fs::read_to_string(&data_path)?;
            let mut values = Vec::with_capacity(n);
            for line in text.lines().skip(1) {
                let v = line
                    .rsplit(',')
                    .next()
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| QseError::Io(format!("bad snapshot row `{line}`")))?;
                values.push(v);
            }
            if values.len() != n {
                return Err(QseError::Io(format!("expected {n} rows, found {}", values.len())));
            }
            values
        }
    };
    Ok(WignerField { grid: header.grid, values, t: header.t, clock: header.clock, kind: header.kind })
}
