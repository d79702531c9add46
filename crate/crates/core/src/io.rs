//! File formats: the FDF1 field snapshot, CSV tables and key=value reports.
//! All writes are atomic (temp file + rename).

use crate::error::FieldError;
use crate::field::SpectralField;
use crate::grid::Grid;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const FDF1_MAGIC: &[u8; 8] = b"FDFLD001";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic at byte 0: expected FDFLD001")]
    BadMagic,
    #[error("truncated FDF1 file at byte offset {offset} (expected {expected} more bytes)")]
    Truncated { offset: usize, expected: usize },
    #[error("invalid field payload: {0}")]
    Field(#[from] FieldError),
}

/// Field snapshot: magic, then little-endian `u32 n`, `f64 length`,
/// `f64 alpha`, `f64 time_tag`, then `n` little-endian `f64` values.
pub struct FieldSnapshot {
    pub field: SpectralField,
    pub alpha: f64,
    pub time_tag: f64,
}

pub fn write_fdf1(
    path: &Path,
    field: &SpectralField,
    alpha: f64,
    time_tag: f64,
) -> Result<(), IoError> {
    let grid = field.grid();
    let mut buf = Vec::with_capacity(8 + 4 + 24 + 8 * grid.n_points());
    buf.extend_from_slice(FDF1_MAGIC);
    buf.extend_from_slice(&(grid.n_points() as u32).to_le_bytes());
    buf.extend_from_slice(&grid.length().to_le_bytes());
    buf.extend_from_slice(&alpha.to_le_bytes());
    buf.extend_from_slice(&time_tag.to_le_bytes());
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(path, &buf)
}

pub fn read_fdf1(path: &Path) -> Result<FieldSnapshot, IoError> {
    let mut data = Vec::new();
    fs::File::open(path)?.read_to_end(&mut data)?;
    if data.len() < 8 || &data[..8] != FDF1_MAGIC {
        return Err(IoError::BadMagic);
    }
    let need_header = 8 + 4 + 8 + 8 + 8;
    if data.len() < need_header {
        return Err(IoError::Truncated {
            offset: data.len(),
            expected: need_header - data.len(),
        });
    }
    let n = u32::from_le_bytes(data[8..12].try_into().unwrap()) as usize;
    let length = f64::from_le_bytes(data[12..20].try_into().unwrap());
    let alpha = f64::from_le_bytes(data[20..28].try_into().unwrap());
    let time_tag = f64::from_le_bytes(data[28..36].try_into().unwrap());
    let need = need_header + 8 * n;
    if data.len() < need {
        return Err(IoError::Truncated {
            offset: data.len(),
            expected: need - data.len(),
        });
    }
    let values: Vec<f64> = (0..n)
        .map(|j| {
            let off = need_header + 8 * j;
            f64::from_le_bytes(data[off..off + 8].try_into().unwrap())
        })
        .collect();
    let grid = Grid::new(n, length)?;
    Ok(FieldSnapshot {
        field: SpectralField::from_values(grid, values)?,
        alpha,
        time_tag,
    })
}

/// Two-column CSV export `y,value` with 17 significant digits.
pub fn write_field_csv(path: &Path, field: &SpectralField) -> Result<(), IoError> {
    let mut out = String::from("y,value\n");
    for (y, v) in field.grid().points().iter().zip(field.values()) {
        out.push_str(&format!("{},{}\n", fmt(*y), fmt(*v)));
    }
    atomic_write(path, out.as_bytes())
}

/// 17-significant-digit decimal, deterministic across runs.
pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp: PathBuf = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("out")
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Accumulates `key=value provenance` lines for the plain-text reports.
#[derive(Default)]
pub struct Report {
    lines: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Measured,
    Formula,
    Fitted,
}

impl Provenance {
    fn tag(self) -> &'static str {
        match self {
            Provenance::Measured => "measured",
            Provenance::Formula => "formula",
            Provenance::Fitted => "fitted",
        }
    }
}

impl Report {
    pub fn push(&mut self, key: &str, value: f64, prov: Provenance) {
        self.lines.push(format!("{key}={} {}", fmt(value), prov.tag()));
    }

    pub fn push_str(&mut self, key: &str, value: &str) {
        self.lines.push(format!("{key}={value}"));
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        let mut body = self.lines.join("\n");
        body.push('\n');
        atomic_write(path, body.as_bytes())
    }

    pub fn to_string(&self) -> String {
        self.lines.join("\n")
    }
}

/// Deterministic CSV writer: fixed column order, 17 significant digits.
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> CsvTable {
        CsvTable {
            header: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.header.len());
        self.rows.push(values.iter().map(|v| fmt(*v)).collect());
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        atomic_write(path, out.as_bytes())
    }
}

/// Reads `t` and `z` columns back from a modulation CSV (for `report`).
pub fn read_csv_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<f64>>, IoError> {
    let body = fs::read_to_string(path)?;
    let mut lines = body.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let idx: Vec<Option<usize>> = names
        .iter()
        .map(|n| header.iter().position(|h| h == n))
        .collect();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for line in lines {
        let parts: Vec<&str> = line.split(',').collect();
        for (ci, oi) in idx.iter().enumerate() {
            if let Some(i) = oi {
                if let Some(cell) = parts.get(*i) {
                    if let Ok(v) = cell.parse::<f64>() {
                        cols[ci].push(v);
                    }
                }
            }
        }
    }
    Ok(cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fdf1_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.fdf");
        let grid = Grid::new(128, 40.0).unwrap();
        let f = SpectralField::from_fn(grid, |y| (-(y * y) / 3.0).exp());
        write_fdf1(&path, &f, 1.5, 2.25).unwrap();
        let snap = read_fdf1(&path).unwrap();
        assert_eq!(snap.alpha, 1.5);
        assert_eq!(snap.time_tag, 2.25);
        assert_eq!(snap.field.values(), f.values());
        assert_eq!(snap.field.grid().length(), 40.0);
    }

    #[test]
    fn truncated_file_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.fdf");
        let grid = Grid::new(64, 10.0).unwrap();
        let f = SpectralField::zeros(grid);
        write_fdf1(&path, &f, 1.5, 0.0).unwrap();
        let data = fs::read(&path).unwrap();
        fs::write(&path, &data[..100]).unwrap();
        match read_fdf1(&path) {
            Err(IoError::Truncated { offset, .. }) => assert_eq!(offset, 100),
            other => panic!("expected truncation error, got {:?}", other.is_ok()),
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk");
        fs::write(&path, b"NOTAFLD0rest").unwrap();
        assert!(matches!(read_fdf1(&path), Err(IoError::BadMagic)));
    }

    #[test]
    fn reports_are_deterministic() {
        let mut r = Report::default();
        r.push("a1", 0.5, Provenance::Formula);
        r.push("kappa", 0.25, Provenance::Measured);
        let s1 = r.to_string();
        let mut r2 = Report::default();
        r2.push("a1", 0.5, Provenance::Formula);
        r2.push("kappa", 0.25, Provenance::Measured);
        assert_eq!(s1, r2.to_string());
        assert!(s1.contains("a1=5.0000000000000000e-1 formula"));
    }
}
