//! CSV tables with a provenance comment line.
//!
//! Numbers are written with 17 significant digits in exponent form, so a
//! table is a pure function of its contents and parsing it back is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path as FsPath;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{GameError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

/// 17 significant digits, `.` decimal point, no locale.
pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format_f64(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// SHA-256 of the canonical JSON form of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let json = serde_json::to_string(config).map_err(|e| GameError::Config(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(json.as_bytes())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(GameError::Config(format!(
                "row has {} cells, table has {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Numeric column by name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        self.rows
            .iter()
            .map(|r| match &r[i] {
                Cell::Num(v) => Some(*v),
                Cell::Int(v) => Some(*v as f64),
                Cell::Text(_) => None,
            })
            .collect()
    }

    pub fn render(&self, hash: &str, seed: u64) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# config_sha256={hash} seed={seed}");
        let _ = writeln!(s, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    /// Writes via a temporary file in the same directory and a rename.
    pub fn write(&self, path: &FsPath, hash: &str, seed: u64) -> Result<()> {
        write_atomic(path, self.render(hash, seed).as_bytes())
    }
}

pub fn write_atomic(path: &FsPath, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = format_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(format_f64(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn renders_header_and_rows() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![1.5.into(), 2usize.into()]).unwrap();
        assert!(t.push(vec![1.0.into()]).is_err());
        let s = t.render("abc", 7);
        assert_eq!(s, "# config_sha256=abc seed=7\na,b\n1.5000000000000000e0,2\n");
        assert_eq!(t.column("b").unwrap(), vec![2.0]);
        assert!(t.column("c").is_none());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        #[derive(Serialize)]
        struct C {
            x: f64,
        }
        let a = config_hash(&C { x: 1.0 }).unwrap();
        assert_eq!(a, config_hash(&C { x: 1.0 }).unwrap());
        assert_ne!(a, config_hash(&C { x: 1.5 }).unwrap());
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn atomic_write_creates_directories() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("t.csv");
        let mut t = Table::new(&["x"]);
        t.push(vec![0.25.into()]).unwrap();
        t.write(&p, "h", 1).unwrap();
        assert!(fs::read_to_string(&p).unwrap().ends_with("x\n2.5000000000000000e-1\n"));
    }
}
