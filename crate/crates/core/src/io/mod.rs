//! Text and binary formats: MatrixMarket matrices, whitespace-separated
//! vectors, CSV point sets, binary PGM images and JSON lines.
//!
//! Parsers take in-memory input and never panic on malformed data; the
//! `read_*` helpers add file I/O and attach the path to any error.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{CiqError, Result};

mod matrix_market;
mod pgm;
mod text;

pub use matrix_market::{parse_matrix_market, write_matrix_market};
pub use pgm::{parse_pgm, write_pgm, GrayImage};
pub use text::{format_vector, parse_points_csv, parse_vector, parse_xy_csv};

/// Largest matrix dimension or image side the parsers accept.
pub const MAX_DIM: usize = 8192;

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| CiqError::File {
        path: path.to_path_buf(),
        source: Box::new(e),
    })
}

fn read_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CiqError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| CiqError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    with_path(path, parse_matrix_market(&read_string(path)?))
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    with_path(path, parse_vector(&read_string(path)?))
}

pub fn write_vector(path: impl AsRef<Path>, v: &[f64]) -> Result<()> {
    write_bytes(path.as_ref(), format_vector(v).as_bytes())
}

pub fn read_points_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    with_path(path, parse_points_csv(&read_string(path)?))
}

pub fn read_xy_csv(path: impl AsRef<Path>) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let path = path.as_ref();
    with_path(path, parse_xy_csv(&read_string(path)?))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| CiqError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    with_path(path, parse_pgm(&bytes))
}

pub fn write_pgm_file(path: impl AsRef<Path>, image: &GrayImage) -> Result<()> {
    write_bytes(path.as_ref(), &write_pgm(image))
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize, W: Write>(mut out: W, records: &[T]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_jsonl_file<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_jsonl(&mut buf, records).map_err(|source| CiqError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_bytes(path, &buf)
}
