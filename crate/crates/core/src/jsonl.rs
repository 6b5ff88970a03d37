//! JSON-lines readers and writers for session logs and catalogs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::session::{Catalog, Product, QuerySession};

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut out, row)
            .map_err(|e| Error::json(path.display().to_string(), e))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (no, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line)
            .map_err(|e| Error::json(format!("{}:{}", path.display(), no + 1), e))?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_sessions(path: &Path, sessions: &[QuerySession]) -> Result<()> {
    write_jsonl(path, sessions)
}

/// Reads a session log and checks every session's structural invariants.
pub fn read_sessions(path: &Path) -> Result<Vec<QuerySession>> {
    let sessions: Vec<QuerySession> = read_jsonl(path)?;
    for s in &sessions {
        s.validate()?;
    }
    Ok(sessions)
}

pub fn write_catalog(path: &Path, catalog: &Catalog) -> Result<()> {
    let products: Vec<&Product> = catalog.products().collect();
    write_jsonl(path, &products)
}

pub fn read_catalog(path: &Path) -> Result<Catalog> {
    let products: Vec<Product> = read_jsonl(path)?;
    Ok(Catalog::new(products))
}
