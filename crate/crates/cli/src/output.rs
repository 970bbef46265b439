//! Output staging: every table is rendered in memory first, so a failing run
//! leaves nothing behind.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Tab-separated table with a fixed header.
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn render(&self) -> Result<Vec<u8>> {
        let mut wtr = csv::WriterBuilder::new().delimiter(b'\t').from_writer(Vec::new());
        wtr.write_record(&self.header)?;
        for row in &self.rows {
            wtr.write_record(row)?;
        }
        Ok(wtr.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)
    }
}

/// Files of one run, in the order they are written.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn add_table(&mut self, name: &str, table: &Table) -> Result<()> {
        self.add(name, table.render()?);
        Ok(())
    }

    /// `(name, sha256)` per file.
    pub fn digests(&self) -> Vec<(String, String)> {
        self.files.iter().map(|(n, b)| (n.clone(), sha256_hex(b))).collect()
    }

    pub fn write_all(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// One `key=value` record per line, tab separated.
#[derive(Default)]
pub struct ErrorLog {
    lines: Vec<String>,
}

impl ErrorLog {
    pub fn record(&mut self, tag: &str, error: &dyn std::fmt::Display) {
        let message = error.to_string().replace(['\t', '\n'], " ");
        self.lines.push(format!("level=error\ttag={tag}\tmessage={message}"));
    }

    pub fn render(&self) -> Vec<u8> {
        let mut s = String::new();
        for l in &self.lines {
            s.push_str(l);
            s.push('\n');
        }
        s.into_bytes()
    }
}
