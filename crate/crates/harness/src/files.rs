//! Small file helpers shared by the commands.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(Error::io(path))?))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(Error::io(path))
}

pub fn read_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(Error::io(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, e))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_string(path)?).map_err(|e| Error::parse(path, e))
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    toml::from_str(&read_string(path)?).map_err(|e| Error::parse(path, single_line(&e.to_string())))
}

/// Collapses a multi-line message (toml and clap errors span several lines).
pub fn single_line(msg: &str) -> String {
    msg.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Builds a CSV document in memory; records are flushed to disk in one write
/// so that a failed run never leaves a half-written artifact.
pub struct CsvBuf {
    writer: csv::Writer<Vec<u8>>,
}

impl CsvBuf {
    pub fn new<I, S>(header: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        CsvBuf { writer }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory write");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.writer.into_inner().expect("in-memory flush")
    }

    pub fn save(self, path: &Path) -> Result<String> {
        let bytes = self.into_bytes();
        write_bytes(path, &bytes)?;
        Ok(sha256_hex(&bytes))
    }
}

/// Header names and `(line, record)` pairs, lines 1-based.
pub type CsvRows = (Vec<String>, Vec<(u64, csv::StringRecord)>);

/// Reads a CSV file with a header row.
pub fn read_csv(path: &Path) -> Result<CsvRows> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec));
    }
    Ok((header, rows))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.position() {
        Some(pos) => Error::Record {
            path: path.to_path_buf(),
            line: pos.line(),
            msg: single_line(&e.to_string()),
        },
        None => match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::Io {
                path: path.to_path_buf(),
                source,
            },
            other => Error::parse(path, format!("{other:?}")),
        },
    }
}

pub fn parse_f64(path: &Path, line: u64, field: &str) -> Result<f64> {
    field.trim().parse().map_err(|_| Error::Record {
        path: path.to_path_buf(),
        line,
        msg: format!("malformed number {field:?}"),
    })
}
