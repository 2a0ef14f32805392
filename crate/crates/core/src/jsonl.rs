//! JSON Lines files: one header line carrying schema version, content kind
//! and config fingerprint, then one record per line.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub schema: String,
    pub kind: String,
    pub fingerprint: String,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub provenance: serde_json::Value,
}

impl Header {
    pub fn new(kind: &str, fingerprint: &str) -> Self {
        Header {
            schema: SCHEMA_VERSION.to_string(),
            kind: kind.to_string(),
            fingerprint: fingerprint.to_string(),
            provenance: serde_json::Value::Null,
        }
    }

    pub fn with_provenance(mut self, provenance: serde_json::Value) -> Self {
        self.provenance = provenance;
        self
    }
}

/// Serializes as a JSON number with exactly three decimals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fixed3(pub f64);

impl Serialize for Fixed3 {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut v = self.0;
        if v == 0.0 {
            v = 0.0; // drop the sign of -0.0
        }
        let raw = serde_json::value::RawValue::from_string(format!("{v:.3}"))
            .map_err(serde::ser::Error::custom)?;
        raw.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Fixed3 {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        f64::deserialize(deserializer).map(Fixed3)
    }
}

/// Write header and records to `path` through a sibling temp file and rename.
pub fn write<T: Serialize>(path: &Path, header: &Header, records: &[T]) -> Result<()> {
    let mut buf = serde_json::to_vec(header)?;
    buf.push(b'\n');
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

/// Replace `path` with `bytes` via a sibling temp file, creating parent
/// directories as needed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut w = BufWriter::new(File::create(&tmp).map_err(|e| Error::io(&tmp, e))?);
        w.write_all(bytes)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Read the header alone.
pub fn read_header(path: &Path) -> Result<Header> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file)
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    let header: Header = serde_json::from_str(first.trim_end())?;
    check_schema(&header)?;
    Ok(header)
}

pub fn read<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<(Header, Vec<T>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::SchemaMismatch {
            expected: SCHEMA_VERSION.into(),
            found: "empty file".into(),
        })?
        .map_err(|e| Error::io(path, e))?;
    let header: Header = serde_json::from_str(&first)?;
    check_schema(&header)?;
    if header.kind != kind {
        return Err(Error::SchemaMismatch {
            expected: kind.into(),
            found: header.kind,
        });
    }
    let mut records = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok((header, records))
}

fn check_schema(header: &Header) -> Result<()> {
    if header.schema != SCHEMA_VERSION {
        return Err(Error::SchemaMismatch {
            expected: SCHEMA_VERSION.into(),
            found: header.schema.clone(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_precision_numbers() {
        let s =
            serde_json::to_string(&[Fixed3(1.25), Fixed3(0.1), Fixed3(-0.0), Fixed3(359.99999)])
                .unwrap();
        assert_eq!(s, "[1.250,0.100,0.000,360.000]");
        let back: Vec<Fixed3> = serde_json::from_str(&s).unwrap();
        assert_eq!(back[0], Fixed3(1.25));
    }

    #[test]
    fn header_kind_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        write(&path, &Header::new("numbers", "abc"), &[1u32, 2, 3]).unwrap();
        let (h, v): (Header, Vec<u32>) = read(&path, "numbers").unwrap();
        assert_eq!(h.fingerprint, "abc");
        assert_eq!(v, vec![1, 2, 3]);
        assert!(matches!(
            read::<u32>(&path, "words"),
            Err(Error::SchemaMismatch { .. })
        ));
    }
}
