//! JSON-lines and atomic file helpers shared by every on-disk format.
//!
//! Every record carries a leading `"format": 1` key. Files are written to a
//! temporary sibling and renamed into place.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, FORMAT_VERSION};

#[derive(Serialize, Deserialize)]
struct Record<T> {
    format: u32,
    #[serde(flatten)]
    inner: T,
}

#[derive(Serialize)]
struct RecordRef<'a, T> {
    format: u32,
    #[serde(flatten)]
    inner: &'a T,
}

/// Serialize one record as a single compact JSON line (no trailing newline).
pub fn to_line<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string(&RecordRef {
        format: FORMAT_VERSION,
        inner: value,
    })?)
}

pub fn from_line<T: DeserializeOwned>(line: &str) -> std::result::Result<T, String> {
    let record: Record<T> = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if record.format != FORMAT_VERSION {
        return Err(format!("unsupported format {}", record.format));
    }
    Ok(record.inner)
}

pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    parse_records(BufReader::new(file), path)
}

pub fn parse_records<T: DeserializeOwned>(reader: impl BufRead, path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = from_line(&line).map_err(|message| Error::Malformed {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn render_records<T: Serialize>(records: &[T]) -> Result<String> {
    let mut buf = String::new();
    for record in records {
        buf.push_str(&to_line(record)?);
        buf.push('\n');
    }
    Ok(buf)
}

pub fn write_records<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    write_atomic(path, render_records(records)?.as_bytes())
}

pub fn append_record<T: Serialize>(path: &Path, record: &T) -> Result<()> {
    let mut line = to_line(record)?;
    line.push('\n');
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    file.write_all(line.as_bytes())
        .and_then(|_| file.sync_data())
        .map_err(|e| Error::io(format!("append {}", path.display()), e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    from_line(&text).map_err(|message| Error::Malformed {
        path: path.to_path_buf(),
        line: 1,
        message,
    })
}

/// Pretty-printed single JSON document with a `format` key.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&RecordRef {
        format: FORMAT_VERSION,
        inner: value,
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = tmp_sibling(path);
    let write = || -> std::io::Result<()> {
        let mut file = File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(format!("write {}", path.display()), e)
    })
}

pub(crate) fn tmp_sibling(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}
