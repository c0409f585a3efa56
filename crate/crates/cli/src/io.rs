use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, Result};

pub const VERSION: &str = "v1";

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `bytes` to `dir/name` through a temporary file in the same
/// directory, so readers never observe a partial artifact.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let path = dir.join(name);
    let err = |source| CliError::Write {
        path: path.clone(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(err)?;
    tmp.write_all(bytes).map_err(err)?;
    tmp.as_file().sync_all().map_err(err)?;
    tmp.persist(&path).map_err(|e| err(e.error))?;
    Ok(path)
}

pub fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value).expect("artifacts serialize");
    text.push('\n');
    write_atomic(dir, name, text.as_bytes())
}

/// CSV with a header row; floats use the shortest representation that
/// parses back to the same value.
pub fn write_csv(
    dir: &Path,
    name: &str,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> Result<PathBuf> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let path = dir.join(name);
    let wrap = |e: csv::Error| CliError::Write {
        path: path.clone(),
        source: std::io::Error::other(e),
    };
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(wrap)?;
    }
    let bytes = w.into_inner().map_err(|e| wrap(e.into_error().into()))?;
    write_atomic(dir, name, &bytes)
}

/// Reads a two-column `t,y` CSV of point samples.
pub fn read_samples(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = read_to_string(path)?;
    let parse = |message: String| CliError::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| parse(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != ["t", "y"] {
        return Err(parse(format!(
            "expected header \"t,y\", got {:?}",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let (mut ts, mut ys) = (Vec::new(), Vec::new());
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| parse(e.to_string()))?;
        let field = |k: usize| -> Result<f64> {
            let v: f64 = rec[k]
                .parse()
                .map_err(|_| parse(format!("line {}: {:?} is not a number", i + 2, &rec[k])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse(format!("line {}: non-finite value", i + 2)))
            }
        };
        ts.push(field(0)?);
        ys.push(field(1)?);
    }
    if ts.is_empty() {
        return Err(parse("no samples".into()));
    }
    Ok((ts, ys))
}
