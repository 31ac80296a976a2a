use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;

pub type Header = BTreeMap<String, String>;

/// Buffered writer to `path`, or stdout.
pub fn open(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// `dir/stem.out.json` + `suffix` → `dir/stem.out.<suffix>`; stdout maps to `None`.
pub fn sibling(path: Option<&Path>, suffix: &str) -> Option<PathBuf> {
    path.map(|p| {
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        p.with_file_name(format!("{stem}.{suffix}"))
    })
}

pub fn write_header<W: Write + ?Sized>(out: &mut W, header: &Header) -> Result<()> {
    for (k, v) in header {
        writeln!(out, "# {k} = {v}")?;
    }
    Ok(())
}

/// Header block followed by a CSV table of `rows`.
pub fn write_csv<W: Write, S: Serialize>(mut out: W, header: &Header, rows: &[S]) -> Result<()> {
    write_header(&mut out, header)?;
    let mut w = csv::Writer::from_writer(&mut out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    drop(w);
    out.flush()?;
    Ok(())
}

/// JSON object `{"header": {...}, <body fields>}`.
pub fn write_json<W: Write, S: Serialize>(mut out: W, header: &Header, body: &S) -> Result<()> {
    let mut v = serde_json::Map::new();
    v.insert("header".into(), serde_json::to_value(header)?);
    match serde_json::to_value(body)? {
        serde_json::Value::Object(fields) => v.extend(fields),
        other => {
            v.insert("body".into(), other);
        }
    }
    serde_json::to_writer_pretty(&mut out, &v)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}
