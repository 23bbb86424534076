//! Text vector format:
//!
//! ```text
//! dim=<d> count=<n>
//! <id>\t<v1>,<v2>,...,<vd>
//! ```
//!
//! Values are written with 17 significant digits so a save/load cycle is
//! exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::EmbeddingVector;
use crate::{Error, Result};

pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn format_row(values: &[f64]) -> String {
    values
        .iter()
        .map(|&v| format_value(v))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn parse_row(s: &str, dim: usize) -> Result<Vec<f64>> {
    let values = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::CorruptFile(format!("bad number {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != dim {
        return Err(Error::CorruptFile(format!(
            "row has {} values, header says dim={dim}",
            values.len()
        )));
    }
    Ok(values)
}

/// Parse `key=value` tokens from a header line.
pub fn header_value<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    line.split_whitespace().find_map(|tok| {
        tok.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix('='))
    })
}

pub fn header_usize(line: &str, key: &str) -> Result<usize> {
    header_value(line, key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::CorruptFile(format!("header {line:?} lacks {key}=<int>")))
}

pub fn write_embeddings<W: Write>(mut w: W, vectors: &[EmbeddingVector]) -> Result<()> {
    let dim = vectors.first().map(|v| v.values.len()).unwrap_or(0);
    writeln!(w, "dim={dim} count={}", vectors.len())?;
    for v in vectors {
        if v.values.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                actual: v.values.len(),
            });
        }
        if v.id.contains(['\t', '\n', '\r']) {
            return Err(Error::Precondition(format!(
                "vector id {:?} contains a tab or newline",
                v.id
            )));
        }
        writeln!(w, "{}\t{}", v.id, format_row(&v.values))?;
    }
    Ok(())
}

/// Read a vector block: header line plus exactly `count` rows. Reads nothing
/// past the block, so the format can be embedded in larger files.
pub fn read_embedding_block<I>(lines: &mut I) -> Result<Vec<EmbeddingVector>>
where
    I: Iterator<Item = std::io::Result<String>>,
{
    let header = lines
        .next()
        .ok_or_else(|| Error::CorruptFile("missing dim/count header".into()))??;
    let dim = header_usize(&header, "dim")?;
    let count = header_usize(&header, "count")?;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let line = lines.next().ok_or_else(|| {
            Error::CorruptFile(format!("header says count={count}, found {i} rows"))
        })??;
        let (id, row) = line
            .split_once('\t')
            .ok_or_else(|| Error::CorruptFile(format!("row {} lacks a tab", i + 1)))?;
        out.push(EmbeddingVector {
            id: id.to_string(),
            values: parse_row(row, dim)?,
        });
    }
    Ok(out)
}

pub fn read_embeddings<R: BufRead>(reader: R) -> Result<Vec<EmbeddingVector>> {
    let mut lines = reader.lines();
    let out = read_embedding_block(&mut lines)?;
    for line in lines {
        if !line?.trim().is_empty() {
            return Err(Error::CorruptFile(format!(
                "more rows than header count={}",
                out.len()
            )));
        }
    }
    Ok(out)
}

pub fn save_embeddings(path: impl AsRef<Path>, vectors: &[EmbeddingVector]) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io_at(path, e))?;
    let mut w = BufWriter::new(f);
    write_embeddings(&mut w, vectors)?;
    w.flush()?;
    Ok(())
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Vec<EmbeddingVector>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io_at(path, e))?;
    read_embeddings(BufReader::new(f))
}
