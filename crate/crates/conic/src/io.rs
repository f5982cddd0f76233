//! Versioned text serialization of [`StandardForm`].
//!
//! ```text
//! conic-standard-form 1
//! vars <n>
//! rows <m>
//! offset <value>
//! blocks <k>
//! <free|nonneg|soc|rsoc> <dim>      (k lines)
//! c
//! <value>                           (n lines)
//! b
//! <value>                           (m lines)
//! a <nnz>
//! <row> <col> <value>               (nnz lines, row-major, original order)
//! end
//! ```
//!
//! Numbers are written in shortest round-trip exponent notation, so a read
//! after a write reproduces every coefficient bit for bit.

use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

use crate::standard::{Block, StandardForm};

pub const FORMAT_NAME: &str = "conic-standard-form";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a standard-form file (header {0:?})")]
    BadHeader(String),
    #[error("unsupported standard-form version {found} (expected {FORMAT_VERSION})")]
    Version { found: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("inconsistent problem: {0}")]
    Invalid(String),
}

pub fn write_standard_form<W: Write>(sf: &StandardForm, mut out: W) -> io::Result<()> {
    writeln!(out, "{FORMAT_NAME} {FORMAT_VERSION}")?;
    writeln!(out, "vars {}", sf.num_vars())?;
    writeln!(out, "rows {}", sf.num_rows())?;
    writeln!(out, "offset {:e}", sf.objective_offset)?;
    writeln!(out, "blocks {}", sf.blocks.len())?;
    for blk in &sf.blocks {
        let (name, d) = match *blk {
            Block::Free(d) => ("free", d),
            Block::Nonneg(d) => ("nonneg", d),
            Block::Soc(d) => ("soc", d),
            Block::RotatedSoc(d) => ("rsoc", d),
        };
        writeln!(out, "{name} {d}")?;
    }
    writeln!(out, "c")?;
    for v in &sf.c {
        writeln!(out, "{v:e}")?;
    }
    writeln!(out, "b")?;
    for v in &sf.b {
        writeln!(out, "{v:e}")?;
    }
    let nnz: usize = sf.a.iter().map(Vec::len).sum();
    writeln!(out, "a {nnz}")?;
    for (i, row) in sf.a.iter().enumerate() {
        for &(j, v) in row {
            writeln!(out, "{i} {j} {v:e}")?;
        }
    }
    writeln!(out, "end")?;
    Ok(())
}

pub fn to_text(sf: &StandardForm) -> String {
    let mut buf = Vec::new();
    write_standard_form(sf, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

pub fn export_standard_form(sf: &StandardForm, path: &Path) -> Result<(), FormatError> {
    let mut f = io::BufWriter::new(fs::File::create(path)?);
    write_standard_form(sf, &mut f)?;
    f.flush()?;
    Ok(())
}

pub fn import_standard_form(path: &Path) -> Result<StandardForm, FormatError> {
    read_standard_form(BufReader::new(fs::File::open(path)?))
}

pub fn from_text(text: &str) -> Result<StandardForm, FormatError> {
    read_standard_form(text.as_bytes())
}

struct Lines<R> {
    inner: io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<String, FormatError> {
        self.line += 1;
        match self.inner.next() {
            Some(l) => Ok(l?.trim().to_string()),
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, message: impl Into<String>) -> FormatError {
        FormatError::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn keyed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, FormatError> {
        let l = self.next()?;
        let mut it = l.split_whitespace();
        if it.next() != Some(key) {
            return Err(self.err(format!("expected `{key} <value>`, found {l:?}")));
        }
        let v = it.next().ok_or_else(|| self.err(format!("missing value after `{key}`")))?;
        if it.next().is_some() {
            return Err(self.err(format!("trailing text after `{key}`")));
        }
        v.parse().map_err(|_| self.err(format!("bad value {v:?} for `{key}`")))
    }

    fn marker(&mut self, key: &str) -> Result<(), FormatError> {
        let l = self.next()?;
        if l != key {
            return Err(self.err(format!("expected `{key}`, found {l:?}")));
        }
        Ok(())
    }

    fn number(&mut self) -> Result<f64, FormatError> {
        let l = self.next()?;
        self.parse_f64(&l)
    }

    fn parse_f64(&self, s: &str) -> Result<f64, FormatError> {
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(format!("bad number {s:?}"))),
        }
    }
}

pub fn read_standard_form<R: BufRead>(reader: R) -> Result<StandardForm, FormatError> {
    let mut lines = Lines {
        inner: reader.lines(),
        line: 0,
    };
    let header = lines.next()?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(FORMAT_NAME) {
        return Err(FormatError::BadHeader(header));
    }
    match parts.next() {
        Some(v) if v == FORMAT_VERSION.to_string() && parts.next().is_none() => {}
        Some(v) => return Err(FormatError::Version { found: v.to_string() }),
        None => return Err(FormatError::BadHeader(header)),
    }
    let n: usize = lines.keyed("vars")?;
    let m: usize = lines.keyed("rows")?;
    let offset_text: String = lines.keyed("offset")?;
    let objective_offset = lines.parse_f64(&offset_text)?;
    let k: usize = lines.keyed("blocks")?;
    let mut blocks = Vec::with_capacity(k);
    for _ in 0..k {
        let l = lines.next()?;
        let mut it = l.split_whitespace();
        let name = it.next().unwrap_or("");
        let d: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| lines.err(format!("bad block line {l:?}")))?;
        blocks.push(match name {
            "free" => Block::Free(d),
            "nonneg" => Block::Nonneg(d),
            "soc" => Block::Soc(d),
            "rsoc" => Block::RotatedSoc(d),
            _ => return Err(lines.err(format!("unknown block kind {name:?}"))),
        });
    }
    lines.marker("c")?;
    let c = (0..n).map(|_| lines.number()).collect::<Result<Vec<_>, _>>()?;
    lines.marker("b")?;
    let b = (0..m).map(|_| lines.number()).collect::<Result<Vec<_>, _>>()?;
    let nnz: usize = lines.keyed("a")?;
    let mut a = vec![Vec::new(); m];
    let mut last_row = 0;
    for _ in 0..nnz {
        let l = lines.next()?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 3 {
            return Err(lines.err(format!("expected `row col value`, found {l:?}")));
        }
        let i: usize = f[0].parse().map_err(|_| lines.err("bad row index"))?;
        let j: usize = f[1].parse().map_err(|_| lines.err("bad column index"))?;
        let v = lines.parse_f64(f[2])?;
        if i >= m || i < last_row {
            return Err(lines.err(format!("row index {i} out of order or range")));
        }
        last_row = i;
        a[i].push((j, v));
    }
    lines.marker("end")?;
    let sf = StandardForm {
        c,
        objective_offset,
        a,
        b,
        blocks,
    };
    sf.check().map_err(FormatError::Invalid)?;
    Ok(sf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> StandardForm {
        StandardForm {
            c: vec![1.0, 0.1 + 0.2, -0.0],
            objective_offset: 1e-300,
            a: vec![vec![(0, 1.0), (2, -3.5e7)], vec![], vec![(1, std::f64::consts::PI)]],
            b: vec![2.0, 0.0, -1.0 / 3.0],
            blocks: vec![Block::Free(1), Block::RotatedSoc(2)],
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let sf = sample();
        let text = to_text(&sf);
        let back = from_text(&text).unwrap();
        assert_eq!(back, sf);
        assert_eq!(back.c[2].to_bits(), (-0.0f64).to_bits());
        assert_eq!(to_text(&back), text);
    }

    #[test]
    fn rejects_other_versions() {
        let text = to_text(&sample()).replacen("conic-standard-form 1", "conic-standard-form 2", 1);
        assert!(matches!(from_text(&text), Err(FormatError::Version { .. })));
    }

    #[test]
    fn rejects_corrupted_header() {
        let text = to_text(&sample()).replacen("conic-standard-form", "conic-standrd-form", 1);
        assert!(matches!(from_text(&text), Err(FormatError::BadHeader(_))));
    }

    #[test]
    fn truncated_file_reports_line() {
        let text = to_text(&sample());
        let cut: String = text.lines().take(9).collect::<Vec<_>>().join("\n");
        match from_text(&cut) {
            Err(FormatError::Parse { line, .. }) => assert_eq!(line, 10),
            other => panic!("unexpected {other:?}"),
        }
    }
}
