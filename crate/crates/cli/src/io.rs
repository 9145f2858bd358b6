//! CSV and JSON artifacts. Every file starts with a `#` provenance line that
//! readers skip.

use std::io::Write;
use std::path::{Path, PathBuf};

use jetedmd_core::c64;
use jetedmd_core::numerics::CMat;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Identifies the run that produced a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn line(&self) -> String {
        format!("# config_hash={} seed={} version={}\n", self.config_hash, self.seed, env!("CARGO_PKG_VERSION"))
    }
}

/// Full-precision decimal, 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// A CSV table held as strings, written with the provenance line first.
#[derive(Debug, Clone)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path, prov: &Provenance) -> CliResult<PathBuf> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(vec![]);
        let ser = |e: csv::Error| CliError::io(path, e);
        w.write_record(&self.header).map_err(ser)?;
        for r in &self.rows {
            w.write_record(r).map_err(ser)?;
        }
        let body = w.into_inner().map_err(|e| CliError::io(path, e.error()))?;
        let mut bytes = prov.line().into_bytes();
        bytes.extend(body);
        write_atomic(path, &bytes)?;
        Ok(path.to_path_buf())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<PathBuf> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    Ok(path.to_path_buf())
}

/// Parsed rows of a CSV file with their 1-based line numbers.
pub struct Parsed {
    pub header: Vec<String>,
    pub rows: Vec<(u64, Vec<String>)>,
}

pub fn read_csv(path: &Path) -> CliResult<Parsed> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header: Vec<String> = rd
        .headers()
        .map_err(|e| CliError::parse(path, e.position().map_or(1, |p| p.line()), e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = vec![];
    for rec in rd.records() {
        let rec = rec.map_err(|e| CliError::parse(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec.iter().map(|s| s.trim().to_string()).collect()));
    }
    Ok(Parsed { header, rows })
}

fn column(path: &Path, p: &Parsed, name: &str) -> CliResult<usize> {
    p.header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::parse(path, 1, format!("missing column `{name}`")))
}

fn field(path: &Path, line: u64, row: &[String], idx: usize, name: &str) -> CliResult<f64> {
    let s = row.get(idx).ok_or_else(|| CliError::parse(path, line, format!("missing value for `{name}`")))?;
    s.parse().map_err(|_| CliError::parse(path, line, format!("`{s}` is not a number in column `{name}`")))
}

/// One spectrum row.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRow {
    pub value: c64,
    pub source: String,
}

pub fn spectrum_table(rows: &[SpectrumRow]) -> Table {
    let mut t = Table::new(["re", "im", "source"]);
    for r in rows {
        t.push(vec![num(r.value.re), num(r.value.im), r.source.clone()]);
    }
    t
}

pub fn read_spectrum(path: &Path) -> CliResult<Vec<SpectrumRow>> {
    let p = read_csv(path)?;
    let (re, im) = (column(path, &p, "re")?, column(path, &p, "im")?);
    let src = p.header.iter().position(|h| h == "source");
    p.rows
        .iter()
        .map(|(line, row)| {
            Ok(SpectrumRow {
                value: c64::new(field(path, *line, row, re, "re")?, field(path, *line, row, im, "im")?),
                source: src.and_then(|i| row.get(i)).cloned().unwrap_or_default(),
            })
        })
        .collect()
}

pub fn data_table(x: &[Vec<f64>], y: &[Vec<f64>]) -> Table {
    let d = x.first().map_or(0, Vec::len);
    let header = (1..=d).map(|i| format!("x{i}")).chain((1..=d).map(|i| format!("y{i}")));
    let mut t = Table::new(header);
    for (a, b) in x.iter().zip(y) {
        t.push(a.iter().chain(b).map(|&v| num(v)).collect());
    }
    t
}

/// Snapshot pairs from a CSV with columns `x1..xd,y1..yd`.
pub fn read_data(path: &Path) -> CliResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let p = read_csv(path)?;
    let d = p.header.iter().filter(|h| h.starts_with('x')).count();
    if d == 0 {
        return Err(CliError::parse(path, 1, "no `x1` column"));
    }
    let xi: Vec<usize> = (1..=d).map(|i| column(path, &p, &format!("x{i}"))).collect::<CliResult<_>>()?;
    let yi: Vec<usize> = (1..=d).map(|i| column(path, &p, &format!("y{i}"))).collect::<CliResult<_>>()?;
    let (mut x, mut y) = (vec![], vec![]);
    for (line, row) in &p.rows {
        x.push(xi.iter().enumerate().map(|(k, &c)| field(path, *line, row, c, &format!("x{}", k + 1))).collect::<CliResult<_>>()?);
        y.push(yi.iter().enumerate().map(|(k, &c)| field(path, *line, row, c, &format!("y{}", k + 1))).collect::<CliResult<_>>()?);
    }
    if x.is_empty() {
        return Err(CliError::parse(path, 2, "no data rows"));
    }
    Ok((x, y))
}

pub fn grid_table(points: &[Vec<f64>], values: &[c64]) -> Table {
    let d = points.first().map_or(0, Vec::len);
    let header = (1..=d).map(|i| format!("x{i}")).chain(["re", "im", "abs", "arg"].map(String::from));
    let mut t = Table::new(header);
    for (x, v) in points.iter().zip(values) {
        let mut row: Vec<String> = x.iter().map(|&c| num(c)).collect();
        row.extend([num(v.re), num(v.im), num(v.norm()), num(v.arg())]);
        t.push(row);
    }
    t
}

pub fn matrix_table(m: &CMat) -> Table {
    let mut t = Table::new(["row", "col", "re", "im"]);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            t.push(vec![i.to_string(), j.to_string(), num(v.re), num(v.im)]);
        }
    }
    t
}
