use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use super::RawObservations;
use crate::error::{GxeError, Result};

/// Expected column counts; `None` infers the count from the header.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CsvSchema {
    pub q: Option<usize>,
    pub p: Option<usize>,
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> GxeError {
    GxeError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn check_header(path: &Path, header: &csv::StringRecord, schema: CsvSchema) -> Result<(usize, usize)> {
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols.first() != Some(&"y") {
        return Err(parse_error(path, 1, "missing column `y`"));
    }
    if cols.get(1) != Some(&"delta") {
        return Err(parse_error(path, 1, "missing column `delta`"));
    }
    let q = cols[2..].iter().take_while(|c| c.starts_with('e')).count();
    let p = cols.len() - 2 - q;
    for (k, c) in cols[2..2 + q].iter().enumerate() {
        if *c != format!("e{}", k + 1) {
            return Err(parse_error(path, 1, format!("expected column `e{}`, found `{c}`", k + 1)));
        }
    }
    for (k, c) in cols[2 + q..].iter().enumerate() {
        if *c != format!("g{}", k + 1) {
            return Err(parse_error(path, 1, format!("expected column `g{}`, found `{c}`", k + 1)));
        }
    }
    if q == 0 {
        return Err(parse_error(path, 1, "missing column `e1`"));
    }
    if p == 0 {
        return Err(parse_error(path, 1, "missing column `g1`"));
    }
    if let Some(expected) = schema.q {
        if expected != q {
            return Err(parse_error(path, 1, format!("expected {expected} env columns, found {q}")));
        }
    }
    if let Some(expected) = schema.p {
        if expected != p {
            return Err(parse_error(path, 1, format!("expected {expected} gene columns, found {p}")));
        }
    }
    Ok((q, p))
}

/// Reads a dataset with header `y,delta,e1..eq,g1..gp`.
pub fn load_csv(path: impl AsRef<Path>, schema: CsvSchema) -> Result<RawObservations> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| GxeError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let header = reader.headers()?.clone();
    let (q, p) = check_header(path, &header, schema)?;
    let width = 2 + q + p;

    let mut y = Vec::new();
    let mut delta = Vec::new();
    let mut x = Vec::new();
    let mut z = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |pos| pos.line());
        if record.len() != width {
            return Err(parse_error(
                path,
                line,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        let number = |idx: usize| -> Result<f64> {
            let cell = record[idx].trim();
            cell.parse::<f64>().map_err(|_| {
                parse_error(path, line, format!("non-numeric value `{cell}` in column `{}`", &header[idx]))
            })
        };
        y.push(number(0)?);
        let d = number(1)?;
        if d == 1.0 {
            delta.push(true);
        } else if d == 0.0 {
            delta.push(false);
        } else {
            return Err(parse_error(
                path,
                line,
                format!("delta must be 0 or 1, found `{}` (row {})", record[1].trim(), y.len()),
            ));
        }
        for k in 0..q {
            x.push(number(2 + k)?);
        }
        for k in 0..p {
            z.push(number(2 + q + k)?);
        }
    }
    let n = y.len();
    Ok(RawObservations {
        y,
        delta,
        x: Array2::from_shape_vec((n, q), x).expect("row-major env block"),
        z: Array2::from_shape_vec((n, p), z).expect("row-major gene block"),
    })
}

/// Formats a double with 17 significant digits.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes observations in the same layout [`load_csv`] reads.
pub fn write_csv(obs: &RawObservations, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| GxeError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    let (q, p) = (obs.x.ncols(), obs.z.ncols());
    let mut header = vec!["y".to_string(), "delta".to_string()];
    header.extend((1..=q).map(|k| format!("e{k}")));
    header.extend((1..=p).map(|k| format!("g{k}")));
    writeln!(out, "{}", header.join(",")).map_err(io_err)?;
    let mut line = String::new();
    for i in 0..obs.n() {
        line.clear();
        line.push_str(&fmt_f64(obs.y[i]));
        line.push_str(if obs.delta[i] { ",1" } else { ",0" });
        for v in obs.x.row(i).iter().chain(obs.z.row(i).iter()) {
            line.push(',');
            line.push_str(&fmt_f64(*v));
        }
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
