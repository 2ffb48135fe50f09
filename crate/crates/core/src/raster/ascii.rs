//! ESRI ASCII grid reader/writer.

use std::fmt::Write as _;
use std::path::Path;

use super::{Grid, DEFAULT_NODATA};
use crate::error::{Error, Result};

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Parses an ESRI ASCII grid. Header keywords are case-insensitive; each data
/// line must hold exactly `NCOLS` values.
pub fn read_ascii_grid(text: &str) -> Result<Grid> {
    let mut ncols = None;
    let mut nrows = None;
    let mut xll = None;
    let mut yll = None;
    let mut xll_center = None;
    let mut yll_center = None;
    let mut cell_size = None;
    let mut nodata = None;

    let mut lines = text.lines().enumerate().peekable();
    while let Some(&(idx, line)) = lines.peek() {
        let mut toks = line.split_whitespace();
        let Some(key) = toks.next() else {
            lines.next();
            continue;
        };
        if key.parse::<f64>().is_ok() || key.starts_with('-') || key.starts_with('.') {
            break;
        }
        let lineno = idx + 1;
        let val = toks.next().ok_or_else(|| parse_err(lineno, format!("missing value for {key}")))?;
        if toks.next().is_some() {
            return Err(parse_err(lineno, format!("trailing tokens after {key}")));
        }
        let num: f64 = val
            .parse()
            .map_err(|_| parse_err(lineno, format!("non-numeric header value {val:?}")))?;
        let as_count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(parse_err(lineno, format!("{key} must be a positive integer, got {val}")))
            }
        };
        match key.to_ascii_uppercase().as_str() {
            "NCOLS" => ncols = Some(as_count(num)?),
            "NROWS" => nrows = Some(as_count(num)?),
            "XLLCORNER" => xll = Some(num),
            "YLLCORNER" => yll = Some(num),
            "XLLCENTER" => xll_center = Some(num),
            "YLLCENTER" => yll_center = Some(num),
            "CELLSIZE" => cell_size = Some(num),
            "NODATA_VALUE" => nodata = Some(num),
            _ => return Err(parse_err(lineno, format!("unknown header keyword {key:?}"))),
        }
        lines.next();
    }

    let missing = |k: &str| parse_err(1, format!("header is missing {k}"));
    let ncols = ncols.ok_or_else(|| missing("NCOLS"))?;
    let nrows = nrows.ok_or_else(|| missing("NROWS"))?;
    let cell_size = cell_size.ok_or_else(|| missing("CELLSIZE"))?;
    if !(cell_size > 0.0) {
        return Err(parse_err(1, format!("CELLSIZE must be > 0, got {cell_size}")));
    }
    let xll = match (xll, xll_center) {
        (Some(x), _) => x,
        (None, Some(xc)) => xc - 0.5 * cell_size,
        _ => return Err(missing("XLLCORNER")),
    };
    let yll = match (yll, yll_center) {
        (Some(y), _) => y,
        (None, Some(yc)) => yc - 0.5 * cell_size,
        _ => return Err(missing("YLLCORNER")),
    };
    let nodata = nodata.unwrap_or(DEFAULT_NODATA);

    let mut values = Vec::with_capacity(ncols * nrows);
    let mut last_line = 0;
    for (idx, line) in lines {
        let lineno = idx + 1;
        last_line = lineno;
        if line.trim().is_empty() {
            continue;
        }
        if values.len() == ncols * nrows {
            return Err(parse_err(lineno, format!("more than {nrows} data rows")));
        }
        let before = values.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(lineno, format!("non-numeric value {tok:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(lineno, format!("non-finite value {tok:?}")));
            }
            values.push(v);
        }
        let got = values.len() - before;
        if got != ncols {
            return Err(parse_err(lineno, format!("expected {ncols} values per row, found {got}")));
        }
    }
    if values.len() != ncols * nrows {
        return Err(parse_err(
            last_line.max(1),
            format!("expected {nrows} data rows, found {}", values.len() / ncols),
        ));
    }
    Grid::new(ncols, nrows, cell_size, xll, yll, nodata, values)
}

/// Formats a grid as ESRI ASCII text. Numbers use the shortest representation
/// that parses back to the same `f64`.
pub fn write_ascii_grid(g: &Grid) -> String {
    let mut out = String::with_capacity(g.len() * 8 + 128);
    let _ = writeln!(out, "NCOLS {}", g.ncols);
    let _ = writeln!(out, "NROWS {}", g.nrows);
    let _ = writeln!(out, "XLLCORNER {}", g.xll);
    let _ = writeln!(out, "YLLCORNER {}", g.yll);
    let _ = writeln!(out, "CELLSIZE {}", g.cell_size);
    let _ = writeln!(out, "NODATA_VALUE {}", g.nodata_value);
    for row in g.values().chunks(g.ncols) {
        for (j, &v) in row.iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            let v = if g.is_nodata(v) { g.nodata_value } else { v };
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn read_ascii_grid_file(path: impl AsRef<Path>) -> Result<Grid> {
    read_ascii_grid(&std::fs::read_to_string(path)?)
}

pub fn write_ascii_grid_file(g: &Grid, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_ascii_grid(g))?;
    Ok(())
}
