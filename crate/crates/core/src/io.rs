//! File formats: row-per-point data CSV, matrix dumps, label columns and
//! iteration logs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::data::{DataMatrix, LabelVector};
use crate::error::{Error, Result};
use crate::solver::IterationRecord;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, row: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        row,
        col,
        msg: msg.into(),
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file))
}

/// Rows of numeric cells; row and column numbers in errors are 1-based.
fn read_numeric_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, rec) in csv_reader(path)?.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(r + 1, |p| p.line() as usize);
            parse_err(path, line, 0, e.to_string())
        })?;
        let line = rec.position().map_or(r + 1, |p| p.line() as usize);
        let cells = rec
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<f64>()
                    .map_err(|_| parse_err(path, line, c + 1, format!("not a number: {cell:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if cells.len() != first.len() {
                return Err(parse_err(
                    path,
                    line,
                    cells.len().min(first.len()) + 1,
                    format!("expected {} cells, found {}", first.len(), cells.len()),
                ));
            }
        }
        rows.push(cells);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, 1, "no data rows"));
    }
    Ok(rows)
}

/// Loads one point per row. With `label_column`, the last cell of each row
/// is a nonnegative integer label.
pub fn load_csv(path: impl AsRef<Path>, label_column: bool) -> Result<(DataMatrix, Option<LabelVector>)> {
    let path = path.as_ref();
    let rows = read_numeric_rows(path)?;
    let width = rows[0].len();
    let dims = if label_column { width - 1 } else { width };
    if dims == 0 {
        return Err(parse_err(path, 1, 1, "rows have no feature cells"));
    }
    let labels = if label_column {
        let mut out = Vec::with_capacity(rows.len());
        for (r, row) in rows.iter().enumerate() {
            let v = row[width - 1];
            if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                return Err(parse_err(path, r + 1, width, format!("label {v} is not a nonnegative integer")));
            }
            out.push(v as usize);
        }
        Some(LabelVector::from_labels(out)?)
    } else {
        None
    };
    let x = Array2::from_shape_fn((dims, rows.len()), |(d, i)| rows[i][d]);
    Ok((DataMatrix::new(x)?, labels))
}

/// Writes one point per row, with the label as a final column when given.
pub fn save_csv(x: &DataMatrix, labels: Option<&LabelVector>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(l) = labels {
        if l.len() != x.points() {
            return Err(Error::LengthMismatch {
                expected: x.points(),
                actual: l.len(),
            });
        }
    }
    let mut w = create(path)?;
    let a = x.as_array();
    let io = |e| Error::io(path, e);
    for i in 0..x.points() {
        let mut line: Vec<String> = a.column(i).iter().map(|v| v.to_string()).collect();
        if let Some(l) = labels {
            line.push(l.labels()[i].to_string());
        }
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Matrix dump: header `# rows cols symmetric`, then one CSV row per matrix row.
pub fn write_matrix(m: &Array2<f64>, symmetric: bool, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "# {} {} {}", m.nrows(), m.ncols(), symmetric).map_err(io)?;
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", cells.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a matrix dump, checking the header against the body.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<(Array2<f64>, bool)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = String::new();
    BufReader::new(file).read_line(&mut header).map_err(|e| Error::io(path, e))?;
    let fields: Vec<&str> = header.trim_start_matches('#').split_whitespace().collect();
    let (rows, cols, symmetric) = match fields.as_slice() {
        [r, c, s] => (
            r.parse::<usize>().map_err(|_| parse_err(path, 1, 1, "bad row count"))?,
            c.parse::<usize>().map_err(|_| parse_err(path, 1, 2, "bad column count"))?,
            s.parse::<bool>().map_err(|_| parse_err(path, 1, 3, "bad symmetric flag"))?,
        ),
        _ => return Err(parse_err(path, 1, 1, "expected header `# rows cols symmetric`")),
    };
    let body = read_numeric_rows(path)?;
    if body.len() != rows || body[0].len() != cols {
        return Err(parse_err(
            path,
            1,
            1,
            format!("header says {rows}x{cols}, body is {}x{}", body.len(), body[0].len()),
        ));
    }
    Ok((Array2::from_shape_fn((rows, cols), |(i, j)| body[i][j]), symmetric))
}

pub fn write_labels(labels: &LabelVector, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    for l in labels.labels() {
        writeln!(w, "{l}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVector> {
    let path = path.as_ref();
    let rows = read_numeric_rows(path)?;
    if rows[0].len() != 1 {
        return Err(parse_err(path, 1, 2, "label files have a single column"));
    }
    let labels = rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            let v = row[0];
            if v < 0.0 || v.fract() != 0.0 {
                Err(parse_err(path, r + 1, 1, format!("label {v} is not a nonnegative integer")))
            } else {
                Ok(v as usize)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    LabelVector::from_labels(labels)
}

pub fn write_history(history: &[IterationRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "iteration,objective,z_delta,c_delta").map_err(io)?;
    for r in history {
        writeln!(w, "{},{},{},{}", r.iteration, r.objective, r.z_delta, r.c_delta).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_json<T: serde::Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}
