//! Grid and table CSV serialization.
//!
//! Grid layout: row 1 holds the column-axis values (λi), column 1 holds the
//! row-axis values (λs) and the top-left cell names both axes with units.
//! Numbers are written in shortest round-trip form, so export then load
//! reproduces every value bit for bit.

use std::path::Path;

use crate::error::{FwmError, Result};
use crate::spectrum::IntensityGrid;

pub const JSI_CORNER: &str = "lambda_s_nm\\lambda_i_nm";
pub const FIELD_CORNER: &str = "x_um\\y_um";

/// Shortest round-trip text; exponent form only outside [1e-4, 1e15).
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| FwmError::io(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| FwmError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| FwmError::io(path, e))
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner()
        .map_err(|e| FwmError::Numeric(format!("csv buffer: {e}")))
}

fn csv_err(e: csv::Error) -> FwmError {
    FwmError::Numeric(format!("csv: {e}"))
}

pub fn grid_to_csv(grid: &IntensityGrid, corner: &str) -> Result<Vec<u8>> {
    let mut w = csv_writer();
    let mut head = vec![corner.to_string()];
    head.extend(grid.lambda_i_axis.iter().map(|&v| format_f64(v)));
    w.write_record(&head).map_err(csv_err)?;
    for (r, &ls) in grid.lambda_s_axis.iter().enumerate() {
        let mut row = vec![format_f64(ls)];
        row.extend((0..grid.cols()).map(|c| format_f64(grid.at(r, c))));
        w.write_record(&row).map_err(csv_err)?;
    }
    finish(w)
}

fn parse_cell(text: &str, row: usize, col: usize) -> Result<f64> {
    text.trim().parse::<f64>().map_err(|_| FwmError::Parse {
        location: format!("row {row}, col {col}"),
        message: format!("'{text}' is not a number"),
    })
}

/// Parses and validates a grid CSV; locations are 1-based file rows/columns.
pub fn grid_from_csv(bytes: &[u8]) -> Result<IntensityGrid> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    let mut records = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| FwmError::Parse {
            location: format!("row {}", k + 1),
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    let Some(head) = records.first() else {
        return Err(FwmError::Parse {
            location: "row 1".into(),
            message: "file is empty".into(),
        });
    };
    let width = head.len();
    if width < 3 || records.len() < 3 {
        return Err(FwmError::Parse {
            location: "grid".into(),
            message: "need at least two axis values in each direction".into(),
        });
    }
    let lambda_i_axis = (1..width)
        .map(|c| parse_cell(&head[c], 1, c + 1))
        .collect::<Result<Vec<_>>>()?;
    let mut lambda_s_axis = Vec::with_capacity(records.len() - 1);
    let mut values = Vec::with_capacity((records.len() - 1) * (width - 1));
    for (k, rec) in records.iter().enumerate().skip(1) {
        if rec.len() != width {
            return Err(FwmError::Parse {
                location: format!("row {}", k + 1),
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        lambda_s_axis.push(parse_cell(&rec[0], k + 1, 1)?);
        for c in 1..width {
            values.push(parse_cell(&rec[c], k + 1, c + 1)?);
        }
    }
    IntensityGrid::new(lambda_s_axis, lambda_i_axis, values)
}

/// Reads a measured (or exported) JSI grid CSV.
pub fn load_measured_jsi(path: &Path) -> Result<IntensityGrid> {
    grid_from_csv(&read_file(path)?).map_err(|e| match e {
        FwmError::Parse { location, message } => FwmError::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

/// Plain table with a header row.
pub fn table_csv(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv_writer();
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    finish(w)
}
