//! CSV form of sampled functions: `index,coord0,..,coord{n-1},value`, one
//! row per node in row-major order, floats written with 17 significant digits.

use std::io::{Read, Write};

use lipflow_core::{Grid, SampledFunction};

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("header must be {expected:?}, found {found:?}")]
    Header {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("expected {expected} rows, found {found}")]
    RowCount { expected: usize, found: usize },
    #[error(transparent)]
    Grid(#[from] lipflow_core::grid::GridError),
}

fn header(n: usize) -> Vec<String> {
    let mut h = vec!["index".to_string()];
    h.extend((0..n).map(|i| format!("coord{i}")));
    h.push("value".into());
    h
}

pub fn write_sampled<W: Write>(f: &SampledFunction, out: W) -> Result<(), CsvError> {
    let grid = f.grid();
    let n = grid.dimension();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(n))?;
    let mut x = vec![0.0; n];
    let mut row = Vec::with_capacity(n + 2);
    for (k, v) in f.values().iter().enumerate() {
        grid.node_into(k, &mut x);
        row.clear();
        row.push(k.to_string());
        row.extend(x.iter().map(|c| format!("{c:.16e}")));
        row.push(format!("{v:.16e}"));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads values back onto `grid`. Indices must run `0..len` in order and
/// coordinates must match the grid's nodes.
pub fn read_sampled<R: Read>(input: R, grid: Grid) -> Result<SampledFunction, CsvError> {
    let n = grid.dimension();
    let mut r = csv::Reader::from_reader(input);
    let found: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let expected = header(n);
    if found != expected {
        return Err(CsvError::Header { expected, found });
    }
    let mut values = Vec::with_capacity(grid.len());
    let mut x = vec![0.0; n];
    for (row, record) in r.records().enumerate() {
        let record = record?;
        let bad = |message: String| CsvError::Row { row, message };
        let num = |i: usize| -> Result<f64, CsvError> {
            record[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| bad(format!("column {i}: {e}")))
        };
        let index: usize = record[0]
            .trim()
            .parse()
            .map_err(|e| bad(format!("index: {e}")))?;
        if index != row {
            return Err(bad(format!("index {index} out of order")));
        }
        if row >= grid.len() {
            return Err(CsvError::RowCount {
                expected: grid.len(),
                found: row + 1,
            });
        }
        grid.node_into(row, &mut x);
        for (axis, &c) in x.iter().enumerate() {
            let got = num(axis + 1)?;
            if (got - c).abs() > 1e-9 * grid.cell()[axis] {
                return Err(bad(format!("coord{axis} is {got}, grid node has {c}")));
            }
        }
        values.push(num(n + 1)?);
    }
    if values.len() != grid.len() {
        return Err(CsvError::RowCount {
            expected: grid.len(),
            found: values.len(),
        });
    }
    Ok(SampledFunction::from_values(grid, values)?)
}
