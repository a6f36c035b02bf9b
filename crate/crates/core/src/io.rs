//! CSV trajectories and matrix dumps.
//!
//! Trajectory files have the header `u0,...,u{m-1},y0,...,y{p-1}` and one row
//! per time step. Floats are written with 17 significant digits so that a
//! read after a write reproduces every value exactly.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::systems::Trajectory;

/// Column layout of a trajectory file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Columns {
    pub inputs: usize,
    pub outputs: usize,
}

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn header(cols: Columns) -> Vec<String> {
    (0..cols.inputs)
        .map(|i| format!("u{i}"))
        .chain((0..cols.outputs).map(|i| format!("y{i}")))
        .collect()
}

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let cols = Columns {
        inputs: traj.input_dim(),
        outputs: traj.output_dim(),
    };
    write_trajectory_csv_with(traj, cols, out)
}

/// Like [`write_trajectory_csv`], with the layout given explicitly so empty
/// trajectories keep their header.
pub fn write_trajectory_csv_with<W: Write>(traj: &Trajectory, cols: Columns, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header(cols)).map_err(csv_err)?;
    for (u, y) in traj.u.iter().zip(&traj.y) {
        w.write_record(u.iter().chain(y.iter()).map(|x| format_float(*x)))
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            row,
            msg: format!("{other:?}"),
        },
    }
}

fn parse_header(fields: &csv::StringRecord) -> Result<Columns> {
    let bad = |msg: String| Error::Parse { row: 1, msg };
    let mut inputs = 0;
    let mut outputs = 0;
    for (i, name) in fields.iter().enumerate() {
        let name = name.trim();
        if outputs == 0 && name == format!("u{inputs}") {
            inputs += 1;
        } else if name == format!("y{outputs}") {
            outputs += 1;
        } else {
            return Err(bad(format!(
                "column {} is `{name}`; expected u0..u(m-1) followed by y0..y(p-1)",
                i + 1
            )));
        }
    }
    if outputs == 0 {
        return Err(bad("header has no output columns".into()));
    }
    Ok(Columns { inputs, outputs })
}

/// Reads a trajectory file. Rows are numbered from 1 with the header as row 1.
pub fn read_trajectory_csv<R: Read>(input: R) -> Result<(Trajectory, Columns)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(input);
    let mut records = rdr.records();
    let head = match records.next() {
        Some(r) => r.map_err(csv_err)?,
        None => {
            return Err(Error::Parse {
                row: 1,
                msg: "file is empty".into(),
            })
        }
    };
    let cols = parse_header(&head)?;
    let width = cols.inputs + cols.outputs;
    let mut u = Vec::new();
    let mut y = Vec::new();
    for (i, rec) in records.enumerate() {
        let row = i + 2;
        let rec = rec.map_err(csv_err)?;
        if rec.len() != width {
            return Err(Error::Parse {
                row,
                msg: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        let mut vals = Vec::with_capacity(width);
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row,
                msg: format!("field {} (`{field}`) is not a number", j + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    msg: format!("field {} is not finite", j + 1),
                });
            }
            vals.push(v);
        }
        u.push(Vector::from_column_slice(&vals[..cols.inputs]));
        y.push(Vector::from_column_slice(&vals[cols.inputs..]));
    }
    Ok((Trajectory::new(u, y)?, cols))
}

/// Plain numeric CSV, one matrix row per line, no header.
pub fn write_matrix_csv<W: Write>(m: &Matrix, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for r in m.row_iter() {
        w.write_record(r.iter().map(|x| format_float(*x))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
