//! Plain-text serialization. Every float is written with 17 significant
//! digits in scientific notation, so identical values give identical bytes.

use std::fmt::Write as _;

use crate::ensemble::SampleBatch;
use crate::measure::VectorMeasure;
use crate::system::Configuration;

/// `v` with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// One CSV cell.
#[derive(Debug, Clone, Copy)]
pub enum Cell {
    Int(i64),
    Float(f64),
    /// Written as an empty field.
    Empty,
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }
}

/// A CSV document with a header row.
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<Cell>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        for (k, cell) in row.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            match cell {
                Cell::Int(v) => write!(out, "{v}").unwrap(),
                Cell::Float(v) => out.push_str(&fmt_f64(*v)),
                Cell::Empty => {}
            }
        }
        out.push('\n');
    }
    out
}

/// `interval_index,node,weight,density`; interval indices start at 1.
pub fn equilibrium_csv(mu: &VectorMeasure) -> String {
    let rows = mu.components().iter().flat_map(|c| {
        let i = c.interval_index() + 1;
        let h = c.cell_width();
        c.nodes()
            .iter()
            .zip(c.weights())
            .map(move |(&x, &w)| vec![i.into(), x.into(), w.into(), (w / h).into()])
    });
    csv(&["interval_index", "node", "weight", "density"], rows)
}

/// `block,index,coordinate`; blocks and indices start at 1.
pub fn configuration_csv(x: &Configuration) -> String {
    let rows = x.blocks().iter().enumerate().flat_map(|(i, b)| {
        b.iter()
            .enumerate()
            .map(move |(k, &v)| vec![(i + 1).into(), (k + 1).into(), v.into()])
    });
    csv(&["block", "index", "coordinate"], rows)
}

/// `sample_id,block,index,value`; all counters start at 1.
pub fn samples_csv(batch: &SampleBatch) -> String {
    let rows = batch.configs.iter().enumerate().flat_map(|(s, x)| {
        x.blocks().iter().enumerate().flat_map(move |(i, b)| {
            b.iter()
                .enumerate()
                .map(move |(k, &v)| vec![(s + 1).into(), (i + 1).into(), (k + 1).into(), v.into()])
        })
    });
    csv(&["sample_id", "block", "index", "value"], rows)
}
