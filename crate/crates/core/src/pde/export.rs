use std::io::Write;

use serde::{Deserialize, Serialize};

use super::grid::{Axis, GridField, TubeGrid};
use crate::{Error, Result};

/// Grid metadata and solver history stored next to a field CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub base: String,
    pub eps: f64,
    pub axes: Vec<Axis>,
    pub nodes: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<f64>,
}

impl FieldSidecar {
    pub fn new(grid: &TubeGrid, history: Vec<f64>) -> Self {
        Self {
            base: grid.chart().base().name().to_string(),
            eps: grid.chart().eps(),
            axes: grid.axes().to_vec(),
            nodes: grid.len(),
            history,
        }
    }
}

/// One row per node: multi-index, chart coordinates, value.
pub fn write_field_csv<W: Write>(grid: &TubeGrid, field: &GridField, out: W) -> Result<()> {
    let io = |e: csv::Error| Error::Io(e.to_string());
    let m = grid.base_dim();
    let k = grid.dim() - m;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (0..grid.dim()).map(|a| format!("i{a}")).collect();
    header.extend((1..=m).map(|a| format!("x{a}")));
    header.extend((1..=k).map(|a| format!("y{a}")));
    header.push("value".into());
    w.write_record(&header).map_err(io)?;
    for (n, v) in field.values.iter().enumerate() {
        let (x, y) = grid.coords(n);
        let mut rec: Vec<String> = grid.multi_index(n).iter().map(|i| i.to_string()).collect();
        rec.extend(x.iter().chain(&y).map(|c| format!("{c:.17e}")));
        rec.push(format!("{v:.17e}"));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}
