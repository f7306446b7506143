//! JSON interchange format of metric fields.
//!
//! ```json
//! {"d": 2, "n": 16, "anchor": "corner", "values": [[g00, g01, g10, g11], ...]}
//! ```
//!
//! Cells are listed in lexicographic order, each Gram matrix row-major.
//! Numbers carry 17 significant digits. `anchor` may be omitted.

use nalgebra::DMatrix;
use serde::Deserialize;

use super::MetricField;
use crate::dynamics::{Anchor, Grid};
use crate::error::{Error, Result};
use crate::numfmt::json_number;
use crate::spd::SpdMatrix;

/// Parsed but unvalidated metric file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricRecord {
    pub d: usize,
    pub n: usize,
    #[serde(default)]
    pub anchor: Option<Anchor>,
    pub values: Vec<Vec<f64>>,
}

/// Parses the JSON text of a metric file.
pub fn read_metric_json(text: &str) -> Result<MetricRecord> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

/// Serializes `g` to the interchange format.
pub fn write_metric_json(g: &MetricField) -> String {
    let grid = g.grid();
    let anchor = match grid.anchor() {
        Anchor::Corner => "corner",
        Anchor::Center => "center",
    };
    let mut out = format!("{{\n  \"d\": {},\n  \"n\": {},\n  \"anchor\": \"{anchor}\",\n  \"values\": [\n", grid.dim(), grid.n());
    let rows: Vec<String> = g
        .values()
        .iter()
        .map(|v| {
            let m = v.to_matrix();
            let d = grid.dim();
            let entries: Vec<String> = (0..d * d).map(|k| json_number(m[(k / d, k % d)])).collect();
            format!("    [{}]", entries.join(", "))
        })
        .collect();
    out.push_str(&rows.join(",\n"));
    out.push_str("\n  ]\n}\n");
    out
}

impl MetricRecord {
    /// Validates the record against `expected` (when given) and builds the field.
    ///
    /// Values must be symmetric positive definite with `|det − 1| ≤ 1e-10`;
    /// anything else is reported as not in `M_omega`.
    pub fn into_field(self, expected: Option<&Grid>) -> Result<MetricField> {
        let anchor = self.anchor.or(expected.map(|g| g.anchor())).unwrap_or(Anchor::Corner);
        let grid = Grid::new(self.n, self.d, anchor)?;
        if let Some(e) = expected {
            if *e != grid {
                return Err(Error::GridMismatch(format!(
                    "metric file has n = {}, d = {}, anchor {:?}; expected n = {}, d = {}, anchor {:?}",
                    grid.n(),
                    grid.dim(),
                    grid.anchor(),
                    e.n(),
                    e.dim(),
                    e.anchor()
                )));
            }
        }
        if self.values.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} cell values for {} cells", self.values.len(), grid.len())));
        }
        let d = self.d;
        let mut values = Vec::with_capacity(grid.len());
        for (cell, row) in self.values.into_iter().enumerate() {
            if row.len() != d * d {
                return Err(Error::GridMismatch(format!("cell {cell} has {} entries, expected {}", row.len(), d * d)));
            }
            let m = DMatrix::from_row_slice(d, d, &row);
            let v = SpdMatrix::new(m).map_err(|e| Error::InvalidArgument(format!("not in M_omega: cell {cell}: {e}")))?;
            values.push(v);
        }
        MetricField::from_values(grid, values).map_err(|e| match e {
            Error::NotInMetricSpace { cell, det } => {
                Error::InvalidArgument(format!("not in M_omega: cell {cell} has det {det}"))
            }
            other => other,
        })
    }
}
