//! Tabular views of results for CSV writers, with round-trip float formatting.
//!
//! Tables hold numbers only; callers choose the writer. Every value is
//! rendered with 17 significant digits so `parse::<f64>()` recovers it
//! exactly.

use serde::Serialize;

use crate::continuum::HydroChainField;
use crate::flows::EvolutionResult;
use crate::lax::PfaffLax;

/// `x` in scientific notation with 17 significant digits and a `.` decimal.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn formatted_rows(&self) -> impl Iterator<Item = Vec<String>> + '_ {
        self.rows.iter().map(|r| r.iter().map(|&v| fmt_f64(v)).collect())
    }

    /// Index of a column by name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

/// One row per sample time: `t` followed by every state component.
pub fn evolution_table(result: &EvolutionResult) -> Table {
    let mut table = Table::new(std::iter::once("t".to_string()).chain(result.labels.iter().cloned()).collect());
    for (t, y) in result.times.iter().zip(&result.states) {
        table.push(std::iter::once(*t).chain(y.iter().copied()).collect());
    }
    table
}

/// One row per stored entry: `l, n, value`.
pub fn pfaff_table(w: &PfaffLax) -> Table {
    let mut table = Table::new(vec!["l".into(), "n".into(), "value".into()]);
    for (l, n) in w.stored_indices() {
        table.push(vec![l as f64, n as f64, w.get(l, n)]);
    }
    table
}

/// One row per grid point: `x`, `v`, then `u[ℓ]` for every field.
pub fn field_table(field: &HydroChainField) -> Table {
    let lmin = -(field.kneg as i32);
    let header = ["x".to_string(), "v".to_string()]
        .into_iter()
        .chain((0..field.u.len()).map(|i| format!("u[{}]", lmin + i as i32)))
        .collect();
    let mut table = Table::new(header);
    for (i, x) in field.x.iter().enumerate() {
        table.push([*x, field.v[i]].into_iter().chain(field.u.iter().map(|u| u[i])).collect());
    }
    table
}

/// Named columns of equal length.
pub fn columns_table(columns: &[(&str, &[f64])]) -> Table {
    let mut table = Table::new(columns.iter().map(|(h, _)| h.to_string()).collect());
    let len = columns.iter().map(|(_, c)| c.len()).min().unwrap_or(0);
    for i in 0..len {
        table.push(columns.iter().map(|(_, c)| c[i]).collect());
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lax::goe_lax_init;

    #[test]
    fn round_trip_format() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_f64(1.5), "1.5000000000000000e0");
    }

    #[test]
    fn field_columns() {
        let f = HydroChainField::goe_initial(0.5, 1.5, 11, 2, 3).unwrap();
        let t = field_table(&f);
        assert_eq!(t.header[..4], ["x", "v", "u[-2]", "u[-1]"]);
        assert_eq!(t.header.len(), 2 + 6);
        assert_eq!(t.rows.len(), 11);
        let u0 = t.column("u[0]").unwrap();
        assert_eq!(t.rows[10][u0], 1.5);
    }

    #[test]
    fn pfaff_rows_cover_storage() {
        let w = goe_lax_init(4, 3);
        let t = pfaff_table(&w);
        assert_eq!(t.rows.len(), w.as_slice().len());
    }
}
