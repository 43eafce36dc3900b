use super::{edge_at, DecisionModel, EdgeReport, QueryPanel, ValueTable};
use crate::error::ModelError;
use crate::io::{csv_string, fmt_f64};
use crate::model::{QueryDraw, UserState};

pub const VALUE_HEADER: [&str; 3] = ["s", "c", "value"];
pub const EDGE_HEADER: [&str; 9] = ["s", "c", "r", "psi", "q_ad", "q_free", "delta", "short", "long"];

/// Header with `suffix` appended to every non-key column.
fn suffixed(header: &[&str], keys: usize, suffix: &str) -> Vec<String> {
    header
        .iter()
        .enumerate()
        .map(|(i, h)| if i < keys { h.to_string() } else { format!("{h}{suffix}") })
        .collect()
}

/// `(s, c, value)` rows in grid order.
pub fn value_csv(table: &ValueTable, suffix: &str) -> String {
    let header = suffixed(&VALUE_HEADER, 2, suffix);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_string(
        &header,
        table
            .rows()
            .map(|(s, c, v)| vec![s.to_string(), c.to_string(), fmt_f64(v)]),
    )
}

/// Edge reports at every grid cell and panel query, cell-major.
pub fn edge_rows<M: DecisionModel + ?Sized>(
    model: &M,
    table: &ValueTable,
    panel: &QueryPanel,
) -> Result<Vec<(UserState, QueryDraw, EdgeReport)>, ModelError> {
    let grid = model.grid();
    let mut out = Vec::with_capacity(grid.n_cells() * panel.len());
    for cell in 0..grid.n_cells() {
        let (s, c) = grid.coords(cell);
        let st = UserState::pre(s, c);
        for q in panel.queries() {
            out.push((st, *q, edge_at(model, table, &st, q)?));
        }
    }
    Ok(out)
}

pub fn edge_csv<M: DecisionModel + ?Sized>(
    model: &M,
    table: &ValueTable,
    panel: &QueryPanel,
    suffix: &str,
) -> Result<String, ModelError> {
    let header = suffixed(&EDGE_HEADER, 4, suffix);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = edge_rows(model, table, panel)?;
    Ok(csv_string(
        &header,
        rows.iter().map(|(st, q, e)| {
            vec![
                st.s.to_string(),
                st.c.to_string(),
                fmt_f64(q.r),
                fmt_f64(q.psi),
                fmt_f64(e.q_ad),
                fmt_f64(e.q_free),
                fmt_f64(e.delta),
                fmt_f64(e.short_term),
                fmt_f64(e.long_term),
            ]
        }),
    ))
}
