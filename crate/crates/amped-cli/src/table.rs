//! External rate-table ingestion for the compare subcommand.

use std::path::Path;

use crate::error::{validation, CliError};

/// Column order mirrors the rates-mode CSV schema, without the frequency.
pub const RATE_COLUMNS: [&str; 6] = [
    "gamma_down_aa",
    "gamma_up_aa",
    "gamma_down_ab",
    "gamma_up_ab",
    "delta_down_ab",
    "delta_up_ab",
];

/// Parsed rate table: a strictly ascending frequency axis plus the six rate
/// columns in [`RATE_COLUMNS`] order.
#[derive(Debug)]
pub struct RateTable {
    pub omega: Vec<f64>,
    pub columns: [Vec<f64>; 6],
}

/// Read a CSV rate table. Comment lines (`#`) are skipped, the header may
/// order columns freely, and missing columns or a non-monotone frequency
/// axis are validation errors naming the offender.
pub fn read_rate_table(path: &Path) -> Result<RateTable, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| validation(format!("cannot read rate table `{}`: {e}", path.display())))?;
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));

    let header = lines
        .next()
        .ok_or_else(|| validation(format!("rate table `{}` has no header", path.display())))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| -> Result<usize, CliError> {
        names
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| validation(format!("rate table is missing the `{name}` column")))
    };
    let omega_idx = find("omega_eV")?;
    let mut col_idx = [0usize; 6];
    for (k, name) in RATE_COLUMNS.iter().enumerate() {
        col_idx[k] = find(name)?;
    }

    let mut omega = Vec::new();
    let mut columns: [Vec<f64>; 6] = Default::default();
    for (lineno, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != names.len() {
            return Err(validation(format!(
                "rate table row {} has {} cells, header has {}",
                lineno + 1,
                cells.len(),
                names.len()
            )));
        }
        let parse = |idx: usize| -> Result<f64, CliError> {
            cells[idx].parse::<f64>().map_err(|_| {
                validation(format!(
                    "rate table row {}: `{}` is not a number",
                    lineno + 1,
                    cells[idx]
                ))
            })
        };
        let w = parse(omega_idx)?;
        if let Some(&prev) = omega.last() {
            if w <= prev {
                return Err(validation(format!(
                    "rate table frequency axis must be strictly ascending; \
                     row {} has {w} after {prev}",
                    lineno + 1
                )));
            }
        }
        omega.push(w);
        for k in 0..6 {
            columns[k].push(parse(col_idx[k])?);
        }
    }
    if omega.is_empty() {
        return Err(validation("rate table has no data rows".to_string()));
    }
    Ok(RateTable { omega, columns })
}
