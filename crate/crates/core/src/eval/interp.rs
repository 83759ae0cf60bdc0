use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpScore {
    pub hour: usize,
    /// Over every cell that holds no input station.
    pub off_station_rmse: f64,
    /// Over the held-out station cells, when a mask was given.
    pub held_out_rmse: Option<f64>,
}

/// Per-hour error of gridded fields against the true fields. Both are
/// hour-major `[hours, rows, cols]`; `station_cells` are the cells whose
/// readings fed the interpolation.
pub fn interpolation_score(
    interpolated: &[f64],
    truth: &[f64],
    shape: (usize, usize, usize),
    station_cells: &[(usize, usize)],
    held_out: Option<&[(usize, usize)]>,
) -> Result<Vec<InterpScore>> {
    let (hours, rows, cols) = shape;
    let cells = rows * cols;
    if interpolated.len() != hours * cells || truth.len() != hours * cells {
        return Err(Error::contract(format!(
            "fields of {} and {} values do not match shape {shape:?}",
            interpolated.len(),
            truth.len()
        )));
    }
    let index = |&(r, c): &(usize, usize)| -> Result<usize> {
        if r >= rows || c >= cols {
            return Err(Error::contract(format!(
                "cell ({r}, {c}) outside {rows}x{cols} grid"
            )));
        }
        Ok(r * cols + c)
    };
    let mut is_station = vec![false; cells];
    for cell in station_cells {
        is_station[index(cell)?] = true;
    }
    let off: Vec<usize> = (0..cells).filter(|&i| !is_station[i]).collect();
    let held: Option<Vec<usize>> = held_out
        .map(|h| h.iter().map(index).collect::<Result<_>>())
        .transpose()?;
    let rmse = |base: usize, ids: &[usize]| -> f64 {
        if ids.is_empty() {
            return 0.0;
        }
        let s: f64 = ids
            .iter()
            .map(|&i| (interpolated[base + i] - truth[base + i]).powi(2))
            .sum();
        (s / ids.len() as f64).sqrt()
    };
    Ok((0..hours)
        .map(|h| InterpScore {
            hour: h,
            off_station_rmse: rmse(h * cells, &off),
            held_out_rmse: held.as_ref().map(|ids| rmse(h * cells, ids)),
        })
        .collect())
}

/// Baseline fill: every cell takes the value of the closest site.
pub fn nearest_fill(grid: &GridSpec, sites: &[(f64, f64)], values: &[f64]) -> Result<Vec<f64>> {
    if sites.is_empty() || sites.len() != values.len() {
        return Err(Error::contract(format!(
            "{} sites for {} values",
            sites.len(),
            values.len()
        )));
    }
    let mut out = Vec::with_capacity(grid.cells());
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let (x, y) = grid.cell_center(r, c);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, &(sx, sy)) in sites.iter().enumerate() {
                let d = (sx - x).hypot(sy - y);
                if d < best_d {
                    best = i;
                    best_d = d;
                }
            }
            out.push(values[best]);
        }
    }
    Ok(out)
}
