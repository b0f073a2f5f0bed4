//! Parameter sweeps over the rimless wheel's `(alpha, delta)` plane.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{SweepSpec, SweepTask};
use crate::error::{Error, Result};
use crate::hybrid::{fmt_num, HybridOptions};
use crate::models::{classify_gait, existence_inequality, RimlessWheelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepCell {
    pub row: usize,
    pub col: usize,
    pub alpha: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub holds: Option<bool>,
    /// Gait class label, `excluded` outside `delta > alpha`, or the error
    /// encountered.
    pub classification: Option<String>,
    pub derivative: Option<f64>,
}

/// Grid cells in row-major order (`alpha` outer, `delta` inner).
pub fn grid(spec: &SweepSpec) -> Vec<SweepCell> {
    let mut cells = Vec::with_capacity(spec.alpha.count * spec.delta.count);
    for (row, alpha) in spec.alpha.values().into_iter().enumerate() {
        let deltas = if spec.delta_above_alpha {
            spec.delta.values_between(alpha, spec.delta.max)
        } else {
            spec.delta.values()
        };
        for (col, delta) in deltas.into_iter().enumerate() {
            cells.push(SweepCell {
                row,
                col,
                alpha,
                delta,
            });
        }
    }
    cells
}

pub fn evaluate_cell(
    cell: SweepCell,
    zeta: f64,
    task: SweepTask,
    opts: &HybridOptions,
) -> SweepRow {
    let p = RimlessWheelParams::new(cell.delta, cell.alpha, zeta);
    let mut row = SweepRow {
        cell,
        lhs: None,
        rhs: None,
        holds: None,
        classification: None,
        derivative: None,
    };
    let Ok(check) = existence_inequality(&p) else {
        row.classification = Some("excluded".into());
        return row;
    };
    row.lhs = Some(check.lhs);
    row.rhs = Some(check.rhs);
    row.holds = Some(check.holds);
    if task == SweepTask::SimulateAndClassify {
        match classify_gait(&p, opts) {
            Ok(c) => {
                row.classification = Some(c.class.label().into());
                row.derivative = c.derivative.map(f64::abs);
            }
            Err(e) => row.classification = Some(format!("error: {e}")),
        }
    }
    row
}

/// Evaluate every cell on `workers` threads. Rows come back in grid order
/// whatever the worker count.
pub fn run_sweep(spec: &SweepSpec, opts: &HybridOptions, workers: usize) -> Result<Vec<SweepRow>> {
    let cells = grid(spec);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        cells
            .par_iter()
            .map(|&c| evaluate_cell(c, spec.zeta, spec.task, opts))
            .collect()
    }))
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> io::Result<()> {
    writeln!(
        w,
        "row,col,alpha,delta,lhs,rhs,holds,classification,abs_derivative"
    )?;
    let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.cell.row,
            r.cell.col,
            fmt_num(r.cell.alpha),
            fmt_num(r.cell.delta),
            opt(r.lhs),
            opt(r.rhs),
            r.holds.map(|h| h.to_string()).unwrap_or_default(),
            r.classification.as_deref().unwrap_or("").replace(',', ";"),
            opt(r.derivative),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Axis;
    use std::f64::consts::PI;

    fn spec(task: SweepTask) -> SweepSpec {
        SweepSpec {
            alpha: Axis {
                min: 0.0,
                max: PI / 8.0,
                count: 3,
                exclude_min: true,
                exclude_max: false,
            },
            delta: Axis {
                min: 0.0,
                max: PI / 4.0,
                count: 3,
                exclude_min: true,
                exclude_max: true,
            },
            delta_above_alpha: true,
            zeta: 9.8,
            task,
            workers: None,
        }
    }

    #[test]
    fn grid_respects_alpha_floor() {
        let cells = grid(&spec(SweepTask::InequalityOnly));
        assert_eq!(cells.len(), 9);
        assert!(cells
            .iter()
            .all(|c| c.delta > c.alpha && c.delta < PI / 4.0));
        assert_eq!((cells[4].row, cells[4].col), (1, 1));
    }

    #[test]
    fn excluded_cells_are_marked() {
        let row = evaluate_cell(
            SweepCell {
                row: 0,
                col: 0,
                alpha: 0.3,
                delta: 0.2,
            },
            9.8,
            SweepTask::SimulateAndClassify,
            &HybridOptions::default(),
        );
        assert_eq!(row.classification.as_deref(), Some("excluded"));
        assert_eq!(row.holds, None);
    }

    #[test]
    fn csv_is_independent_of_worker_count() {
        let s = spec(SweepTask::SimulateAndClassify);
        let opts = HybridOptions::default().with_rel_tol(1e-9);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_sweep_csv(&run_sweep(&s, &opts, 1).unwrap(), &mut a).unwrap();
        write_sweep_csv(&run_sweep(&s, &opts, 4).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(String::from_utf8(a).unwrap().lines().count(), 10);
    }
}
