//! Command implementations behind the `hybrid-cycles` binary.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{build_hybrid_1d, ConfigError, LimitsSpec, RunConfig};
use crate::error::Error;
use crate::hybrid::{check_hypotheses, fmt_num, run, ChartSampling, ImpactEvent, Termination};
use crate::limits::{classify_interval_map, hybrid_1d_run, omega_estimate, OmegaOptions};
use crate::poincare::{
    derivative_multi, determinant_test, find_periodic_point, return_map, DerivativeOptions,
};
use crate::sweep::{run_sweep, write_sweep_csv};
use crate::verify::{criteria, VerifyContext};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_HYPOTHESIS: u8 = 4;

/// Impacts simulated when a config gives neither a horizon nor a budget.
pub const DEFAULT_IMPACT_BUDGET: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Numerical(#[from] Error),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("cannot write {path}: {source}")]
    Output { path: String, source: io::Error },
    #[error("{failed} of {total} criteria failed")]
    VerifyFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Output { .. } => EXIT_CONFIG,
            CliError::Numerical(Error::InvalidArgument(_) | Error::UnknownModel(_)) => EXIT_CONFIG,
            CliError::Numerical(e) if e.is_hypothesis_violation() => EXIT_HYPOTHESIS,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Hypothesis(_) => EXIT_HYPOTHESIS,
            CliError::VerifyFailed { .. } => EXIT_FAILED,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

struct OutDir(PathBuf);

impl OutDir {
    fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|source| CliError::Output {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(Self(dir.to_path_buf()))
    }

    fn write<F>(&self, name: &str, body: F) -> CliResult<PathBuf>
    where
        F: FnOnce(&mut BufWriter<File>) -> io::Result<()>,
    {
        let path = self.0.join(name);
        let err = |source| CliError::Output {
            path: path.display().to_string(),
            source,
        };
        let mut w = BufWriter::new(File::create(&path).map_err(err)?);
        body(&mut w).and_then(|_| w.flush()).map_err(err)?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<PathBuf> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)
        })
    }
}

fn write_impacts_csv<W: Write>(impacts: &[ImpactEvent], dim: usize, mut w: W) -> io::Result<()> {
    let mut header = vec!["index".to_string(), "t".to_string()];
    header.extend((0..dim).map(|i| format!("x_minus{i}")));
    header.extend((0..dim).map(|i| format!("x_plus{i}")));
    header.push("transversality".into());
    writeln!(w, "{}", header.join(","))?;
    for (k, e) in impacts.iter().enumerate() {
        let mut row = vec![k.to_string(), fmt_num(e.t)];
        row.extend(e.x_minus.iter().map(|&v| fmt_num(v)));
        row.extend(e.x_plus.iter().map(|&v| fmt_num(v)));
        row.push(fmt_num(e.transversality));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Run a hybrid simulation; writes `trajectory.csv`, `impacts.csv` and
/// `summary.json`.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> CliResult<Value> {
    let model = cfg.require_model()?.build()?;
    let sys = &model.system;
    let x0 = cfg
        .initial_state
        .clone()
        .unwrap_or_else(|| model.x0.clone());
    let opts = &cfg.options;
    let (horizon, budget) = match (cfg.horizon, cfg.impacts) {
        (Some(h), n) => (h, n),
        (None, n) => {
            let n = n.unwrap_or(DEFAULT_IMPACT_BUDGET);
            (opts.impact_horizon * (n as f64 + 1.0), Some(n))
        }
    };
    let traj = run(sys, &x0, horizon, budget, opts)?;

    let dir = OutDir::create(out)?;
    dir.write("trajectory.csv", |w| traj.write_csv(w))?;
    dir.write("impacts.csv", |w| {
        write_impacts_csv(&traj.impacts, sys.dimension(), w)
    })?;
    let summary = json!({
        "model": sys.name,
        "initial_state": x0,
        "termination": traj.termination,
        "t_total": traj.t_total,
        "impacts": traj.impacts.len(),
        "final_state": traj.final_state(),
        "last_impact": traj.impacts.last(),
    });
    dir.write_json("summary.json", &summary)?;

    match traj.termination {
        Termination::ZenoSuspected => Err(CliError::Hypothesis(format!(
            "Zeno behaviour suspected after {} impacts at t = {}",
            traj.impacts.len(),
            traj.t_total
        ))),
        Termination::BlowUp => Err(Error::NonFinite { t: traj.t_total }.into()),
        _ => Ok(summary),
    }
}

/// Locate the cycle and evaluate its stability; writes `stability.json`.
pub fn cmd_stability(cfg: &RunConfig, out: &Path) -> CliResult<Value> {
    let model = cfg.require_model()?.build()?;
    let sys = &model.system;
    let chart = &model.chart;
    let sec = &cfg.section;
    let opts = &cfg.options;

    let hypotheses = sec.check_range.map(|range| {
        check_hypotheses(
            sys,
            &ChartSampling {
                chart: chart.clone(),
                range,
                count: sec.check_samples,
            },
            opts,
        )
    });

    let s = match sec.fixed_point {
        Some(s) => s,
        None => find_periodic_point(
            sys,
            chart,
            sec.s_guess.unwrap_or(model.s_guess),
            sec.period,
            opts,
        )?,
    };

    let report = if sys.dimension() == 2 {
        let mut cycle = vec![s];
        let mut x = chart.point(s);
        for _ in 1..sec.period {
            x = return_map(sys, &x, opts)?.x_out;
            cycle.push(chart.coordinate(&x));
        }
        let dopts = DerivativeOptions {
            fd_step: Some(sec.fd_step),
            margin: sec.margin,
        };
        serde_json::to_value(derivative_multi(sys, chart, &cycle, opts, &dopts)?)
    } else {
        if sec.period != 1 {
            return Err(ConfigError::Invalid(
                "the volume test handles period-one orbits only".into(),
            )
            .into());
        }
        serde_json::to_value(determinant_test(sys, &chart.point(s), None, opts)?)
    }
    .map_err(ConfigError::from)?;

    let doc = json!({
        "model": sys.name,
        "fixed_point": s,
        "fixed_point_state": chart.point(s),
        "report": report,
        "hypotheses": hypotheses,
    });
    OutDir::create(out)?.write_json("stability.json", &doc)?;

    if let Some(h) = hypotheses.as_ref().filter(|h| !h.all_pass()) {
        let failed: Vec<&str> = h
            .checks
            .iter()
            .filter(|c| c.status == crate::hybrid::CheckStatus::Fail)
            .map(|c| c.id)
            .collect();
        return Err(CliError::Hypothesis(format!(
            "sampled checks failed: {}",
            failed.join(", ")
        )));
    }
    Ok(doc)
}

/// Evaluate a parameter grid; writes `sweep.csv`.
pub fn cmd_sweep(cfg: &RunConfig, out: &Path, workers: Option<usize>) -> CliResult<Value> {
    let spec = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("missing \"sweep\"".into()))?;
    let workers = workers
        .or(spec.workers)
        .unwrap_or_else(rayon::current_num_threads);
    if workers == 0 {
        return Err(ConfigError::Invalid("--workers must be >= 1".into()).into());
    }
    let rows = run_sweep(spec, &cfg.options, workers)?;
    OutDir::create(out)?.write("sweep.csv", |w| write_sweep_csv(&rows, w))?;
    let holds = rows.iter().filter(|r| r.holds == Some(true)).count();
    let stable = rows
        .iter()
        .filter(|r| r.classification.as_deref() == Some("stable period-1"))
        .count();
    Ok(json!({
        "cells": rows.len(),
        "inequality_holds": holds,
        "stable_period_1": stable,
        "workers": workers,
    }))
}

/// Limit-set classifiers; writes `limits.json` (and `omega_cloud.csv`).
pub fn cmd_limits(cfg: &RunConfig, out: &Path) -> CliResult<Value> {
    let spec = cfg
        .limits
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("missing \"limits\"".into()))?;
    let dir = OutDir::create(out)?;
    let doc = match spec {
        LimitsSpec::IntervalMap {
            map,
            domain,
            x0,
            iterations,
            tol,
        } => {
            let m = map.build(domain.0, domain.1)?;
            let r = classify_interval_map(&m, *x0, *iterations, *tol);
            json!({ "kind": "interval-map", "maps_into_itself": m.maps_into_itself(), "result": r })
        }
        LimitsSpec::Hybrid1d {
            field,
            surface,
            reset,
            region,
            x0,
        } => {
            let sys = build_hybrid_1d(field, surface, reset, *region)?;
            let r = hybrid_1d_run(&sys, *x0, &cfg.options)?;
            json!({ "kind": "hybrid-1d", "result": r })
        }
        LimitsSpec::Omega {
            t_transient,
            t_window,
        } => {
            let model = cfg.require_model()?.build()?;
            let x0 = cfg
                .initial_state
                .clone()
                .unwrap_or_else(|| model.x0.clone());
            let est = omega_estimate(
                &model.system,
                Some(&model.chart),
                &x0,
                *t_transient,
                *t_window,
                &cfg.options,
                &OmegaOptions::default(),
            )?;
            dir.write("omega_cloud.csv", |w| {
                let dim = model.system.dimension();
                let cols: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
                writeln!(w, "t,{}", cols.join(","))?;
                for (t, x) in &est.cloud {
                    let vals: Vec<String> = x.iter().map(|&v| fmt_num(v)).collect();
                    writeln!(w, "{},{}", fmt_num(*t), vals.join(","))?;
                }
                Ok(())
            })?;
            json!({
                "kind": "omega",
                "model": model.system.name,
                "section": est.section,
                "cycle": est.cycle,
                "dense_fill": est.dense_fill,
                "coverage": est.coverage,
            })
        }
    };
    dir.write_json("limits.json", &doc)?;
    Ok(doc)
}

/// Run (or with `list`, enumerate) the acceptance criteria, one line each.
pub fn cmd_verify<W: Write>(
    ctx: &VerifyContext,
    list: bool,
    only: &[usize],
    mut w: W,
) -> CliResult<()> {
    let io_err = |source| CliError::Output {
        path: "<stdout>".into(),
        source,
    };
    let selected: Vec<_> = criteria()
        .into_iter()
        .filter(|c| only.is_empty() || only.contains(&c.id))
        .collect();
    if selected.is_empty() {
        return Err(ConfigError::Invalid(format!("no criteria match {only:?}")).into());
    }
    if list {
        for c in &selected {
            writeln!(w, "{:>2}  {}", c.id, c.title).map_err(io_err)?;
        }
        return Ok(());
    }
    let mut failed = 0;
    for c in &selected {
        let out = c.run(ctx);
        if !out.passed {
            failed += 1;
        }
        writeln!(
            w,
            "{:>2}  {}  {:<50} {:>7.2}s  {}",
            c.id,
            if out.passed { "PASS" } else { "FAIL" },
            c.title,
            out.elapsed.as_secs_f64(),
            out.detail
        )
        .map_err(io_err)?;
    }
    if failed > 0 {
        return Err(CliError::VerifyFailed {
            failed,
            total: selected.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let e: CliError = Error::NotFixedPoint { residual: 1.0 }.into();
        assert_eq!(e.exit_code(), EXIT_NUMERICAL);
        let e: CliError = Error::ZenoSuspected { impacts: 3, t: 1.0 }.into();
        assert_eq!(e.exit_code(), EXIT_HYPOTHESIS);
        let e: CliError = Error::InvalidArgument("x".into()).into();
        assert_eq!(e.exit_code(), EXIT_CONFIG);
        let e: CliError = ConfigError::Invalid("x".into()).into();
        assert_eq!(e.exit_code(), EXIT_CONFIG);
    }

    #[test]
    fn verify_list_does_not_run() {
        let mut buf = Vec::new();
        cmd_verify(&VerifyContext::default(), true, &[], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 10);
        assert!(!text.contains("PASS"));
    }
}
