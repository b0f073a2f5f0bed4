//! JSON run configuration.

use std::path::Path;

use serde::Deserialize;

use crate::hybrid::HybridOptions;
use crate::limits::{DiscreteMap, Hybrid1d};
use crate::models::ModelSpec;
use crate::ode::{State, VectorField};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Top-level configuration document.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub initial_state: Option<State>,
    /// Simulated time for `simulate`.
    #[serde(default)]
    pub horizon: Option<f64>,
    /// Impact budget for `simulate`; used when `horizon` is absent.
    #[serde(default)]
    pub impacts: Option<usize>,
    #[serde(default)]
    pub options: HybridOptions,
    #[serde(default)]
    pub section: SectionSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub limits: Option<LimitsSpec>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.options
            .integrator
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(h) = self.horizon {
            if !(h >= 0.0) || !h.is_finite() {
                return Err(ConfigError::Invalid(
                    "horizon must be finite and >= 0".into(),
                ));
            }
        }
        if self.section.period == 0 {
            return Err(ConfigError::Invalid("section.period must be >= 1".into()));
        }
        if let Some(s) = &self.sweep {
            s.validate()?;
        }
        Ok(())
    }

    pub fn require_model(&self) -> Result<&ModelSpec, ConfigError> {
        self.model
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("missing \"model\"".into()))
    }
}

/// Section and stability options.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SectionSpec {
    /// Start of the fixed-point search, in chart coordinates.
    pub s_guess: Option<f64>,
    /// Evaluate at this chart point without solving for a fixed point.
    pub fixed_point: Option<f64>,
    /// Impacts per period of the cycle.
    pub period: usize,
    pub fd_step: f64,
    pub margin: f64,
    /// Chart range and sample count for the hypothesis checks.
    pub check_range: Option<(f64, f64)>,
    pub check_samples: usize,
}

impl Default for SectionSpec {
    fn default() -> Self {
        Self {
            s_guess: None,
            fixed_point: None,
            period: 1,
            fd_step: crate::poincare::RETURN_MAP_FD_STEP,
            margin: crate::poincare::DEFAULT_MARGIN,
            check_range: None,
            check_samples: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepTask {
    InequalityOnly,
    SimulateAndClassify,
}

/// Grid axis: `count` points on `[min, max]`, optionally excluding ends.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default)]
    pub exclude_min: bool,
    #[serde(default)]
    pub exclude_max: bool,
}

impl Axis {
    pub fn values_between(&self, min: f64, max: f64) -> Vec<f64> {
        let n = self.count;
        let (offset, denom) = match (self.exclude_min, self.exclude_max) {
            (false, false) => (0, n - 1),
            (true, false) => (1, n),
            (false, true) => (0, n),
            (true, true) => (1, n + 1),
        };
        (0..n)
            .map(|j| min + (max - min) * (j + offset) as f64 / denom as f64)
            .collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.values_between(self.min, self.max)
    }
}

/// Parameter sweep over the rimless wheel's `(alpha, delta)` plane.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub alpha: Axis,
    pub delta: Axis,
    /// Use `alpha` of each row as the lower end of the `delta` axis.
    #[serde(default)]
    pub delta_above_alpha: bool,
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    pub task: SweepTask,
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_zeta() -> f64 {
    9.8
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, a) in [("alpha", &self.alpha), ("delta", &self.delta)] {
            if a.count < 2 {
                return Err(ConfigError::Invalid(format!(
                    "sweep.{name}.count must be >= 2"
                )));
            }
            if !a.min.is_finite() || !a.max.is_finite() || !(a.min < a.max) {
                return Err(ConfigError::Invalid(format!(
                    "sweep.{name} needs a finite range with min < max"
                )));
            }
        }
        if !(self.zeta > 0.0) || !self.zeta.is_finite() {
            return Err(ConfigError::Invalid("sweep.zeta must be positive".into()));
        }
        if self.workers == Some(0) {
            return Err(ConfigError::Invalid("sweep.workers must be >= 1".into()));
        }
        Ok(())
    }
}

/// One-dimensional fields available to the `limits` command.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Field1dSpec {
    /// `x' = speed`.
    Constant { speed: f64 },
    /// `x' = rate (target - x)`.
    Relaxation { target: f64, rate: f64 },
}

impl Field1dSpec {
    pub fn build(&self) -> VectorField {
        match *self {
            Field1dSpec::Constant { speed } => {
                VectorField::new(1, move |_, dx| dx[0] = speed).with_divergence(|_| 0.0)
            }
            Field1dSpec::Relaxation { target, rate } => {
                VectorField::new(1, move |x, dx| dx[0] = rate * (target - x[0]))
                    .with_divergence(move |_| -rate)
            }
        }
    }

    pub fn fixed_points(&self) -> Vec<f64> {
        match *self {
            Field1dSpec::Constant { .. } => Vec::new(),
            Field1dSpec::Relaxation { target, .. } => vec![target],
        }
    }
}

/// Built-in scalar maps for the interval classifier.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum MapSpec {
    Affine { slope: f64, offset: f64 },
    Logistic { r: f64 },
}

impl MapSpec {
    pub fn build(&self, a: f64, b: f64) -> crate::Result<DiscreteMap> {
        match *self {
            MapSpec::Affine { slope, offset } => {
                DiscreteMap::new(move |x| slope * x + offset, a, b)
            }
            MapSpec::Logistic { r } => DiscreteMap::new(move |x| r * x * (1.0 - x), a, b),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum LimitsSpec {
    IntervalMap {
        map: MapSpec,
        domain: (f64, f64),
        x0: f64,
        #[serde(default = "default_iterations")]
        iterations: usize,
        #[serde(default = "default_cycle_tol")]
        tol: f64,
    },
    #[serde(rename = "hybrid-1d")]
    Hybrid1d {
        field: Field1dSpec,
        /// Closed intervals `[a, b]`; single points are `[s, s]`.
        surface: Vec<(f64, f64)>,
        /// Reset as a table of `[impact point, image]` pairs.
        reset: Vec<(f64, f64)>,
        region: (f64, f64),
        x0: f64,
    },
    Omega {
        t_transient: f64,
        t_window: f64,
    },
}

fn default_iterations() -> usize {
    10_000
}

fn default_cycle_tol() -> f64 {
    crate::limits::CYCLE_TOL
}

/// Build the one-dimensional hybrid system described by a table reset.
pub fn build_hybrid_1d(
    field: &Field1dSpec,
    surface: &[(f64, f64)],
    reset: &[(f64, f64)],
    region: (f64, f64),
) -> crate::Result<Hybrid1d> {
    let table = reset.to_vec();
    let sys = Hybrid1d::new(
        field.build(),
        surface.to_vec(),
        move |s| {
            table
                .iter()
                .min_by(|a, b| (a.0 - s).abs().partial_cmp(&(b.0 - s).abs()).unwrap())
                .map(|&(_, img)| img)
                .unwrap_or(f64::NAN)
        },
        region,
    )?;
    let fps = field.fixed_points();
    Ok(if fps.is_empty() {
        sys
    } else {
        sys.with_fixed_points(fps)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_json(r#"{"model":{"name":"vdp"},"horizn":3}"#).unwrap_err();
        assert!(err.to_string().contains("horizn"));
        let err = RunConfig::from_json(r#"{"options":{"rel_toll":1}}"#).unwrap_err();
        assert!(matches!(err, ConfigError::Schema(_)));
    }

    #[test]
    fn minimal_config_parses() {
        let cfg = RunConfig::from_json(
            r#"{"model":{"name":"polar","params":{"alpha":3.14159,"beta":2,"gamma":0}},
                "horizon":10,"options":{"integrator":{"rel_tol":1e-10,"abs_tol":1e-12}}}"#,
        )
        .unwrap();
        assert_eq!(cfg.require_model().unwrap().name(), "polar");
        assert_eq!(cfg.options.integrator.rel_tol, 1e-10);
        assert_eq!(cfg.section.period, 1);
    }

    #[test]
    fn axes() {
        let a = Axis {
            min: 0.0,
            max: 1.0,
            count: 4,
            exclude_min: true,
            exclude_max: false,
        };
        assert_eq!(a.values(), vec![0.25, 0.5, 0.75, 1.0]);
        let b = Axis {
            exclude_min: false,
            ..a
        };
        assert_eq!(b.values(), vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
        let c = Axis {
            exclude_max: true,
            ..a
        };
        let v = c.values();
        assert_eq!(v.len(), 4);
        assert!(v
            .iter()
            .zip([0.2, 0.4, 0.6, 0.8])
            .all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn sweep_validation() {
        let bad = r#"{"sweep":{"alpha":{"min":0,"max":1,"count":1},
                     "delta":{"min":0,"max":1,"count":3},"task":"inequality-only"}}"#;
        assert!(RunConfig::from_json(bad).is_err());
        let ok = r#"{"sweep":{"alpha":{"min":0,"max":1,"count":2},
                    "delta":{"min":0,"max":1,"count":2},"task":"simulate-and-classify"}}"#;
        assert!(RunConfig::from_json(ok).is_ok());
    }

    #[test]
    fn limits_specs_parse() {
        let cfg = RunConfig::from_json(
            r#"{"limits":{"kind":"hybrid-1d","field":{"constant":{"speed":1}},
                "surface":[[1,1],[2,2]],"reset":[[1,1.5],[2,0]],"region":[0,2],"x0":0}}"#,
        )
        .unwrap();
        assert!(matches!(cfg.limits, Some(LimitsSpec::Hybrid1d { .. })));
        let cfg = RunConfig::from_json(
            r#"{"limits":{"kind":"interval-map","map":{"logistic":{"r":4}},"domain":[0,1],"x0":0.3}}"#,
        )
        .unwrap();
        assert!(matches!(cfg.limits, Some(LimitsSpec::IntervalMap { .. })));
    }
}
