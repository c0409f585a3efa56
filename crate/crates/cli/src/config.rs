use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use seasonal_spline::dictionary::GridSpec;
use seasonal_spline::harness::{dyadic_ladder, GroundTruth, Rung};
use seasonal_spline::operators::{OperatorKind, OperatorSpec};
use seasonal_spline::quadratic::KernelConfig;
use seasonal_spline::sensing::{SensingFunctional, SensingKind};
use seasonal_spline::tv::SolverConfig;

use crate::error::{CliError, Result};
use crate::io::{read_samples, read_to_string, VERSION};

/// One JSON document describing a run. Each command reads the sections it
/// needs; unknown keys anywhere are rejected.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub trend: OperatorKind,
    pub seasonal: OperatorKind,
    #[serde(default)]
    pub data: Option<DataSource>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
    /// Relative threshold for reporting knots of a TV fit.
    #[serde(default = "default_eta")]
    pub support_eta: f64,
    #[serde(default)]
    pub quadratic: Option<QuadraticSection>,
    #[serde(default)]
    pub ladder: Option<LadderSection>,
    #[serde(default)]
    pub simulate: Option<SimulateSection>,
    #[serde(default)]
    pub probe: ProbeSection,
    /// Output directory, relative to the config file.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_eta() -> f64 {
    1e-6
}

/// Measurements: a `t,y` CSV of point samples or a measurements JSON for
/// general functionals. Paths are relative to the config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Csv(PathBuf),
    Measurements(PathBuf),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSection {
    pub lambda: f64,
    #[serde(default)]
    pub kernel: KernelConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dyadic {
    pub h0: f64,
    pub n0: usize,
    pub count: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSection {
    /// Explicit rungs; mutually exclusive with `dyadic`.
    #[serde(default)]
    pub rungs: Option<Vec<Rung>>,
    #[serde(default)]
    pub dyadic: Option<Dyadic>,
    pub window: (f64, f64),
    /// Absolute width added on both sides of the window.
    #[serde(default)]
    pub margin: f64,
    #[serde(default = "default_true")]
    pub warm_start: bool,
    #[serde(default = "default_slack")]
    pub monotone_slack: f64,
}

fn default_true() -> bool {
    true
}

fn default_slack() -> f64 {
    1e-9
}

impl LadderSection {
    pub fn rungs(&self) -> Result<Vec<Rung>> {
        match (&self.rungs, &self.dyadic) {
            (Some(r), None) if !r.is_empty() => Ok(r.clone()),
            (None, Some(d)) if d.count > 0 => Ok(dyadic_ladder(d.h0, d.n0, d.count)),
            _ => Err(CliError::Config(
                "ladder needs exactly one of a non-empty `rungs` list or `dyadic` with count >= 1"
                    .into(),
            )),
        }
    }
}

/// Uniform sample locations `start + k step`, `k < count`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleGrid {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl SampleGrid {
    pub fn points(&self) -> Vec<f64> {
        (0..self.count)
            .map(|k| self.start + k as f64 * self.step)
            .collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub truth: GroundTruth,
    #[serde(default)]
    pub samples: Option<SampleGrid>,
    #[serde(default)]
    pub plan: Option<Vec<SensingKind>>,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SimulateSection {
    pub fn plan(&self) -> Result<Vec<SensingFunctional>> {
        match (&self.samples, &self.plan) {
            (Some(g), None) => {
                if g.count == 0 || !(g.step > 0.0) {
                    return Err(CliError::Config(
                        "simulate.samples needs count >= 1 and step > 0".into(),
                    ));
                }
                Ok(g.points()
                    .into_iter()
                    .map(SensingFunctional::sampling)
                    .collect::<std::result::Result<_, _>>()?)
            }
            (None, Some(kinds)) if !kinds.is_empty() => Ok(kinds
                .iter()
                .cloned()
                .map(SensingFunctional::new)
                .collect::<std::result::Result<_, _>>()?),
            _ => Err(CliError::Config(
                "simulate needs exactly one of `samples` or a non-empty `plan`".into(),
            )),
        }
    }
}

/// Dense evaluation grid for the `t,f_T,f_S,f` tables.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    #[serde(default)]
    pub range: Option<(f64, f64)>,
    #[serde(default)]
    pub points: Option<usize>,
}

/// Measurements file: a sensing plan and the observed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Measurements {
    pub version: String,
    pub plan: Vec<SensingKind>,
    pub y: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// A loaded config together with the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub base: PathBuf,
}

impl Loaded {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let config: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base })
    }

    pub fn operators(&self) -> Result<(OperatorSpec, OperatorSpec)> {
        Ok((
            OperatorSpec::trend(self.config.trend.clone())?,
            OperatorSpec::seasonal(self.config.seasonal.clone())?,
        ))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        match (flag, &self.config.out) {
            (Some(d), _) => d.to_path_buf(),
            (None, Some(d)) => self.resolve(d),
            (None, None) => self.resolve(Path::new("out")),
        }
    }

    pub fn data(&self) -> Result<(Vec<SensingFunctional>, Vec<f64>)> {
        let source = self
            .config
            .data
            .as_ref()
            .ok_or_else(|| CliError::Config("missing `data` section".into()))?;
        match source {
            DataSource::Csv(p) => {
                let (ts, ys) = read_samples(&self.resolve(p))?;
                let plan = ts
                    .into_iter()
                    .map(SensingFunctional::sampling)
                    .collect::<std::result::Result<_, _>>()?;
                Ok((plan, ys))
            }
            DataSource::Measurements(p) => {
                let path = self.resolve(p);
                let m: Measurements =
                    serde_json::from_str(&read_to_string(&path)?).map_err(|e| CliError::Parse {
                        path: path.clone(),
                        message: e.to_string(),
                    })?;
                let parse = |message: String| CliError::Parse {
                    path: path.clone(),
                    message,
                };
                if m.version != VERSION {
                    return Err(parse(format!("unsupported version {:?}", m.version)));
                }
                if m.plan.is_empty() || m.plan.len() != m.y.len() {
                    return Err(parse(format!(
                        "{} functionals but {} values",
                        m.plan.len(),
                        m.y.len()
                    )));
                }
                if m.y.iter().any(|v| !v.is_finite()) {
                    return Err(parse("non-finite measurement".into()));
                }
                let plan = m
                    .plan
                    .into_iter()
                    .map(SensingFunctional::new)
                    .collect::<std::result::Result<_, _>>()?;
                Ok((plan, m.y))
            }
        }
    }

    pub fn grid(&self) -> Result<&GridSpec> {
        let g = self
            .config
            .grid
            .as_ref()
            .ok_or_else(|| CliError::Config("missing `grid` section".into()))?;
        g.validate()?;
        Ok(g)
    }

    pub fn solver(&self) -> Result<&SolverConfig> {
        let s = self
            .config
            .solver
            .as_ref()
            .ok_or_else(|| CliError::Config("missing `solver` section".into()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn quadratic(&self) -> Result<&QuadraticSection> {
        let q = self
            .config
            .quadratic
            .as_ref()
            .ok_or_else(|| CliError::Config("missing `quadratic` section".into()))?;
        if !(q.lambda > 0.0) || !q.lambda.is_finite() {
            return Err(CliError::Config(format!(
                "quadratic.lambda must be positive, got {}",
                q.lambda
            )));
        }
        Ok(q)
    }

    pub fn ladder(&self) -> Result<&LadderSection> {
        self.config
            .ladder
            .as_ref()
            .ok_or_else(|| CliError::Config("missing `ladder` section".into()))
    }

    pub fn simulation(&self) -> Result<&SimulateSection> {
        self.config
            .simulate
            .as_ref()
            .ok_or_else(|| CliError::Config("missing `simulate` section".into()))
    }
}

/// Smallest interval containing every sample point, box and density table of a plan.
pub fn plan_extent(plan: &[SensingFunctional]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for phi in plan {
        let (a, b) = match phi.kind() {
            SensingKind::Sampling { x } => (*x, *x),
            SensingKind::Box { start, len } => (*start, start + len),
            SensingKind::Density(d) => (d.start, d.start + (d.values.len() - 1) as f64 * d.step),
        };
        lo = lo.min(a);
        hi = hi.max(b);
    }
    (lo, hi)
}

/// `n` equispaced points covering `[lo, hi]`.
pub fn probe_points(range: (f64, f64), n: usize) -> Result<Vec<f64>> {
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) || n == 0 {
        return Err(CliError::Config(format!(
            "invalid probe grid: range {range:?}, {n} points"
        )));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n)
        .map(|i| if i + 1 == n { hi } else { lo + i as f64 * step })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_grid_hits_both_ends() {
        let p = probe_points((0.0, 1.7), 7).unwrap();
        assert_eq!(p.len(), 7);
        assert_eq!((p[0], p[6]), (0.0, 1.7));
        assert!(probe_points((1.0, 0.0), 3).is_err());
        assert!(probe_points((0.0, 1.0), 0).is_err());
    }

    #[test]
    fn extent_covers_every_functional() {
        let plan = vec![
            SensingFunctional::sampling(0.4).unwrap(),
            SensingFunctional::box_average(-0.5, 0.25).unwrap(),
            SensingFunctional::box_average(1.0, 2.0).unwrap(),
        ];
        assert_eq!(plan_extent(&plan), (-0.5, 3.0));
    }

    #[test]
    fn ladder_needs_exactly_one_rung_source() {
        let parse = |v: &str| serde_json::from_str::<LadderSection>(v).unwrap();
        assert!(parse(r#"{"window": [0, 1]}"#).rungs().is_err());
        let both = r#"{"window": [0, 1], "rungs": [{"h_t": 0.5, "n_s": 2}], "dyadic": {"h0": 0.5, "n0": 2, "count": 2}}"#;
        assert!(parse(both).rungs().is_err());
        let d = parse(r#"{"window": [0, 1], "dyadic": {"h0": 0.5, "n0": 2, "count": 3}}"#);
        assert_eq!(d.rungs().unwrap().len(), 3);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let ok = r#"{"trend": {"kind": "derivative", "order": 2}, "seasonal": {"kind": "sobolev", "gamma": 2}}"#;
        assert!(serde_json::from_str::<RunConfig>(ok).is_ok());
        let bad = r#"{"trend": {"kind": "derivative", "order": 2}, "seasonal": {"kind": "sobolev", "gamma": 2}, "lambda": 1}"#;
        assert!(serde_json::from_str::<RunConfig>(bad).is_err());
    }
}
