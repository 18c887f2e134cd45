//! Scenario files.
//!
//! A scenario is a TOML document. Lengths are in torus units (the torus is
//! `ℝ²/ℤ²`). Unknown keys are rejected.
//!
//! ```toml
//! name = "shear"
//! seed = 7
//!
//! [covering]
//! collar_width = 0.05
//! theta_min = 0.2
//! germ = "inverse-square"        # or "inverse-linear"
//!
//! [[covering.charts]]
//! index = 1
//! center = [0.0, 0.0]
//! radius = 0.4
//!
//! [bundle]
//! kind = "holonomy"              # "trivial" | "holonomy" | "line"
//! a = [[1.0, 1.0], [0.0, 1.0]]
//! b = [[1.0, 2.0], [0.0, 1.0]]
//!
//! [schedule]
//! log_t = [2.0, 3.0, 4.0, 5.0, 6.0, 7.0]   # T = exp(log_t)
//! model = "log-over-t"           # or "log-over-t-with-offset"
//! fit_tolerance = 0.05
//!
//! [quadrature.index]
//! abs = 1e-14
//! rel = 1e-10
//! max_cells = 4000
//! ```
//!
//! A line bundle uses `kind = "line"` with `degree`, and optionally `ripple`
//! and `gauge`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use vertexeuler_core::atlas::Chart;
use vertexeuler_core::covering::{BumpProfile, CoveringOptions, Germ, TransversalCovering};
use vertexeuler_core::flat_bundle::{FlatBundle, LineBundle};
use vertexeuler_core::linalg::Matrix;
use vertexeuler_core::local_index::{ExtrapolationModel, TSchedule};
use vertexeuler_core::quadrature::Tolerance;

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub covering: CoveringSpec,
    pub bundle: BundleSpec,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
}

fn default_seed() -> u64 {
    7
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoveringSpec {
    #[serde(default = "default_width")]
    pub collar_width: f64,
    #[serde(default = "default_theta")]
    pub theta_min: f64,
    #[serde(default)]
    pub germ: GermSpec,
    pub charts: Vec<ChartSpec>,
}

fn default_width() -> f64 {
    0.05
}

fn default_theta() -> f64 {
    0.2
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GermSpec {
    #[default]
    InverseSquare,
    InverseLinear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub index: u32,
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BundleSpec {
    /// Product rank-2 bundle.
    Trivial,
    /// Flat bundle with commuting holonomies `A` (x-loop) and `B` (y-loop).
    Holonomy { a: [[f64; 2]; 2], b: [[f64; 2]; 2] },
    /// Degree-`k` line bundle with a smooth connection.
    Line {
        degree: i64,
        #[serde(default)]
        ripple: f64,
        #[serde(default)]
        gauge: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    /// Natural logarithms of the metric parameters.
    pub log_t: Vec<f64>,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default = "default_fit_tolerance")]
    pub fit_tolerance: f64,
}

fn default_fit_tolerance() -> f64 {
    0.05
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec {
            log_t: vec![2.0, 3.0, 4.0, 5.0, 6.0, 7.0],
            model: ModelSpec::default(),
            fit_tolerance: default_fit_tolerance(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelSpec {
    #[default]
    LogOverT,
    LogOverTWithOffset,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    pub abs: f64,
    pub rel: f64,
    pub max_cells: usize,
}

impl From<ToleranceSpec> for Tolerance {
    fn from(t: ToleranceSpec) -> Self {
        Tolerance { abs: t.abs, rel: t.rel, max_cells: t.max_cells }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Per vertex cell of the global flat integral.
    #[serde(default = "default_euler_tol")]
    pub euler: ToleranceSpec,
    /// Local index integrals.
    #[serde(default = "default_index_tol")]
    pub index: ToleranceSpec,
    /// Base integral of the line-bundle route.
    #[serde(default = "default_general_tol")]
    pub general: ToleranceSpec,
    /// Metric parameter of the global flat integral.
    #[serde(default = "default_euler_t")]
    pub euler_t: f64,
}

fn default_euler_tol() -> ToleranceSpec {
    ToleranceSpec { abs: 1e-10, rel: 1e-8, max_cells: 4000 }
}

fn default_index_tol() -> ToleranceSpec {
    ToleranceSpec { abs: 1e-14, rel: 1e-10, max_cells: 4000 }
}

fn default_general_tol() -> ToleranceSpec {
    ToleranceSpec { abs: 1e-10, rel: 1e-8, max_cells: 20_000 }
}

fn default_euler_t() -> f64 {
    1.0
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            euler: default_euler_tol(),
            index: default_index_tol(),
            general: default_general_tol(),
            euler_t: default_euler_t(),
        }
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| HarnessError::Io { path: path.display().to_string(), error: e })?;
        Self::parse(&text)
    }

    pub fn emit(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    fn validate(&self) -> Result<()> {
        if self.covering.charts.is_empty() {
            return Err(HarnessError::Invalid("scenario has no charts".into()));
        }
        if self.schedule.log_t.iter().any(|l| !(*l > 0.0)) {
            return Err(HarnessError::Invalid("log_t entries must be positive (T > 1)".into()));
        }
        self.t_schedule()?;
        Ok(())
    }

    pub fn is_line(&self) -> bool {
        matches!(self.bundle, BundleSpec::Line { .. })
    }

    pub fn charts(&self) -> Result<Vec<Chart>> {
        self.covering
            .charts
            .iter()
            .map(|c| Chart::new(c.index, c.center, c.radius).map_err(|e| HarnessError::core("chart", e)))
            .collect()
    }

    pub fn covering(&self) -> Result<TransversalCovering> {
        let germ = match self.covering.germ {
            GermSpec::InverseSquare => Germ::InverseSquare,
            GermSpec::InverseLinear => Germ::InverseLinear,
        };
        let profile =
            BumpProfile::with_germ(self.covering.collar_width, germ).map_err(|e| HarnessError::core("bump profile", e))?;
        let options = CoveringOptions { theta_min: self.covering.theta_min, ..CoveringOptions::default() };
        TransversalCovering::new(self.charts()?, profile, options).map_err(|e| HarnessError::core("covering", e))
    }

    /// Flat bundle over the charts of `covering`.
    pub fn flat_bundle(&self, covering: &TransversalCovering) -> Result<FlatBundle> {
        let b = match &self.bundle {
            BundleSpec::Trivial => FlatBundle::trivial(2, covering.charts()),
            BundleSpec::Holonomy { a, b } => {
                FlatBundle::from_holonomy(Matrix::from_rows(*a), Matrix::from_rows(*b), covering.charts())
            }
            BundleSpec::Line { .. } => {
                return Err(HarnessError::Invalid("line-bundle scenario has no flat bundle".into()));
            }
        };
        b.map_err(|e| HarnessError::core("flat bundle", e))
    }

    pub fn line_bundle(&self) -> Result<LineBundle> {
        match self.bundle {
            BundleSpec::Line { degree, ripple, gauge } => Ok(LineBundle { degree, ripple, gauge }),
            _ => Err(HarnessError::Invalid("scenario bundle is not a line bundle".into())),
        }
    }

    pub fn t_schedule(&self) -> Result<TSchedule> {
        let model = match self.schedule.model {
            ModelSpec::LogOverT => ExtrapolationModel::LogOverT,
            ModelSpec::LogOverTWithOffset => ExtrapolationModel::LogOverTWithOffset,
        };
        let ts = self.schedule.log_t.iter().map(|l| l.exp()).collect();
        TSchedule::new(ts, model)
            .and_then(|s| s.with_fit_tolerance(self.schedule.fit_tolerance))
            .map_err(|e| HarnessError::core("schedule", e))
    }

    /// Overrides the absolute and relative tolerances of every integral.
    pub fn override_tolerances(&mut self, abs: Option<f64>, rel: Option<f64>) {
        for t in [&mut self.quadrature.euler, &mut self.quadrature.index, &mut self.quadrature.general] {
            if let Some(a) = abs {
                t.abs = a;
            }
            if let Some(r) = rel {
                t.rel = r;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHEAR: &str = r#"
name = "shear"

[covering]
[[covering.charts]]
index = 1
center = [0.0, 0.0]
radius = 0.4
[[covering.charts]]
index = 2
center = [0.5, 0.0]
radius = 0.4

[bundle]
kind = "holonomy"
a = [[1.0, 1.0], [0.0, 1.0]]
b = [[1.0, 2.0], [0.0, 1.0]]
"#;

    #[test]
    fn defaults_fill_in() {
        let s = Scenario::parse(SHEAR).unwrap();
        assert_eq!(s.seed, 7);
        assert_eq!(s.covering.collar_width, 0.05);
        assert_eq!(s.schedule.log_t.len(), 6);
        assert_eq!(s.covering.germ, GermSpec::InverseSquare);
        assert!(matches!(s.bundle, BundleSpec::Holonomy { .. }));
    }

    #[test]
    fn round_trip() {
        let s = Scenario::parse(SHEAR).unwrap();
        let again = Scenario::parse(&s.emit().unwrap()).unwrap();
        assert_eq!(s, again);
        let line = Scenario {
            bundle: BundleSpec::Line { degree: -2, ripple: 0.3, gauge: 0.1 },
            ..s
        };
        assert_eq!(Scenario::parse(&line.emit().unwrap()).unwrap(), line);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let bad = SHEAR.replace("name = \"shear\"", "name = \"shear\"\ncolor = 3");
        assert!(Scenario::parse(&bad).is_err());
        let bad = SHEAR.replace("kind = \"holonomy\"", "kind = \"holonomy\"\nc = 1");
        assert!(Scenario::parse(&bad).is_err());
        let bad = SHEAR.replace("radius = 0.4\n[[", "radius = 0.4\nradiu = 1\n[[");
        assert!(Scenario::parse(&bad).is_err());
    }

    #[test]
    fn invalid_schedule_rejected() {
        let bad = format!("{SHEAR}\n[schedule]\nlog_t = [3.0, 2.0, 4.0]\n");
        assert!(Scenario::parse(&bad).is_err());
        let bad = format!("{SHEAR}\n[schedule]\nlog_t = [-1.0, 2.0, 4.0]\n");
        assert!(Scenario::parse(&bad).is_err());
    }

    #[test]
    fn overrides_apply_everywhere() {
        let mut s = Scenario::parse(SHEAR).unwrap();
        s.override_tolerances(Some(1e-5), None);
        assert_eq!(s.quadrature.euler.abs, 1e-5);
        assert_eq!(s.quadrature.general.abs, 1e-5);
        assert_eq!(s.quadrature.index.rel, 1e-10);
    }
}
