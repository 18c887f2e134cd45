//! Report types and their JSON / CSV forms.
//!
//! JSON reports carry `schema_version`. Timing is only present when asked
//! for, so that default reports are byte-identical across runs.

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Value {
    pub value: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexReport {
    pub point: [f64; 2],
    /// `β₁ > β₂`
    pub boundary_indices: Vec<u32>,
    /// `α₁ > α₂ > …`
    pub containing_indices: Vec<u32>,
    pub v_radius: f64,
    pub schedule: Vec<f64>,
    pub values: Vec<f64>,
    pub value_errors: Vec<f64>,
    pub nu: Value,
    pub fit_residual: f64,
    pub fit_coefficients: Vec<f64>,
    pub scale_free: Value,
    pub agreement: bool,
}

/// Global integral split by the `V_p` cutoffs at one metric parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assembly {
    pub t: f64,
    /// `∫ φ_p e_T` for each `p ∈ B₊`, in vertex order.
    pub windowed: Vec<f64>,
    /// `∫ (1 − Σ φ_p) e_T`
    pub remainder: Value,
    pub windowed_error: f64,
    /// Unweighted integral at the same `T`.
    pub total: Value,
    pub consistent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineReport {
    pub degree: i64,
    pub euler: Value,
    /// `∫ Pf(R/2π)` by the midpoint rule.
    pub curvature_oracle: f64,
    pub tolerance: f64,
    pub matches: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub euler_seconds: f64,
    pub indices_seconds: f64,
    pub assembly_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub scenario: String,
    /// Global flat integral.
    pub euler: Option<Value>,
    pub vertices: Vec<VertexReport>,
    pub nu_sum: Value,
    /// `|Σ ν_p − euler| ≤ combined error`
    pub matches: bool,
    /// Every vertex agrees with its scale-free value.
    pub agreement: bool,
    pub assembly: Option<Assembly>,
    pub line: Option<LineReport>,
    pub timing: Option<Timing>,
}

impl Report {
    pub fn empty(scenario: &str) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            scenario: scenario.to_string(),
            euler: None,
            vertices: Vec::new(),
            nu_sum: Value { value: 0.0, error: 0.0 },
            matches: true,
            agreement: true,
            assembly: None,
            line: None,
            timing: None,
        }
    }

    /// All flags that decide the exit status.
    pub fn all_match(&self) -> bool {
        self.matches
            && self.agreement
            && self.assembly.as_ref().map_or(true, |a| a.consistent)
            && self.line.as_ref().map_or(true, |l| l.matches)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingRow {
    pub permutation: Vec<u32>,
    pub b_plus: Vec<[f64; 2]>,
    pub nu: Vec<f64>,
    pub errors: Vec<f64>,
    pub sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingStudy {
    pub schema_version: u32,
    pub scenario: String,
    pub rows: Vec<OrderingRow>,
    /// `max Σν − min Σν`
    pub spread: f64,
    pub limit: f64,
    pub invariant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaCurve {
    pub point: [f64; 2],
    pub t: Vec<f64>,
    pub gamma: Vec<f64>,
    pub gamma_double_step: Vec<f64>,
    pub analytic: Vec<f64>,
    /// Slope of `log|γ|` against `log T`.
    pub slope: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    /// Centered on a vertex outside `B₊`.
    Vertex,
    /// Inside a collar-overlap cell, away from its vertex.
    Interior,
    /// Away from all collars.
    Empty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub kind: WindowKind,
    pub center: [f64; 2],
    pub radius: f64,
    pub t: Vec<f64>,
    pub values: Vec<f64>,
}

impl DecayCurve {
    /// `|last / first|`
    pub fn ratio(&self) -> f64 {
        match (self.values.first(), self.values.last()) {
            (Some(f), Some(l)) if *f != 0.0 => (l / f).abs(),
            _ => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloCheck {
    pub point: [f64; 2],
    pub s: [f64; 2],
    pub closed_form: f64,
    pub sampled: f64,
    pub standard_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub gamma: Vec<GammaCurve>,
    pub decay: Vec<DecayCurve>,
    pub monte_carlo: Vec<MonteCarloCheck>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(format!("unknown format {s:?} (json|csv)")),
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

/// `value(T)` table, one row per vertex and schedule entry.
pub fn values_csv(report: &Report) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "y", "beta1", "beta2", "alpha1", "t", "value", "error"])?;
    for v in &report.vertices {
        let alpha1 = v.containing_indices.first().copied().unwrap_or(0);
        for ((t, val), err) in v.schedule.iter().zip(&v.values).zip(&v.value_errors) {
            w.write_record([
                v.point[0].to_string(),
                v.point[1].to_string(),
                v.boundary_indices[0].to_string(),
                v.boundary_indices[1].to_string(),
                alpha1.to_string(),
                t.to_string(),
                val.to_string(),
                err.to_string(),
            ])?;
        }
    }
    finish(w)
}

pub fn ordering_csv(study: &OrderingStudy) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["permutation", "x", "y", "nu", "error", "sum"])?;
    for row in &study.rows {
        let perm = row.permutation.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(" ");
        for ((p, nu), e) in row.b_plus.iter().zip(&row.nu).zip(&row.errors) {
            w.write_record([
                perm.clone(),
                p[0].to_string(),
                p[1].to_string(),
                nu.to_string(),
                e.to_string(),
                row.sum.to_string(),
            ])?;
        }
    }
    finish(w)
}

/// `γ_T` curves followed by decay curves, tagged in the first column.
pub fn diagnostics_csv(d: &Diagnostics) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["series", "x", "y", "t", "value", "aux1", "aux2"])?;
    for g in &d.gamma {
        for i in 0..g.t.len() {
            w.write_record([
                "gamma".to_string(),
                g.point[0].to_string(),
                g.point[1].to_string(),
                g.t[i].to_string(),
                g.gamma[i].to_string(),
                g.gamma_double_step[i].to_string(),
                g.analytic[i].to_string(),
            ])?;
        }
    }
    for c in &d.decay {
        let tag = match c.kind {
            WindowKind::Vertex => "decay-vertex",
            WindowKind::Interior => "decay-interior",
            WindowKind::Empty => "decay-empty",
        };
        for (t, v) in c.t.iter().zip(&c.values) {
            w.write_record([
                tag.to_string(),
                c.center[0].to_string(),
                c.center[1].to_string(),
                t.to_string(),
                v.to_string(),
                c.radius.to_string(),
                String::new(),
            ])?;
        }
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| crate::error::HarnessError::Invalid(e.to_string()))
}

/// Serializes a verification report.
pub fn emit_report(report: &Report, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Json => to_json(report),
        Format::Csv => values_csv(report),
    }
}

pub fn parse_report(bytes: &[u8]) -> Result<Report> {
    Ok(serde_json::from_slice(bytes)?)
}
