//! Local indices `ν_p` at the vertices of `B₊`.
//!
//! Near a vertex `p` with boundary charts `β₁ > β₂` and largest containing
//! chart `α₁`, the localized integrand is
//! `φ Π_i (dρ_{β_i} T^{β_i}/4π ∧ d|y_{β_i}|²) exp(−Σ ρ_{β_i}T^{β_i}|y_{β_i}|² − T^{α₁}|y|²)`
//! in the `α₁` frame. The fiber integral is Gaussian. With
//! `s_i = ρ_{β_i} T^{β_i − α₁}` and `Q̃ = Σ s_i P_i + Id` it equals
//! `(π/2) T^{−2α₁} tr(C) det(Q̃)^{−3/2}`, where `C` is the matrix of the
//! quadratic form `det[2P₁y, 2P₂y]`: the adjugate of `Q̃` is linear in
//! rank 2 and `tr(C adj P_i) = 0`, so only the identity term survives.
//!
//! The `T → ∞` limit is taken two ways: by fitting the finite-`T` values and
//! by the scale-free integral over `s ∈ (0, ∞)²`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::atlas::{wrapped_distance, TorusPoint};
use crate::covering::{smooth_step, smooth_step_derivative, TransversalCovering, VertexRecord};
use crate::error::{Error, Result};
use crate::euler_mq::{flat_integral_weighted, integrate_cell, integrate_cell_fixed, EulerEstimate};
use crate::flat_bundle::FlatBundle;
use crate::gaussian_fiber::{wedge_quadratic, PolyVerticalForm};
use crate::linalg::Matrix;
use crate::quadrature::{integrate_2d_presplit, Rect, Tolerance};

/// Shape of the finite-`T` error used for extrapolation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExtrapolationModel {
    /// `ν + b·log T / T`
    LogOverT,
    /// `ν + b·log T / T + c / T`
    LogOverTWithOffset,
}

impl ExtrapolationModel {
    pub fn parameters(&self) -> usize {
        match self {
            ExtrapolationModel::LogOverT => 2,
            ExtrapolationModel::LogOverTWithOffset => 3,
        }
    }

    fn basis(&self, t: f64) -> Vec<f64> {
        let l = libm::log(t) / t;
        match self {
            ExtrapolationModel::LogOverT => alloc::vec![1.0, l],
            ExtrapolationModel::LogOverTWithOffset => alloc::vec![1.0, l, 1.0 / t],
        }
    }
}

/// Increasing metric parameters `T > 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct TSchedule {
    values: Vec<f64>,
    model: ExtrapolationModel,
    /// Largest accepted fit residual, relative to the largest `|value|`.
    fit_tolerance: f64,
}

impl Default for TSchedule {
    fn default() -> Self {
        TSchedule {
            values: (2..=7).map(|k| libm::exp(k as f64)).collect(),
            model: ExtrapolationModel::LogOverT,
            fit_tolerance: 0.05,
        }
    }
}

impl TSchedule {
    pub fn new(values: Vec<f64>, model: ExtrapolationModel) -> Result<Self> {
        if values.len() < 3 || values.len() < model.parameters() {
            return Err(Error::InvalidSchedule);
        }
        if values.iter().any(|t| !(*t > 1.0 && t.is_finite())) {
            return Err(Error::InvalidSchedule);
        }
        if values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSchedule);
        }
        Ok(TSchedule { values, model, fit_tolerance: 0.05 })
    }

    /// `e^a, e^{a+1}, …, e^b`
    pub fn geometric(first: i32, last: i32, model: ExtrapolationModel) -> Result<Self> {
        Self::new((first..=last).map(|k| libm::exp(k as f64)).collect(), model)
    }

    pub fn with_fit_tolerance(mut self, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::InvalidInput("fit tolerance must be positive"));
        }
        self.fit_tolerance = tol;
        Ok(self)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn model(&self) -> ExtrapolationModel {
        self.model
    }

    pub fn fit_tolerance(&self) -> f64 {
        self.fit_tolerance
    }
}

/// Radial cutoff: 1 up to `plateau`, 0 from `radius` on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cutoff {
    pub radius: f64,
    pub plateau: f64,
}

impl Cutoff {
    pub fn new(radius: f64, plateau: f64) -> Result<Self> {
        if !(plateau > 0.0 && radius > plateau && radius.is_finite()) {
            return Err(Error::InvalidInput("cutoff needs 0 < plateau < radius"));
        }
        Ok(Cutoff { radius, plateau })
    }

    /// Radius `V_p` with plateau `V_p/2`.
    pub fn for_vertex(record: &VertexRecord) -> Self {
        Cutoff { radius: record.v_radius, plateau: 0.5 * record.v_radius }
    }

    pub fn value(&self, distance: f64) -> f64 {
        1.0 - smooth_step((distance - self.plateau) / (self.radius - self.plateau))
    }

    pub fn derivative(&self, distance: f64) -> f64 {
        let s = self.radius - self.plateau;
        -smooth_step_derivative((distance - self.plateau) / s) / s
    }
}

/// Vertex data entering `ν_p`.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexKernel {
    /// `sign det[∇r_{β₁}; ∇r_{β₂}]`
    pub orientation: f64,
    pub beta: [u32; 2],
    pub alpha1: u32,
    pub grams: [Matrix; 2],
    /// `det[2P₁y, 2P₂y] dy¹∧dy²`
    pub form: PolyVerticalForm,
    /// Trace of the matrix of the quadratic form `form`.
    pub trace: f64,
}

impl VertexKernel {
    pub fn new(record: &VertexRecord) -> Result<Self> {
        if !record.in_b_plus {
            return Err(Error::NotInBPlus);
        }
        if record.frames.len() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: record.frames.len() });
        }
        if record.frames[0].dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: record.frames[0].dim() });
        }
        let form = wedge_quadratic(&record.frames)?;
        let c = form.coefficient();
        let trace = c.coefficient(&[2, 0]) + c.coefficient(&[0, 2]);
        Ok(VertexKernel {
            orientation: record.cell.orientation,
            beta: [record.boundary_indices[0], record.boundary_indices[1]],
            alpha1: record.alpha1(),
            grams: [record.frames[0].gram(), record.frames[1].gram()],
            form,
            trace,
        })
    }

    /// `Q̃ = s₁P₁ + s₂P₂ + Id`
    pub fn scaled_metric(&self, s: [f64; 2]) -> Matrix {
        let mut q = Matrix::identity(2);
        q.add_scaled(s[0], &self.grams[0]);
        q.add_scaled(s[1], &self.grams[1]);
        q
    }

    /// `∫ c(y) exp(−yᵀQ̃y) dy = (π/2) tr(C) det(Q̃)^{−3/2}`
    pub fn fiber_integral(&self, s: [f64; 2]) -> f64 {
        if self.trace == 0.0 {
            return 0.0;
        }
        let d = self.scaled_metric(s).det();
        0.5 * PI * self.trace / (d * libm::sqrt(d))
    }

    /// `−σ (1/4π)²`, the normalization and the sign of moving `dρ_{β₂}`
    /// past `d|y_{β₁}|²`, together with the orientation of the collar chart.
    pub fn prefactor(&self) -> f64 {
        -self.orientation / (16.0 * PI * PI)
    }

    fn exponents(&self) -> [f64; 2] {
        [(self.beta[0] - self.alpha1) as f64, (self.beta[1] - self.alpha1) as f64]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NuEstimate {
    pub t: f64,
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
    pub partitions: Vec<Vec<Rect>>,
}

fn check_cutoff(record: &VertexRecord, cutoff: &Cutoff) -> Result<()> {
    if cutoff.radius > record.v_radius * (1.0 + 1e-12) {
        return Err(Error::InvalidInput("cutoff must be supported in V_p"));
    }
    Ok(())
}

/// Density of `ν_p(T)` in collar coordinates. `scale` multiplies the result
/// for the analytic `T`-derivative.
fn nu_density(
    kernel: &VertexKernel,
    covering: &TransversalCovering,
    p: TorusPoint,
    cutoff: &Cutoff,
    t: f64,
    r: [f64; 2],
    x: TorusPoint,
    derivative: bool,
) -> f64 {
    let phi = cutoff.value(wrapped_distance(x, p));
    if phi == 0.0 {
        return 0.0;
    }
    let profile = covering.profile();
    let d1 = profile.drho(r[0]);
    let d2 = profile.drho(r[1]);
    if d1 == 0.0 || d2 == 0.0 {
        return 0.0;
    }
    let e = kernel.exponents();
    let s = [profile.rho(r[0]) * libm::pow(t, e[0]), profile.rho(r[1]) * libm::pow(t, e[1])];
    // T^{β₁+β₂} from the dρ factors and T^{−2α₁} from the fiber
    let power = libm::pow(t, e[0] + e[1]);
    let f = phi * d1 * d2 * power * kernel.fiber_integral(s);
    if !derivative {
        return f;
    }
    let q = kernel.scaled_metric(s);
    let inv = match q.inverse() {
        Ok(m) => m,
        Err(_) => return 0.0,
    };
    let mut dlog_det = 0.0;
    for i in 0..2 {
        dlog_det += e[i] * s[i] * (&inv * &kernel.grams[i]).trace();
    }
    f / t * (e[0] + e[1] - 1.5 * dlog_det)
}

/// `ν_p(T)` for one metric parameter.
pub fn nu_at_t(
    record: &VertexRecord,
    covering: &TransversalCovering,
    t: f64,
    cutoff: &Cutoff,
    tol: Tolerance,
) -> Result<NuEstimate> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput("metric parameter must be positive"));
    }
    let kernel = VertexKernel::new(record)?;
    check_cutoff(record, cutoff)?;
    let p = record.point();
    let width = covering.profile().width();
    let cell = integrate_cell(
        record,
        width,
        cutoff.radius.min(width),
        |r, x| Ok(nu_density(&kernel, covering, p, cutoff, t, r, x, false)),
        tol,
    )?;
    let c = kernel.prefactor();
    Ok(NuEstimate {
        t,
        value: c * cell.value,
        error: c.abs() * cell.error,
        evaluations: cell.evaluations,
        partitions: cell.partitions,
    })
}

/// `ν_p(T)` on the partitions of an earlier adaptive run.
pub fn nu_on_partition(
    record: &VertexRecord,
    covering: &TransversalCovering,
    t: f64,
    cutoff: &Cutoff,
    partitions: &[Vec<Rect>],
) -> Result<f64> {
    let kernel = VertexKernel::new(record)?;
    let p = record.point();
    let width = covering.profile().width();
    let v = integrate_cell_fixed(
        record,
        width,
        cutoff.radius.min(width),
        |r, x| Ok(nu_density(&kernel, covering, p, cutoff, t, r, x, false)),
        partitions,
    )?;
    Ok(kernel.prefactor() * v)
}

/// Least-squares fit of the finite-`T` values.
#[derive(Clone, Debug, PartialEq)]
pub struct Fit {
    pub nu: f64,
    /// Coefficients of the model basis after the constant.
    pub coefficients: Vec<f64>,
    /// Euclidean norm of the residual vector.
    pub residual: f64,
    /// `max(residual, |v_last − v_previous|)`
    pub error: f64,
}

/// Residuals below this are accepted whatever the data size, so that
/// sequences at rounding level do not count as non-convergent.
pub const FIT_ABS_FLOOR: f64 = 1e-12;

/// Fits `values(T)` to the model; fails if the residual exceeds the
/// schedule's tolerance.
pub fn fit_extrapolation(schedule: &TSchedule, values: &[f64]) -> Result<Fit> {
    let ts = schedule.values();
    if ts.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: ts.len(), found: values.len() });
    }
    let model = schedule.model();
    let k = model.parameters();
    let rows: Vec<Vec<f64>> = ts.iter().map(|t| model.basis(*t)).collect();
    // normal equations on column-scaled basis
    let mut scale = alloc::vec![0.0f64; k];
    for row in &rows {
        for j in 0..k {
            scale[j] = scale[j].max(row[j].abs());
        }
    }
    let mut ata = Matrix::zeros(k);
    let mut atb = alloc::vec![0.0; k];
    for (row, v) in rows.iter().zip(values) {
        for i in 0..k {
            atb[i] += row[i] / scale[i] * v;
            for j in 0..k {
                ata[(i, j)] += row[i] / scale[i] * row[j] / scale[j];
            }
        }
    }
    let coef: Vec<f64> = ata.inverse()?.mul_vec(&atb).iter().zip(&scale).map(|(c, s)| c / s).collect();
    let mut squares = 0.0;
    for (row, v) in rows.iter().zip(values) {
        let fit: f64 = row.iter().zip(&coef).map(|(a, c)| a * c).sum();
        squares += (fit - v) * (fit - v);
    }
    let residual = libm::sqrt(squares);
    let size = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tolerance = schedule.fit_tolerance() * size + FIT_ABS_FLOOR;
    if residual > tolerance {
        return Err(Error::FitNotConverged { residual, tolerance });
    }
    let n = values.len();
    let spread = (values[n - 1] - values[n - 2]).abs();
    Ok(Fit { nu: coef[0], coefficients: coef[1..].to_vec(), residual, error: residual.max(spread) })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleFreeOptions {
    /// Half-width of the `log s` box.
    pub extent: f64,
    /// Smaller box for the tail estimate.
    pub tail_extent: f64,
    pub tail_tolerance: f64,
    pub tolerance: Tolerance,
}

impl Default for ScaleFreeOptions {
    fn default() -> Self {
        ScaleFreeOptions {
            extent: 40.0,
            tail_extent: 30.0,
            tail_tolerance: 1e-9,
            tolerance: Tolerance { abs: 1e-14, rel: 1e-10, max_cells: 20_000 },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleFreeEstimate {
    pub value: f64,
    /// Quadrature error plus the tail estimate.
    pub error: f64,
    pub tail: f64,
}

/// `T → ∞` limit as the `T`-free integral
/// `−σ/(16π²) ∫_{(0,∞)²} ∫ c(y) exp(−yᵀQ̃(s)y) dy ds`,
/// evaluated in `log s` coordinates.
pub fn nu_scale_free(record: &VertexRecord, options: ScaleFreeOptions) -> Result<ScaleFreeEstimate> {
    let kernel = VertexKernel::new(record)?;
    if !(options.extent > options.tail_extent && options.tail_extent > 0.0) {
        return Err(Error::InvalidInput("scale-free extents must satisfy 0 < tail < extent"));
    }
    if kernel.trace == 0.0 {
        return Ok(ScaleFreeEstimate { value: 0.0, error: 0.0, tail: 0.0 });
    }
    let integrate = |l: f64| {
        integrate_2d_presplit(
            |v1, v2| {
                let s = [libm::exp(v1), libm::exp(v2)];
                s[0] * s[1] * kernel.fiber_integral(s)
            },
            Rect::new(-l, l, -l, l),
            8,
            options.tolerance,
        )
    };
    let full = integrate(options.extent)?;
    let inner = integrate(options.tail_extent)?;
    let c = kernel.prefactor();
    let tail = c.abs() * (full.value - inner.value).abs();
    if tail > options.tail_tolerance {
        return Err(Error::TailTruncation { estimate: tail, tolerance: options.tail_tolerance });
    }
    Ok(ScaleFreeEstimate { value: c * full.value, error: c.abs() * full.error + tail, tail })
}

/// Identification of a vertex in reports.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexRef {
    pub point: [f64; 2],
    pub boundary_indices: Vec<u32>,
    pub alpha1: u32,
}

impl VertexRef {
    pub fn of(record: &VertexRecord) -> Self {
        VertexRef {
            point: record.point().coords(),
            boundary_indices: record.boundary_indices.clone(),
            alpha1: record.alpha1(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalIndexResult {
    pub vertex: VertexRef,
    pub schedule: Vec<f64>,
    pub values: Vec<f64>,
    pub value_errors: Vec<f64>,
    pub fit: Fit,
    /// Extrapolated `ν_p`.
    pub nu: f64,
    /// Fit error plus the largest quadrature error.
    pub error: f64,
    pub scale_free: f64,
    pub scale_free_error: f64,
    /// `|ν − scale_free| ≤ error + scale_free_error`
    pub agreement: bool,
}

/// Combines finite-`T` values and the scale-free limit.
pub fn assemble_local_index(
    record: &VertexRecord,
    schedule: &TSchedule,
    values: &[NuEstimate],
    scale_free: ScaleFreeEstimate,
) -> Result<LocalIndexResult> {
    let v: Vec<f64> = values.iter().map(|e| e.value).collect();
    let fit = fit_extrapolation(schedule, &v)?;
    let quad = values.iter().fold(0.0f64, |m, e| m.max(e.error));
    let error = fit.error + quad;
    let agreement = (fit.nu - scale_free.value).abs() <= error + scale_free.error;
    Ok(LocalIndexResult {
        vertex: VertexRef::of(record),
        schedule: schedule.values().to_vec(),
        values: v,
        value_errors: values.iter().map(|e| e.error).collect(),
        nu: fit.nu,
        fit,
        error,
        scale_free: scale_free.value,
        scale_free_error: scale_free.error,
        agreement,
    })
}

/// `ν_p` by extrapolation over the schedule, with the scale-free value for
/// comparison.
pub fn nu_extrapolated(
    record: &VertexRecord,
    covering: &TransversalCovering,
    schedule: &TSchedule,
    cutoff: &Cutoff,
    tol: Tolerance,
) -> Result<LocalIndexResult> {
    let mut values = Vec::with_capacity(schedule.values().len());
    for t in schedule.values() {
        values.push(nu_at_t(record, covering, *t, cutoff, tol)?);
    }
    let sf = nu_scale_free(record, ScaleFreeOptions::default())?;
    assemble_local_index(record, schedule, &values, sf)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GammaEstimate {
    pub t: f64,
    pub step: f64,
    /// Centered difference with step `h`.
    pub value: f64,
    /// Centered difference with step `2h`.
    pub value_double_step: f64,
    /// `∂_T` of the integrand, integrated on the same partition.
    pub analytic: f64,
}

/// `γ_T = ∂_T ν_p(T)` by centered differences on a fixed partition.
pub fn gamma_diagnostic(
    record: &VertexRecord,
    covering: &TransversalCovering,
    t: f64,
    cutoff: &Cutoff,
    relative_step: f64,
    tol: Tolerance,
) -> Result<GammaEstimate> {
    let h = relative_step * t;
    if !(relative_step > 0.0) || h <= 1e3 * f64::EPSILON * t || t - 2.0 * h <= 0.0 {
        return Err(Error::StepUnderflow);
    }
    let base = nu_at_t(record, covering, t, cutoff, tol)?;
    let at = |s: f64| nu_on_partition(record, covering, s, cutoff, &base.partitions);
    let value = (at(t + h)? - at(t - h)?) / (2.0 * h);
    let value_double_step = (at(t + 2.0 * h)? - at(t - 2.0 * h)?) / (4.0 * h);
    let kernel = VertexKernel::new(record)?;
    let p = record.point();
    let width = covering.profile().width();
    let analytic = kernel.prefactor()
        * integrate_cell_fixed(
            record,
            width,
            cutoff.radius.min(width),
            |r, x| Ok(nu_density(&kernel, covering, p, cutoff, t, r, x, true)),
            &base.partitions,
        )?;
    Ok(GammaEstimate { t, step: h, value, value_double_step, analytic })
}

/// Least-squares slope of `log|γ|` against `log T`.
pub fn log_log_slope(ts: &[f64], gammas: &[f64]) -> Result<f64> {
    if ts.len() != gammas.len() || ts.len() < 2 {
        return Err(Error::InvalidInput("slope needs at least two matching points"));
    }
    let xs: Vec<f64> = ts.iter().map(|t| libm::log(*t)).collect();
    let ys: Vec<f64> = gammas.iter().map(|g| libm::log(g.abs())).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::InvalidInput("slope of a vanishing sequence"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// Disk on the torus, weighted by a cutoff with plateau at half the radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub center: TorusPoint,
    pub radius: f64,
}

impl Window {
    pub fn cutoff(&self) -> Cutoff {
        Cutoff { radius: self.radius, plateau: 0.5 * self.radius }
    }

    pub fn weight(&self, x: TorusPoint) -> f64 {
        self.cutoff().value(wrapped_distance(x, self.center))
    }
}

/// `(1/2π)² ∫ window · {exp(½ d^H d^V |Y|²_T − |Y|²_T)}^{top}` at one `T`.
pub fn windowed_integral(
    window: &Window,
    covering: &TransversalCovering,
    bundle: &FlatBundle,
    t: f64,
    tol: Tolerance,
) -> Result<EulerEstimate> {
    let w = *window;
    flat_integral_weighted(covering, bundle, t, &move |x| w.weight(x), tol)
}

/// Fails if the closure of `window` meets a `V_p` ball of `B₊`.
pub fn window_avoids_b_plus(window: &Window, covering: &TransversalCovering, bundle: &FlatBundle) -> Result<()> {
    for v in covering.vertices(bundle)?.iter().filter(|v| v.in_b_plus) {
        if wrapped_distance(v.point(), window.center) <= window.radius + v.v_radius {
            return Err(Error::InvalidInput("window meets a V_p ball of B+"));
        }
    }
    Ok(())
}

/// Windowed integrals over the schedule for a window whose closure avoids
/// every `V_p` ball of `B₊`.
pub fn decay_outside_bplus(
    window: &Window,
    covering: &TransversalCovering,
    bundle: &FlatBundle,
    schedule: &TSchedule,
    tol: Tolerance,
) -> Result<Vec<f64>> {
    window_avoids_b_plus(window, covering, bundle)?;
    schedule
        .values()
        .iter()
        .map(|t| windowed_integral(window, covering, bundle, *t, tol).map(|e| e.value))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covering::{default_charts, BumpProfile, CoveringOptions};
    use crate::gaussian_fiber::{fiber_integrate, QuadraticWeight};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn covering() -> TransversalCovering {
        TransversalCovering::new(default_charts(), BumpProfile::new(0.05).unwrap(), CoveringOptions::default()).unwrap()
    }

    fn shear(cov: &TransversalCovering) -> FlatBundle {
        FlatBundle::from_holonomy(
            Matrix::from_rows([[1.0, 1.0], [0.0, 1.0]]),
            Matrix::from_rows([[1.0, 2.0], [0.0, 1.0]]),
            cov.charts(),
        )
        .unwrap()
    }

    fn nontrivial_record(cov: &TransversalCovering, bundle: &FlatBundle) -> VertexRecord {
        cov.vertices(bundle)
            .unwrap()
            .into_iter()
            .find(|r| r.in_b_plus && r.frames.iter().all(|f| f.max_abs_diff(&Matrix::identity(2)) > 0.0))
            .unwrap()
    }

    fn tol() -> Tolerance {
        Tolerance { abs: 1e-14, rel: 1e-10, max_cells: 4000 }
    }

    /// Upper-triangular `B` with `BᵀB = P`.
    fn root(p: &Matrix) -> Matrix {
        p.cholesky().unwrap().transpose()
    }

    #[test]
    fn schedule_validation() {
        let d = TSchedule::default();
        assert_eq!(d.values().len(), 6);
        assert!((d.values()[0] - libm::exp(2.0)).abs() < 1e-12);
        assert!(TSchedule::new(alloc::vec![2.0, 3.0], ExtrapolationModel::LogOverT).is_err());
        assert!(TSchedule::new(alloc::vec![2.0, 2.0, 3.0], ExtrapolationModel::LogOverT).is_err());
        assert!(TSchedule::new(alloc::vec![0.5, 2.0, 3.0], ExtrapolationModel::LogOverT).is_err());
        assert!(TSchedule::new(alloc::vec![2.0, 3.0, 4.0], ExtrapolationModel::LogOverTWithOffset).is_ok());
    }

    #[test]
    fn fit_constant_and_exact_model() {
        let s = TSchedule::default();
        let f = fit_extrapolation(&s, &[0.25; 6]).unwrap();
        assert!((f.nu - 0.25).abs() < 1e-14);
        assert!(f.coefficients[0].abs() < 1e-12);
        let v: Vec<f64> = s.values().iter().map(|t| -0.7 + 3.0 * libm::log(*t) / t).collect();
        let f = fit_extrapolation(&s, &v).unwrap();
        assert!((f.nu + 0.7).abs() < 1e-10);
        assert!((f.coefficients[0] - 3.0).abs() < 1e-8);
        let s3 = TSchedule::geometric(2, 7, ExtrapolationModel::LogOverTWithOffset).unwrap();
        let v: Vec<f64> = s3.values().iter().map(|t| 0.1 + 3.0 * libm::log(*t) / t - 2.0 / t).collect();
        let f = fit_extrapolation(&s3, &v).unwrap();
        assert!((f.nu - 0.1).abs() < 1e-10);
    }

    #[test]
    fn fit_rejects_wild_data() {
        let s = TSchedule::default();
        let v = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        assert!(matches!(fit_extrapolation(&s, &v), Err(Error::FitNotConverged { .. })));
    }

    #[test]
    fn kernel_matches_wick_route() {
        let cov = covering();
        let bundle = shear(&cov);
        let rec = nontrivial_record(&cov, &bundle);
        let k = VertexKernel::new(&rec).unwrap();
        for s in [[0.0, 0.0], [0.3, 2.0], [40.0, 0.01], [1e3, 1e4]] {
            let q = QuadraticWeight::new(k.scaled_metric(s)).unwrap();
            let wick = fiber_integrate(&k.form, &q).unwrap();
            let closed = k.fiber_integral(s);
            assert!((wick - closed).abs() < 1e-9 * closed.abs().max(1e-300), "{s:?}: {wick} vs {closed}");
        }
    }

    #[test]
    fn not_in_b_plus_is_rejected() {
        let cov = covering();
        let bundle = shear(&cov);
        let rec = cov.vertices(&bundle).unwrap().into_iter().find(|r| !r.in_b_plus).unwrap();
        let c = Cutoff { radius: rec.v_radius, plateau: rec.v_radius / 2.0 };
        assert!(matches!(nu_at_t(&rec, &cov, 10.0, &c, tol()), Err(Error::NotInBPlus)));
        assert!(matches!(nu_scale_free(&rec, ScaleFreeOptions::default()), Err(Error::NotInBPlus)));
    }

    #[test]
    fn trivial_bundle_gives_exact_zero() {
        let cov = covering();
        let bundle = FlatBundle::trivial(2, cov.charts()).unwrap();
        for rec in cov.vertices(&bundle).unwrap().iter().filter(|r| r.in_b_plus) {
            let c = Cutoff::for_vertex(rec);
            assert_eq!(nu_at_t(rec, &cov, 20.0, &c, tol()).unwrap().value, 0.0);
            assert_eq!(nu_scale_free(rec, ScaleFreeOptions::default()).unwrap().value, 0.0);
        }
    }

    #[test]
    fn refinement_reproduces_value() {
        let cov = covering();
        let bundle = shear(&cov);
        let rec = nontrivial_record(&cov, &bundle);
        let c = Cutoff::for_vertex(&rec);
        let t = libm::exp(4.0);
        let a = nu_at_t(&rec, &cov, t, &c, Tolerance { abs: 1e-12, rel: 1e-8, max_cells: 4000 }).unwrap();
        let b = nu_at_t(&rec, &cov, t, &c, Tolerance { abs: 1e-15, rel: 1e-12, max_cells: 40_000 }).unwrap();
        assert!(a.value.abs() > 1e-3);
        assert!((a.value - b.value).abs() < 1e-6, "{} vs {}", a.value, b.value);
    }

    #[test]
    fn extrapolation_matches_scale_free() {
        let cov = covering();
        let bundle = shear(&cov);
        let rec = nontrivial_record(&cov, &bundle);
        let c = Cutoff::for_vertex(&rec);
        for model in [ExtrapolationModel::LogOverT, ExtrapolationModel::LogOverTWithOffset] {
            let s = TSchedule::geometric(2, 7, model).unwrap();
            let r = nu_extrapolated(&rec, &cov, &s, &c, tol()).unwrap();
            assert!(r.agreement, "{model:?}: {} ± {} vs {}", r.nu, r.error, r.scale_free);
        }
    }

    #[test]
    fn scale_free_matches_closed_parametrization() {
        // direct quadrature in s on a large box agrees with the log form
        let cov = covering();
        let bundle = shear(&cov);
        let rec = nontrivial_record(&cov, &bundle);
        let k = VertexKernel::new(&rec).unwrap();
        let sf = nu_scale_free(&rec, ScaleFreeOptions::default()).unwrap();
        let mut total = 0.0;
        // ∫_0^∞ f(s) ds = ∫_0^1 f(u/(1−u)) du/(1−u)² per axis
        let est = crate::quadrature::integrate_2d(
            |a, b| {
                let s = [a / (1.0 - a), b / (1.0 - b)];
                let j = 1.0 / ((1.0 - a) * (1.0 - a) * (1.0 - b) * (1.0 - b));
                k.fiber_integral(s) * j
            },
            Rect::new(0.0, 1.0, 0.0, 1.0),
            Tolerance { abs: 1e-13, rel: 1e-10, max_cells: 40_000 },
        )
        .unwrap();
        total += k.prefactor() * est.value;
        assert!((total - sf.value).abs() < 1e-8, "{total} vs {}", sf.value);
    }

    #[test]
    fn balanced_frames_vanish() {
        // a₁P₁ + a₂P₂ = Id forces tr(P₁J'P₂) = 0
        let cov = covering();
        let bundle = shear(&cov);
        let mut rec = nontrivial_record(&cov, &bundle);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let m = Matrix::from_rows([[rng.gen_range(0.5..1.5), rng.gen_range(-0.5..0.5)], [0.0, rng.gen_range(0.5..1.5)]]);
            let p1 = m.gram();
            let a1 = 0.5 / p1.norm_inf();
            let a2 = rng.gen_range(0.2..3.0);
            let mut p2 = Matrix::identity(2);
            p2.add_scaled(-a1, &p1);
            let p2 = p2.scale(1.0 / a2);
            rec.frames = alloc::vec![root(&p1), root(&p2)];
            let c = Cutoff::for_vertex(&rec);
            let v = nu_at_t(&rec, &cov, libm::exp(5.0), &c, tol()).unwrap();
            assert!(v.value.abs() < 1e-8, "{}", v.value);
            let sf = nu_scale_free(&rec, ScaleFreeOptions::default()).unwrap();
            assert!(sf.value.abs() < 1e-8, "{}", sf.value);
        }
    }

    #[test]
    fn cutoff_shape() {
        let c = Cutoff::new(0.06, 0.03).unwrap();
        assert_eq!(c.value(0.0), 1.0);
        assert_eq!(c.value(0.03), 1.0);
        assert_eq!(c.value(0.06), 0.0);
        assert!(c.value(0.045) > 0.0 && c.value(0.045) < 1.0);
        assert!(Cutoff::new(0.03, 0.06).is_err());
        let h = 1e-7;
        let fd = (c.value(0.04 + h) - c.value(0.04 - h)) / (2.0 * h);
        assert!((fd - c.derivative(0.04)).abs() < 1e-5);
    }

    #[test]
    fn cutoff_must_fit_in_v_ball() {
        let cov = covering();
        let bundle = shear(&cov);
        let rec = nontrivial_record(&cov, &bundle);
        let c = Cutoff::new(rec.v_radius * 2.0, rec.v_radius).unwrap();
        assert!(nu_at_t(&rec, &cov, 10.0, &c, tol()).is_err());
    }

    #[test]
    fn gamma_difference_matches_analytic_derivative() {
        let cov = covering();
        let bundle = shear(&cov);
        let rec = nontrivial_record(&cov, &bundle);
        let c = Cutoff::for_vertex(&rec);
        let g = gamma_diagnostic(&rec, &cov, libm::exp(4.0), &c, 1e-3, tol()).unwrap();
        assert!((g.value - g.analytic).abs() < 1e-5 * g.analytic.abs(), "{g:?}");
        assert!((g.value - g.value_double_step).abs() < 0.05 * g.value.abs());
        assert!(matches!(gamma_diagnostic(&rec, &cov, 10.0, &c, 0.0, tol()), Err(Error::StepUnderflow)));
        assert!(matches!(gamma_diagnostic(&rec, &cov, 10.0, &c, 1e-17, tol()), Err(Error::StepUnderflow)));
    }

    #[test]
    fn slope_of_power_law() {
        let ts = [2.0, 5.0, 11.0, 40.0];
        let g: Vec<f64> = ts.iter().map(|t| -3.0 / (t * t)).collect();
        assert!((log_log_slope(&ts, &g).unwrap() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn window_far_from_collars_is_zero() {
        let cov = covering();
        let bundle = shear(&cov);
        // center of a disk: deep inside chart 1, no collar nearby
        let w = Window { center: TorusPoint::new(0.0, 0.0), radius: 0.05 };
        let s = TSchedule::default();
        let v = decay_outside_bplus(&w, &cov, &bundle, &s, tol()).unwrap();
        assert!(v.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn window_overlapping_b_plus_is_rejected() {
        let cov = covering();
        let bundle = shear(&cov);
        let rec = nontrivial_record(&cov, &bundle);
        let w = Window { center: rec.point(), radius: 0.01 };
        assert!(decay_outside_bplus(&w, &cov, &bundle, &TSchedule::default(), tol()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn kernel_scaling_identity(a in 0.01f64..50.0, b in 0.01f64..50.0, lam in 0.5f64..4.0) {
            // scaling Q̃ by λ scales the Gaussian integral by λ^{-2}
            let cov = covering();
            let bundle = shear(&cov);
            let rec = nontrivial_record(&cov, &bundle);
            let k = VertexKernel::new(&rec).unwrap();
            let q = QuadraticWeight::new(k.scaled_metric([a, b])).unwrap();
            let qs = q.scaled(lam).unwrap();
            let i = fiber_integrate(&k.form, &q).unwrap();
            let is = fiber_integrate(&k.form, &qs).unwrap();
            prop_assert!((i - lam * lam * is).abs() < 1e-10 * i.abs().max(1e-12));
        }

        #[test]
        fn swapping_legs_flips_kernel_only(seed in any::<u64>()) {
            // exchanging the two boundary legs flips the fiber form and the
            // collar orientation together
            let cov = covering();
            let bundle = shear(&cov);
            let rec = nontrivial_record(&cov, &bundle);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = [rng.gen_range(0.0..5.0), rng.gen_range(0.0..5.0)];
            let k = VertexKernel::new(&rec).unwrap();
            let mut swapped = rec.clone();
            swapped.frames.swap(0, 1);
            let ks = VertexKernel::new(&swapped).unwrap();
            let sw = [s[1], s[0]];
            prop_assert!((k.fiber_integral(s) + ks.fiber_integral(sw)).abs() < 1e-12 * k.fiber_integral(s).abs().max(1e-12));
        }
    }
}
