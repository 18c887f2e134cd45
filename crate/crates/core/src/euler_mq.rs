//! Superconnection curvature and the global Euler integrals.
//!
//! For a flat bundle the fiber metric `|Y|²_T = Σ_α ρ_α T^α |y_α|²` glues the
//! flat trivializations. In the frame of a reference chart, `y_α = B_α y`,
//! so `|Y|²_T = yᵀQy` with `Q = Σ_α ρ_α T^α B_αᵀB_α`. The top-degree part of
//! `exp(½ d^H d^V |Y|² − |Y|²)` is a sum over pairs of charts; after the
//! Gaussian fiber integral only the collar overlaps contribute, and those are
//! integrated cell by cell in normal coordinates `(r_{β₁}, r_{β₂})`.
//!
//! For a bundle with a metric connection the curvature of `∇ + c(Z)` is built
//! as a graded element with endomorphism coefficients and exponentiated. The
//! total space has dimension `2·rank`, so only the top-degree part of the
//! Euler form survives the integral and the `Â` correction of the class never
//! enters.

use alloc::sync::Arc;
use alloc::vec::Vec;
use alloc::string::String;
use alloc::{format, vec};
use core::f64::consts::PI;

use crate::atlas::{normal_coordinate, TorusPoint};
use crate::covering::{CellPiece, TransversalCovering, VertexRecord};
use crate::error::{Error, Result};
use crate::flat_bundle::{FlatBundle, LineBundle};
use crate::gaussian_fiber::{gauss_hermite, quadratic_moment, QuadraticWeight};
use crate::graded_forms::{
    exp_truncated, exterior_operator, interior_operator, supertrace, GeneratorSet, GradedElement,
};
use crate::linalg::Matrix;
use crate::quadrature::{integrate_2d_presplit, pairwise_sum, Rect, Tolerance};

/// One chart's share of the glued fiber metric at a base point.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartTerm {
    /// Position of the chart in the covering.
    pub position: usize,
    pub index: u32,
    /// `ρ_α(x) T^α`
    pub weight: f64,
    /// `T^α ∇ρ_α(x)`
    pub dweight: [f64; 2],
    /// `P_α = B_αᵀB_α` in the reference frame.
    pub gram: Matrix,
}

/// Fiber-metric data of the flat superconnection at one base point.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperconnectionData {
    pub x: TorusPoint,
    /// Chart position whose frame carries the fiber coordinates.
    pub reference: usize,
    pub terms: Vec<ChartTerm>,
}

impl SuperconnectionData {
    pub fn new(x: TorusPoint, reference: usize, terms: Vec<ChartTerm>) -> Result<Self> {
        let rank = terms.first().map(|t| t.gram.dim()).ok_or(Error::InvalidInput("no chart terms"))?;
        if let Some(t) = terms.iter().find(|t| t.gram.dim() != rank) {
            return Err(Error::DimensionMismatch { expected: rank, found: t.gram.dim() });
        }
        if terms.iter().any(|t| !(t.weight >= 0.0)) {
            return Err(Error::InvalidInput("metric weights must be nonnegative"));
        }
        if !terms.iter().any(|t| t.weight > 0.0) {
            return Err(Error::InvalidInput("no chart has positive weight at this point"));
        }
        Ok(SuperconnectionData { x, reference, terms })
    }

    /// Data of the metric `g_T` of a flat bundle, in the frame of the deepest
    /// chart containing `x`.
    pub fn flat(covering: &TransversalCovering, bundle: &FlatBundle, t: f64, x: TorusPoint) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidInput("metric parameter must be positive"));
        }
        let charts = covering.charts();
        let depths: Vec<f64> = charts.iter().map(|c| normal_coordinate(c, x)).collect();
        let mut reference = None;
        for (k, d) in depths.iter().enumerate() {
            if *d > 0.0 && reference.map_or(true, |r: usize| *d > depths[r]) {
                reference = Some(k);
            }
        }
        let reference = reference.ok_or_else(|| {
            let [a, b] = x.coords();
            Error::CoverageGap { x: a, y: b }
        })?;
        let mut terms = Vec::new();
        for (k, c) in charts.iter().enumerate() {
            if depths[k] <= 0.0 {
                continue;
            }
            let scale = libm::pow(t, c.index as f64);
            let frame = bundle.frame_matrix(c, &charts[reference], x)?;
            let d = covering.drho(k, x);
            terms.push(ChartTerm {
                position: k,
                index: c.index,
                weight: scale * covering.profile().rho(depths[k]),
                dweight: [scale * d[0], scale * d[1]],
                gram: frame.gram(),
            });
        }
        Self::new(x, reference, terms)
    }

    pub fn rank(&self) -> usize {
        self.terms[0].gram.dim()
    }

    pub fn term(&self, position: usize) -> Option<&ChartTerm> {
        self.terms.iter().find(|t| t.position == position)
    }

    /// `Q = Σ_α ρ_α T^α P_α`
    pub fn metric(&self) -> Matrix {
        let mut q = Matrix::zeros(self.rank());
        for t in &self.terms {
            q.add_scaled(t.weight, &t.gram);
        }
        q
    }

    /// `∂_j Q` for `j = 1, 2`.
    pub fn metric_derivative(&self) -> [Matrix; 2] {
        let mut out = [Matrix::zeros(self.rank()), Matrix::zeros(self.rank())];
        for t in &self.terms {
            for (j, m) in out.iter_mut().enumerate() {
                if t.dweight[j] != 0.0 {
                    m.add_scaled(t.dweight[j], &t.gram);
                }
            }
        }
        out
    }

    pub fn gaussian(&self) -> Result<QuadraticWeight> {
        QuadraticWeight::new(self.metric())
    }
}

/// `dx¹, dx²` followed by `dy¹ … dy^rank`.
pub fn total_space_generators(rank: usize) -> Arc<GeneratorSet> {
    let h = vec![String::from("dx1"), String::from("dx2")];
    let v = (1..=rank).map(|k| format!("dy{k}")).collect();
    Arc::new(GeneratorSet::new(h, v).expect("valid generator names"))
}

/// Which curvature of the flat superconnection to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlatCurvature {
    /// All terms, including `Σ ρ_α T^α dy^k ∧ dŷ^k`.
    Full,
    /// Without the `dy ∧ dŷ` term, which cannot reach the top degree of the
    /// supertrace.
    Reduced,
}

fn flat_curvature(data: &SuperconnectionData, y: &[f64], variant: FlatCurvature) -> Result<GradedElement> {
    let rank = data.rank();
    if y.len() != rank {
        return Err(Error::DimensionMismatch { expected: rank, found: y.len() });
    }
    let gens = total_space_generators(rank);
    let dim = gens.endo_dim();
    let q = data.metric();
    let dq = data.metric_derivative();
    let eps: Vec<Matrix> = (0..rank).map(|l| exterior_operator(l, rank)).collect();
    let iota: Vec<Matrix> = (0..rank).map(|l| interior_operator(l, rank)).collect();
    let mut total = GradedElement::operator(&gens, Matrix::identity(dim).scale(-q.quadratic_form(y)))?;
    for (j, dqj) in dq.iter().enumerate() {
        let v = dqj.mul_vec(y);
        let mut m = Matrix::zeros(dim);
        for l in 0..rank {
            if v[l] != 0.0 {
                m.add_scaled(v[l], &eps[l]);
            }
        }
        total = total.add(&GradedElement::from_matrix_term(&gens, 1 << gens.dx(j), m)?)?;
    }
    for k in 0..rank {
        let mut m = iota[k].scale(-1.0);
        if variant == FlatCurvature::Full {
            for l in 0..rank {
                if q[(l, k)] != 0.0 {
                    m.add_scaled(q[(l, k)], &eps[l]);
                }
            }
        }
        total = total.add(&GradedElement::from_matrix_term(&gens, 1 << gens.dy(k), m)?)?;
    }
    Ok(total)
}

/// Curvature `A_T²` of the flat superconnection at `(x, y)`:
/// `Σ_j dx^j (∂_jQ y)_l ε_l + Σ_k dy^k (Σ_l Q_{lk} ε_l − ι_k) − yᵀQy`.
pub fn curvature_flat(data: &SuperconnectionData, y: &[f64]) -> Result<GradedElement> {
    flat_curvature(data, y, FlatCurvature::Full)
}

/// `A_T²` without the `dy ∧ dŷ` term.
pub fn curvature_flat_reduced(data: &SuperconnectionData, y: &[f64]) -> Result<GradedElement> {
    flat_curvature(data, y, FlatCurvature::Reduced)
}

/// Top coefficient of `str exp(A_T²)`.
pub fn top_form_flat_supertrace(data: &SuperconnectionData, y: &[f64], variant: FlatCurvature) -> Result<f64> {
    let a = flat_curvature(data, y, variant)?;
    Ok(supertrace(&exp_truncated(&a)?)?.top_coefficient())
}

/// Top coefficient of the scalar form `exp(Σ_{j,l} (∂_jQ y)_l dx^j dy^l − yᵀQy)`.
pub fn top_form_flat_exponential(data: &SuperconnectionData, y: &[f64]) -> Result<f64> {
    let rank = data.rank();
    if y.len() != rank {
        return Err(Error::DimensionMismatch { expected: rank, found: y.len() });
    }
    let gens = total_space_generators(rank);
    let mut a = GradedElement::scalar(&gens, -data.metric().quadratic_form(y));
    for (j, dqj) in data.metric_derivative().iter().enumerate() {
        let v = dqj.mul_vec(y);
        for (l, c) in v.iter().enumerate() {
            if *c != 0.0 {
                a = a.add(&GradedElement::monomial(&gens, &[gens.dx(j), gens.dy(l)], *c))?;
            }
        }
    }
    Ok(exp_truncated(&a)?.top_coefficient())
}

fn det2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Top coefficient as a sum over pairs of charts:
/// `−Σ_{α<β} det[T^α∇ρ_α; T^β∇ρ_β] · det[P_α y, P_β y] · exp(−yᵀQy)`.
pub fn top_form_flat(data: &SuperconnectionData, y: &[f64]) -> Result<f64> {
    if data.rank() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: data.rank() });
    }
    if y.len() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: y.len() });
    }
    let vecs: Vec<[f64; 2]> = data
        .terms
        .iter()
        .map(|t| {
            let v = t.gram.mul_vec(y);
            [v[0], v[1]]
        })
        .collect();
    let mut s = 0.0;
    for a in 0..data.terms.len() {
        for b in (a + 1)..data.terms.len() {
            let h = det2(data.terms[a].dweight, data.terms[b].dweight);
            if h != 0.0 {
                s += h * det2(vecs[a], vecs[b]);
            }
        }
    }
    if s == 0.0 {
        return Ok(0.0);
    }
    Ok(-s * libm::exp(-data.metric().quadratic_form(y)))
}

/// `J' = [[0, 1], [−1, 0]]`, so that `det[u, v] = uᵀJ'v`.
fn wedge_pairing() -> Matrix {
    Matrix::from_rows([[0.0, 1.0], [-1.0, 0.0]])
}

/// `∫ det[P_a y, P_b y] exp(−yᵀQy) dy` by the general Gaussian moment.
pub fn pair_kernel(p_a: &Matrix, p_b: &Matrix, q: &QuadraticWeight) -> Result<f64> {
    if p_a.dim() != 2 || p_b.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: p_a.dim().max(p_b.dim()) });
    }
    let m = &(p_a * &wedge_pairing()) * p_b;
    quadratic_moment(&m, q)
}

/// `adj(P) = [[d, −b], [−c, a]]`
fn adjugate2(p: &Matrix) -> Matrix {
    Matrix::from_rows([[p[(1, 1)], -p[(0, 1)]], [-p[(1, 0)], p[(0, 0)]]])
}

/// Pair kernel for `Q = Σ_γ w_γ P_γ` without cancellation.
///
/// In rank 2, `Q⁻¹ = adj(Q)/det Q` with `adj` linear, and
/// `tr(P_a J' P_b adj(P_a)) = tr(P_a J' P_b adj(P_b)) = 0`. Dropping those two
/// terms exactly gives
/// `K_ab = (π/2) Σ_{γ≠a,b} w_γ tr(P_a J' P_b adj P_γ) / (det Q)^{3/2}`,
/// which stays accurate when chart `a` or `b` dominates `Q`.
pub fn pair_kernel_in(data: &SuperconnectionData, a: usize, b: usize) -> Result<f64> {
    if data.rank() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: data.rank() });
    }
    let ta = &data.terms[a];
    let tb = &data.terms[b];
    let m = &(&ta.gram * &wedge_pairing()) * &tb.gram;
    let mut num = 0.0;
    for (g, t) in data.terms.iter().enumerate() {
        if g == a || g == b || t.weight == 0.0 {
            continue;
        }
        num += t.weight * (&m * &adjugate2(&t.gram)).trace();
    }
    if num == 0.0 {
        return Ok(0.0);
    }
    let det = data.metric().det();
    if !(det > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(0.5 * PI * num / (det * libm::sqrt(det)))
}

/// `∫ top_form_flat(x, y) dy`, a density on the base.
pub fn fiber_reduced_flat(data: &SuperconnectionData) -> Result<f64> {
    if data.rank() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: data.rank() });
    }
    let mut s = 0.0;
    for a in 0..data.terms.len() {
        for b in (a + 1)..data.terms.len() {
            let h = det2(data.terms[a].dweight, data.terms[b].dweight);
            if h != 0.0 {
                s += h * pair_kernel_in(data, a, b)?;
            }
        }
    }
    Ok(-s)
}

/// Flat Euler integrand on the total space together with its fiber reduction.
#[derive(Clone, Copy, Debug)]
pub struct FlatIntegrand<'a> {
    pub covering: &'a TransversalCovering,
    pub bundle: &'a FlatBundle,
    pub t: f64,
}

impl<'a> FlatIntegrand<'a> {
    pub fn new(covering: &'a TransversalCovering, bundle: &'a FlatBundle, t: f64) -> Result<Self> {
        if bundle.rank() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: bundle.rank() });
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidInput("metric parameter must be positive"));
        }
        Ok(FlatIntegrand { covering, bundle, t })
    }

    pub fn data(&self, x: TorusPoint) -> Result<SuperconnectionData> {
        SuperconnectionData::flat(self.covering, self.bundle, self.t, x)
    }

    pub fn top(&self, x: TorusPoint, y: &[f64]) -> Result<f64> {
        top_form_flat(&self.data(x)?, y)
    }

    pub fn reduced(&self, x: TorusPoint) -> Result<f64> {
        fiber_reduced_flat(&self.data(x)?)
    }

    /// Fiber-reduced pair term of the vertex's two boundary charts, as a
    /// density in the collar coordinates `(r_{β₁}, r_{β₂})`, including the
    /// `(1/2π)²` normalization.
    pub fn cell_density(&self, record: &VertexRecord, r: [f64; 2], x: TorusPoint) -> Result<f64> {
        let profile = self.covering.profile();
        let d1 = profile.drho(r[0]);
        let d2 = profile.drho(r[1]);
        if d1 == 0.0 || d2 == 0.0 {
            return Ok(0.0);
        }
        let data = self.data(x)?;
        let find = |pos: usize| data.terms.iter().position(|t| t.position == pos);
        let (a, b) = match (find(record.boundary[0]), find(record.boundary[1])) {
            (Some(a), Some(b)) => (a, b),
            _ => return Ok(0.0),
        };
        let k = pair_kernel_in(&data, a, b)?;
        let scale = libm::pow(self.t, (data.terms[a].index + data.terms[b].index) as f64);
        Ok(-record.cell.orientation * scale * d1 * d2 * k / (4.0 * PI * PI))
    }
}

/// Parameter rectangles of a vertex cell with both normal coordinates
/// limited to `rmax`.
pub fn cell_domains(record: &VertexRecord, width: f64, rmax: f64) -> Vec<(CellPiece, Rect)> {
    let mut out = Vec::new();
    for piece in record.cell.pieces() {
        let [u0, u1, v0, v1] = piece.domain(width);
        let u1 = u1.min(rmax);
        if !(u1 > u0) {
            continue;
        }
        let v1 = match piece.wedge {
            None => v1.min(rmax),
            Some(_) => v1,
        };
        if !(v1 > v0) {
            continue;
        }
        out.push((piece, Rect::new(u0, u1, v0, v1)));
    }
    out
}

/// Integral over one vertex cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellIntegral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
    /// Final partition of each parameter rectangle.
    pub partitions: Vec<Vec<Rect>>,
}

/// Initial grid of each cell piece before adaptive refinement.
pub const CELL_PRESPLIT: usize = 4;

/// `∫ f(r, x(r)) dr` over the cell of `record`, with `r` limited to `rmax`.
pub fn integrate_cell(
    record: &VertexRecord,
    width: f64,
    rmax: f64,
    mut f: impl FnMut([f64; 2], TorusPoint) -> Result<f64>,
    tol: Tolerance,
) -> Result<CellIntegral> {
    let mut values = Vec::new();
    let mut error = 0.0;
    let mut evaluations = 0;
    let mut partitions = Vec::new();
    for (piece, rect) in cell_domains(record, width, rmax) {
        let mut failure = None;
        let est = integrate_2d_presplit(
            |u, v| {
                if failure.is_some() {
                    return 0.0;
                }
                let (r, jac) = piece.map(u, v);
                if jac == 0.0 {
                    return 0.0;
                }
                let q = match record.cell.point(r) {
                    Some(q) => q,
                    None => return 0.0,
                };
                match f(r, TorusPoint::new(q[0], q[1])) {
                    Ok(v) => jac * v,
                    Err(e) => {
                        failure = Some(e);
                        0.0
                    }
                }
            },
            rect,
            CELL_PRESPLIT,
            tol,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let est = est?;
        values.push(est.value);
        error += est.error;
        evaluations += est.evaluations;
        partitions.push(est.partition);
    }
    Ok(CellIntegral { value: pairwise_sum(&values), error, evaluations, partitions })
}

/// Re-evaluates a cell integral on the partitions of an earlier run.
pub fn integrate_cell_fixed(
    record: &VertexRecord,
    width: f64,
    rmax: f64,
    mut f: impl FnMut([f64; 2], TorusPoint) -> Result<f64>,
    partitions: &[Vec<Rect>],
) -> Result<f64> {
    let domains = cell_domains(record, width, rmax);
    if domains.len() != partitions.len() {
        return Err(Error::DimensionMismatch { expected: domains.len(), found: partitions.len() });
    }
    let mut values = Vec::new();
    for ((piece, _), partition) in domains.iter().zip(partitions) {
        let mut failure = None;
        let est = crate::quadrature::integrate_2d_fixed(
            |u, v| {
                if failure.is_some() {
                    return 0.0;
                }
                let (r, jac) = piece.map(u, v);
                if jac == 0.0 {
                    return 0.0;
                }
                let q = match record.cell.point(r) {
                    Some(q) => q,
                    None => return 0.0,
                };
                match f(r, TorusPoint::new(q[0], q[1])) {
                    Ok(v) => jac * v,
                    Err(e) => {
                        failure = Some(e);
                        0.0
                    }
                }
            },
            partition,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        values.push(est.value);
    }
    Ok(pairwise_sum(&values))
}

/// One vertex cell of the flat Euler integral, weighted by `weight(x)`.
pub fn flat_cell_integral(
    integrand: &FlatIntegrand,
    record: &VertexRecord,
    weight: &dyn Fn(TorusPoint) -> f64,
    tol: Tolerance,
) -> Result<CellIntegral> {
    let width = integrand.covering.profile().width();
    integrate_cell(
        record,
        width,
        width,
        |r, x| {
            let w = weight(x);
            if w == 0.0 {
                return Ok(0.0);
            }
            Ok(w * integrand.cell_density(record, r, x)?)
        },
        tol,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct EulerEstimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
    /// Per-vertex-cell contributions in covering order (flat case only).
    pub cells: Vec<f64>,
}

/// Sums per-cell results in a fixed order.
pub fn assemble_cells(cells: &[CellIntegral]) -> EulerEstimate {
    let values: Vec<f64> = cells.iter().map(|c| c.value).collect();
    let errors: Vec<f64> = cells.iter().map(|c| c.error).collect();
    EulerEstimate {
        value: pairwise_sum(&values),
        error: pairwise_sum(&errors),
        evaluations: cells.iter().map(|c| c.evaluations).sum(),
        cells: values,
    }
}

/// `(1/2π)² ∫ weight · {exp(½ d^H d^V |Y|²_T − |Y|²_T)}^{top}` over the
/// total space.
pub fn flat_integral_weighted(
    covering: &TransversalCovering,
    bundle: &FlatBundle,
    t: f64,
    weight: &dyn Fn(TorusPoint) -> f64,
    tol: Tolerance,
) -> Result<EulerEstimate> {
    let integrand = FlatIntegrand::new(covering, bundle, t)?;
    let records = covering.vertex_layout();
    let mut cells = Vec::with_capacity(records.len());
    for record in &records {
        cells.push(flat_cell_integral(&integrand, record, weight, tol)?);
    }
    Ok(assemble_cells(&cells))
}

/// Euler number of a flat rank-2 bundle from the metric `g_T`.
pub fn euler_total_flat(
    covering: &TransversalCovering,
    bundle: &FlatBundle,
    t: f64,
    tol: Tolerance,
) -> Result<EulerEstimate> {
    flat_integral_weighted(covering, bundle, t, &|_| 1.0, tol)
}

/// Metric connection on an oriented rank-2 bundle over the torus, given on
/// the universal cover in an orthonormal frame.
pub trait GeneralBundle {
    fn rank(&self) -> usize;
    /// `ω_j` with `∇ = d + Σ_j ω_j dx^j`.
    fn connection(&self, x: [f64; 2]) -> [Matrix; 2];
    /// Coefficient of `dx¹ ∧ dx²` in the curvature.
    fn curvature(&self, x: [f64; 2]) -> Matrix;
}

impl GeneralBundle for LineBundle {
    fn rank(&self) -> usize {
        LineBundle::rank(self)
    }

    fn connection(&self, x: [f64; 2]) -> [Matrix; 2] {
        LineBundle::connection(self, x)
    }

    fn curvature(&self, x: [f64; 2]) -> Matrix {
        LineBundle::curvature(self, x)
    }
}

fn general_nilpotent(bundle: &dyn GeneralBundle, x: [f64; 2], y: &[f64]) -> Result<GradedElement> {
    let rank = bundle.rank();
    if rank != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: rank });
    }
    if y.len() != rank {
        return Err(Error::DimensionMismatch { expected: rank, found: y.len() });
    }
    let gens = total_space_generators(rank);
    let dim = gens.endo_dim();
    let eps: Vec<Matrix> = (0..rank).map(|l| exterior_operator(l, rank)).collect();
    let iota: Vec<Matrix> = (0..rank).map(|l| interior_operator(l, rank)).collect();
    let clifford = |k: usize| &eps[k] - &iota[k];
    // curvature acting on Λ(E*) as a derivation
    let dual = bundle.curvature(x).transpose().scale(-1.0);
    let mut r_lambda = Matrix::zeros(dim);
    for k in 0..rank {
        for l in 0..rank {
            if dual[(k, l)] != 0.0 {
                r_lambda.add_scaled(dual[(k, l)], &(&eps[k] * &iota[l]));
            }
        }
    }
    let mut a = GradedElement::from_matrix_term(&gens, (1 << gens.dx(0)) | (1 << gens.dx(1)), r_lambda)?;
    // [∇, c(Z)] = Σ_k dy^k c(e_k) + Σ_j dx^j c(ω_j y)
    for k in 0..rank {
        a = a.add(&GradedElement::from_matrix_term(&gens, 1 << gens.dy(k), clifford(k))?)?;
    }
    for (j, w) in bundle.connection(x).iter().enumerate() {
        let v = w.mul_vec(y);
        let mut m = Matrix::zeros(dim);
        for k in 0..rank {
            if v[k] != 0.0 {
                m.add_scaled(v[k], &clifford(k));
            }
        }
        a = a.add(&GradedElement::from_matrix_term(&gens, 1 << gens.dx(j), m)?)?;
    }
    Ok(a)
}

/// `A² = π*R + [π*∇, c(Z)] − |Z|²` at `(x, y)`.
pub fn curvature_general(bundle: &dyn GeneralBundle, x: [f64; 2], y: &[f64]) -> Result<GradedElement> {
    let a = general_nilpotent(bundle, x, y)?;
    let gens = a.generators().clone();
    let s: f64 = y.iter().map(|v| v * v).sum();
    a.add(&GradedElement::operator(&gens, Matrix::identity(gens.endo_dim()).scale(-s))?)
}

/// Top coefficient of `str exp(A²)` at `(x, y)`.
pub fn top_form_general(bundle: &dyn GeneralBundle, x: [f64; 2], y: &[f64]) -> Result<f64> {
    Ok(supertrace(&exp_truncated(&curvature_general(bundle, x, y)?)?)?.top_coefficient())
}

/// Gauss–Hermite nodes per fiber direction. The top coefficient is
/// `exp(−|y|²)` times a polynomial of degree at most 2 in `y`, so three
/// nodes are exact.
pub const HERMITE_NODES: usize = 3;

/// `∫ top_form_general(x, y) dy`.
pub fn fiber_reduced_general(bundle: &dyn GeneralBundle, x: [f64; 2]) -> Result<f64> {
    let (nodes, weights) = gauss_hermite(HERMITE_NODES);
    let mut s = 0.0;
    for (y1, w1) in nodes.iter().zip(&weights) {
        for (y2, w2) in nodes.iter().zip(&weights) {
            // the scalar −|y|² factors out as the Hermite weight
            let a = general_nilpotent(bundle, x, &[*y1, *y2])?;
            s += w1 * w2 * supertrace(&exp_truncated(&a)?)?.top_coefficient();
        }
    }
    Ok(s)
}

/// `(1/2π)² ∫ str exp(A²)` over the total space.
pub fn euler_total_general(bundle: &dyn GeneralBundle, tol: Tolerance) -> Result<EulerEstimate> {
    let mut failure = None;
    let est = integrate_2d_presplit(
        |u, v| {
            if failure.is_some() {
                return 0.0;
            }
            match fiber_reduced_general(bundle, [u, v]) {
                Ok(s) => s,
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            }
        },
        Rect::new(0.0, 1.0, 0.0, 1.0),
        2,
        tol,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let est = est?;
    let c = 1.0 / (4.0 * PI * PI);
    Ok(EulerEstimate { value: c * est.value, error: c * est.error, evaluations: est.evaluations, cells: Vec::new() })
}
