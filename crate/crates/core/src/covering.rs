//! Ordered disk coverings, bump functions, vertices and the subset `B₊`.

use alloc::vec;
use alloc::vec::Vec;

use crate::atlas::{minimal_image, norm, normal_coordinate, wrapped_distance, Chart, TorusPoint};
use crate::error::{Error, Result};
use crate::flat_bundle::FlatBundle;
use crate::linalg::Matrix;

/// Boundary germ of the bump profile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Germ {
    /// `exp(−1/t²)`
    #[default]
    InverseSquare,
    /// `exp(−1/t)`
    InverseLinear,
}

impl Germ {
    fn value(self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self {
            Germ::InverseSquare => libm::exp(-1.0 / (t * t)),
            Germ::InverseLinear => libm::exp(-1.0 / t),
        }
    }

    fn derivative(self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self {
            Germ::InverseSquare => 2.0 / (t * t * t) * libm::exp(-1.0 / (t * t)),
            Germ::InverseLinear => libm::exp(-1.0 / t) / (t * t),
        }
    }
}

fn g(t: f64) -> f64 {
    if t > 0.0 {
        libm::exp(-1.0 / t)
    } else {
        0.0
    }
}

fn dg(t: f64) -> f64 {
    if t > 0.0 {
        libm::exp(-1.0 / t) / (t * t)
    } else {
        0.0
    }
}

/// Smooth step: 0 for `t ≤ 0`, 1 for `t ≥ 1`.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let (a, b) = (g(t), g(1.0 - t));
        a / (a + b)
    }
}

pub fn smooth_step_derivative(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let (a, b) = (g(t), g(1.0 - t));
    let (da, db) = (dg(t), -dg(1.0 - t));
    (da * b - a * db) / ((a + b) * (a + b))
}

/// `ρ(r) = h(2r/w) + (1 − h(2r/w))·step((r − w/2)/(w/2))`: equal to the germ
/// `h(2r/w)` on `[0, w/2]`, to 1 for `r ≥ w`, increasing in between.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BumpProfile {
    width: f64,
    germ: Germ,
}

impl BumpProfile {
    pub fn new(width: f64) -> Result<Self> {
        Self::with_germ(width, Germ::default())
    }

    pub fn with_germ(width: f64, germ: Germ) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::InvalidInput("collar width must be positive"));
        }
        Ok(BumpProfile { width, germ })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn germ(&self) -> Germ {
        self.germ
    }

    pub fn rho(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        if r >= self.width {
            return 1.0;
        }
        let t = 2.0 * r / self.width;
        let s = (r - 0.5 * self.width) / (0.5 * self.width);
        let h = self.germ.value(t);
        h + (1.0 - h) * smooth_step(s)
    }

    pub fn drho(&self, r: f64) -> f64 {
        if r <= 0.0 || r >= self.width {
            return 0.0;
        }
        let t = 2.0 * r / self.width;
        let s = (r - 0.5 * self.width) / (0.5 * self.width);
        let k = 2.0 / self.width;
        self.germ.derivative(t) * k * (1.0 - smooth_step(s))
            + (1.0 - self.germ.value(t)) * smooth_step_derivative(s) * k
    }
}

/// A boundary-circle intersection, independent of the chart ordering.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VertexGeometry {
    pub point: TorusPoint,
    /// Chart positions of the two boundaries.
    pub pair: [usize; 2],
    /// Planar lift of the point and of the two centers near it.
    pub lift: [f64; 2],
    pub centers: [[f64; 2]; 2],
    /// Angle between the boundary curves, in `(0, π/2]`.
    pub angle: f64,
}

/// Collar coordinates `(r_{β₁}, r_{β₂}) ∈ [0, w]²` near a vertex.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollarCell {
    pub centers: [[f64; 2]; 2],
    pub radii: [f64; 2],
    /// Side of the center line on which the vertex lies.
    pub side: f64,
    /// `sign det[∇r_{β₁}; ∇r_{β₂}]`.
    pub orientation: f64,
    pub width: f64,
}

impl CollarCell {
    /// `R₁ + R₂ − d`; the shrunken circles meet iff `r₁ + r₂ < cut`.
    pub fn cut(&self) -> f64 {
        let v = [self.centers[1][0] - self.centers[0][0], self.centers[1][1] - self.centers[0][1]];
        self.radii[0] + self.radii[1] - norm(v)
    }

    /// Planar point with the given normal coordinates, on the vertex side.
    pub fn point(&self, r: [f64; 2]) -> Option<[f64; 2]> {
        let [c1, c2] = self.centers;
        let r1 = self.radii[0] - r[0];
        let r2 = self.radii[1] - r[1];
        let v = [c2[0] - c1[0], c2[1] - c1[1]];
        let d = norm(v);
        let a = (r1 * r1 - r2 * r2 + d * d) / (2.0 * d);
        let mut h2 = r1 * r1 - a * a;
        if h2 < 0.0 && h2 > -1e-12 * r1 * r1 {
            h2 = 0.0;
        }
        if !(h2 >= 0.0) {
            return None;
        }
        let h = libm::sqrt(h2);
        let u = [v[0] / d, v[1] / d];
        let perp = [-u[1], u[0]];
        Some([
            c1[0] + a * u[0] + self.side * h * perp[0],
            c1[1] + a * u[1] + self.side * h * perp[1],
        ])
    }

    /// Splits the cell domain `{r ∈ [0,w]² : r₁ + r₂ < cut}` into pieces
    /// that are smooth images of rectangles.
    pub fn pieces(&self) -> Vec<CellPiece> {
        let w = self.width;
        let cut = self.cut();
        if cut >= 2.0 * w {
            return vec![CellPiece { r1: [0.0, w], wedge: None }];
        }
        let a = (cut - w).clamp(0.0, w);
        let b = cut.min(w);
        let mut out = Vec::new();
        if a > 0.0 {
            out.push(CellPiece { r1: [0.0, a], wedge: None });
        }
        if b > a {
            out.push(CellPiece { r1: [a, b], wedge: Some(cut) });
        }
        out
    }
}

/// Part of a collar cell: `r₁` over an interval and `r₂ ∈ [0, w]`, or
/// `r₂ = t·(cut − r₁)` with `t ∈ [0, 1]` for the wedge next to the cut.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellPiece {
    pub r1: [f64; 2],
    pub wedge: Option<f64>,
}

impl CellPiece {
    /// Parameter rectangle `(u, v)`.
    pub fn domain(&self, width: f64) -> [f64; 4] {
        match self.wedge {
            None => [self.r1[0], self.r1[1], 0.0, width],
            Some(_) => [self.r1[0], self.r1[1], 0.0, 1.0],
        }
    }

    /// Collar coordinates and Jacobian `∂(r₁, r₂)/∂(u, v)`.
    pub fn map(&self, u: f64, v: f64) -> ([f64; 2], f64) {
        match self.wedge {
            None => ([u, v], 1.0),
            Some(cut) => ([u, v * (cut - u)], cut - u),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VertexRecord {
    pub geometry: VertexGeometry,
    /// Boundary chart positions, by descending ordering index.
    pub boundary: Vec<usize>,
    /// Containing chart positions, by descending ordering index.
    pub containing: Vec<usize>,
    pub boundary_indices: Vec<u32>,
    pub containing_indices: Vec<u32>,
    /// `Bᵢ` with `y_{βᵢ} = Bᵢ y_{α₁}`.
    pub frames: Vec<Matrix>,
    pub in_b_plus: bool,
    pub w_radius: f64,
    pub v_radius: f64,
    pub cell: CollarCell,
}

impl VertexRecord {
    pub fn point(&self) -> TorusPoint {
        self.geometry.point
    }

    /// Largest containing-chart index α₁.
    pub fn alpha1(&self) -> u32 {
        self.containing_indices[0]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoveringOptions {
    pub theta_min: f64,
    /// Coverage sample grid per side.
    pub coverage_grid: usize,
    /// Sample grid per side for the collar-cell check.
    pub cell_grid: usize,
    /// Fraction of the admissible radius used for `W_p` and `V_p`.
    pub safety: f64,
}

impl Default for CoveringOptions {
    fn default() -> Self {
        CoveringOptions { theta_min: 0.2, coverage_grid: 512, cell_grid: 256, safety: 0.9 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransversalCovering {
    charts: Vec<Chart>,
    profile: BumpProfile,
    options: CoveringOptions,
    vertices: Vec<VertexGeometry>,
    radii: Vec<(f64, f64)>,
}

const BOUNDARY_TOL: f64 = 1e-9;

impl TransversalCovering {
    pub fn new(charts: Vec<Chart>, profile: BumpProfile, options: CoveringOptions) -> Result<Self> {
        if charts.len() < 2 {
            return Err(Error::SingleChart);
        }
        for (i, c) in charts.iter().enumerate() {
            if charts[..i].iter().any(|d| d.index == c.index) {
                return Err(Error::DuplicateIndex(c.index));
            }
        }
        let mut cov = TransversalCovering { charts, profile, options, vertices: Vec::new(), radii: Vec::new() };
        cov.check_coverage()?;
        cov.vertices = cov.enumerate_vertices()?;
        cov.radii = cov.neighborhood_radii()?;
        cov.check_cells()?;
        Ok(cov)
    }

    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    pub fn profile(&self) -> &BumpProfile {
        &self.profile
    }

    pub fn options(&self) -> &CoveringOptions {
        &self.options
    }

    pub fn vertex_geometry(&self) -> &[VertexGeometry] {
        &self.vertices
    }

    pub fn position_of(&self, index: u32) -> Option<usize> {
        self.charts.iter().position(|c| c.index == index)
    }

    pub fn rho(&self, chart: usize, p: TorusPoint) -> f64 {
        self.profile.rho(normal_coordinate(&self.charts[chart], p))
    }

    pub fn drho(&self, chart: usize, p: TorusPoint) -> [f64; 2] {
        let c = &self.charts[chart];
        let d = self.profile.drho(normal_coordinate(c, p));
        if d == 0.0 {
            return [0.0, 0.0];
        }
        let n = c.inward_normal(p);
        [d * n[0], d * n[1]]
    }

    fn check_coverage(&self) -> Result<()> {
        let n = self.options.coverage_grid;
        for i in 0..n {
            for j in 0..n {
                let p = TorusPoint::new(i as f64 / n as f64, j as f64 / n as f64);
                if !self.charts.iter().any(|c| normal_coordinate(c, p) > 0.0) {
                    let [x, y] = p.coords();
                    return Err(Error::CoverageGap { x, y });
                }
            }
        }
        Ok(())
    }

    fn enumerate_vertices(&self) -> Result<Vec<VertexGeometry>> {
        let mut out = Vec::new();
        for i in 0..self.charts.len() {
            for j in (i + 1)..self.charts.len() {
                let (a, b) = (&self.charts[i], &self.charts[j]);
                let ca = a.center();
                for di in -2i64..=2 {
                    for dj in -2i64..=2 {
                        let cb = [b.center()[0] + di as f64, b.center()[1] + dj as f64];
                        let v = [cb[0] - ca[0], cb[1] - ca[1]];
                        let d = norm(v);
                        if d >= a.radius() + b.radius() {
                            continue;
                        }
                        if d <= (a.radius() - b.radius()).abs() {
                            if d < 1e-12 && (a.radius() - b.radius()).abs() < 1e-12 {
                                return Err(Error::Transversality { angle: 0.0, min: self.options.theta_min });
                            }
                            continue;
                        }
                        for side in [1.0, -1.0] {
                            let cell = CollarCell {
                                centers: [ca, cb],
                                radii: [a.radius(), b.radius()],
                                side,
                                orientation: 1.0,
                                width: self.profile.width,
                            };
                            let q = cell.point([0.0, 0.0]).ok_or(Error::Transversality {
                                angle: 0.0,
                                min: self.options.theta_min,
                            })?;
                            let na = [(q[0] - ca[0]) / a.radius(), (q[1] - ca[1]) / a.radius()];
                            let nb = [(q[0] - cb[0]) / b.radius(), (q[1] - cb[1]) / b.radius()];
                            let cos = (na[0] * nb[0] + na[1] * nb[1]).abs().min(1.0);
                            let angle = libm::acos(cos);
                            if angle < self.options.theta_min {
                                return Err(Error::Transversality { angle, min: self.options.theta_min });
                            }
                            let point = TorusPoint::new(q[0], q[1]);
                            for (k, c) in self.charts.iter().enumerate() {
                                if k != i && k != j && normal_coordinate(c, point).abs() < BOUNDARY_TOL {
                                    let [x, y] = point.coords();
                                    return Err(Error::TooManyBoundaries { x, y });
                                }
                            }
                            out.push(VertexGeometry { point, pair: [i, j], lift: q, centers: [ca, cb], angle });
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// `(W_p, V_p)` per vertex.
    fn neighborhood_radii(&self) -> Result<Vec<(f64, f64)>> {
        let w = self.profile.width;
        let mut out = Vec::with_capacity(self.vertices.len());
        for (idx, v) in self.vertices.iter().enumerate() {
            let p = v.point;
            let mut depth = f64::INFINITY;
            let mut bound = f64::INFINITY;
            for (k, c) in self.charts.iter().enumerate() {
                if k == v.pair[0] || k == v.pair[1] {
                    continue;
                }
                let r = normal_coordinate(c, p);
                if r > 0.0 {
                    depth = depth.min(r);
                } else {
                    // keep away from charts that play no role at p
                    bound = bound.min(-r);
                }
            }
            if !depth.is_finite() {
                let [x, y] = p.coords();
                return Err(Error::UncoveredVertex { x, y });
            }
            if depth <= w {
                let [x, y] = p.coords();
                return Err(Error::CollarTooWide { x, y, depth, width: w });
            }
            for (jdx, u) in self.vertices.iter().enumerate() {
                if jdx != idx {
                    bound = bound.min(0.5 * wrapped_distance(p, u.point));
                }
            }
            let s = self.options.safety;
            let wr = s * depth.min(bound);
            let vr = s * wr.min(depth - w);
            out.push((wr, vr));
        }
        Ok(out)
    }

    /// Every sampled point where two collars overlap must lie in the collar
    /// cell of a vertex of that pair, so the base integral can be taken cell
    /// by cell.
    fn check_cells(&self) -> Result<()> {
        let w = self.profile.width;
        for v in &self.vertices {
            for (cell, _) in self.cells_for(v) {
                let cut = cell.cut();
                for r in [[0.0, 0.0], [w, 0.0], [0.0, w], [w, w]] {
                    let r = [r[0].min(0.999 * cut), r[1].min(0.999 * cut)];
                    if r[0] + r[1] < cut && cell.point(r).is_none() {
                        let [x, y] = v.point.coords();
                        return Err(Error::CollarOverlapOutsideCells { x, y });
                    }
                }
            }
        }
        let n = self.options.cell_grid;
        for i in 0..n {
            for j in 0..n {
                let p = TorusPoint::new((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64);
                let in_collar: Vec<usize> = (0..self.charts.len())
                    .filter(|k| {
                        let r = normal_coordinate(&self.charts[*k], p);
                        r > 0.0 && r < w
                    })
                    .collect();
                for (x, &a) in in_collar.iter().enumerate() {
                    for &b in &in_collar[x + 1..] {
                        if !self.point_in_some_cell(p, a, b) {
                            let [x, y] = p.coords();
                            return Err(Error::CollarOverlapOutsideCells { x, y });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn cells_for(&self, v: &VertexGeometry) -> Vec<(CollarCell, [usize; 2])> {
        let [a, b] = v.pair;
        let q = v.lift;
        let cross = (v.centers[1][0] - v.centers[0][0]) * (q[1] - v.centers[0][1])
            - (v.centers[1][1] - v.centers[0][1]) * (q[0] - v.centers[0][0]);
        let cell = CollarCell {
            centers: v.centers,
            radii: [self.charts[a].radius(), self.charts[b].radius()],
            side: if cross >= 0.0 { 1.0 } else { -1.0 },
            orientation: 1.0,
            width: self.profile.width,
        };
        vec![(cell, [a, b])]
    }

    fn point_in_some_cell(&self, p: TorusPoint, a: usize, b: usize) -> bool {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let ra = normal_coordinate(&self.charts[lo], p);
        let rb = normal_coordinate(&self.charts[hi], p);
        self.vertices.iter().filter(|v| v.pair == [lo, hi]).any(|v| {
            self.cells_for(v).iter().any(|(cell, _)| match cell.point([ra, rb]) {
                Some(x) => {
                    let d = minimal_image([x[0] - p.coords()[0], x[1] - p.coords()[1]]);
                    norm(d) < 1e-9
                }
                None => false,
            })
        })
    }

    /// Vertex records for the current ordering.
    pub fn vertices(&self, bundle: &FlatBundle) -> Result<Vec<VertexRecord>> {
        let mut out = Vec::with_capacity(self.vertices.len());
        for (v, &(w_radius, v_radius)) in self.vertices.iter().zip(&self.radii) {
            out.push(self.record(v, w_radius, v_radius, Some(bundle))?);
        }
        Ok(out)
    }

    /// Vertex records without frame matrices.
    pub fn vertex_layout(&self) -> Vec<VertexRecord> {
        self.vertices
            .iter()
            .zip(&self.radii)
            .map(|(v, &(wr, vr))| self.record(v, wr, vr, None).expect("no bundle, no failure"))
            .collect()
    }

    fn record(&self, v: &VertexGeometry, w_radius: f64, v_radius: f64, bundle: Option<&FlatBundle>) -> Result<VertexRecord> {
        let p = v.point;
        let by_index_desc = |list: &mut Vec<usize>| list.sort_by(|x, y| self.charts[*y].index.cmp(&self.charts[*x].index));
        let mut boundary = vec![v.pair[0], v.pair[1]];
        by_index_desc(&mut boundary);
        let mut containing: Vec<usize> = (0..self.charts.len())
            .filter(|k| !boundary.contains(k) && normal_coordinate(&self.charts[*k], p) > 0.0)
            .collect();
        by_index_desc(&mut containing);
        let boundary_indices: Vec<u32> = boundary.iter().map(|k| self.charts[*k].index).collect();
        let containing_indices: Vec<u32> = containing.iter().map(|k| self.charts[*k].index).collect();
        let in_b_plus = boundary_indices[boundary_indices.len() - 1] > containing_indices[0];
        let frames = match bundle {
            Some(b) => {
                let reference = &self.charts[containing[0]];
                boundary
                    .iter()
                    .map(|k| b.frame_matrix(&self.charts[*k], reference, p))
                    .collect::<Result<Vec<_>>>()?
            }
            None => Vec::new(),
        };
        let (cell_base, _) = self.cells_for(v)[0];
        let swap = boundary[0] != v.pair[0];
        let mut cell = cell_base;
        if swap {
            cell.centers = [cell_base.centers[1], cell_base.centers[0]];
            cell.radii = [cell_base.radii[1], cell_base.radii[0]];
            cell.side = -cell_base.side;
        }
        let q = v.lift;
        let g1 = unit([cell.centers[0][0] - q[0], cell.centers[0][1] - q[1]]);
        let g2 = unit([cell.centers[1][0] - q[0], cell.centers[1][1] - q[1]]);
        let det = g1[0] * g2[1] - g1[1] * g2[0];
        cell.orientation = if det > 0.0 { 1.0 } else { -1.0 };
        Ok(VertexRecord {
            geometry: *v,
            boundary,
            containing,
            boundary_indices,
            containing_indices,
            frames,
            in_b_plus,
            w_radius,
            v_radius,
            cell,
        })
    }

    /// Re-indexes chart with index `k` to `permutation[k − 1]`.
    pub fn permute_ordering(&self, permutation: &[u32]) -> Result<TransversalCovering> {
        let n = self.charts.len();
        if permutation.len() != n {
            return Err(Error::InvalidPermutation);
        }
        let mut seen = vec![false; n];
        for &v in permutation {
            if v == 0 || v as usize > n || seen[v as usize - 1] {
                return Err(Error::InvalidPermutation);
            }
            seen[v as usize - 1] = true;
        }
        let mut sorted: Vec<u32> = self.charts.iter().map(|c| c.index).collect();
        sorted.sort_unstable();
        if sorted.iter().enumerate().any(|(i, k)| *k != i as u32 + 1) {
            return Err(Error::InvalidPermutation);
        }
        let mut out = self.clone();
        for c in out.charts.iter_mut() {
            c.index = permutation[c.index as usize - 1];
        }
        Ok(out)
    }
}

fn unit(v: [f64; 2]) -> [f64; 2] {
    let n = norm(v);
    [v[0] / n, v[1] / n]
}

/// The 4-disk covering of radius 0.4 centered on the half-lattice.
pub fn default_charts() -> Vec<Chart> {
    [[0.0, 0.0], [0.5, 0.0], [0.0, 0.5], [0.5, 0.5]]
        .iter()
        .enumerate()
        .map(|(i, c)| Chart::new(i as u32 + 1, *c, 0.4).expect("valid chart"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn default_covering() -> TransversalCovering {
        TransversalCovering::new(default_charts(), BumpProfile::new(0.05).unwrap(), CoveringOptions::default()).unwrap()
    }

    #[test]
    fn profile_shape() {
        let b = BumpProfile::new(0.05).unwrap();
        assert_eq!(b.rho(0.0), 0.0);
        assert_eq!(b.rho(-0.1), 0.0);
        assert_eq!(b.rho(0.05), 1.0);
        assert_eq!(b.rho(0.3), 1.0);
        let mut prev = 0.0;
        for k in 1..1000 {
            let r = 0.05 * k as f64 / 1000.0;
            let v = b.rho(r);
            assert!(v >= prev && v <= 1.0, "r = {r}");
            prev = v;
        }
        // germ on the inner half
        assert!((b.rho(0.01) - libm::exp(-1.0 / (0.4 * 0.4))).abs() < 1e-15);
        // flat at the boundary
        assert!(b.rho(0.002) < 1e-60);
        assert!(b.drho(0.002) < 1e-55);
    }

    #[test]
    fn drho_matches_finite_differences() {
        for germ in [Germ::InverseSquare, Germ::InverseLinear] {
            let b = BumpProfile::with_germ(0.05, germ).unwrap();
            let h = 1e-7;
            for k in 1..50 {
                let r = 0.05 * k as f64 / 50.0;
                let fd = (b.rho(r + h) - b.rho(r - h)) / (2.0 * h);
                assert!((fd - b.drho(r)).abs() < 1e-5 * (1.0 + fd.abs()), "r={r}");
            }
        }
    }

    #[test]
    fn default_scenario_vertices() {
        let cov = default_covering();
        let layout = cov.vertex_layout();
        assert_eq!(layout.len(), 32);
        let plus: Vec<&VertexRecord> = layout.iter().filter(|v| v.in_b_plus).collect();
        assert_eq!(plus.len(), 8);
        for v in &plus {
            match v.boundary_indices.as_slice() {
                [4, 3] => assert_eq!(v.alpha1(), 2),
                [3, 2] => {
                    assert_eq!(v.containing_indices, [1]);
                    let [x, y] = v.point().coords();
                    for c in [x, y] {
                        assert!((c - 0.1177).abs() < 1e-3 || (c - 0.8823).abs() < 1e-3);
                    }
                }
                other => panic!("unexpected boundary pair {other:?}"),
            }
        }
        for v in &layout {
            assert!(v.v_radius > 0.0 && v.v_radius < v.w_radius);
            assert!(v.geometry.angle >= 0.2);
            for k in &v.boundary {
                assert!(normal_coordinate(&cov.charts()[*k], v.point()).abs() < 1e-12);
            }
            for k in &v.containing {
                assert!(normal_coordinate(&cov.charts()[*k], v.point()) > 0.0);
            }
        }
    }

    #[test]
    fn rho_is_one_in_v_balls() {
        let cov = default_covering();
        for v in cov.vertex_layout() {
            for k in 0..24 {
                let t = k as f64 * core::f64::consts::TAU / 24.0;
                for frac in [0.3, 0.99] {
                    let q = v.point().translated([frac * v.v_radius * libm::cos(t), frac * v.v_radius * libm::sin(t)]);
                    for a in &v.containing {
                        assert_eq!(cov.rho(*a, q), 1.0);
                        assert_eq!(cov.drho(*a, q), [0.0, 0.0]);
                    }
                }
            }
        }
    }

    #[test]
    fn w_balls_are_disjoint() {
        let layout = default_covering().vertex_layout();
        for (i, a) in layout.iter().enumerate() {
            for b in &layout[i + 1..] {
                assert!(wrapped_distance(a.point(), b.point()) > a.w_radius + b.w_radius);
            }
        }
    }

    #[test]
    fn cell_map_hits_vertex_and_moves_inward() {
        let cov = default_covering();
        for v in cov.vertex_layout() {
            let x = v.cell.point([0.0, 0.0]).unwrap();
            assert!(norm([x[0] - v.geometry.lift[0], x[1] - v.geometry.lift[1]]) < 1e-12);
            let y = v.cell.point([0.01, 0.02]).unwrap();
            let p = TorusPoint::new(y[0], y[1]);
            assert!((normal_coordinate(&cov.charts()[v.boundary[0]], p) - 0.01).abs() < 1e-12);
            assert!((normal_coordinate(&cov.charts()[v.boundary[1]], p) - 0.02).abs() < 1e-12);
        }
    }

    #[test]
    fn rho_outside_and_on_boundary() {
        let cov = default_covering();
        assert_eq!(cov.rho(0, TorusPoint::new(0.4, 0.0)), 0.0);
        assert_eq!(cov.rho(0, TorusPoint::new(0.5, 0.5)), 0.0);
        assert_eq!(cov.drho(0, TorusPoint::new(0.5, 0.5)), [0.0, 0.0]);
        assert_eq!(cov.rho(0, TorusPoint::new(0.1, 0.1)), 1.0);
    }

    #[test]
    fn degenerate_inputs() {
        let b = BumpProfile::new(0.05).unwrap();
        let one = vec![Chart::new(1, [0.0, 0.0], 0.45).unwrap()];
        assert_eq!(TransversalCovering::new(one, b, CoveringOptions::default()), Err(Error::SingleChart));
        let mut dup = default_charts();
        dup[1].index = 1;
        assert_eq!(TransversalCovering::new(dup, b, CoveringOptions::default()), Err(Error::DuplicateIndex(1)));
        let small: Vec<Chart> = default_charts().into_iter().map(|c| Chart::new(c.index, c.center(), 0.2).unwrap()).collect();
        assert!(matches!(TransversalCovering::new(small, b, CoveringOptions::default()), Err(Error::CoverageGap { .. })));
        let wide = BumpProfile::new(0.1).unwrap();
        assert!(matches!(
            TransversalCovering::new(default_charts(), wide, CoveringOptions::default()),
            Err(Error::CollarTooWide { .. })
        ));
        let strict = CoveringOptions { theta_min: 1.5, ..CoveringOptions::default() };
        assert!(matches!(TransversalCovering::new(default_charts(), b, strict), Err(Error::Transversality { .. })));
    }

    #[test]
    fn permutations() {
        let cov = default_covering();
        let same = cov.permute_ordering(&[1, 2, 3, 4]).unwrap();
        assert_eq!(same, cov);
        let rev = cov.permute_ordering(&[4, 3, 2, 1]).unwrap();
        let flags: Vec<bool> = rev.vertex_layout().iter().map(|v| v.in_b_plus).collect();
        assert_eq!(rev.vertex_layout().len(), 32);
        assert_ne!(flags, cov.vertex_layout().iter().map(|v| v.in_b_plus).collect::<Vec<_>>());
        assert_eq!(cov.permute_ordering(&[1, 1, 2, 3]), Err(Error::InvalidPermutation));
        assert_eq!(cov.permute_ordering(&[1, 2, 3]), Err(Error::InvalidPermutation));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn permute_and_restore(perm in Just(vec![1u32, 2, 3, 4]).prop_shuffle()) {
            let cov = default_covering();
            let p = cov.permute_ordering(&perm).unwrap();
            let mut inverse = vec![0u32; 4];
            for (i, v) in perm.iter().enumerate() {
                inverse[*v as usize - 1] = i as u32 + 1;
            }
            let back = p.permute_ordering(&inverse).unwrap();
            let f0: Vec<bool> = cov.vertex_layout().iter().map(|v| v.in_b_plus).collect();
            let f1: Vec<bool> = back.vertex_layout().iter().map(|v| v.in_b_plus).collect();
            prop_assert_eq!(f0, f1);
            prop_assert_eq!(p.vertex_layout().len(), 32);
        }
    }
}
