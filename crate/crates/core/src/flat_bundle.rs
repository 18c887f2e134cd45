//! Rank-2 bundles over the torus: flat bundles from commuting holonomies and
//! degree-k line bundles with a metric connection.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::atlas::{chart_overlap_frame, transition_at, Chart, TorusPoint};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// One connected component of an overlap: `y_to = matrix · y_from` where the
/// lifted coordinates satisfy `x_to = x_from + shift`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub to: usize,
    pub from: usize,
    pub shift: [i64; 2],
    pub matrix: Matrix,
}

/// Flat bundle `(ℝ² × ℝ^{2n}) / ℤ²` with `(x, v) ~ (x + λ, ρ(λ) v)` and
/// `ρ(m, k) = A^m B^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatBundle {
    a: Matrix,
    b: Matrix,
    transitions: Vec<Transition>,
}

impl FlatBundle {
    pub fn from_holonomy(a: Matrix, b: Matrix, charts: &[Chart]) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
        }
        let defect = (&(&a * &b) - &(&b * &a)).max_abs();
        if defect > 1e-12 * a.max_abs().max(b.max_abs()).max(1.0) {
            return Err(Error::NonCommutingHolonomy { defect });
        }
        for m in [&a, &b] {
            let det = m.det();
            if !(det > 0.0) {
                return Err(Error::OrientationReversing { det });
            }
        }
        let mut bundle = FlatBundle { a, b, transitions: Vec::new() };
        for (i, ci) in charts.iter().enumerate() {
            for (j, cj) in charts.iter().enumerate() {
                if let Ok(shifts) = chart_overlap_frame(ci, cj) {
                    for shift in shifts {
                        let matrix = bundle.representation(shift)?;
                        bundle.transitions.push(Transition { to: i, from: j, shift, matrix });
                    }
                }
            }
        }
        Ok(bundle)
    }

    pub fn trivial(rank: usize, charts: &[Chart]) -> Result<Self> {
        Self::from_holonomy(Matrix::identity(rank), Matrix::identity(rank), charts)
    }

    pub fn rank(&self) -> usize {
        self.a.dim()
    }

    pub fn holonomy(&self) -> (&Matrix, &Matrix) {
        (&self.a, &self.b)
    }

    /// `ρ(m, k) = A^m B^k`.
    pub fn representation(&self, shift: [i64; 2]) -> Result<Matrix> {
        Ok(&self.a.powi(shift[0])? * &self.b.powi(shift[1])?)
    }

    /// Transition table over every ordered pair of overlapping charts
    /// (chart positions, not ordering indices).
    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// `B` with `y_vertex = B · y_reference` at `p`.
    pub fn frame_matrix(&self, vertex_chart: &Chart, reference_chart: &Chart, p: TorusPoint) -> Result<Matrix> {
        let shift = transition_at(vertex_chart, reference_chart, p)?;
        self.representation(shift)
    }

    /// Largest `|g_ab g_bc − g_ac|` over the given points and chart triples
    /// containing them.
    pub fn cocycle_defect(&self, charts: &[Chart], points: &[TorusPoint]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for p in points {
            let inside: Vec<&Chart> = charts.iter().filter(|c| c.contains(*p)).collect();
            for a in &inside {
                for b in &inside {
                    for c in &inside {
                        let ab = self.frame_matrix(a, b, *p)?;
                        let bc = self.frame_matrix(b, c, *p)?;
                        let ac = self.frame_matrix(a, c, *p)?;
                        worst = worst.max((&ab * &bc).max_abs_diff(&ac));
                    }
                }
            }
        }
        Ok(worst)
    }
}

/// `J = [[0, −1], [1, 0]]`, the complex structure on `ℝ² = ℂ`.
pub fn complex_structure() -> Matrix {
    Matrix::from_rows([[0.0, -1.0], [1.0, 0.0]])
}

/// Degree-k complex line bundle as an oriented real rank-2 bundle.
///
/// On the universal cover the connection is `d + a(x) J` with
/// `a = πk(x₂ dx¹ − x₁ dx²) + ripple·sin(2πx₁) dx² + dχ`,
/// `χ = gauge · sin(2πx₁) cos(2πx₂)`. The deck transformations act on
/// sections by the rotations `exp(θ_e J)` with `θ_{e₁} = πk x₂`,
/// `θ_{e₂} = −πk x₁`, which makes the connection descend. The curvature is
/// `κ J dx¹∧dx²` with `κ = −2πk + 2π·ripple·cos(2πx₁)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LineBundle {
    pub degree: i64,
    pub ripple: f64,
    pub gauge: f64,
}

impl LineBundle {
    pub fn rank(&self) -> usize {
        2
    }

    fn gauge_gradient(&self, x: [f64; 2]) -> [f64; 2] {
        let (s1, c1) = (libm::sin(2.0 * PI * x[0]), libm::cos(2.0 * PI * x[0]));
        let (s2, c2) = (libm::sin(2.0 * PI * x[1]), libm::cos(2.0 * PI * x[1]));
        [self.gauge * 2.0 * PI * c1 * c2, -self.gauge * 2.0 * PI * s1 * s2]
    }

    /// Scalar components `(a₁, a₂)` of the connection form.
    pub fn connection_coefficients(&self, x: [f64; 2]) -> [f64; 2] {
        let k = self.degree as f64;
        let g = self.gauge_gradient(x);
        [
            PI * k * x[1] + g[0],
            -PI * k * x[0] + self.ripple * libm::sin(2.0 * PI * x[0]) + g[1],
        ]
    }

    /// `ω_j = a_j J`, the matrices of `∇ = d + Σ ω_j dx^j`.
    pub fn connection(&self, x: [f64; 2]) -> [Matrix; 2] {
        let a = self.connection_coefficients(x);
        let j = complex_structure();
        [j.scale(a[0]), j.scale(a[1])]
    }

    pub fn kappa(&self, x: [f64; 2]) -> f64 {
        -2.0 * PI * self.degree as f64 + 2.0 * PI * self.ripple * libm::cos(2.0 * PI * x[0])
    }

    /// Curvature coefficient of `dx¹∧dx²`.
    pub fn curvature(&self, x: [f64; 2]) -> Matrix {
        complex_structure().scale(self.kappa(x))
    }

    /// `Pf(R/2π)`, the Euler density.
    pub fn euler_density(&self, x: [f64; 2]) -> f64 {
        // Pf([[0, r], [−r, 0]]) = r
        self.curvature(x)[(0, 1)] / (2.0 * PI)
    }

    /// Rotation angle of the deck transformation `e` at `x`.
    pub fn transition_angle(&self, e: [i64; 2], x: [f64; 2]) -> f64 {
        let k = self.degree as f64;
        // θ_{m e₁ + n e₂}(x) built by composing unit steps
        let mut theta = 0.0;
        let mut p = x;
        for _ in 0..e[0].unsigned_abs() {
            if e[0] > 0 {
                theta += PI * k * p[1];
                p[0] += 1.0;
            } else {
                p[0] -= 1.0;
                theta -= PI * k * p[1];
            }
        }
        for _ in 0..e[1].unsigned_abs() {
            if e[1] > 0 {
                theta -= PI * k * p[0];
                p[1] += 1.0;
            } else {
                p[1] -= 1.0;
                theta += PI * k * p[0];
            }
        }
        theta
    }

    pub fn transition(&self, e: [i64; 2], x: [f64; 2]) -> Matrix {
        let t = self.transition_angle(e, x);
        Matrix::from_rows([[libm::cos(t), -libm::sin(t)], [libm::sin(t), libm::cos(t)]])
    }

    /// Largest violation of `a(x + e) = a(x) − dθ_e(x)` over the sample
    /// points for the two generators, with `dθ` by central differences.
    pub fn compatibility_defect(&self, points: &[[f64; 2]]) -> f64 {
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for x in points {
            for e in [[1i64, 0], [0, 1]] {
                let shifted = self.connection_coefficients([x[0] + e[0] as f64, x[1] + e[1] as f64]);
                let here = self.connection_coefficients(*x);
                for j in 0..2 {
                    let mut xp = *x;
                    let mut xm = *x;
                    xp[j] += h;
                    xm[j] -= h;
                    let dtheta = (self.transition_angle(e, xp) - self.transition_angle(e, xm)) / (2.0 * h);
                    worst = worst.max((shifted[j] - (here[j] - dtheta)).abs());
                }
            }
        }
        worst
    }

    /// `∫ Pf(R/2π)` over the unit square by the midpoint rule (spectrally
    /// accurate for the periodic density).
    pub fn euler_number_by_curvature(&self, resolution: usize) -> f64 {
        let n = resolution.max(1);
        let h = 1.0 / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self.euler_density([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]);
            }
            total += row;
        }
        total * h * h
    }
}

/// Line bundle of the given degree with the default smooth connection.
pub fn line_bundle(k: i64) -> LineBundle {
    LineBundle { degree: k, ripple: 0.0, gauge: 0.0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_charts() -> Vec<Chart> {
        [[0.0, 0.0], [0.5, 0.0], [0.0, 0.5], [0.5, 0.5]]
            .iter()
            .enumerate()
            .map(|(i, c)| Chart::new(i as u32 + 1, *c, 0.4).unwrap())
            .collect()
    }

    #[test]
    fn trivial_holonomy_gives_identity_transitions() {
        let charts = default_charts();
        let b = FlatBundle::trivial(2, &charts).unwrap();
        assert!(!b.transitions().is_empty());
        assert!(b.transitions().iter().all(|t| t.matrix == Matrix::identity(2)));
    }

    #[test]
    fn diag_holonomy_transitions_follow_x_wraps() {
        let charts = default_charts();
        let d = Matrix::diagonal(&[2.0, 0.5]);
        let b = FlatBundle::from_holonomy(d.clone(), Matrix::identity(2), &charts).unwrap();
        for t in b.transitions() {
            assert_eq!(t.matrix, d.powi(t.shift[0]).unwrap());
        }
        // chart 1 at (0,0) and chart 2 at (0.5,0) meet in two lenses, one across the x-wrap
        let shifts: Vec<[i64; 2]> =
            b.transitions().iter().filter(|t| t.to == 0 && t.from == 1).map(|t| t.shift).collect();
        assert_eq!(shifts, [[-1, 0], [0, 0]]);
        let p = TorusPoint::new(0.75, 0.1);
        assert_eq!(b.frame_matrix(&charts[0], &charts[1], p).unwrap(), Matrix::diagonal(&[0.5, 2.0]));
        assert_eq!(b.frame_matrix(&charts[1], &charts[0], p).unwrap(), d);
        assert_eq!(b.frame_matrix(&charts[0], &charts[0], p).unwrap(), Matrix::identity(2));
        assert!(matches!(b.frame_matrix(&charts[2], &charts[0], p), Err(Error::DisjointCharts { .. })));
    }

    #[test]
    fn rejects_bad_holonomy() {
        let charts = default_charts();
        let a = Matrix::from_rows([[1.0, 1.0], [0.0, 1.0]]);
        let b = Matrix::from_rows([[1.0, 0.0], [1.0, 1.0]]);
        assert!(matches!(FlatBundle::from_holonomy(a, b, &charts), Err(Error::NonCommutingHolonomy { .. })));
        let r = Matrix::diagonal(&[-1.0, 1.0]);
        assert!(matches!(
            FlatBundle::from_holonomy(r, Matrix::identity(2), &charts),
            Err(Error::OrientationReversing { .. })
        ));
    }

    #[test]
    fn cocycle_on_grid() {
        let charts = default_charts();
        let a = Matrix::from_rows([[1.0, 1.0], [0.0, 1.0]]);
        let b = Matrix::from_rows([[1.0, 2.0], [0.0, 1.0]]);
        let bundle = FlatBundle::from_holonomy(a, b, &charts).unwrap();
        let pts: Vec<TorusPoint> =
            (0..40).flat_map(|i| (0..40).map(move |j| TorusPoint::new(i as f64 / 40.0, j as f64 / 40.0))).collect();
        assert!(bundle.cocycle_defect(&charts, &pts).unwrap() < 1e-12);
    }

    #[test]
    fn trivial_bundle_fiber_norms_agree() {
        let charts = default_charts();
        let bundle = FlatBundle::trivial(2, &charts).unwrap();
        let p = TorusPoint::new(0.25, 0.25);
        let y = [0.3, -1.2];
        for c in &charts {
            let g = bundle.frame_matrix(c, &charts[3], p).unwrap();
            let yc = g.mul_vec(&y);
            assert_eq!(yc[0] * yc[0] + yc[1] * yc[1], y[0] * y[0] + y[1] * y[1]);
        }
    }

    #[test]
    fn line_bundle_connection_descends() {
        let pts: Vec<[f64; 2]> = (0..7).map(|i| [0.13 * i as f64, 0.31 - 0.07 * i as f64]).collect();
        for k in -2..=2 {
            let lb = LineBundle { degree: k, ripple: 0.3, gauge: 0.2 };
            assert!(lb.compatibility_defect(&pts) < 1e-8);
        }
    }

    #[test]
    fn line_bundle_transition_cocycle() {
        // going around the unit square is a full number of turns
        let lb = line_bundle(3);
        let x = [0.2, 0.7];
        let e1 = lb.transition_angle([1, 0], x) + lb.transition_angle([0, 1], [x[0] + 1.0, x[1]]);
        let e2 = lb.transition_angle([0, 1], x) + lb.transition_angle([1, 0], [x[0], x[1] + 1.0]);
        let turns = (e1 - e2) / (2.0 * PI);
        assert!((turns - libm::round(turns)).abs() < 1e-12);
        assert_eq!(lb.transition([0, 0], x), Matrix::identity(2));
    }

    #[test]
    fn curvature_oracle_counts_degree() {
        for k in -2..=2 {
            let lb = LineBundle { degree: k, ripple: 0.4, gauge: 0.1 };
            assert!((lb.euler_number_by_curvature(64) - k as f64).abs() < 1e-12);
        }
    }
}
