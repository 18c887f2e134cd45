//! The flat torus `ℝ²/ℤ²` with geodesic-disk charts.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Point of the torus, normalized to `[0,1)²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusPoint {
    x: [f64; 2],
}

fn reduce(v: f64) -> f64 {
    let r = v - libm::floor(v);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

impl TorusPoint {
    pub fn new(x: f64, y: f64) -> Self {
        TorusPoint { x: [reduce(x), reduce(y)] }
    }

    pub fn coords(&self) -> [f64; 2] {
        self.x
    }

    pub fn translated(&self, v: [f64; 2]) -> Self {
        Self::new(self.x[0] + v[0], self.x[1] + v[1])
    }
}

/// Shortest representative of `v` modulo `ℤ²`.
pub fn minimal_image(v: [f64; 2]) -> [f64; 2] {
    [v[0] - libm::round(v[0]), v[1] - libm::round(v[1])]
}

pub fn norm(v: [f64; 2]) -> f64 {
    libm::hypot(v[0], v[1])
}

/// Minimum Euclidean distance over the nine nearest lattice translates.
pub fn wrapped_distance(p: TorusPoint, q: TorusPoint) -> f64 {
    let d = [q.x[0] - p.x[0], q.x[1] - p.x[1]];
    let mut best = f64::INFINITY;
    for i in -1..=1 {
        for j in -1..=1 {
            best = best.min(norm([d[0] + i as f64, d[1] + j as f64]));
        }
    }
    best
}

/// Geodesic disk; the radius stays below the injectivity radius 1/2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Disk {
    pub center: TorusPoint,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Chart {
    /// Ordering index α.
    pub index: u32,
    pub disk: Disk,
}

impl Chart {
    pub fn new(index: u32, center: [f64; 2], radius: f64) -> Result<Self> {
        if index == 0 {
            return Err(Error::InvalidInput("chart indices start at 1"));
        }
        if !(radius > 0.0 && radius < 0.5) {
            return Err(Error::RadiusTooLarge { index, radius });
        }
        Ok(Chart { index, disk: Disk { center: TorusPoint::new(center[0], center[1]), radius } })
    }

    pub fn center(&self) -> [f64; 2] {
        self.disk.center.coords()
    }

    pub fn radius(&self) -> f64 {
        self.disk.radius
    }

    /// Planar coordinates of `p` in the lift of the disk around its center.
    pub fn lift(&self, p: TorusPoint) -> [f64; 2] {
        let c = self.center();
        let d = minimal_image([p.coords()[0] - c[0], p.coords()[1] - c[1]]);
        [c[0] + d[0], c[1] + d[1]]
    }

    pub fn contains(&self, p: TorusPoint) -> bool {
        normal_coordinate(self, p) > 0.0
    }

    /// Unit gradient of the normal coordinate, pointing to the center.
    pub fn inward_normal(&self, p: TorusPoint) -> [f64; 2] {
        let c = self.center();
        let l = self.lift(p);
        let d = [c[0] - l[0], c[1] - l[1]];
        let r = norm(d);
        if r == 0.0 {
            [0.0, 0.0]
        } else {
            [d[0] / r, d[1] / r]
        }
    }
}

/// `R − dist(c, p)`: positive inside, zero on the boundary circle.
pub fn normal_coordinate(chart: &Chart, p: TorusPoint) -> f64 {
    chart.radius() - wrapped_distance(chart.disk.center, p)
}

/// Slack for points on a boundary circle, which belong to the closed disk.
pub const CLOSURE_TOL: f64 = 1e-9;

/// Lattice translation `λ = lift_a(p) − lift_b(p)` between chart coordinates
/// at `p`, a point of both closed disks.
pub fn transition_at(a: &Chart, b: &Chart, p: TorusPoint) -> Result<[i64; 2]> {
    if normal_coordinate(a, p) < -CLOSURE_TOL || normal_coordinate(b, p) < -CLOSURE_TOL {
        return Err(Error::DisjointCharts { a: a.index, b: b.index });
    }
    let la = a.lift(p);
    let lb = b.lift(p);
    Ok([libm::round(la[0] - lb[0]) as i64, libm::round(la[1] - lb[1]) as i64])
}

/// Lattice translations identifying lifted coordinates of `b` with those of
/// `a`, one per connected component of the overlap. Coordinates satisfy
/// `x_a = x_b + λ` on the component of `λ`.
pub fn chart_overlap_frame(a: &Chart, b: &Chart) -> Result<Vec<[i64; 2]>> {
    let ca = a.center();
    let cb = b.center();
    let mut out = Vec::new();
    for i in -2i64..=2 {
        for j in -2i64..=2 {
            let d = norm([cb[0] + i as f64 - ca[0], cb[1] + j as f64 - ca[1]]);
            if d < a.radius() + b.radius() {
                out.push([i, j]);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::DisjointCharts { a: a.index, b: b.index });
    }
    Ok(out)
}
