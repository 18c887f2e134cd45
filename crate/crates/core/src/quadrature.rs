//! Adaptive tensor Gauss–Kronrod (7/15) cubature on rectangles.
//!
//! The adaptive pass returns its final partition so the same cells can be
//! reused for nearby integrands (finite differences in a parameter). Cell
//! values are always reduced in a fixed order with a pairwise sum.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15 nodes on [-1, 1] with Kronrod and embedded Gauss weights.
fn rule() -> ([f64; 15], [f64; 15], [f64; 15]) {
    let mut x = [0.0; 15];
    let mut wk = [0.0; 15];
    let mut wg = [0.0; 15];
    for i in 0..7 {
        x[i] = -XGK[i];
        x[14 - i] = XGK[i];
        wk[i] = WGK[i];
        wk[14 - i] = WGK[i];
        if i % 2 == 1 {
            wg[i] = WG[i / 2];
            wg[14 - i] = WG[i / 2];
        }
    }
    x[7] = 0.0;
    wk[7] = WGK[7];
    wg[7] = WG[3];
    (x, wk, wg)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    fn split(&self, along_x: bool) -> (Rect, Rect) {
        if along_x {
            let m = 0.5 * (self.x0 + self.x1);
            (Rect { x1: m, ..*self }, Rect { x0: m, ..*self })
        } else {
            let m = 0.5 * (self.y0 + self.y1);
            (Rect { y1: m, ..*self }, Rect { y0: m, ..*self })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellEstimate {
    pub rect: Rect,
    pub value: f64,
    pub error: f64,
    err_x: f64,
    err_y: f64,
}

/// Tensor K15 value with error estimates per direction.
pub fn evaluate_cell(f: &mut impl FnMut(f64, f64) -> f64, rect: Rect) -> CellEstimate {
    let (x, wk, wg) = rule();
    let hx = 0.5 * (rect.x1 - rect.x0);
    let cx = 0.5 * (rect.x1 + rect.x0);
    let hy = 0.5 * (rect.y1 - rect.y0);
    let cy = 0.5 * (rect.y1 + rect.y0);
    let mut kk = 0.0;
    let mut gk = 0.0;
    let mut kg = 0.0;
    for i in 0..15 {
        let xi = cx + hx * x[i];
        let mut col_k = 0.0;
        let mut col_g = 0.0;
        for j in 0..15 {
            let v = f(xi, cy + hy * x[j]);
            col_k += wk[j] * v;
            col_g += wg[j] * v;
        }
        kk += wk[i] * col_k;
        gk += wg[i] * col_k;
        kg += wk[i] * col_g;
    }
    let area = hx * hy;
    let err_x = ((kk - gk) * area).abs();
    let err_y = ((kk - kg) * area).abs();
    CellEstimate { rect, value: kk * area, error: err_x + err_y, err_x, err_y }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_cells: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs: 1e-12, rel: 1e-9, max_cells: 4000 }
    }
}

impl Tolerance {
    pub fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
    pub partition: Vec<Rect>,
}

struct ByError(CellEstimate);

impl PartialEq for ByError {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for ByError {}
impl PartialOrd for ByError {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for ByError {
    fn cmp(&self, o: &Self) -> Ordering {
        self.0
            .error
            .total_cmp(&o.0.error)
            .then(o.0.rect.x0.total_cmp(&self.0.rect.x0))
            .then(o.0.rect.y0.total_cmp(&self.0.rect.y0))
    }
}

/// Pairwise sum, deterministic for a fixed input order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n if n <= 8 => v.iter().sum(),
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

fn reduce(mut cells: Vec<CellEstimate>, evaluations: usize) -> Estimate {
    cells.sort_by(|a, b| a.rect.x0.total_cmp(&b.rect.x0).then(a.rect.y0.total_cmp(&b.rect.y0)));
    let values: Vec<f64> = cells.iter().map(|c| c.value).collect();
    let errors: Vec<f64> = cells.iter().map(|c| c.error).collect();
    Estimate {
        value: pairwise_sum(&values),
        error: pairwise_sum(&errors),
        evaluations,
        partition: cells.iter().map(|c| c.rect).collect(),
    }
}

/// Adaptive cubature; fails with the achieved error when `max_cells` is hit.
pub fn integrate_2d(mut f: impl FnMut(f64, f64) -> f64, domain: Rect, tol: Tolerance) -> Result<Estimate> {
    let est = integrate_2d_best_effort(&mut f, domain, tol);
    let target = tol.target(est.value);
    if est.error > target {
        return Err(Error::Quadrature { achieved: est.error, requested: target });
    }
    Ok(est)
}

/// Adaptive cubature that returns whatever it reached.
pub fn integrate_2d_best_effort(f: &mut impl FnMut(f64, f64) -> f64, domain: Rect, tol: Tolerance) -> Estimate {
    adapt(f, &[domain], tol)
}

/// Adaptive cubature starting from a uniform `splits × splits` grid, so that
/// narrow features cannot hide between the nodes of a single cell.
pub fn integrate_2d_presplit(
    mut f: impl FnMut(f64, f64) -> f64,
    domain: Rect,
    splits: usize,
    tol: Tolerance,
) -> Result<Estimate> {
    let n = splits.max(1);
    let mut cells = Vec::with_capacity(n * n);
    let hx = (domain.x1 - domain.x0) / n as f64;
    let hy = (domain.y1 - domain.y0) / n as f64;
    for i in 0..n {
        for j in 0..n {
            let x0 = domain.x0 + i as f64 * hx;
            let y0 = domain.y0 + j as f64 * hy;
            let x1 = if i + 1 == n { domain.x1 } else { x0 + hx };
            let y1 = if j + 1 == n { domain.y1 } else { y0 + hy };
            cells.push(Rect::new(x0, x1, y0, y1));
        }
    }
    let est = adapt(&mut f, &cells, tol);
    let target = tol.target(est.value);
    if est.error > target {
        return Err(Error::Quadrature { achieved: est.error, requested: target });
    }
    Ok(est)
}

fn adapt(f: &mut impl FnMut(f64, f64) -> f64, initial: &[Rect], tol: Tolerance) -> Estimate {
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    let mut value = 0.0;
    let mut error = 0.0;
    for r in initial {
        let c = evaluate_cell(f, *r);
        evaluations += 225;
        value += c.value;
        error += c.error;
        heap.push(ByError(c));
    }
    let max_cells = tol.max_cells.max(initial.len());
    while error > tol.target(value) && heap.len() < max_cells {
        let worst = heap.pop().expect("heap is nonempty").0;
        let (a, b) = worst.rect.split(worst.err_x >= worst.err_y);
        let ca = evaluate_cell(f, a);
        let cb = evaluate_cell(f, b);
        evaluations += 450;
        value += ca.value + cb.value - worst.value;
        error += ca.error + cb.error - worst.error;
        heap.push(ByError(ca));
        heap.push(ByError(cb));
        if error <= 0.0 {
            // running sums drift; recompute
            error = heap.iter().map(|c| c.0.error).sum();
        }
    }
    reduce(heap.into_iter().map(|c| c.0).collect(), evaluations)
}

/// Applies the rule on a given partition without refinement.
pub fn integrate_2d_fixed(mut f: impl FnMut(f64, f64) -> f64, partition: &[Rect]) -> Estimate {
    let cells: Vec<CellEstimate> = partition.iter().map(|r| evaluate_cell(&mut f, *r)).collect();
    reduce(cells, 225 * partition.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact_on_one_cell() {
        let est = integrate_2d(|x, y| x * x * y + 3.0 * y * y, Rect::new(0.0, 1.0, 0.0, 2.0), Tolerance::default())
            .unwrap();
        // ∫∫ x²y + 3y² = 2/3 + 8
        assert!((est.value - (2.0 / 3.0 + 8.0)).abs() < 1e-13);
        assert_eq!(est.partition.len(), 1);
    }

    #[test]
    fn gaussian_peak_converges() {
        let f = |x: f64, y: f64| libm::exp(-200.0 * ((x - 0.3) * (x - 0.3) + (y - 0.6) * (y - 0.6)));
        let est = integrate_2d(f, Rect::new(-1.0, 2.0, -1.0, 2.0), Tolerance { abs: 1e-13, rel: 1e-11, max_cells: 10_000 })
            .unwrap();
        let exact = core::f64::consts::PI / 200.0;
        assert!((est.value - exact).abs() < 1e-11, "{} vs {}", est.value, exact);
        let again = integrate_2d_fixed(f, &est.partition);
        assert_eq!(again.value, est.value);
    }

    #[test]
    fn reports_nonconvergence() {
        let r = integrate_2d(
            |x, y| if x + y > 0.5 { 1.0 } else { 0.0 },
            Rect::new(0.0, 1.0, 0.0, 1.0),
            Tolerance { abs: 1e-14, rel: 1e-14, max_cells: 20 },
        );
        assert!(matches!(r, Err(Error::Quadrature { .. })));
    }

    #[test]
    fn presplit_finds_narrow_bump() {
        // a bump narrower than the node spacing of a single K15 cell
        let f = |x: f64, y: f64| {
            let d2 = (x - 0.517) * (x - 0.517) + (y - 0.231) * (y - 0.231);
            if d2 < 1e-4 {
                1.0 - d2 * 1e4
            } else {
                0.0
            }
        };
        let tol = Tolerance { abs: 1e-10, rel: 1e-6, max_cells: 20_000 };
        let est = integrate_2d_presplit(f, Rect::new(0.0, 1.0, 0.0, 1.0), 8, tol).unwrap();
        // ∫ (1 − r²/a²) over the disk of radius a = π a² / 2
        let exact = core::f64::consts::PI * 1e-4 / 2.0;
        assert!((est.value - exact).abs() < 1e-6 * exact, "{}", est.value);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
    }
}
