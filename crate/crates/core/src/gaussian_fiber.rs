//! Closed-form fiber integrals `∫ c(y) exp(−yᵀQy) dy` over `ℝ^{2n}`.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Symmetric positive-definite `Q` with cached inverse and determinant.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticWeight {
    q: Matrix,
    inv: Matrix,
    det: f64,
}

impl QuadraticWeight {
    pub fn new(q: Matrix) -> Result<Self> {
        q.cholesky()?;
        let inv = q.inverse()?;
        let det = q.det();
        Ok(QuadraticWeight { q, inv, det })
    }

    /// `Σ wᵢ BᵢᵀBᵢ + w₀·Id`
    pub fn assemble(weights: &[f64], frames: &[Matrix], w0: f64) -> Result<Self> {
        let grams: Vec<Matrix> = frames.iter().map(Matrix::gram).collect();
        Self::from_grams(weights, &grams, w0)
    }

    /// `Σ wᵢ Pᵢ + w₀·Id` for precomputed Gram matrices `Pᵢ`.
    pub fn from_grams(weights: &[f64], grams: &[Matrix], w0: f64) -> Result<Self> {
        if weights.len() != grams.len() {
            return Err(Error::DimensionMismatch { expected: grams.len(), found: weights.len() });
        }
        let rank = grams.first().map(Matrix::dim).ok_or(Error::InvalidInput("no frames"))?;
        if weights.iter().any(|w| *w < 0.0) || w0 < 0.0 {
            return Err(Error::InvalidInput("weights must be nonnegative"));
        }
        let mut q = Matrix::identity(rank).scale(w0);
        for (w, p) in weights.iter().zip(grams) {
            if p.dim() != rank {
                return Err(Error::DimensionMismatch { expected: rank, found: p.dim() });
            }
            if *w != 0.0 {
                q.add_scaled(*w, p);
            }
        }
        Self::new(q)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.q
    }

    pub fn inverse(&self) -> &Matrix {
        &self.inv
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn rank(&self) -> usize {
        self.q.dim()
    }

    /// `∫ exp(−yᵀQy) dy = π^{n} det(Q)^{-1/2}` with `2n` the rank.
    pub fn normalization(&self) -> f64 {
        libm::pow(PI, self.rank() as f64 / 2.0) / libm::sqrt(self.det)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.q.scale(c))
    }
}

/// Sum over perfect matchings of `Π Σ_{ab}`.
fn isserlis(sigma: &Matrix, idx: &[usize], used: &mut [bool]) -> f64 {
    let first = match used.iter().position(|u| !u) {
        None => return 1.0,
        Some(f) => f,
    };
    used[first] = true;
    let mut total = 0.0;
    for j in (first + 1)..idx.len() {
        if used[j] {
            continue;
        }
        let s = sigma[(idx[first], idx[j])];
        if s != 0.0 {
            used[j] = true;
            total += s * isserlis(sigma, idx, used);
            used[j] = false;
        }
    }
    used[first] = false;
    total
}

/// `∫ y^α exp(−yᵀQy) dy` by Wick pairing with covariance `Q⁻¹/2`.
pub fn gaussian_moment(q: &QuadraticWeight, multi_index: &[u32]) -> Result<f64> {
    if multi_index.len() != q.rank() {
        return Err(Error::DimensionMismatch { expected: q.rank(), found: multi_index.len() });
    }
    let total: u32 = multi_index.iter().sum();
    if total % 2 == 1 {
        return Ok(0.0);
    }
    let mut idx = Vec::with_capacity(total as usize);
    for (k, e) in multi_index.iter().enumerate() {
        idx.extend(core::iter::repeat(k).take(*e as usize));
    }
    let sigma = q.inverse().scale(0.5);
    let mut used = vec![false; idx.len()];
    Ok(q.normalization() * isserlis(&sigma, &idx, &mut used))
}

/// `∫ yᵀMy exp(−yᵀQy) dy = ½ tr(M Q⁻¹) · ∫ exp(−yᵀQy) dy`.
pub fn quadratic_moment(m: &Matrix, q: &QuadraticWeight) -> Result<f64> {
    if m.dim() != q.rank() {
        return Err(Error::DimensionMismatch { expected: q.rank(), found: m.dim() });
    }
    Ok(0.5 * (m * q.inverse()).trace() * q.normalization())
}

/// Real polynomial in `vars` variables, keyed by exponent vectors.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Polynomial {
    vars: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl Polynomial {
    pub fn zero(vars: usize) -> Self {
        Polynomial { vars, terms: BTreeMap::new() }
    }

    pub fn constant(vars: usize, c: f64) -> Self {
        let mut p = Self::zero(vars);
        p.add_term(vec![0; vars], c);
        p
    }

    /// Linear form `Σ_k a_k y_k`.
    pub fn linear(coeffs: &[f64]) -> Self {
        let vars = coeffs.len();
        let mut p = Self::zero(vars);
        for (k, a) in coeffs.iter().enumerate() {
            let mut e = vec![0; vars];
            e[k] = 1;
            p.add_term(e, *a);
        }
        p
    }

    /// `yᵀ M y`
    pub fn quadratic(m: &Matrix) -> Self {
        let vars = m.dim();
        let mut p = Self::zero(vars);
        for i in 0..vars {
            for j in 0..vars {
                let mut e = vec![0; vars];
                e[i] += 1;
                e[j] += 1;
                p.add_term(e, m[(i, j)]);
            }
        }
        p
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    pub fn add_term(&mut self, exps: Vec<u32>, c: f64) {
        debug_assert_eq!(exps.len(), self.vars);
        if c == 0.0 {
            return;
        }
        let slot = self.terms.entry(exps).or_insert(0.0);
        *slot += c;
    }

    pub fn coefficient(&self, exps: &[u32]) -> f64 {
        self.terms.get(exps).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.terms.iter().map(|(e, c)| (e.as_slice(), *c))
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().filter(|(_, c)| **c != 0.0).map(|(e, _)| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.terms.values().all(|c| c.abs() <= tol)
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (e, c) in other.terms.iter() {
            out.add_term(e.clone(), *c);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut out = Self::zero(self.vars);
        for (e, c) in self.terms.iter() {
            out.add_term(e.clone(), c * s);
        }
        out
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = Self::zero(self.vars);
        for (ea, ca) in self.terms.iter() {
            for (eb, cb) in other.terms.iter() {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }

    pub fn evaluate(&self, y: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| e.iter().zip(y).fold(*c, |acc, (k, v)| acc * libm::pow(*v, *k as f64)))
            .sum()
    }

    /// Largest absolute coefficient.
    pub fn max_abs(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }
}

/// `c(y) dy¹∧…∧dy^{2n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyVerticalForm {
    coeff: Polynomial,
    monomials: Vec<(Vec<u32>, f64)>,
}

impl PolyVerticalForm {
    pub fn new(coeff: Polynomial) -> Self {
        let monomials = coeff.terms().filter(|(_, c)| *c != 0.0).map(|(e, c)| (e.to_vec(), c)).collect();
        PolyVerticalForm { coeff, monomials }
    }

    /// The volume form itself.
    pub fn volume(rank: usize) -> Self {
        Self::new(Polynomial::constant(rank, 1.0))
    }

    pub fn rank(&self) -> usize {
        self.coeff.vars()
    }

    pub fn coefficient(&self) -> &Polynomial {
        &self.coeff
    }

    pub fn is_zero(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.coeff.scale(s))
    }

    /// Multiplies the coefficient by a polynomial.
    pub fn times(&self, p: &Polynomial) -> Self {
        Self::new(self.coeff.mul(p))
    }
}

fn permutations(n: usize) -> Vec<(Vec<usize>, f64)> {
    fn rec(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, sign: f64, out: &mut Vec<(Vec<usize>, f64)>) {
        if rest.is_empty() {
            out.push((prefix.clone(), sign));
            return;
        }
        for i in 0..rest.len() {
            let v = rest.remove(i);
            prefix.push(v);
            // moving element i to the front costs i transpositions
            let s = if i % 2 == 0 { sign } else { -sign };
            rec(prefix, rest, s, out);
            prefix.pop();
            rest.insert(i, v);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut (0..n).collect(), 1.0, &mut out);
    out
}

/// `∧ᵢ Σ_k (Lᵢ y)_k dy^k`, expanded as `det[(Lᵢ y)_k] dy¹∧…∧dy^{2n}`.
pub fn wedge_linear_forms(factors: &[Matrix]) -> Result<PolyVerticalForm> {
    let rank = factors.first().map(Matrix::dim).ok_or(Error::InvalidInput("no factors"))?;
    if factors.len() != rank {
        return Err(Error::DimensionMismatch { expected: rank, found: factors.len() });
    }
    if let Some(bad) = factors.iter().find(|l| l.dim() != rank) {
        return Err(Error::DimensionMismatch { expected: rank, found: bad.dim() });
    }
    let rows: Vec<Vec<Polynomial>> = factors
        .iter()
        .map(|l| (0..rank).map(|k| Polynomial::linear(&l.rows()[k])).collect())
        .collect();
    let mut c = Polynomial::zero(rank);
    for (perm, sign) in permutations(rank) {
        let mut term = Polynomial::constant(rank, sign);
        for (i, k) in perm.iter().enumerate() {
            term = term.mul(&rows[i][*k]);
        }
        c = c.add(&term);
    }
    let scale = c.max_abs();
    let mut cleaned = Polynomial::zero(rank);
    for (e, v) in c.terms() {
        if v.abs() > 1e-15 * scale {
            cleaned.add_term(e.to_vec(), v);
        }
    }
    Ok(PolyVerticalForm::new(cleaned))
}

/// `∧ᵢ d|Bᵢy|² = ∧ᵢ 2(Bᵢy)·(Bᵢdy)`.
pub fn wedge_quadratic(frames: &[Matrix]) -> Result<PolyVerticalForm> {
    let factors: Vec<Matrix> = frames.iter().map(|b| b.gram().scale(2.0)).collect();
    wedge_linear_forms(&factors)
}

/// `∫ c(y) exp(−yᵀQy) dy`, orientation `dy¹∧…∧dy^{2n}` positive.
pub fn fiber_integrate(form: &PolyVerticalForm, q: &QuadraticWeight) -> Result<f64> {
    if form.rank() != q.rank() {
        return Err(Error::DimensionMismatch { expected: q.rank(), found: form.rank() });
    }
    let sigma = q.inverse().scale(0.5);
    let mut idx = Vec::new();
    let mut used = Vec::new();
    let mut total = 0.0;
    for (e, c) in form.monomials.iter() {
        let deg: u32 = e.iter().sum();
        if deg % 2 == 1 {
            continue;
        }
        idx.clear();
        for (k, p) in e.iter().enumerate() {
            idx.extend(core::iter::repeat(k).take(*p as usize));
        }
        used.clear();
        used.resize(idx.len(), false);
        total += c * isserlis(&sigma, &idx, &mut used);
    }
    Ok(total * q.normalization())
}

/// Gauss–Hermite rule for the weight `exp(−t²)`, exact for degree `< 2m`.
pub fn gauss_hermite(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let pim4 = libm::pow(PI, -0.25);
    let half = (m + 1) / 2;
    let mut z = 0.0;
    for i in 0..half {
        z = match i {
            0 => libm::sqrt((2 * m + 1) as f64) - 1.85575 * libm::pow((2 * m + 1) as f64, -1.0 / 6.0),
            1 => z - 1.14 * libm::pow(m as f64, 0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            // orthonormal Hermite recurrence
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..m {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * libm::sqrt(2.0 / (jf + 1.0)) * p2 - libm::sqrt(jf / (jf + 1.0)) * p3;
            }
            pp = libm::sqrt(2.0 * m as f64) * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        nodes[i] = z;
        nodes[m - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[m - 1 - i] = weights[i];
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    (nodes, weights)
}
