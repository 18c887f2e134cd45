//! Exterior algebra over named anticommuting generators, with scalar or
//! `End(Λ*(ℝ^{2n}*))`-valued coefficients.
//!
//! A basis monomial is a bitmask over the generator list. Generator order is
//! `dx¹..dx^{2n}, dy¹..dy^{2n}` and every sign is computed against it.
//!
//! Matrix coefficients act on the exterior basis of the fiber: basis vector
//! `m` (a bitmask over `e¹..e^{2n}`) has parity `popcount(m) mod 2`. A product
//! of `α⊗S` and `β⊗T` moves `S` past `β`, which conjugates `S` by the parity
//! operator `Γ` when `β` is odd.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Subsets are bitmasks, so the cap is bounded by the mask width.
pub const MAX_GENERATORS: usize = 24;
const DENSE_CAP: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratorSet {
    horizontal: Vec<String>,
    vertical: Vec<String>,
}

impl GeneratorSet {
    pub fn new(horizontal: Vec<String>, vertical: Vec<String>) -> Result<Self> {
        if vertical.is_empty() {
            return Err(Error::InvalidInput("at least one vertical generator is required"));
        }
        if horizontal.len() + vertical.len() > MAX_GENERATORS {
            return Err(Error::InvalidInput("too many generators"));
        }
        let all: Vec<&String> = horizontal.iter().chain(vertical.iter()).collect();
        for (i, a) in all.iter().enumerate() {
            if all[i + 1..].contains(a) {
                return Err(Error::InvalidInput("generator names must be distinct"));
            }
        }
        Ok(GeneratorSet { horizontal, vertical })
    }

    /// `dx1..dx{2n}` and `dy1..dy{2n}`.
    pub fn standard(n: usize) -> Self {
        let h = (1..=2 * n).map(|i| format!("dx{i}")).collect();
        let v = (1..=2 * n).map(|i| format!("dy{i}")).collect();
        GeneratorSet::new(h, v).expect("standard generator set is valid")
    }

    pub fn cap(&self) -> usize {
        self.horizontal.len() + self.vertical.len()
    }

    pub fn horizontal_count(&self) -> usize {
        self.horizontal.len()
    }

    pub fn vertical_count(&self) -> usize {
        self.vertical.len()
    }

    /// Dimension of the exterior algebra of the fiber.
    pub fn endo_dim(&self) -> usize {
        1 << self.vertical.len()
    }

    /// Generator slot of `dx^{i+1}`.
    pub fn dx(&self, i: usize) -> usize {
        assert!(i < self.horizontal.len());
        i
    }

    /// Generator slot of `dy^{k+1}`.
    pub fn dy(&self, k: usize) -> usize {
        assert!(k < self.vertical.len());
        self.horizontal.len() + k
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.horizontal.iter().chain(self.vertical.iter()).position(|g| g == name)
    }

    pub fn name(&self, slot: usize) -> &str {
        if slot < self.horizontal.len() {
            &self.horizontal[slot]
        } else {
            &self.vertical[slot - self.horizontal.len()]
        }
    }

    pub fn top_mask(&self) -> u32 {
        ((1u64 << self.cap()) - 1) as u32
    }
}

/// Sign of concatenating sorted monomials `a` then `b` into canonical order.
pub fn merge_sign(a: u32, b: u32) -> f64 {
    let mut inversions = 0u32;
    let mut rest = b;
    while rest != 0 {
        let j = rest.trailing_zeros();
        rest &= rest - 1;
        inversions += (a >> j >> 1).count_ones();
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn basis_sign(m: usize) -> f64 {
    if m.count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `ε_k = e^k ∧ ·` on the exterior basis of `ℝ^rank`.
pub fn exterior_operator(k: usize, rank: usize) -> Matrix {
    let dim = 1usize << rank;
    let mut m = Matrix::zeros(dim);
    let bit = 1usize << k;
    for src in 0..dim {
        if src & bit == 0 {
            m[(src | bit, src)] = basis_sign(src & (bit - 1));
        }
    }
    m
}

/// `ι_k`, contraction with `e_k`; the transpose of `ε_k`.
pub fn interior_operator(k: usize, rank: usize) -> Matrix {
    exterior_operator(k, rank).transpose()
}

/// Parity operator `Γ`, diagonal with entries `(-1)^{deg}`.
pub fn parity_operator(rank: usize) -> Matrix {
    let dim = 1usize << rank;
    let diag: Vec<f64> = (0..dim).map(basis_sign).collect();
    Matrix::diagonal(&diag)
}

/// `Γ S Γ`
fn parity_conjugate(s: &Matrix) -> Matrix {
    let n = s.dim();
    let mut out = s.clone();
    for i in 0..n {
        for j in 0..n {
            if (i ^ j).count_ones() % 2 == 1 {
                out[(i, j)] = -out[(i, j)];
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct CliffordOperator {
    pub vector: Vec<f64>,
    pub dual: Vec<f64>,
    pub matrix: Matrix,
}

/// `c(Z) = Z*∧ − i_Z`.
pub fn clifford(z: &[f64], zdual: &[f64]) -> Result<CliffordOperator> {
    if z.is_empty() {
        return Err(Error::InvalidInput("clifford needs a nonempty vector"));
    }
    if z.len() != zdual.len() {
        return Err(Error::DimensionMismatch { expected: z.len(), found: zdual.len() });
    }
    let rank = z.len();
    let mut m = Matrix::zeros(1 << rank);
    for k in 0..rank {
        if zdual[k] != 0.0 {
            m.add_scaled(zdual[k], &exterior_operator(k, rank));
        }
        if z[k] != 0.0 {
            m.add_scaled(-z[k], &interior_operator(k, rank));
        }
    }
    Ok(CliffordOperator { vector: z.to_vec(), dual: zdual.to_vec(), matrix: m })
}

trait Coefficient: Clone + PartialEq {
    fn accumulate(&mut self, other: &Self, factor: f64);
    fn scaled(&self, c: f64) -> Self;
    fn is_zero(&self) -> bool;
}

impl Coefficient for f64 {
    fn accumulate(&mut self, other: &f64, factor: f64) {
        *self += factor * other;
    }
    fn scaled(&self, c: f64) -> f64 {
        self * c
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
}

impl Coefficient for Matrix {
    fn accumulate(&mut self, other: &Matrix, factor: f64) {
        self.add_scaled(factor, other);
    }
    fn scaled(&self, c: f64) -> Matrix {
        self.scale(c)
    }
    fn is_zero(&self) -> bool {
        Matrix::is_zero(self)
    }
}

/// Per-subset coefficient map: a flat table when the cap is small, a sorted
/// map otherwise.
#[derive(Clone, Debug, PartialEq)]
enum Store<C> {
    Dense(Vec<Option<C>>),
    Sparse(BTreeMap<u32, C>),
}

impl<C: Coefficient> Store<C> {
    fn new(cap: usize) -> Self {
        if cap <= DENSE_CAP {
            Store::Dense(vec![None; 1 << cap])
        } else {
            Store::Sparse(BTreeMap::new())
        }
    }

    fn get(&self, mask: u32) -> Option<&C> {
        match self {
            Store::Dense(v) => v.get(mask as usize).and_then(|c| c.as_ref()),
            Store::Sparse(m) => m.get(&mask),
        }
    }

    fn accumulate(&mut self, mask: u32, c: &C, factor: f64) {
        match self {
            Store::Dense(v) => match &mut v[mask as usize] {
                Some(slot) => slot.accumulate(c, factor),
                slot @ None => *slot = Some(c.scaled(factor)),
            },
            Store::Sparse(m) => match m.get_mut(&mask) {
                Some(slot) => slot.accumulate(c, factor),
                None => {
                    m.insert(mask, c.scaled(factor));
                }
            },
        }
    }

    fn insert(&mut self, mask: u32, c: C) {
        match self {
            Store::Dense(v) => v[mask as usize] = Some(c),
            Store::Sparse(m) => {
                m.insert(mask, c);
            }
        }
    }

    fn iter(&self) -> impl Iterator<Item = (u32, &C)> + '_ {
        let dense = match self {
            Store::Dense(v) => Some(
                v.iter().enumerate().filter_map(|(i, c)| c.as_ref().map(|c| (i as u32, c))),
            ),
            Store::Sparse(_) => None,
        };
        let sparse = match self {
            Store::Sparse(m) => Some(m.iter().map(|(k, c)| (*k, c))),
            Store::Dense(_) => None,
        };
        dense.into_iter().flatten().chain(sparse.into_iter().flatten())
    }

    fn map<D: Coefficient>(&self, mut f: impl FnMut(u32, &C) -> Option<D>, cap: usize) -> Store<D> {
        let mut out = Store::new(cap);
        for (m, c) in self.iter() {
            if let Some(v) = f(m, c) {
                out.insert(m, v);
            }
        }
        out
    }

    fn prune(&mut self) {
        match self {
            Store::Dense(v) => {
                for slot in v.iter_mut() {
                    if slot.as_ref().is_some_and(|c| c.is_zero()) {
                        *slot = None;
                    }
                }
            }
            Store::Sparse(m) => m.retain(|_, c| !c.is_zero()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Terms {
    Scalar(Store<f64>),
    Matrix(Store<Matrix>),
}

/// Element of `Λ*(generators) ⊗ K` with `K = ℝ` or `K = End(Λ*(ℝ^{2n}*))`.
#[derive(Clone, Debug)]
pub struct GradedElement {
    gens: Arc<GeneratorSet>,
    terms: Terms,
}

impl PartialEq for GradedElement {
    fn eq(&self, other: &Self) -> bool {
        *self.gens == *other.gens && self.terms == other.terms
    }
}

impl GradedElement {
    pub fn zero(gens: &Arc<GeneratorSet>) -> Self {
        GradedElement { gens: gens.clone(), terms: Terms::Scalar(Store::new(gens.cap())) }
    }

    pub fn zero_matrix(gens: &Arc<GeneratorSet>) -> Self {
        GradedElement { gens: gens.clone(), terms: Terms::Matrix(Store::new(gens.cap())) }
    }

    pub fn scalar(gens: &Arc<GeneratorSet>, c: f64) -> Self {
        Self::from_term(gens, 0, c)
    }

    /// Degree-zero element with matrix coefficient `s`.
    pub fn operator(gens: &Arc<GeneratorSet>, s: Matrix) -> Result<Self> {
        Self::from_matrix_term(gens, 0, s)
    }

    pub fn from_term(gens: &Arc<GeneratorSet>, mask: u32, c: f64) -> Self {
        let mut store = Store::new(gens.cap());
        if mask & !gens.top_mask() == 0 {
            store.insert(mask, c);
        }
        GradedElement { gens: gens.clone(), terms: Terms::Scalar(store) }
    }

    pub fn from_matrix_term(gens: &Arc<GeneratorSet>, mask: u32, s: Matrix) -> Result<Self> {
        if s.dim() != gens.endo_dim() {
            return Err(Error::CoefficientMismatch { left: gens.endo_dim(), right: s.dim() });
        }
        let mut store = Store::new(gens.cap());
        if mask & !gens.top_mask() == 0 {
            store.insert(mask, s);
        }
        Ok(GradedElement { gens: gens.clone(), terms: Terms::Matrix(store) })
    }

    /// The 1-form with a single generator slot.
    pub fn generator(gens: &Arc<GeneratorSet>, slot: usize) -> Self {
        Self::from_term(gens, 1 << slot, 1.0)
    }

    /// `c · g_{s₁} ∧ g_{s₂} ∧ …` in the listed order.
    pub fn monomial(gens: &Arc<GeneratorSet>, slots: &[usize], c: f64) -> Self {
        let mut mask = 0u32;
        let mut sign = 1.0;
        for &s in slots {
            let bit = 1u32 << s;
            if mask & bit != 0 {
                return Self::zero(gens);
            }
            sign *= merge_sign(mask, bit);
            mask |= bit;
        }
        Self::from_term(gens, mask, sign * c)
    }

    /// `form ⊗ s` for a scalar-coefficient form.
    pub fn tensor(form: &GradedElement, s: &Matrix) -> Result<Self> {
        let gens = &form.gens;
        if s.dim() != gens.endo_dim() {
            return Err(Error::CoefficientMismatch { left: gens.endo_dim(), right: s.dim() });
        }
        match &form.terms {
            Terms::Scalar(st) => {
                let store = st.map(|_, c| Some(s.scale(*c)), gens.cap());
                Ok(GradedElement { gens: gens.clone(), terms: Terms::Matrix(store) })
            }
            Terms::Matrix(_) => Err(Error::InvalidInput("tensor expects a scalar form")),
        }
    }

    pub fn generators(&self) -> &Arc<GeneratorSet> {
        &self.gens
    }

    pub fn is_matrix(&self) -> bool {
        matches!(self.terms, Terms::Matrix(_))
    }

    pub fn coefficient(&self, mask: u32) -> f64 {
        match &self.terms {
            Terms::Scalar(s) => s.get(mask).copied().unwrap_or(0.0),
            Terms::Matrix(_) => panic!("coefficient() on matrix element; use matrix_coefficient"),
        }
    }

    pub fn matrix_coefficient(&self, mask: u32) -> Option<&Matrix> {
        match &self.terms {
            Terms::Matrix(s) => s.get(mask),
            Terms::Scalar(_) => None,
        }
    }

    /// Coefficient of the top monomial of a scalar element.
    pub fn top_coefficient(&self) -> f64 {
        self.coefficient(self.gens.top_mask())
    }

    /// Scalar terms as `(mask, coefficient)`, ascending by mask.
    pub fn scalar_terms(&self) -> Vec<(u32, f64)> {
        match &self.terms {
            Terms::Scalar(s) => s.iter().map(|(m, c)| (m, *c)).collect(),
            Terms::Matrix(_) => Vec::new(),
        }
    }

    pub fn masks(&self) -> Vec<u32> {
        match &self.terms {
            Terms::Scalar(s) => s.iter().map(|(m, _)| m).collect(),
            Terms::Matrix(s) => s.iter().map(|(m, _)| m).collect(),
        }
    }

    fn check_gens(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.gens, &other.gens) || *self.gens == *other.gens {
            Ok(())
        } else {
            Err(Error::GeneratorMismatch)
        }
    }

    fn promoted(&self) -> Store<Matrix> {
        match &self.terms {
            Terms::Matrix(s) => s.clone(),
            Terms::Scalar(s) => {
                let id = Matrix::identity(self.gens.endo_dim());
                s.map(|_, c| Some(id.scale(*c)), self.gens.cap())
            }
        }
    }

    fn linear_combination(&self, other: &Self, factor: f64) -> Result<Self> {
        self.check_gens(other)?;
        let cap = self.gens.cap();
        let terms = match (&self.terms, &other.terms) {
            (Terms::Scalar(a), Terms::Scalar(b)) => {
                let mut out = a.clone();
                for (m, c) in b.iter() {
                    out.accumulate(m, c, factor);
                }
                Terms::Scalar(out)
            }
            _ => {
                let mut out = self.promoted();
                for (m, c) in other.promoted().iter() {
                    out.accumulate(m, c, factor);
                }
                let _ = cap;
                Terms::Matrix(out)
            }
        };
        Ok(GradedElement { gens: self.gens.clone(), terms })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.linear_combination(other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.linear_combination(other, -1.0)
    }

    pub fn scale(&self, c: f64) -> Self {
        let cap = self.gens.cap();
        let terms = match &self.terms {
            Terms::Scalar(s) => Terms::Scalar(s.map(|_, v| Some(v * c), cap)),
            Terms::Matrix(s) => Terms::Matrix(s.map(|_, v| Some(v.scale(c)), cap)),
        };
        GradedElement { gens: self.gens.clone(), terms }
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    pub fn wedge(&self, other: &Self) -> Result<Self> {
        wedge(self, other)
    }

    /// Homogeneous part of form degree `k`.
    pub fn degree_project(&self, k: usize) -> Self {
        let cap = self.gens.cap();
        let terms = match &self.terms {
            Terms::Scalar(s) => {
                Terms::Scalar(s.map(|m, c| (m.count_ones() as usize == k).then_some(*c), cap))
            }
            Terms::Matrix(s) => Terms::Matrix(
                s.map(|m, c| (m.count_ones() as usize == k).then(|| c.clone()), cap),
            ),
        };
        GradedElement { gens: self.gens.clone(), terms }
    }

    /// Drops explicitly stored zero coefficients.
    pub fn pruned(mut self) -> Self {
        match &mut self.terms {
            Terms::Scalar(s) => s.prune(),
            Terms::Matrix(s) => s.prune(),
        }
        self
    }

    /// Largest absolute coefficient entry.
    pub fn max_abs(&self) -> f64 {
        match &self.terms {
            Terms::Scalar(s) => s.iter().fold(0.0, |m, (_, c)| m.max(c.abs())),
            Terms::Matrix(s) => s.iter().fold(0.0, |m, (_, c)| m.max(c.max_abs())),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.max_abs())
    }

    /// `Some(parity)` when every term has the same total parity (form degree
    /// plus coefficient degree), `None` for mixed elements.
    pub fn total_parity(&self) -> Option<bool> {
        let mut seen: Option<bool> = None;
        let mut record = |p: bool| -> bool {
            match seen {
                None => {
                    seen = Some(p);
                    true
                }
                Some(q) => q == p,
            }
        };
        match &self.terms {
            Terms::Scalar(s) => {
                for (m, c) in s.iter() {
                    if *c != 0.0 && !record(m.count_ones() % 2 == 1) {
                        return None;
                    }
                }
            }
            Terms::Matrix(s) => {
                for (m, c) in s.iter() {
                    let n = c.dim();
                    for i in 0..n {
                        for j in 0..n {
                            if c[(i, j)] != 0.0 {
                                let p = (m.count_ones() + (i ^ j).count_ones()) % 2 == 1;
                                if !record(p) {
                                    return None;
                                }
                            }
                        }
                    }
                }
            }
        }
        Some(seen.unwrap_or(false))
    }
}

/// Graded product. Monomials sharing a generator vanish; the degree cap is
/// enforced by the generator count.
pub fn wedge(a: &GradedElement, b: &GradedElement) -> Result<GradedElement> {
    a.check_gens(b)?;
    let cap = a.gens.cap();
    let terms = match (&a.terms, &b.terms) {
        (Terms::Scalar(sa), Terms::Scalar(sb)) => {
            let mut out: Store<f64> = Store::new(cap);
            for (ma, ca) in sa.iter() {
                for (mb, cb) in sb.iter() {
                    if ma & mb == 0 {
                        out.accumulate(ma | mb, &(ca * cb), merge_sign(ma, mb));
                    }
                }
            }
            Terms::Scalar(out)
        }
        (Terms::Scalar(sa), Terms::Matrix(sb)) => {
            let mut out: Store<Matrix> = Store::new(cap);
            for (ma, ca) in sa.iter() {
                for (mb, cb) in sb.iter() {
                    if ma & mb == 0 {
                        out.accumulate(ma | mb, cb, ca * merge_sign(ma, mb));
                    }
                }
            }
            Terms::Matrix(out)
        }
        (Terms::Matrix(sa), Terms::Scalar(sb)) => {
            let mut out: Store<Matrix> = Store::new(cap);
            for (ma, ca) in sa.iter() {
                let twisted = parity_conjugate(ca);
                for (mb, cb) in sb.iter() {
                    if ma & mb == 0 {
                        let s = if mb.count_ones() % 2 == 1 { &twisted } else { ca };
                        out.accumulate(ma | mb, s, cb * merge_sign(ma, mb));
                    }
                }
            }
            Terms::Matrix(out)
        }
        (Terms::Matrix(sa), Terms::Matrix(sb)) => {
            if let (Some((_, x)), Some((_, y))) = (sa.iter().next(), sb.iter().next()) {
                if x.dim() != y.dim() {
                    return Err(Error::CoefficientMismatch { left: x.dim(), right: y.dim() });
                }
            }
            let mut out: Store<Matrix> = Store::new(cap);
            for (ma, ca) in sa.iter() {
                let twisted = parity_conjugate(ca);
                for (mb, cb) in sb.iter() {
                    if ma & mb == 0 {
                        let s = if mb.count_ones() % 2 == 1 { &twisted } else { ca };
                        out.accumulate(ma | mb, &(s * cb), merge_sign(ma, mb));
                    }
                }
            }
            Terms::Matrix(out)
        }
    };
    Ok(GradedElement { gens: a.gens.clone(), terms })
}

/// Truncated exponential series.
///
/// The degree-zero coefficient is split off. When it is a multiple of the
/// identity it factors out exactly and the nilpotent remainder is summed to
/// the degree cap. Otherwise the whole element is scaled by `2^-s`, summed
/// well past the cap, and squared back.
pub fn exp_truncated(a: &GradedElement) -> Result<GradedElement> {
    let gens = a.gens.clone();
    let cap = gens.cap();
    let (c0, central) = match &a.terms {
        Terms::Scalar(s) => (s.get(0).copied().unwrap_or(0.0), true),
        Terms::Matrix(s) => match s.get(0) {
            None => (0.0, true),
            Some(d) => {
                let c = d[(0, 0)];
                let dev = d.max_abs_diff(&Matrix::identity(d.dim()).scale(c));
                (c, dev == 0.0)
            }
        },
    };
    if central {
        let shift = GradedElement::scalar(&gens, c0);
        let nil = a.sub(&shift)?.degree_free_of_zero();
        let one = match &a.terms {
            Terms::Scalar(_) => GradedElement::scalar(&gens, 1.0),
            Terms::Matrix(_) => GradedElement::operator(&gens, Matrix::identity(gens.endo_dim()))?,
        };
        let mut sum = one.clone();
        let mut power = one;
        for k in 1..=cap {
            power = wedge(&power, &nil)?.scale(1.0 / k as f64);
            sum = sum.add(&power)?;
        }
        return Ok(sum.scale(libm::exp(c0)));
    }
    let d = a.matrix_coefficient(0).expect("non-central case has a matrix block");
    let norm = d.norm_inf();
    let mut s = 0u32;
    while norm / (1u64 << s) as f64 > 0.5 && s < 60 {
        s += 1;
    }
    let x = a.scale(1.0 / (1u64 << s) as f64);
    let one = GradedElement::operator(&gens, Matrix::identity(gens.endo_dim()))?;
    let mut sum = one.clone();
    let mut power = one;
    for k in 1..=(cap + 20) {
        power = wedge(&power, &x)?.scale(1.0 / k as f64);
        sum = sum.add(&power)?;
    }
    for _ in 0..s {
        sum = wedge(&sum, &sum)?;
    }
    Ok(sum)
}

impl GradedElement {
    /// Removes the degree-zero slot entirely (used after subtracting it).
    fn degree_free_of_zero(self) -> Self {
        let cap = self.gens.cap();
        let terms = match &self.terms {
            Terms::Scalar(s) => Terms::Scalar(s.map(|m, c| (m != 0).then_some(*c), cap)),
            Terms::Matrix(s) => Terms::Matrix(s.map(|m, c| (m != 0).then(|| c.clone()), cap)),
        };
        GradedElement { gens: self.gens, terms }
    }
}

/// Coefficient-wise `tr(Γ S)`.
pub fn supertrace(a: &GradedElement) -> Result<GradedElement> {
    match &a.terms {
        Terms::Scalar(_) => Err(Error::ScalarSupertrace),
        Terms::Matrix(s) => {
            let cap = a.gens.cap();
            let store = s.map(
                |_, c| Some((0..c.dim()).map(|i| basis_sign(i) * c[(i, i)]).sum::<f64>()),
                cap,
            );
            Ok(GradedElement { gens: a.gens.clone(), terms: Terms::Scalar(store) })
        }
    }
}

pub fn degree_project(a: &GradedElement, k: usize) -> GradedElement {
    a.degree_project(k)
}

/// `[a, b] = ab − (−1)^{|a||b|} ba` for elements of definite total parity.
pub fn supercommutator(a: &GradedElement, b: &GradedElement) -> Result<GradedElement> {
    let pa = a.total_parity().ok_or(Error::InvalidInput("mixed parity"))?;
    let pb = b.total_parity().ok_or(Error::InvalidInput("mixed parity"))?;
    let ab = wedge(a, b)?;
    let ba = wedge(b, a)?;
    if pa && pb {
        ab.add(&ba)
    } else {
        ab.sub(&ba)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gens1() -> Arc<GeneratorSet> {
        Arc::new(GeneratorSet::standard(1))
    }

    fn random_scalar(gens: &Arc<GeneratorSet>, coeffs: &[f64]) -> GradedElement {
        let mut e = GradedElement::zero(gens);
        for (m, c) in coeffs.iter().enumerate().take(1 << gens.cap()) {
            e = e.add(&GradedElement::from_term(gens, m as u32, *c)).unwrap();
        }
        e
    }

    #[test]
    fn repeated_generator_vanishes() {
        let g = gens1();
        let dx1 = GradedElement::generator(&g, g.dx(0));
        assert_eq!(wedge(&dx1, &dx1).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn odd_generators_anticommute() {
        let g = gens1();
        let dx1 = GradedElement::generator(&g, g.dx(0));
        let dy1 = GradedElement::generator(&g, g.dy(0));
        let ab = wedge(&dx1, &dy1).unwrap();
        let ba = wedge(&dy1, &dx1).unwrap();
        assert_eq!(ab.add(&ba).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn even_products_commute_example() {
        let g = gens1();
        let one = GradedElement::scalar(&g, 1.0);
        let a = one.add(&GradedElement::monomial(&g, &[g.dx(0), g.dy(0)], 1.0)).unwrap();
        let b = one.add(&GradedElement::monomial(&g, &[g.dx(1), g.dy(1)], 1.0)).unwrap();
        let p = wedge(&a, &b).unwrap();
        let expected = one
            .add(&GradedElement::monomial(&g, &[g.dx(0), g.dy(0)], 1.0))
            .unwrap()
            .add(&GradedElement::monomial(&g, &[g.dx(1), g.dy(1)], 1.0))
            .unwrap()
            .add(&GradedElement::monomial(&g, &[g.dx(0), g.dy(0), g.dx(1), g.dy(1)], 1.0))
            .unwrap();
        assert_eq!(p.max_abs_diff(&expected).unwrap(), 0.0);
        assert_eq!(p, wedge(&b, &a).unwrap());
    }

    #[test]
    fn exp_examples() {
        let g = gens1();
        let e0 = exp_truncated(&GradedElement::zero(&g)).unwrap();
        assert_eq!(e0.coefficient(0), 1.0);
        assert_eq!(e0.max_abs(), 1.0);
        let a = GradedElement::monomial(&g, &[g.dx(0), g.dy(0)], 1.0)
            .add(&GradedElement::monomial(&g, &[g.dx(1), g.dy(1)], 1.0))
            .unwrap();
        let e = exp_truncated(&a).unwrap();
        let top = GradedElement::monomial(&g, &[g.dx(0), g.dy(0), g.dx(1), g.dy(1)], 1.0);
        let top_mask = top.masks()[0];
        assert_eq!(e.coefficient(top_mask), top.coefficient(top_mask));
        let p4 = degree_project(&e, 4);
        assert_eq!(p4.max_abs_diff(&top).unwrap(), 0.0);
    }

    #[test]
    fn degree_project_example() {
        let g = gens1();
        let m = GradedElement::monomial(&g, &[g.dx(0), g.dy(0)], 1.0);
        let a = GradedElement::scalar(&g, 1.0).add(&m).unwrap();
        assert_eq!(degree_project(&a, 2).max_abs_diff(&m).unwrap(), 0.0);
    }

    #[test]
    fn supertrace_identity_is_zero() {
        let g = gens1();
        let id = GradedElement::operator(&g, Matrix::identity(4)).unwrap();
        assert_eq!(supertrace(&id).unwrap().coefficient(0), 0.0);
        assert_eq!(supertrace(&GradedElement::scalar(&g, 1.0)), Err(Error::ScalarSupertrace));
    }

    #[test]
    fn clifford_square_and_zero() {
        let c = clifford(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        let sq = &c.matrix * &c.matrix;
        assert!(sq.max_abs_diff(&Matrix::identity(4).scale(-1.0)) < 1e-15);
        let z = clifford(&[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!(z.matrix.is_zero());
        assert_eq!(
            clifford(&[1.0], &[1.0, 0.0]),
            Err(Error::DimensionMismatch { expected: 1, found: 2 })
        );
    }

    /// Explicit enumeration on the basis {1, e1, e2, e1∧e2}.
    #[test]
    fn clifford_products_supertrace_by_enumeration() {
        let c1 = clifford(&[1.0, 0.0], &[1.0, 0.0]).unwrap().matrix;
        let c2 = clifford(&[0.0, 1.0], &[0.0, 1.0]).unwrap().matrix;
        // c(e1) on basis: 1 -> e1, e1 -> -1, e2 -> e1e2, e1e2 -> -e2
        let mut m1 = Matrix::zeros(4);
        m1[(1, 0)] = 1.0;
        m1[(0, 1)] = -1.0;
        m1[(3, 2)] = 1.0;
        m1[(2, 3)] = -1.0;
        // c(e2): 1 -> e2, e1 -> -e1e2, e2 -> -1, e1e2 -> e1
        let mut m2 = Matrix::zeros(4);
        m2[(2, 0)] = 1.0;
        m2[(3, 1)] = -1.0;
        m2[(0, 2)] = -1.0;
        m2[(1, 3)] = 1.0;
        assert_eq!(c1, m1);
        assert_eq!(c2, m2);
        let gamma = parity_operator(2);
        let str_of = |m: &Matrix| (&gamma * m).trace();
        assert_eq!(str_of(&(&c1 * &c2)), 0.0);
        // (c1 c2)^2 = -Id, whose supertrace is 0
        let prod = &(&(&c1 * &c2) * &c1) * &c2;
        assert_eq!(prod, Matrix::identity(4).scale(-1.0));
        assert_eq!(str_of(&prod), 0.0);
        // projector onto e1∧e2 has supertrace +1
        let e1 = exterior_operator(0, 2);
        let e2 = exterior_operator(1, 2);
        let proj = &(&(&e1 * &e2) * &e2.transpose()) * &e1.transpose();
        let mut p = Matrix::zeros(4);
        p[(3, 3)] = 1.0;
        assert_eq!(proj, p);
        assert_eq!(str_of(&proj), 1.0);
    }

    #[test]
    fn mismatched_generators_error() {
        let a = GradedElement::scalar(&gens1(), 1.0);
        let b = GradedElement::scalar(&Arc::new(GeneratorSet::standard(2)), 1.0);
        assert_eq!(wedge(&a, &b), Err(Error::GeneratorMismatch));
    }

    #[test]
    fn sparse_storage_for_rank_four() {
        let g = Arc::new(GeneratorSet::standard(2));
        assert_eq!(g.cap(), 8);
        let a = GradedElement::monomial(&g, &[g.dx(3), g.dy(3)], 2.0);
        let b = GradedElement::monomial(&g, &[g.dx(0), g.dy(0)], 3.0);
        let ab = wedge(&a, &b).unwrap();
        assert_eq!(ab.masks().len(), 1);
        assert_eq!(ab, wedge(&b, &a).unwrap());
    }

    proptest! {
        #[test]
        fn exp_of_sum_of_commuting_even(c in proptest::collection::vec(-1.0f64..1.0, 16),
                                        d in proptest::collection::vec(-1.0f64..1.0, 16)) {
            let g = gens1();
            // even elements of a scalar algebra commute
            let even = |v: &[f64]| {
                let e = random_scalar(&g, v);
                degree_project(&e, 0).add(&degree_project(&e, 2)).unwrap()
                    .add(&degree_project(&e, 4)).unwrap()
            };
            let a = even(&c);
            let b = even(&d);
            let lhs = exp_truncated(&a.add(&b).unwrap()).unwrap();
            let rhs = wedge(&exp_truncated(&a).unwrap(), &exp_truncated(&b).unwrap()).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12 * lhs.max_abs().max(1.0));
        }

        #[test]
        fn degree_decomposition(c in proptest::collection::vec(-3.0f64..3.0, 16)) {
            let g = gens1();
            let a = random_scalar(&g, &c);
            let mut sum = GradedElement::zero(&g);
            for k in 0..=4 {
                sum = sum.add(&degree_project(&a, k)).unwrap();
            }
            prop_assert_eq!(sum.max_abs_diff(&a).unwrap(), 0.0);
        }

        #[test]
        fn matrix_exp_general_block_matches_series(
            entries in proptest::collection::vec(-2.0f64..2.0, 16),
            form in proptest::collection::vec(-1.0f64..1.0, 4)
        ) {
            let g = gens1();
            let d = Matrix::from_row_major(4, &entries).unwrap();
            // even part only, so the element is even
            let mut d_even = d.clone();
            for i in 0..4 { for j in 0..4 { if (i ^ j as usize).count_ones() % 2 == 1 { d_even[(i, j)] = 0.0; } } }
            let gd = GradedElement::operator(&g, d_even.clone()).unwrap();
            let two = GradedElement::monomial(&g, &[g.dx(0), g.dy(1)], form[0])
                .add(&GradedElement::monomial(&g, &[g.dx(1), g.dy(0)], form[1])).unwrap();
            let gn = GradedElement::tensor(&two, &Matrix::identity(4)).unwrap();
            let a = gd.add(&gn).unwrap();
            let e = exp_truncated(&a).unwrap();
            // direct long series as oracle
            let one = GradedElement::operator(&g, Matrix::identity(4)).unwrap();
            let mut sum = one.clone();
            let mut p = one;
            for k in 1..=60 {
                p = wedge(&p, &a).unwrap().scale(1.0 / k as f64);
                sum = sum.add(&p).unwrap();
            }
            let scale = sum.max_abs().max(1.0);
            prop_assert!(e.max_abs_diff(&sum).unwrap() < 1e-11 * scale);
        }
    }
}
