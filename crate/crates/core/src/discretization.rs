//! Tensor grids on truncated domains, fields, and the discrete Lᵖ primitives.
//!
//! Grids use the interior-node convention of a Dirichlet truncation: along an
//! axis `(lower, upper)` with `n` nodes the spacing is `h = (upper − lower)/(n + 1)`
//! and node `i` sits at `lower + (i + 1)·h`. Every node carries the same
//! quadrature weight `w = Πh`, so the boundary strips of width `h/2` on each
//! side are not covered and `Σw = Π nₐhₐ` is slightly below the domain volume.
//! Uniform weights keep the finite-difference matrices exactly symmetric under
//! the weighted inner product.

use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Real or complex field values.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Neg<Output = Self>
    + Mul<Output = Self>
    + Mul<f64, Output = Self>
{
    const IS_COMPLEX: bool;

    fn zero() -> Self;
    fn from_real(x: f64) -> Self;
    /// Assembles a value from real and imaginary parts; real scalars drop `im`.
    fn from_parts(re: f64, im: f64) -> Self;
    fn re(self) -> f64;
    fn im(self) -> f64;
    fn modulus(self) -> f64;
    fn modulus_sqr(self) -> f64;
    fn conj(self) -> Self;
    fn is_finite(self) -> bool;
}

impl Scalar for f64 {
    const IS_COMPLEX: bool = false;

    fn zero() -> Self {
        0.0
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn from_parts(re: f64, _im: f64) -> Self {
        re
    }
    fn re(self) -> f64 {
        self
    }
    fn im(self) -> f64 {
        0.0
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn modulus_sqr(self) -> f64 {
        self * self
    }
    fn conj(self) -> Self {
        self
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Scalar for Complex64 {
    const IS_COMPLEX: bool = true;

    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn from_parts(re: f64, im: f64) -> Self {
        Complex64::new(re, im)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn im(self) -> f64 {
        self.im
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn modulus_sqr(self) -> f64 {
        self.norm_sqr()
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Applies a real-linear map to real or complex data by acting on the real
/// and imaginary parts separately.
pub(crate) fn map_real_linear<T: Scalar>(values: &[T], map: impl Fn(&[f64]) -> Vec<f64>) -> Vec<T> {
    let re: Vec<f64> = values.iter().map(|v| v.re()).collect();
    let out_re = map(&re);
    if !T::IS_COMPLEX {
        return out_re.into_iter().map(T::from_real).collect();
    }
    let im: Vec<f64> = values.iter().map(|v| v.im()).collect();
    let out_im = map(&im);
    out_re.into_iter().zip(out_im).map(|(r, i)| T::from_parts(r, i)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Interval,
    Box,
    HalflineTruncated,
}

/// A rectangular (possibly truncated) domain Ω ⊂ ℝᵈ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainSpec {
    pub fn interval(lower: f64, upper: f64) -> Self {
        Self { kind: DomainKind::Interval, lower: vec![lower], upper: vec![upper] }
    }

    /// The cube `(lower, upper)^d`.
    pub fn cube(lower: f64, upper: f64, dim: usize) -> Self {
        Self { kind: DomainKind::Box, lower: vec![lower; dim], upper: vec![upper; dim] }
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self { kind: DomainKind::Box, lower, upper }
    }

    /// The half-line ℝ₊ truncated to `(0, radius)`.
    pub fn halfline(radius: f64) -> Self {
        Self { kind: DomainKind::HalflineTruncated, lower: vec![0.0], upper: vec![radius] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.lower.len();
        if d == 0 {
            return Err(Error::InvalidDomain("dimension must be at least 1".into()));
        }
        if self.upper.len() != d {
            return Err(Error::InvalidDomain(format!(
                "{} lower bounds but {} upper bounds",
                d,
                self.upper.len()
            )));
        }
        for (axis, (&a, &b)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidDomain(format!("axis {axis}: bounds must be finite")));
            }
            if a >= b {
                return Err(Error::InvalidDomain(format!("axis {axis}: lower {a} must be below upper {b}")));
            }
        }
        match self.kind {
            DomainKind::Interval if d != 1 => {
                Err(Error::InvalidDomain("an interval is one-dimensional".into()))
            }
            DomainKind::HalflineTruncated if d != 1 || self.lower[0] != 0.0 => Err(Error::InvalidDomain(
                "a truncated half-line is one-dimensional with lower bound 0".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Distance from the center to the nearest face; the truncation radius of
    /// a box approximating ℝᵈ.
    pub fn inradius(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| 0.5 * (b - a))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(a, b)| 0.5 * (a + b)).collect()
    }
}

/// Uniform tensor grid with interior nodes only.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: DomainSpec,
    n: Vec<usize>,
    h: Vec<f64>,
    weight: f64,
    len: usize,
}

/// Builds the interior-node grid with `n_per_axis` nodes along every axis.
pub fn build_grid(domain: DomainSpec, n_per_axis: usize) -> Result<Arc<Grid>> {
    let d = domain.dim();
    Grid::with_counts(domain, vec![n_per_axis; d.max(1)])
}

impl Grid {
    /// Grid with a separate node count per axis.
    pub fn with_counts(domain: DomainSpec, n: Vec<usize>) -> Result<Arc<Grid>> {
        domain.validate()?;
        if n.len() != domain.dim() {
            return Err(Error::InvalidGrid(format!(
                "{} node counts for a {}-dimensional domain",
                n.len(),
                domain.dim()
            )));
        }
        if let Some(&bad) = n.iter().find(|&&k| k < 2) {
            return Err(Error::InvalidGrid(format!("need at least 2 nodes per axis, got {bad}")));
        }
        let h: Vec<f64> = domain
            .lower
            .iter()
            .zip(&domain.upper)
            .zip(&n)
            .map(|((a, b), &k)| (b - a) / (k as f64 + 1.0))
            .collect();
        let weight = h.iter().product();
        let len = n.iter().product();
        Ok(Arc::new(Grid { domain, n, h, weight, len }))
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    /// Node count per axis.
    pub fn counts(&self) -> &[usize] {
        &self.n
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h
    }

    /// Total node count.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Quadrature weight of a node (uniform).
    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Σw over all nodes.
    pub fn total_weight(&self) -> f64 {
        self.weight * self.len as f64
    }

    /// Row-major multi-index of a node; the last axis varies fastest.
    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        let mut rest = node;
        for axis in (0..self.dim()).rev() {
            idx[axis] = rest % self.n[axis];
            rest /= self.n[axis];
        }
        idx
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.n).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    /// Stride of `axis` in the linear node order.
    pub fn stride(&self, axis: usize) -> usize {
        self.n[axis + 1..].iter().product()
    }

    pub fn coordinate(&self, axis: usize, index: usize) -> f64 {
        self.domain.lower[axis] + (index as f64 + 1.0) * self.h[axis]
    }

    /// Coordinates of a node.
    pub fn point(&self, node: usize) -> Vec<f64> {
        self.multi_index(node)
            .iter()
            .enumerate()
            .map(|(axis, &i)| self.coordinate(axis, i))
            .collect()
    }

    /// Node closest to `x`.
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let idx: Vec<usize> = (0..self.dim())
            .map(|axis| {
                let s = (x[axis] - self.domain.lower[axis]) / self.h[axis] - 1.0;
                s.round().clamp(0.0, (self.n[axis] - 1) as f64) as usize
            })
            .collect();
        self.linear_index(&idx)
    }

    pub fn center_node(&self) -> usize {
        self.nearest_node(&self.domain.center())
    }
}

/// Grid function; immutable once built, every value finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T: Scalar = f64> {
    values: Vec<T>,
    grid: Arc<Grid>,
}

pub type ComplexField = Field<Complex64>;

impl<T: Scalar> Field<T> {
    pub fn new(grid: &Arc<Grid>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(i));
        }
        Ok(Self { values, grid: Arc::clone(grid) })
    }

    /// Skips the finiteness scan; length must already match.
    pub(crate) fn from_raw(grid: &Arc<Grid>, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { values, grid: Arc::clone(grid) }
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self::from_raw(grid, vec![T::zero(); grid.len()])
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: &Arc<Grid>, mut f: impl FnMut(&[f64]) -> T) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self::new(grid, values)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_grid(&self, other: &Field<T>) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == T::zero())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.modulus()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::from_raw(&self.grid, self.values.iter().map(|&v| v * s).collect())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: f64, other: &Field<T>, b: f64) -> Result<Self> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        let values = self.values.iter().zip(&other.values).map(|(&x, &y)| x * a + y * b).collect();
        Ok(Self::from_raw(&self.grid, values))
    }

    pub fn try_add(&self, other: &Field<T>) -> Result<Self> {
        self.lin_comb(1.0, other, 1.0)
    }

    pub fn try_sub(&self, other: &Field<T>) -> Result<Self> {
        self.lin_comb(1.0, other, -1.0)
    }

    /// Pointwise product with a real weight function (e.g. a cutoff).
    pub fn multiply_real(&self, weight: &[f64]) -> Result<Self> {
        if weight.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: weight.len() });
        }
        Ok(Self::from_raw(&self.grid, self.values.iter().zip(weight).map(|(&v, &c)| v * c).collect()))
    }
}

impl Field<f64> {
    pub fn to_complex(&self) -> ComplexField {
        Field::from_raw(&self.grid, self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }
}

/// Discrete Lᵖ norm `(Σ wᵢ|fᵢ|ᵖ)^{1/p}`; `p_exp = ∞` gives the sup norm.
pub fn lp_norm<T: Scalar>(f: &Field<T>, p_exp: f64) -> Result<f64> {
    if p_exp.is_nan() || p_exp < 1.0 {
        return Err(Error::InvalidExponent(p_exp));
    }
    Ok(lp_norm_of(f.values(), f.grid().weight(), p_exp))
}

/// Lᵖ norm of raw values with uniform weight `w`, scaled by the maximum so
/// large amplitudes do not overflow.
pub(crate) fn lp_norm_of<T: Scalar>(values: &[T], w: f64, p_exp: f64) -> f64 {
    let max = values.iter().map(|v| v.modulus()).fold(0.0, f64::max);
    if p_exp.is_infinite() || max == 0.0 {
        return max;
    }
    if p_exp == 2.0 {
        let s: f64 = values.iter().map(|v| (v.modulus() / max).powi(2)).sum();
        return max * (w * s).sqrt();
    }
    let s: f64 = values.iter().map(|v| (v.modulus() / max).powf(p_exp)).sum();
    max * (w * s).powf(1.0 / p_exp)
}

/// `Σ wᵢ fᵢ·conj(gᵢ)`, conjugate-linear in `g`.
pub fn inner_product<T: Scalar>(f: &Field<T>, g: &Field<T>) -> Result<T> {
    if !f.same_grid(g) {
        return Err(Error::GridMismatch);
    }
    let w = f.grid().weight();
    let s = f
        .values()
        .iter()
        .zip(g.values())
        .fold(T::zero(), |acc, (&a, &b)| acc + a * b.conj());
    Ok(s * w)
}
