//! Discrete self-adjoint operators and their eigendecompositions.
//!
//! Every operator is assembled as the second-order stencil `(1/h²)·tridiag(−1, 2, −1)`
//! per axis, plus a diagonal potential, with homogeneous Dirichlet rows at the
//! truncation boundary. The Robin half-line operator replaces the `x = 0` row by
//! the one-sided closure of `u′(0) = σu(0)`.
//!
//! The eigenbasis comes in two flavours:
//!
//! * tensor products of discrete sine bases for Laplacians with a constant
//!   potential (the eigenpairs of `tridiag(−1, 2, −1)` are known in closed form
//!   and applied with an FFT-based DST-I);
//! * a dense symmetric eigendecomposition for everything else.
//!
//! Either way the eigenvectors are orthonormal under the weighted inner product
//! and spectral coefficients are `cₖ = ⟨f, eₖ⟩`.

use std::f64::consts::PI;
use std::sync::Arc;

use faer::linalg::matmul::matmul;
use faer::{Accum, ColMut, ColRef, Mat, Par, Side};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::discretization::{map_real_linear, DomainKind, Field, Grid, Scalar};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialSign {
    Positive,
    Negative,
}

impl PotentialSign {
    fn factor(self) -> f64 {
        match self {
            PotentialSign::Positive => 1.0,
            PotentialSign::Negative => -1.0,
        }
    }
}

/// Potential `V` of a Schrödinger operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    Zero,
    /// Bounded values given per grid node.
    TabulatedBounded { values: Vec<f64> },
    /// `V(x) = ±coupling/|x|^alpha`; `alpha = 0` is a constant potential.
    InversePower { alpha: f64, coupling: f64, sign: PotentialSign },
}

impl PotentialSpec {
    /// The constant value when the potential does not depend on `x`.
    fn constant_value(&self) -> Option<f64> {
        match self {
            PotentialSpec::Zero => Some(0.0),
            PotentialSpec::InversePower { alpha, coupling, sign } if *alpha == 0.0 || *coupling == 0.0 => {
                Some(sign.factor() * coupling)
            }
            _ => None,
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            PotentialSpec::Zero => Ok(()),
            PotentialSpec::TabulatedBounded { values } => {
                if values.iter().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::InvalidOperator("tabulated potential has non-finite values".into()))
                }
            }
            PotentialSpec::InversePower { alpha, coupling, sign } => {
                if !(coupling.is_finite() && *coupling >= 0.0) {
                    return Err(Error::InvalidOperator(format!("coupling must be finite and >= 0, got {coupling}")));
                }
                let kato_limit = if dim == 1 { 1.0 } else { 2.0 };
                let in_kato = alpha.is_finite() && *alpha >= 0.0 && *alpha < kato_limit;
                let inverse_square = *alpha == 2.0;
                if in_kato {
                    return Ok(());
                }
                if inverse_square && (dim >= 3 || *sign == PotentialSign::Negative) {
                    // dim < 3 negative inverse-square is representable but
                    // classified as neither assumption
                    return Ok(());
                }
                Err(Error::InvalidOperator(format!(
                    "inverse power alpha = {alpha} outside the supported range for d = {dim}"
                )))
            }
        }
    }

    fn resolve(&self, grid: &Grid) -> Result<Vec<f64>> {
        match self {
            PotentialSpec::Zero => Ok(vec![0.0; grid.len()]),
            PotentialSpec::TabulatedBounded { values } => {
                if values.len() != grid.len() {
                    return Err(Error::LengthMismatch { expected: grid.len(), got: values.len() });
                }
                Ok(values.clone())
            }
            PotentialSpec::InversePower { alpha, coupling, sign } => {
                if let Some(c) = self.constant_value() {
                    return Ok(vec![c; grid.len()]);
                }
                let h_min = grid.spacing().iter().cloned().fold(f64::INFINITY, f64::min);
                (0..grid.len())
                    .map(|i| {
                        let r = grid.point(i).iter().map(|x| x * x).sum::<f64>().sqrt();
                        if r < 1e-9 * h_min {
                            Err(Error::SingularPotential { node: i, distance: r })
                        } else {
                            Ok(sign.factor() * coupling / r.powf(*alpha))
                        }
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorKind {
    DirichletLaplacian,
    Schrodinger { potential: PotentialSpec },
    RobinHalfline { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssumptionClass {
    /// L²→Lq decay estimates (subcritical theory).
    A,
    /// Gaussian upper bound on the heat kernel (critical theory).
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    A,
    B,
    Neither,
}

/// Classification of the shipped operator families by the decay assumption
/// they are known to satisfy. This is metadata: integral (Kato-type)
/// conditions are not checked numerically.
pub fn classify_assumption(kind: &OperatorKind, dim: usize) -> Classification {
    match kind {
        OperatorKind::DirichletLaplacian => Classification::B,
        OperatorKind::RobinHalfline { sigma } if *sigma >= 0.0 && dim == 1 => Classification::B,
        OperatorKind::RobinHalfline { .. } => Classification::Neither,
        OperatorKind::Schrodinger { potential } => match potential {
            PotentialSpec::Zero => Classification::B,
            PotentialSpec::TabulatedBounded { values } => {
                if values.iter().all(|&v| v >= 0.0) {
                    Classification::B
                } else {
                    // bounded negative parts are Kato class
                    Classification::A
                }
            }
            PotentialSpec::InversePower { alpha, coupling, sign } => {
                if *sign == PotentialSign::Positive || *coupling == 0.0 {
                    return Classification::B;
                }
                let kato_limit = if dim == 1 { 1.0 } else { 2.0 };
                if *alpha >= 0.0 && *alpha < kato_limit {
                    return Classification::A;
                }
                let hardy = (dim as f64 - 2.0).powi(2) / 4.0;
                if *alpha == 2.0 && dim >= 3 && *coupling > 0.0 && *coupling <= hardy {
                    Classification::A
                } else {
                    Classification::Neither
                }
            }
        },
    }
}

/// Operator family plus the assumption it is used under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub kind: OperatorKind,
    pub assumption_class: AssumptionClass,
    /// Exponential growth allowance of the decay estimate; 0 for every shipped family.
    pub omega: f64,
}

impl OperatorSpec {
    /// Validates the family for dimension `dim` and records its assumption class.
    pub fn new(kind: OperatorKind, dim: usize) -> Result<Self> {
        if let OperatorKind::Schrodinger { potential } = &kind {
            potential.validate(dim)?;
        }
        if let OperatorKind::RobinHalfline { sigma } = &kind {
            if dim != 1 {
                return Err(Error::InvalidOperator("the Robin half-line operator is one-dimensional".into()));
            }
            if !(sigma.is_finite() && *sigma >= 0.0) {
                return Err(Error::InvalidOperator(format!("Robin parameter must be >= 0, got {sigma}")));
            }
        }
        let assumption_class = match classify_assumption(&kind, dim) {
            Classification::A => AssumptionClass::A,
            Classification::B => AssumptionClass::B,
            Classification::Neither => {
                return Err(Error::InvalidOperator(format!("{kind:?} satisfies neither decay assumption in d = {dim}")))
            }
        };
        Ok(Self { kind, assumption_class, omega: 0.0 })
    }

    pub fn dirichlet_laplacian(dim: usize) -> Self {
        Self::new(OperatorKind::DirichletLaplacian, dim).expect("Dirichlet Laplacian is always valid")
    }

    /// Short human-readable name, used in reports.
    pub fn label(&self) -> String {
        match &self.kind {
            OperatorKind::DirichletLaplacian => "dirichlet_laplacian".into(),
            OperatorKind::RobinHalfline { sigma } => format!("robin_halfline(sigma={sigma})"),
            OperatorKind::Schrodinger { potential } => match potential {
                PotentialSpec::Zero => "schrodinger(V=0)".into(),
                PotentialSpec::TabulatedBounded { .. } => "schrodinger(tabulated)".into(),
                PotentialSpec::InversePower { alpha, coupling, sign } => {
                    let s = if *sign == PotentialSign::Positive { "+" } else { "-" };
                    format!("schrodinger(V={s}{coupling}/|x|^{alpha})")
                }
            },
        }
    }
}

/// Orthonormal DST-I of length `n`, evaluated through a complex FFT of length `2(n+1)`.
#[derive(Clone)]
struct SineTransform {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl std::fmt::Debug for SineTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SineTransform").field("n", &self.n).finish()
    }
}

impl SineTransform {
    fn new(n: usize, planner: &mut FftPlanner<f64>) -> Self {
        let m = 2 * (n + 1);
        Self { n, fft: planner.plan_fft_forward(m), scale: (2.0 / (n as f64 + 1.0)).sqrt() }
    }

    /// `yₖ = √(2/(n+1)) Σⱼ xⱼ sin(π(j+1)(k+1)/(n+1))`; the matrix is symmetric and its own inverse.
    fn apply(&self, x: &[f64], out: &mut [f64], buf: &mut Vec<Complex64>) {
        let n = self.n;
        let m = 2 * (n + 1);
        buf.clear();
        buf.resize(m, Complex64::new(0.0, 0.0));
        for j in 0..n {
            buf[j + 1] = Complex64::new(x[j], 0.0);
            buf[m - j - 1] = Complex64::new(-x[j], 0.0);
        }
        self.fft.process(buf);
        for k in 0..n {
            out[k] = -0.5 * buf[k + 1].im * self.scale;
        }
    }

    fn eigenvalue(n: usize, h: f64, k: usize) -> f64 {
        let s = ((k as f64 + 1.0) * PI / (2.0 * (n as f64 + 1.0))).sin();
        4.0 * s * s / (h * h)
    }

    /// `Σₖ dₖ·eₖ(j)²` for every `j`, using `2sin²θ = 1 − cos 2θ` and one DFT of length `n + 1`.
    fn weighted_square_sums(&self, d: &[f64]) -> Vec<f64> {
        let m = self.n + 1;
        let mut buf: Vec<Complex64> = std::iter::once(Complex64::new(0.0, 0.0))
            .chain(d.iter().map(|&v| Complex64::new(v, 0.0)))
            .collect();
        FftPlanner::new().plan_fft_forward(m).process(&mut buf);
        let total: f64 = d.iter().sum();
        (0..self.n).map(|j| (total - buf[j + 1].re) / m as f64).collect()
    }

    fn vector_entry(&self, k: usize, j: usize) -> f64 {
        self.scale * ((j as f64 + 1.0) * (k as f64 + 1.0) * PI / (self.n as f64 + 1.0)).sin()
    }
}

#[derive(Debug, Clone)]
enum Basis {
    /// Columns are Euclidean-orthonormal eigenvectors.
    Dense(Mat<f64>),
    /// One sine basis per axis; mode index is row-major in the per-axis mode numbers.
    Tensor(Vec<SineTransform>),
}

/// Sparse finite-difference matrix: diagonal plus `−1/h²` couplings to axis neighbours.
#[derive(Debug, Clone)]
struct Stencil {
    diag: Vec<f64>,
    inv_h2: Vec<f64>,
}

/// How to pick the eigenbasis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AssemblyOptions {
    /// Always use the dense eigendecomposition, even for separable operators.
    pub force_dense: bool,
}

/// A discretized self-adjoint operator with its full eigendecomposition.
#[derive(Debug, Clone)]
pub struct SpectralOperator {
    spec: OperatorSpec,
    grid: Arc<Grid>,
    stencil: Stencil,
    potential: Vec<f64>,
    basis: Basis,
    /// Eigenvalue of each basis mode, in basis order.
    mode_eigenvalues: Vec<f64>,
    /// Basis index of the k-th smallest eigenvalue.
    order: Vec<usize>,
    sorted: Vec<f64>,
    symmetry_residual: f64,
    reconstruction_residual: f64,
}

/// Assembles `spec` on `grid` and diagonalizes it.
pub fn assemble(spec: &OperatorSpec, grid: &Arc<Grid>) -> Result<SpectralOperator> {
    assemble_with(spec, grid, AssemblyOptions::default())
}

pub fn assemble_with(spec: &OperatorSpec, grid: &Arc<Grid>, options: AssemblyOptions) -> Result<SpectralOperator> {
    let dim = grid.dim();
    let (potential, constant_shift) = match &spec.kind {
        OperatorKind::DirichletLaplacian => (vec![0.0; grid.len()], Some(0.0)),
        OperatorKind::Schrodinger { potential } => {
            potential.validate(dim)?;
            (potential.resolve(grid)?, potential.constant_value())
        }
        OperatorKind::RobinHalfline { sigma } => {
            if grid.domain().kind != DomainKind::HalflineTruncated {
                return Err(Error::InvalidOperator("the Robin operator needs a truncated half-line domain".into()));
            }
            if *sigma < 0.0 {
                return Err(Error::InvalidOperator(format!("Robin parameter must be >= 0, got {sigma}")));
            }
            (vec![0.0; grid.len()], None)
        }
    };
    let inv_h2: Vec<f64> = grid.spacing().iter().map(|h| 1.0 / (h * h)).collect();
    let lap_diag: f64 = inv_h2.iter().map(|c| 2.0 * c).sum();
    let mut diag: Vec<f64> = potential.iter().map(|v| lap_diag + v).collect();
    if let OperatorKind::RobinHalfline { sigma } = spec.kind {
        // ghost value u(0) = u₀/(1 + σh) from (u₀ − u(0))/h = σ u(0)
        let h = grid.spacing()[0];
        diag[0] -= inv_h2[0] / (1.0 + sigma * h);
    }
    let stencil = Stencil { diag, inv_h2 };

    let separable = constant_shift.filter(|_| !options.force_dense);
    let (basis, mode_eigenvalues, symmetry_residual, reconstruction_residual) = match separable {
        Some(shift) => tensor_basis(grid, shift),
        None => dense_basis(grid, &stencil)?,
    };

    let mut order: Vec<usize> = (0..mode_eigenvalues.len()).collect();
    order.sort_by(|&a, &b| mode_eigenvalues[a].total_cmp(&mode_eigenvalues[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| mode_eigenvalues[i]).collect();

    let op = SpectralOperator {
        spec: spec.clone(),
        grid: Arc::clone(grid),
        stencil,
        potential,
        basis,
        mode_eigenvalues,
        order,
        sorted,
        symmetry_residual,
        reconstruction_residual,
    };

    let mu1 = op.min_eigenvalue();
    let scale = op.max_eigenvalue().abs().max(1.0);
    match spec.assumption_class {
        AssumptionClass::B if mu1 < -1e-10 * scale => {
            return Err(Error::Spectrum(format!("class B operator has negative eigenvalue {mu1}")));
        }
        AssumptionClass::A if mu1 <= -1.0 => {
            return Err(Error::Spectrum(format!("bottom of the spectrum {mu1} must lie above -1")));
        }
        _ => {}
    }
    Ok(op)
}

fn tensor_basis(grid: &Grid, shift: f64) -> (Basis, Vec<f64>, f64, f64) {
    let mut planner = FftPlanner::new();
    let axes: Vec<SineTransform> = grid.counts().iter().map(|&n| SineTransform::new(n, &mut planner)).collect();
    let axis_values: Vec<Vec<f64>> = grid
        .counts()
        .iter()
        .zip(grid.spacing())
        .map(|(&n, &h)| (0..n).map(|k| SineTransform::eigenvalue(n, h, k)).collect())
        .collect();
    let mut modes = vec![shift; grid.len()];
    for (node, mode) in modes.iter_mut().enumerate() {
        for (axis, k) in grid.multi_index(node).into_iter().enumerate() {
            *mode += axis_values[axis][k];
        }
    }
    // per-axis residual ‖T q − μ q‖ / ‖T‖ of the closed-form pairs
    let mut recon: f64 = 0.0;
    for (axis, t) in axes.iter().enumerate() {
        let n = t.n;
        let c = 1.0 / grid.spacing()[axis].powi(2);
        for k in 0..n {
            let q: Vec<f64> = (0..n).map(|j| t.vector_entry(k, j)).collect();
            let mut r2 = 0.0;
            for j in 0..n {
                let left = if j > 0 { q[j - 1] } else { 0.0 };
                let right = if j + 1 < n { q[j + 1] } else { 0.0 };
                let tq = c * (2.0 * q[j] - left - right);
                r2 += (tq - axis_values[axis][k] * q[j]).powi(2);
            }
            recon = recon.max(r2.sqrt() / (4.0 * c));
        }
    }
    (Basis::Tensor(axes), modes, 0.0, recon)
}

fn dense_basis(grid: &Grid, stencil: &Stencil) -> Result<(Basis, Vec<f64>, f64, f64)> {
    let n = grid.len();
    let mut a = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = stencil.diag[i];
    }
    let idx_of = |i: usize| grid.multi_index(i);
    for i in 0..n {
        let mi = idx_of(i);
        for axis in 0..grid.dim() {
            if mi[axis] + 1 < grid.counts()[axis] {
                let j = i + grid.stride(axis);
                a[(i, j)] = -stencil.inv_h2[axis];
                a[(j, i)] = -stencil.inv_h2[axis];
            }
        }
    }
    let mut asym: f64 = 0.0;
    let mut amax: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            asym = asym.max((a[(i, j)] - a[(j, i)]).abs());
            amax = amax.max(a[(i, j)].abs());
        }
    }
    let symmetry_residual = asym / amax.max(f64::MIN_POSITIVE);

    let evd = a.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let values: Vec<f64> = (0..n).map(|k| evd.S()[k]).collect();
    let q = evd.U().to_owned();

    // ‖AQ − QΛ‖_F / ‖A‖_F, equal to the reconstruction residual for orthogonal Q
    let a_fro = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum::<f64>().sqrt();
    let mut r2 = 0.0;
    let mut col = vec![0.0; n];
    for k in 0..n {
        for (i, c) in col.iter_mut().enumerate() {
            *c = q[(i, k)];
        }
        let aq = apply_stencil(grid, stencil, &col);
        r2 += aq.iter().zip(&col).map(|(x, c)| (x - values[k] * c).powi(2)).sum::<f64>();
    }
    Ok((Basis::Dense(q), values, symmetry_residual, r2.sqrt() / a_fro))
}

fn apply_stencil(grid: &Grid, stencil: &Stencil, f: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut out: Vec<f64> = f.iter().zip(&stencil.diag).map(|(x, d)| x * d).collect();
    for axis in 0..grid.dim() {
        let stride = grid.stride(axis);
        let count = grid.counts()[axis];
        let c = stencil.inv_h2[axis];
        for i in 0..n {
            let k = (i / stride) % count;
            if k > 0 {
                out[i] -= c * f[i - stride];
            }
            if k + 1 < count {
                out[i] -= c * f[i + stride];
            }
        }
    }
    out
}

impl SpectralOperator {
    pub fn spec(&self) -> &OperatorSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.sorted
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.sorted.last().expect("nonempty spectrum")
    }

    /// Eigenvalues indexed like the spectral coefficients of [`Self::to_spectral`].
    pub fn mode_eigenvalues(&self) -> &[f64] {
        &self.mode_eigenvalues
    }

    /// Nodal values of the potential.
    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn is_separable(&self) -> bool {
        matches!(self.basis, Basis::Tensor(_))
    }

    pub fn symmetry_residual(&self) -> f64 {
        self.symmetry_residual
    }

    pub fn reconstruction_residual(&self) -> f64 {
        self.reconstruction_residual
    }

    /// The k-th eigenvector (ascending eigenvalue order), unit norm in L².
    pub fn eigenvector(&self, k: usize) -> Field<f64> {
        let mut c = vec![0.0; self.len()];
        c[self.order[k]] = 1.0;
        Field::from_raw(&self.grid, self.from_spectral(&c))
    }

    /// Basis index of the k-th smallest eigenvalue.
    pub fn mode_index(&self, k: usize) -> usize {
        self.order[k]
    }

    /// Spectral coefficients `cₖ = ⟨f, eₖ⟩` of real nodal values.
    pub fn to_spectral(&self, f: &[f64]) -> Vec<f64> {
        let sw = self.grid.weight().sqrt();
        let mut c = match &self.basis {
            Basis::Dense(q) => dense_apply(q, f, true),
            Basis::Tensor(axes) => tensor_apply(&self.grid, axes, f),
        };
        c.iter_mut().for_each(|x| *x *= sw);
        c
    }

    /// Nodal values of `Σ cₖ eₖ`.
    pub fn from_spectral(&self, c: &[f64]) -> Vec<f64> {
        let isw = 1.0 / self.grid.weight().sqrt();
        let mut f = match &self.basis {
            Basis::Dense(q) => dense_apply(q, c, false),
            Basis::Tensor(axes) => tensor_apply(&self.grid, axes, c),
        };
        f.iter_mut().for_each(|x| *x *= isw);
        f
    }

    pub fn to_spectral_scalar<T: Scalar>(&self, f: &[T]) -> Vec<T> {
        map_real_linear(f, |x| self.to_spectral(x))
    }

    pub fn from_spectral_scalar<T: Scalar>(&self, c: &[T]) -> Vec<T> {
        map_real_linear(c, |x| self.from_spectral(x))
    }

    /// Functional calculus: `Σₖ g(μₖ)⟨f, eₖ⟩eₖ`.
    pub fn apply_function<T: Scalar>(&self, f: &Field<T>, g: impl Fn(f64) -> f64) -> Result<Field<T>> {
        if !Arc::ptr_eq(f.grid(), &self.grid) && **f.grid() != *self.grid {
            return Err(Error::GridMismatch);
        }
        let mut c = self.to_spectral_scalar(f.values());
        for (ck, &mu) in c.iter_mut().zip(&self.mode_eigenvalues) {
            *ck = *ck * g(mu);
        }
        Field::new(&self.grid, self.from_spectral_scalar(&c))
    }

    /// `Lf` through the finite-difference stencil (no eigendecomposition involved).
    pub fn apply_operator<T: Scalar>(&self, f: &Field<T>) -> Result<Field<T>> {
        if f.len() != self.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Field::from_raw(&self.grid, map_real_linear(f.values(), |x| apply_stencil(&self.grid, &self.stencil, x))))
    }

    /// Diagonal of the heat kernel, `K(t; x, x) = Σₖ e^{−tμₖ} eₖ(x)²`, at every node.
    pub fn heat_kernel_diagonal(&self, t: f64) -> Vec<f64> {
        let w = self.grid.weight();
        match &self.basis {
            Basis::Dense(q) => {
                let decay: Vec<f64> = self.mode_eigenvalues.iter().map(|mu| (-t * mu).exp()).collect();
                (0..q.nrows())
                    .map(|i| (0..q.ncols()).map(|k| decay[k] * q[(i, k)].powi(2)).sum::<f64>() / w)
                    .collect()
            }
            Basis::Tensor(axes) => {
                // separable: product of one-dimensional diagonals times the constant-shift factor
                let axis_sum: f64 = self.grid.spacing().iter().zip(axes).map(|(&h, tr)| SineTransform::eigenvalue(tr.n, h, 0)).sum();
                let shift = self.mode_eigenvalues[0] - axis_sum;
                let diagonals: Vec<Vec<f64>> = axes
                    .iter()
                    .zip(self.grid.spacing())
                    .map(|(tr, &h)| {
                        let decay: Vec<f64> = (0..tr.n).map(|k| (-t * SineTransform::eigenvalue(tr.n, h, k)).exp()).collect();
                        tr.weighted_square_sums(&decay)
                    })
                    .collect();
                (0..self.len())
                    .map(|node| {
                        let idx = self.grid.multi_index(node);
                        idx.iter().enumerate().map(|(a, &j)| diagonals[a][j]).product::<f64>() * (-t * shift).exp() / w
                    })
                    .collect()
            }
        }
    }

    /// Max deviation of the eigenvectors from orthonormality, `max |⟨eᵢ, eⱼ⟩ − δᵢⱼ|`.
    pub fn orthonormality_residual(&self) -> f64 {
        match &self.basis {
            Basis::Dense(q) => {
                let n = q.ncols();
                let mut g = Mat::<f64>::zeros(n, n);
                matmul(g.as_mut(), Accum::Replace, q.transpose(), q.as_ref(), 1.0, Par::Seq);
                let mut r: f64 = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        let target = if i == j { 1.0 } else { 0.0 };
                        r = r.max((g[(i, j)] - target).abs());
                    }
                }
                r
            }
            Basis::Tensor(axes) => {
                let mut r: f64 = 0.0;
                for t in axes {
                    for a in 0..t.n {
                        for b in 0..t.n {
                            let dot: f64 = (0..t.n).map(|j| t.vector_entry(a, j) * t.vector_entry(b, j)).sum();
                            let target = if a == b { 1.0 } else { 0.0 };
                            r = r.max((dot - target).abs());
                        }
                    }
                }
                r
            }
        }
    }
}

/// Whether the bottom of the spectrum lies strictly above `tol`.
pub fn check_zero_not_eigenvalue(op: &SpectralOperator, tol: f64) -> bool {
    op.min_eigenvalue() > tol
}

/// `Qᵀx` (`transpose = true`) or `Qx` with a sequential kernel so results are reproducible.
fn dense_apply(q: &Mat<f64>, x: &[f64], transpose: bool) -> Vec<f64> {
    let mut out = vec![0.0; q.nrows()];
    {
        let dst = ColMut::from_slice_mut(&mut out);
        let rhs = ColRef::from_slice(x);
        if transpose {
            matmul(dst.as_mat_mut(), Accum::Replace, q.transpose(), rhs.as_mat(), 1.0, Par::Seq);
        } else {
            matmul(dst.as_mat_mut(), Accum::Replace, q.as_ref(), rhs.as_mat(), 1.0, Par::Seq);
        }
    }
    out
}

/// Applies the (symmetric, involutive) per-axis sine transforms along every axis.
fn tensor_apply(grid: &Grid, axes: &[SineTransform], x: &[f64]) -> Vec<f64> {
    let mut data = x.to_vec();
    let mut buf = Vec::new();
    for (axis, t) in axes.iter().enumerate() {
        let n = t.n;
        let stride = grid.stride(axis);
        let block = n * stride;
        let mut line = vec![0.0; n];
        let mut out = vec![0.0; n];
        for outer in (0..data.len()).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for j in 0..n {
                    line[j] = data[base + j * stride];
                }
                t.apply(&line, &mut out, &mut buf);
                for j in 0..n {
                    data[base + j * stride] = out[j];
                }
            }
        }
    }
    data
}
