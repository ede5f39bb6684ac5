//! Energy and Nehari functionals, Nehari projection, ground states, best
//! Sobolev constants and the mountain-pass level.
//!
//! With `A = I + L` (subcritical) or `A = L` (critical) and `σ = ±1` the sign
//! of the nonlinearity,
//!
//! ```text
//! E(u) = ½‖u‖²_E − σ/(p+1)·‖u‖_{p+1}^{p+1},   J(u) = ‖u‖²_E − σ‖u‖_{p+1}^{p+1},
//! ```
//!
//! where `‖u‖²_E = ⟨Au, u⟩` is evaluated mode by mode.

use serde::{Deserialize, Serialize};

use crate::discretization::{lp_norm_of, Field};
use crate::operators::SpectralOperator;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regime {
    Subcritical { p: f64 },
    Critical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearitySign {
    /// `+|u|^{p−1}u`, the focusing source term.
    #[default]
    Source,
    /// `−|u|^{p−1}u`.
    Absorbing,
}

/// Exponent, sign and energy space of the equation on a `dim`-dimensional domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquationMode {
    regime: Regime,
    sign: NonlinearitySign,
    dim: usize,
}

/// `(d+2)/(d−2)` for `d ≥ 3`, otherwise `∞`.
pub fn critical_exponent(dim: usize) -> f64 {
    if dim >= 3 {
        (dim as f64 + 2.0) / (dim as f64 - 2.0)
    } else {
        f64::INFINITY
    }
}

impl EquationMode {
    pub fn new(regime: Regime, sign: NonlinearitySign, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMode("dimension must be positive".into()));
        }
        let p_star = critical_exponent(dim);
        match regime {
            Regime::Subcritical { p } => {
                if !(p > 1.0 && p < p_star) {
                    return Err(Error::InvalidMode(format!("subcritical requires 1 < p < {p_star}, got p = {p}")));
                }
            }
            Regime::Critical => {
                if dim < 3 {
                    return Err(Error::InvalidMode(format!("critical requires d >= 3, got d = {dim}")));
                }
            }
        }
        Ok(Self { regime, sign, dim })
    }

    pub fn subcritical(p: f64, dim: usize) -> Result<Self> {
        Self::new(Regime::Subcritical { p }, NonlinearitySign::Source, dim)
    }

    pub fn critical(dim: usize) -> Result<Self> {
        Self::new(Regime::Critical, NonlinearitySign::Source, dim)
    }

    pub fn with_sign(mut self, sign: NonlinearitySign) -> Self {
        self.sign = sign;
        self
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn sign(&self) -> NonlinearitySign {
        self.sign
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn p(&self) -> f64 {
        match self.regime {
            Regime::Subcritical { p } => p,
            Regime::Critical => critical_exponent(self.dim),
        }
    }

    pub fn p_star(&self) -> f64 {
        critical_exponent(self.dim)
    }

    pub fn is_critical(&self) -> bool {
        matches!(self.regime, Regime::Critical)
    }

    /// 1 for `A = I + L`, 0 for `A = L`.
    pub fn shift(&self) -> f64 {
        if self.is_critical() {
            0.0
        } else {
            1.0
        }
    }

    pub fn sign_factor(&self) -> f64 {
        match self.sign {
            NonlinearitySign::Source => 1.0,
            NonlinearitySign::Absorbing => -1.0,
        }
    }

    /// `σ|u|^{p−1}u` pointwise.
    pub fn nonlinearity(&self, u: &[f64]) -> Vec<f64> {
        let (pm1, s) = (self.p() - 1.0, self.sign_factor());
        u.iter().map(|&v| s * v.abs().powf(pm1) * v).collect()
    }

    /// `(p−1)/(2(p+1))`, the ratio `l·S^{2(p+1)/(p−1)}`.
    pub fn level_factor(&self) -> f64 {
        let p = self.p();
        (p - 1.0) / (2.0 * (p + 1.0))
    }

    fn check_operator(&self, op: &SpectralOperator) -> Result<()> {
        if op.dim() != self.dim {
            return Err(Error::InvalidMode(format!(
                "mode is {}-dimensional but the operator is {}-dimensional",
                self.dim,
                op.dim()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Mplus,
    Mminus,
    OnNehari,
    AboveLevel,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub energy: f64,
    pub nehari: f64,
    pub energy_norm: f64,
    pub lp_norm: f64,
    pub membership: Membership,
    /// `E = l` up to rounding.
    pub borderline: bool,
    /// On the Nehari manifold strictly below the level, which cannot happen
    /// for an exact computation.
    pub inconsistent: bool,
}

/// `‖u‖²_E` from spectral coefficients.
pub(crate) fn energy_norm_sq_coeffs(op: &SpectralOperator, mode: &EquationMode, coeffs: &[f64]) -> f64 {
    let shift = mode.shift();
    coeffs.iter().zip(op.mode_eigenvalues()).map(|(c, mu)| (mu + shift) * c * c).sum()
}

pub fn energy_norm(u: &Field, op: &SpectralOperator, mode: &EquationMode) -> Result<f64> {
    check_grid(u, op)?;
    mode.check_operator(op)?;
    Ok(energy_norm_sq_coeffs(op, mode, &op.to_spectral(u.values())).max(0.0).sqrt())
}

fn check_grid(u: &Field, op: &SpectralOperator) -> Result<()> {
    if u.grid() != op.grid() && **u.grid() != **op.grid() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// Functional values assembled from `‖u‖²_E` and `‖u‖_{p+1}`.
pub(crate) fn report_from_norms(mode: &EquationMode, norm_sq: f64, lp: f64) -> FunctionalReport {
    let p = mode.p();
    let s = mode.sign_factor();
    let lp_pow = lp.powf(p + 1.0);
    let nehari = norm_sq - s * lp_pow;
    let membership = if norm_sq == 0.0 && lp == 0.0 {
        Membership::Zero
    } else if nehari.abs() <= 1e-8 * norm_sq {
        Membership::OnNehari
    } else if nehari > 0.0 {
        Membership::Mplus
    } else {
        Membership::Mminus
    };
    FunctionalReport {
        energy: 0.5 * norm_sq - s * lp_pow / (p + 1.0),
        nehari,
        energy_norm: norm_sq.max(0.0).sqrt(),
        lp_norm: lp,
        membership,
        borderline: false,
        inconsistent: false,
    }
}

/// Evaluates `E`, `J` and the norms. Without a level to compare against,
/// membership only reflects the sign of `J`; see [`classify`].
pub fn energy(u: &Field, op: &SpectralOperator, mode: &EquationMode) -> Result<FunctionalReport> {
    check_grid(u, op)?;
    mode.check_operator(op)?;
    let norm_sq = energy_norm_sq_coeffs(op, mode, &op.to_spectral(u.values()));
    let lp = lp_norm_of(u.values(), u.grid().weight(), mode.p() + 1.0);
    Ok(report_from_norms(mode, norm_sq, lp))
}

/// L²-gradient `Au − σ|u|^{p−1}u`.
pub fn energy_gradient(u: &Field, op: &SpectralOperator, mode: &EquationMode) -> Result<Field> {
    check_grid(u, op)?;
    mode.check_operator(op)?;
    let shift = mode.shift();
    let au = op.apply_function(u, |mu| mu + shift)?;
    let n = mode.nonlinearity(u.values());
    Ok(Field::from_raw(u.grid(), au.values().iter().zip(&n).map(|(a, b)| a - b).collect()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub lambda_star: f64,
    pub projected: Field,
    /// `max_λ E(λu) = E(λ* u)`.
    pub peak_energy: f64,
}

/// Rescales `u` onto the Nehari manifold: `λ* = (‖u‖²_E/‖u‖_{p+1}^{p+1})^{1/(p−1)}`.
pub fn nehari_projection(u: &Field, op: &SpectralOperator, mode: &EquationMode) -> Result<ProjectionResult> {
    if mode.sign() == NonlinearitySign::Absorbing {
        return Err(Error::InvalidMode("the absorbing equation has no Nehari manifold".into()));
    }
    let r = energy(u, op, mode)?;
    if r.lp_norm == 0.0 || r.energy_norm == 0.0 {
        return Err(Error::ZeroField);
    }
    let p = mode.p();
    // ratio of the two norms first, so large amplitudes do not overflow
    let lambda_star = (r.energy_norm / r.lp_norm).powf(2.0 / (p - 1.0)) / r.lp_norm;
    let projected = u.scaled(lambda_star);
    let peak_energy = mode.level_factor() * (lambda_star * r.energy_norm).powi(2);
    Ok(ProjectionResult { lambda_star, projected, peak_energy })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundStateConfig {
    pub max_iter: usize,
    /// Target for `‖∇E‖₂/‖u‖₂`.
    pub tol: f64,
    /// Width of the Gaussian starting bump; `None` picks `min(1, extent/8)`.
    pub initial_width: Option<f64>,
    /// History length of the Anderson mixing; 0 runs the plain iteration.
    pub anderson_depth: usize,
}

impl Default for GroundStateConfig {
    fn default() -> Self {
        Self { max_iter: 5000, tol: 1e-6, initial_width: None, anderson_depth: 5 }
    }
}

/// Anderson mixing for a fixed-point map `x ↦ g(x)`: extrapolates from the
/// last few residuals `g(x) − x` by least squares.
struct Anderson {
    depth: usize,
    xs: Vec<Vec<f64>>,
    fs: Vec<Vec<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Self { depth, xs: Vec::new(), fs: Vec::new() }
    }

    fn reset(&mut self) {
        self.xs.clear();
        self.fs.clear();
    }

    fn mix(&mut self, x: &[f64], gx: &[f64]) -> Vec<f64> {
        let f: Vec<f64> = gx.iter().zip(x).map(|(g, x)| g - x).collect();
        if self.depth == 0 {
            return gx.to_vec();
        }
        self.xs.push(x.to_vec());
        self.fs.push(f.clone());
        if self.xs.len() > self.depth + 1 {
            self.xs.remove(0);
            self.fs.remove(0);
        }
        let m = self.xs.len() - 1;
        if m == 0 {
            return gx.to_vec();
        }
        let diff = |v: &Vec<Vec<f64>>, j: usize| -> Vec<f64> { v[j + 1].iter().zip(&v[j]).map(|(a, b)| a - b).collect() };
        let df: Vec<Vec<f64>> = (0..m).map(|j| diff(&self.fs, j)).collect();
        let dx: Vec<Vec<f64>> = (0..m).map(|j| diff(&self.xs, j)).collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        // normal equations with a small Tikhonov term
        let mut gram = vec![vec![0.0; m]; m];
        let mut rhs = vec![0.0; m];
        for i in 0..m {
            for j in 0..m {
                gram[i][j] = dot(&df[i], &df[j]);
            }
            rhs[i] = dot(&df[i], &f);
        }
        let scale = (0..m).map(|i| gram[i][i]).fold(0.0, f64::max);
        for (i, row) in gram.iter_mut().enumerate() {
            row[i] += 1e-10 * scale;
        }
        let Some(gamma) = solve_small(gram, rhs) else {
            self.reset();
            return gx.to_vec();
        };
        let mut out = gx.to_vec();
        for j in 0..m {
            for (k, o) in out.iter_mut().enumerate() {
                *o -= gamma[j] * (dx[j][k] + df[j][k]);
            }
        }
        out
    }
}

/// Gaussian elimination with partial pivoting for a tiny dense system.
fn solve_small(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col] == 0.0 || !a[piv][col].is_finite() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

fn initial_bump(op: &SpectralOperator, width: Option<f64>) -> Result<Field> {
    let domain = op.grid().domain();
    let center = domain.center();
    let extent = domain.lower.iter().zip(&domain.upper).map(|(a, b)| b - a).fold(f64::INFINITY, f64::min);
    let sigma = width.unwrap_or_else(|| (extent / 8.0).min(1.0));
    Field::from_fn(op.grid(), |x| {
        let r2: f64 = x.iter().zip(&center).map(|(a, b)| (a - b).powi(2)).sum();
        (-r2 / (2.0 * sigma * sigma)).exp()
    })
}

fn relative_gradient(u: &Field, op: &SpectralOperator, mode: &EquationMode) -> Result<f64> {
    let g = energy_gradient(u, op, mode)?;
    let w = u.grid().weight();
    Ok(lp_norm_of(g.values(), w, 2.0) / lp_norm_of(u.values(), w, 2.0))
}

/// Positive ground state of `Au = |u|^{p−1}u` as the minimizer of `E` on the
/// Nehari manifold.
///
/// Each iterate takes a gradient step in the energy inner product,
/// `u ← A⁻¹(|u|^{p−1}u)`, and projects back with [`nehari_projection`]. The
/// projection removes the one expanding direction of the step (the ray
/// through the ground state), so the iteration contracts; the centered bump
/// keeps the neutral translation modes unexcited. Anderson mixing speeds up
/// the slow modes of profiles pinned only weakly by the boundary.
pub fn ground_state(op: &SpectralOperator, mode: &EquationMode, cfg: &GroundStateConfig) -> Result<Field> {
    if mode.is_critical() {
        return Err(Error::NotApplicable("critical ground states are not computed on truncated domains".into()));
    }
    if mode.sign() == NonlinearitySign::Absorbing {
        return Err(Error::InvalidMode("ground states need the source sign".into()));
    }
    mode.check_operator(op)?;
    if op.min_eigenvalue() + 1.0 <= 0.0 {
        return Err(Error::Spectrum("I + L is not positive".into()));
    }
    let fixed_point = |u: &Field| -> Result<Field> {
        let rhs = Field::from_raw(u.grid(), mode.nonlinearity(u.values()));
        let next = op.apply_function(&rhs, |mu| 1.0 / (mu + 1.0))?;
        Ok(nehari_projection(&next, op, mode)?.projected)
    };
    let mut u = nehari_projection(&initial_bump(op, cfg.initial_width)?, op, mode)?.projected;
    let mut residual = relative_gradient(&u, op, mode)?;
    let mut best = (u.clone(), residual);
    let mut mixer = Anderson::new(cfg.anderson_depth);
    for _ in 0..cfg.max_iter {
        if residual <= cfg.tol {
            return Ok(u);
        }
        let mapped = fixed_point(&u)?;
        let mixed = mixer.mix(u.values(), mapped.values());
        let candidate = match Field::new(u.grid(), mixed).and_then(|f| nehari_projection(&f, op, mode)) {
            Ok(p) => p.projected,
            Err(_) => {
                mixer.reset();
                mapped
            }
        };
        let r = relative_gradient(&candidate, op, mode)?;
        if r > 1e3 * best.1 {
            // extrapolation ran away; restart from the best iterate
            mixer.reset();
            u = best.0.clone();
            residual = best.1;
            continue;
        }
        u = candidate;
        residual = r;
        if residual < best.1 {
            best = (u.clone(), residual);
        }
    }
    let (u, residual) = best;
    if residual <= cfg.tol {
        return Ok(u);
    }
    Err(Error::NonConvergence { what: "ground state", iterations: cfg.max_iter, residual })
}

/// `‖f‖_{p+1}/‖f‖_E`.
pub fn sobolev_ratio(f: &Field, op: &SpectralOperator, mode: &EquationMode) -> Result<f64> {
    let r = energy(f, op, mode)?;
    if r.energy_norm == 0.0 {
        return Err(Error::ZeroField);
    }
    Ok(r.lp_norm / r.energy_norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatioConfig {
    pub max_iter: usize,
    /// Stop once the energy-space gradient of `ln ratio` falls below this.
    pub tol: f64,
    pub initial_width: Option<f64>,
}

impl Default for RatioConfig {
    fn default() -> Self {
        Self { max_iter: 20000, tol: 1e-7, initial_width: None }
    }
}

/// Maximizes `‖f‖_{p+1}/‖f‖_E` directly by gradient ascent on the unit
/// sphere of the energy space with Armijo backtracking. Independent of the
/// ground-state iteration; returns the ratio and the maximizer.
pub fn maximize_sobolev_ratio(op: &SpectralOperator, mode: &EquationMode, cfg: &RatioConfig) -> Result<(f64, Field)> {
    mode.check_operator(op)?;
    let shift = mode.shift();
    if op.min_eigenvalue() + shift <= 0.0 {
        return Err(Error::Spectrum("energy form is not positive".into()));
    }
    let q = mode.p() + 1.0;
    let grid = op.grid().clone();
    let w = grid.weight();
    let source = mode.with_sign(NonlinearitySign::Source);
    // Work in spectral coordinates, where the energy inner product is diagonal.
    let eig: Vec<f64> = op.mode_eigenvalues().iter().map(|mu| mu + shift).collect();
    let enorm = |c: &[f64]| c.iter().zip(&eig).map(|(x, a)| a * x * x).sum::<f64>().sqrt();
    let normalize = |c: Vec<f64>| {
        let n = enorm(&c);
        c.into_iter().map(|x| x / n).collect::<Vec<f64>>()
    };
    let objective = |c: &[f64]| lp_norm_of(&op.from_spectral(c), w, q).ln();

    let mut c = normalize(op.to_spectral(initial_bump(op, cfg.initial_width)?.values()));
    let mut value = objective(&c);
    let mut step = 1.0;
    let mut grad_norm = f64::INFINITY;
    for _ in 0..cfg.max_iter {
        // E-gradient of ln‖f‖_q at ‖f‖_E = 1: A⁻¹(|f|^{q−2}f)/‖f‖_q^q − f
        let f = op.from_spectral(&c);
        let lq = lp_norm_of(&f, w, q);
        let scaled: Vec<f64> = f.iter().map(|v| v / lq).collect();
        let nl = op.to_spectral(&source.nonlinearity(&scaled));
        let g: Vec<f64> = nl.iter().zip(&eig).zip(&c).map(|((n, a), x)| n / (a * lq) - x).collect();
        grad_norm = enorm(&g);
        if grad_norm <= cfg.tol {
            break;
        }
        let slope = grad_norm * grad_norm;
        let mut accepted = false;
        while step > 1e-14 {
            let trial = normalize(c.iter().zip(&g).map(|(x, d)| x + step * d).collect());
            let tv = objective(&trial);
            if tv >= value + 1e-4 * step * slope {
                c = trial;
                value = tv;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step = (step * 2.0).min(1.0);
    }
    if grad_norm > cfg.tol.max(1e-5) {
        return Err(Error::NonConvergence { what: "Sobolev ratio maximization", iterations: cfg.max_iter, residual: grad_norm });
    }
    let f = Field::new(&grid, op.from_spectral(&c))?;
    Ok((value.exp(), f))
}

/// Mountain-pass level `l = ((p−1)/(2(p+1)))·S^{−2(p+1)/(p−1)}`.
pub fn level_from_sobolev(s: f64, p: f64) -> f64 {
    (p - 1.0) / (2.0 * (p + 1.0)) * s.powf(-2.0 * (p + 1.0) / (p - 1.0))
}

/// Inverse of [`level_from_sobolev`].
pub fn sobolev_from_level(l: f64, p: f64) -> f64 {
    let c = (p - 1.0) / (2.0 * (p + 1.0));
    (l / c).powf(-(p - 1.0) / (2.0 * (p + 1.0)))
}

/// `S_{p+1}`: from the ground-state energy in subcritical mode, by direct
/// ratio maximization in critical mode.
pub fn best_sobolev_constant(op: &SpectralOperator, mode: &EquationMode) -> Result<f64> {
    let source = mode.with_sign(NonlinearitySign::Source);
    if mode.is_critical() {
        return Ok(maximize_sobolev_ratio(op, &source, &RatioConfig::default())?.0);
    }
    let phi = ground_state(op, &source, &GroundStateConfig::default())?;
    Ok(sobolev_from_level(energy(&phi, op, &source)?.energy, mode.p()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelMethod {
    NehariInf,
    SobolevFormula,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalConstants {
    pub p: f64,
    #[serde(rename = "S")]
    pub s: f64,
    pub l: f64,
    pub y_c: f64,
    /// A priori coercivity `J ≥ δ‖u‖²_E` on the stable set below the energy
    /// set by [`VariationalConstants::with_initial_energy`] (1 at zero energy).
    pub delta: f64,
    pub method: LevelMethod,
    #[serde(skip)]
    pub ground_state: Option<Field>,
}

impl VariationalConstants {
    pub fn from_sobolev(s: f64, p: f64, method: LevelMethod) -> Self {
        let y_c = s.powf(-2.0 * (p + 1.0) / (p - 1.0));
        Self { p, s, l: level_from_sobolev(s, p), y_c, delta: 1.0, method, ground_state: None }
    }

    /// `F(y) = y/2 − S^{p+1}y^{(p+1)/2}/(p+1)`, increasing on `(0, y_C)` with `F(y_C) = l`.
    pub fn energy_profile(&self, y: f64) -> f64 {
        let p = self.p;
        y / 2.0 - self.s.powf(p + 1.0) * y.powf((p + 1.0) / 2.0) / (p + 1.0)
    }

    /// `G(y) = y − S^{p+1}y^{(p+1)/2}`, a lower bound for `J` at `‖u‖²_E = y`.
    pub fn nehari_profile(&self, y: f64) -> f64 {
        y - self.s.powf(self.p + 1.0) * y.powf((self.p + 1.0) / 2.0)
    }

    /// Root `y₁ ∈ [0, y_C)` of `F(y₁) = e0`; `None` unless `e0 < l`.
    pub fn energy_radius(&self, e0: f64) -> Option<f64> {
        if !(e0 < self.l) {
            return None;
        }
        if e0 <= 0.0 {
            return Some(0.0);
        }
        let (mut lo, mut hi) = (0.0, self.y_c);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.energy_profile(mid) < e0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(hi)
    }

    /// `δ = 1 − S^{p+1}y₁^{(p−1)/2}` with `F(y₁) = e0`.
    pub fn coercivity_for_energy(&self, e0: f64) -> Option<f64> {
        self.energy_radius(e0)
            .map(|y1| 1.0 - self.s.powf(self.p + 1.0) * y1.powf((self.p - 1.0) / 2.0))
    }

    pub fn with_initial_energy(mut self, e0: f64) -> Self {
        self.delta = self.coercivity_for_energy(e0).unwrap_or(0.0);
        self
    }
}

/// Mountain-pass level by the Nehari infimum (ground-state energy, subcritical
/// only) or from the best Sobolev constant of a direct ratio maximization.
pub fn mountain_pass_level(op: &SpectralOperator, mode: &EquationMode, method: LevelMethod) -> Result<VariationalConstants> {
    let source = mode.with_sign(NonlinearitySign::Source);
    let p = mode.p();
    match method {
        LevelMethod::NehariInf => {
            if mode.is_critical() {
                return Err(Error::NotApplicable("the Nehari infimum route needs a subcritical ground state".into()));
            }
            let phi = ground_state(op, &source, &GroundStateConfig::default())?;
            let r = energy(&phi, op, &source)?;
            let pohozaev = source.level_factor() * r.energy_norm.powi(2);
            let mismatch = (r.energy - pohozaev).abs() / r.energy.abs();
            if mismatch > 1e-6 {
                return Err(Error::NonConvergence { what: "Pohozaev identity at the ground state", iterations: 0, residual: mismatch });
            }
            let mut consts = VariationalConstants::from_sobolev(sobolev_from_level(r.energy, p), p, method);
            // keep l exactly the ground-state energy
            consts.l = r.energy;
            consts.ground_state = Some(phi);
            Ok(consts)
        }
        LevelMethod::SobolevFormula => {
            let (s, _) = maximize_sobolev_ratio(op, &source, &RatioConfig::default())?;
            Ok(VariationalConstants::from_sobolev(s, p, method))
        }
    }
}

/// Places `u` relative to the stable and unstable sets below the level `l`.
pub fn classify(u: &Field, op: &SpectralOperator, mode: &EquationMode, consts: &VariationalConstants) -> Result<FunctionalReport> {
    let mut r = energy(u, op, mode)?;
    if r.membership == Membership::Zero {
        return Ok(r);
    }
    let band = 1e-12 * consts.l.abs().max(r.energy.abs());
    if r.energy >= consts.l - band {
        r.borderline = (r.energy - consts.l).abs() <= band;
        r.membership = Membership::AboveLevel;
    } else if r.membership == Membership::OnNehari {
        r.inconsistent = true;
    }
    Ok(r)
}

/// Upper bound for `S_{p+1}` from the integral representation
/// `A^{−1/2} = π^{−1/2}∫₀^∞ t^{−1/2}e^{−tA} dt` and the interpolated bound
/// `‖e^{−tL}‖_{2→q} ≤ ‖e^{−tL}‖_{2→2}^{2/q}·‖e^{−tL}‖_{2→∞}^{1−2/q}`.
///
/// After `t = s²` the integrand is non-increasing in `s`, so a left Riemann
/// sum plus a tail bound over-estimates the integral.
pub fn semigroup_sobolev_bound(op: &SpectralOperator, mode: &EquationMode) -> Result<f64> {
    mode.check_operator(op)?;
    let shift = mode.shift();
    let mu1 = op.min_eigenvalue();
    let c = mu1 + shift;
    if c <= 0.0 {
        return Err(Error::Spectrum("energy form is not positive".into()));
    }
    let theta = 1.0 - 2.0 / (mode.p() + 1.0);
    let sup_kernel = |t: f64| op.heat_kernel_diagonal(2.0 * t).into_iter().fold(0.0, f64::max);
    let norm_2q = |t: f64| (-mu1 * t).exp().powf(1.0 - theta) * sup_kernel(t).sqrt().powf(theta);
    let integrand = |s: f64| 2.0 * (-s * s * shift).exp() * norm_2q(s * s);
    let s_max = (40.0 / c).sqrt();
    let n = 400;
    let nodes: Vec<f64> = (0..=n).map(|i| s_max * (i as f64 / n as f64).powi(2)).collect();
    let mut total = 0.0;
    for pair in nodes.windows(2) {
        total += (pair[1] - pair[0]) * integrand(pair[0]);
    }
    // for t ≥ a², K(2t; x, x)e^{2μ₁t} is non-increasing
    let a2 = s_max * s_max;
    let tail_sup = (sup_kernel(a2) * (2.0 * mu1 * a2).exp()).sqrt().powf(theta);
    total += tail_sup * (-a2 * c).exp() / (s_max * c);
    Ok(total / std::f64::consts::PI.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{build_grid, DomainSpec};
    use crate::operators::{assemble, OperatorKind, OperatorSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;
    use std::sync::OnceLock;

    fn dirichlet(lo: f64, hi: f64, n: usize) -> SpectralOperator {
        let g = build_grid(DomainSpec::interval(lo, hi), n).unwrap();
        assemble(&OperatorSpec::dirichlet_laplacian(1), &g).unwrap()
    }

    fn cubic() -> EquationMode {
        EquationMode::subcritical(3.0, 1).unwrap()
    }

    struct Sech {
        op: SpectralOperator,
        phi: Field,
    }

    fn sech_case() -> &'static Sech {
        static CASE: OnceLock<Sech> = OnceLock::new();
        CASE.get_or_init(|| {
            let op = dirichlet(-20.0, 20.0, 1600);
            let phi = ground_state(&op, &cubic(), &GroundStateConfig::default()).unwrap();
            Sech { op, phi }
        })
    }

    fn random_field(op: &SpectralOperator, rng: &mut ChaCha8Rng) -> Field {
        // smooth-ish random data: a few random modes plus noise
        let mut c = vec![0.0; op.len()];
        for _ in 0..6 {
            let k = rng.gen_range(0..op.len().min(40));
            c[op.mode_index(k)] += rng.gen_range(-1.0..1.0);
        }
        let smooth = op.from_spectral(&c);
        Field::new(op.grid(), smooth.iter().map(|v| v + 0.01 * rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn mode_invariants() {
        assert!(EquationMode::subcritical(3.0, 1).is_ok());
        assert!(EquationMode::subcritical(1.0, 1).is_err());
        assert!(EquationMode::subcritical(5.0, 3).is_err());
        assert!(EquationMode::subcritical(4.9, 3).is_ok());
        let e = EquationMode::critical(2).unwrap_err();
        assert!(e.to_string().contains("critical requires d >= 3"));
        let c = EquationMode::critical(3).unwrap();
        assert_eq!(c.p(), 5.0);
        assert_eq!(c.shift(), 0.0);
        assert_eq!(EquationMode::critical(4).unwrap().p(), 3.0);
        assert!(cubic().p_star().is_infinite());
    }

    #[test]
    fn zero_field() {
        let op = dirichlet(0.0, PI, 50);
        let r = energy(&Field::zeros(op.grid()), &op, &cubic()).unwrap();
        assert_eq!((r.energy, r.nehari, r.membership), (0.0, 0.0, Membership::Zero));
        assert!(energy_gradient(&Field::zeros(op.grid()), &op, &cubic()).unwrap().is_zero());
        assert_eq!(nehari_projection(&Field::zeros(op.grid()), &op, &cubic()).unwrap_err(), Error::ZeroField);
    }

    #[test]
    fn sine_functionals_match_quadrature_oracle() {
        let op = dirichlet(0.0, PI, 400);
        let s = Field::from_fn(op.grid(), |x| x[0].sin()).unwrap();
        // ‖sin‖²_{H¹} = ∫cos² + ∫sin² = π, ∫sin⁴ = 3π/8
        let r = energy(&s, &op, &cubic()).unwrap();
        assert!((r.energy - 13.0 * PI / 32.0).abs() < 1e-3, "{}", r.energy);
        assert!((r.nehari - 5.0 * PI / 8.0).abs() < 1e-3, "{}", r.nehari);
        let proj = nehari_projection(&s, &op, &cubic()).unwrap();
        assert!((proj.lambda_star - (8.0f64 / 3.0).sqrt()).abs() < 1e-3);
        let on = energy(&proj.projected, &op, &cubic()).unwrap();
        assert!(on.nehari.abs() <= 1e-8 * on.energy_norm.powi(2));
        assert!((proj.peak_energy - on.energy).abs() <= 1e-12 * on.energy);
        assert!((nehari_projection(&proj.projected, &op, &cubic()).unwrap().lambda_star - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_closed_form() {
        // two nodes on (0, 3): h = w = 1, L + V has eigenvalue 1 + V on the constant vector;
        // u ≡ 2^{−1/4} and V = 2√2 − 2 give ‖u‖²_E = 4, ‖u‖⁴₄ = 1
        use crate::operators::PotentialSpec;
        let g = build_grid(DomainSpec::interval(0.0, 3.0), 2).unwrap();
        let v = 2.0 * 2f64.sqrt() - 2.0;
        let pot = PotentialSpec::TabulatedBounded { values: vec![v, v] };
        let op = assemble(&OperatorSpec::new(OperatorKind::Schrodinger { potential: pot }, 1).unwrap(), &g).unwrap();
        let a = 2f64.powf(-0.25);
        let u = Field::new(&g, vec![a, a]).unwrap();
        let r = energy(&u, &op, &cubic()).unwrap();
        assert!((r.energy_norm.powi(2) - 4.0).abs() < 1e-12 && (r.lp_norm - 1.0).abs() < 1e-12);
        let lambda = nehari_projection(&u, &op, &cubic()).unwrap().lambda_star;
        assert!((lambda - 2.0).abs() < 1e-12);
    }

    #[test]
    fn scaling_identity_and_directional_derivative() {
        let op = dirichlet(0.0, 3.0, 120);
        let mode = EquationMode::subcritical(2.5, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_field(&op, &mut rng);
        let v = random_field(&op, &mut rng);
        let r = energy(&u, &op, &mode).unwrap();
        let lam: f64 = 2.0;
        let direct = energy(&u.scaled(lam), &op, &mode).unwrap().energy;
        let poly = lam * lam / 2.0 * r.energy_norm.powi(2) - lam.powf(3.5) / 3.5 * r.lp_norm.powf(3.5);
        assert!((direct - poly).abs() <= 1e-10 * poly.abs().max(1.0));

        let eps = 1e-5;
        let g = energy_gradient(&u, &op, &mode).unwrap();
        let dd = crate::discretization::inner_product(&g, &v).unwrap();
        let fd = (energy(&u.lin_comb(1.0, &v, eps).unwrap(), &op, &mode).unwrap().energy
            - energy(&u.lin_comb(1.0, &v, -eps).unwrap(), &op, &mode).unwrap().energy)
            / (2.0 * eps);
        assert!((dd - fd).abs() <= 1e-6 * dd.abs().max(1e-3), "{dd} vs {fd}");

        // J = d/dλ E(λu) at λ = 1
        let fd_j = (energy(&u.scaled(1.0 + eps), &op, &mode).unwrap().energy
            - energy(&u.scaled(1.0 - eps), &op, &mode).unwrap().energy)
            / (2.0 * eps);
        assert!((fd_j - r.nehari).abs() <= 1e-6 * r.nehari.abs().max(1e-3));
    }

    #[test]
    fn absorbing_functionals_flip_the_nonlinear_sign() {
        let op = dirichlet(0.0, PI, 100);
        let s = Field::from_fn(op.grid(), |x| 2.0 * x[0].sin()).unwrap();
        let src = energy(&s, &op, &cubic()).unwrap();
        let abs = energy(&s, &op, &cubic().with_sign(NonlinearitySign::Absorbing)).unwrap();
        let quart = src.lp_norm.powi(4);
        assert!((abs.energy - src.energy - quart / 2.0).abs() < 1e-10 * quart);
        assert!(abs.nehari > 0.0 && src.nehari < 0.0);
        assert!(nehari_projection(&s, &op, &cubic().with_sign(NonlinearitySign::Absorbing)).is_err());
    }

    #[test]
    fn sech_ground_state() {
        let Sech { op, phi } = sech_case();
        let mode = cubic();
        for (i, v) in phi.values().iter().enumerate() {
            let x = op.grid().point(i)[0];
            if x.abs() <= 5.0 {
                let want = 2f64.sqrt() / x.cosh();
                assert!((v - want).abs() <= 1e-2 * want, "x={x}: {v} vs {want}");
            }
        }
        let r = energy(phi, op, &mode).unwrap();
        assert!((r.energy - 4.0 / 3.0).abs() <= 0.01 * 4.0 / 3.0);
        assert!(r.nehari.abs() <= 1e-6 * r.energy_norm.powi(2));
        assert!(relative_gradient(phi, op, &mode).unwrap() <= 1e-6);
        assert_eq!(energy(&phi.scaled(-1.0), op, &mode).unwrap().energy, r.energy);
        let pohozaev = mode.level_factor() * r.energy_norm.powi(2);
        assert!((r.energy - pohozaev).abs() <= 1e-6 * r.energy);
    }

    #[test]
    fn sech_sobolev_constant_and_two_routes() {
        let Sech { op, phi } = sech_case();
        let mode = cubic();
        let l = energy(phi, op, &mode).unwrap().energy;
        let s = sobolev_from_level(l, 3.0);
        let oracle = (3.0f64 / 16.0).powf(0.25);
        assert!((s - oracle).abs() <= 0.01 * oracle, "{s}");

        let (direct, maximizer) = maximize_sobolev_ratio(op, &mode, &RatioConfig::default()).unwrap();
        assert!((direct - s).abs() <= 1e-4 * s, "{direct} vs {s}");
        let ratio = sobolev_ratio(&maximizer, op, &mode).unwrap();
        assert!((sobolev_ratio(&maximizer.scaled(7.0), op, &mode).unwrap() - ratio).abs() <= 1e-12 * ratio);

        let formula = VariationalConstants::from_sobolev(direct, 3.0, LevelMethod::SobolevFormula);
        assert!((formula.l - 4.0 / 3.0).abs() <= 0.01 * 4.0 / 3.0);
        assert!((formula.l - l).abs() <= 0.01 * l);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let f = random_field(op, &mut rng);
            assert!(sobolev_ratio(&f, op, &mode).unwrap() <= direct * (1.0 + 1e-6));
        }
        let bound = semigroup_sobolev_bound(op, &mode).unwrap();
        assert!(bound >= direct, "{bound} < {direct}");
    }

    #[test]
    fn level_formula_constants() {
        let c = VariationalConstants::from_sobolev(1.0, 3.0, LevelMethod::SobolevFormula);
        assert!((c.l - 0.25).abs() < 1e-15 && (c.y_c - 1.0).abs() < 1e-15);
        assert!((c.energy_profile(c.y_c) - c.l).abs() < 1e-15);
        assert!((sobolev_from_level(level_from_sobolev(0.7, 2.5), 2.5) - 0.7).abs() < 1e-14);
        assert_eq!(c.coercivity_for_energy(0.0), Some(1.0));
        assert_eq!(c.coercivity_for_energy(0.25), None);
        let y1 = c.energy_radius(0.2).unwrap();
        assert!((c.energy_profile(y1) - 0.2).abs() < 1e-12 && y1 < c.y_c);
        let d = c.coercivity_for_energy(0.2).unwrap();
        assert!(d > 0.0 && d < 1.0);
        assert!((c.nehari_profile(y1) - d * y1).abs() < 1e-12);
    }

    #[test]
    fn classification_of_scaled_ground_states() {
        let Sech { op, phi } = sech_case();
        let mode = cubic();
        let consts = mountain_pass_level(op, &mode, LevelMethod::NehariInf).unwrap();
        let norm_sq = energy(phi, op, &mode).unwrap().energy_norm.powi(2);
        let half = classify(&phi.scaled(0.5), op, &mode, &consts).unwrap();
        assert_eq!(half.membership, Membership::Mplus);
        assert!((half.nehari - 0.25 * 0.75 * norm_sq).abs() <= 1e-9 * norm_sq);
        let big = classify(&phi.scaled(1.2), op, &mode, &consts).unwrap();
        assert_eq!(big.membership, Membership::Mminus);
        assert!((big.energy - 0.2016 * norm_sq).abs() <= 1e-9 * norm_sq);
        let two = classify(&phi.scaled(2.0), op, &mode, &consts).unwrap();
        assert_eq!(two.membership, Membership::Mminus);
        assert!(two.energy < 0.0);
        let on = classify(phi, op, &mode, &consts).unwrap();
        assert_eq!(on.membership, Membership::AboveLevel);
        assert!(on.borderline);
        assert!(classify(&Field::zeros(op.grid()), op, &mode, &consts).unwrap().membership == Membership::Zero);
    }

    #[test]
    fn two_routes_on_other_operator_families() {
        use crate::operators::{PotentialSign, PotentialSpec};
        let mode = cubic();
        let g = build_grid(DomainSpec::halfline(8.0), 300).unwrap();
        let robin = assemble(&OperatorSpec::new(OperatorKind::RobinHalfline { sigma: 1.0 }, 1).unwrap(), &g).unwrap();
        let g = build_grid(DomainSpec::interval(-10.0, 10.0), 400).unwrap();
        let pot = PotentialSpec::InversePower { alpha: 0.5, coupling: 0.3, sign: PotentialSign::Positive };
        let repulsive = assemble(&OperatorSpec::new(OperatorKind::Schrodinger { potential: pot }, 1).unwrap(), &g).unwrap();
        let well: Vec<f64> = (0..g.len()).map(|i| -0.5 / g.point(i)[0].cosh().powi(2)).collect();
        let pot = PotentialSpec::TabulatedBounded { values: well };
        let kato = assemble(&OperatorSpec::new(OperatorKind::Schrodinger { potential: pot }, 1).unwrap(), &g).unwrap();
        for op in [robin, repulsive, kato] {
            let a = mountain_pass_level(&op, &mode, LevelMethod::NehariInf).unwrap();
            let b = mountain_pass_level(&op, &mode, LevelMethod::SobolevFormula).unwrap();
            assert!((a.l - b.l).abs() <= 0.01 * a.l, "{} vs {}", a.l, b.l);
        }
    }

    #[test]
    fn critical_ratio_maximization_in_three_dimensions() {
        let g = build_grid(DomainSpec::cube(-1.0, 1.0, 3), 8).unwrap();
        let op = assemble(&OperatorSpec::dirichlet_laplacian(3), &g).unwrap();
        let mode = EquationMode::critical(3).unwrap();
        let s = best_sobolev_constant(&op, &mode).unwrap();
        assert!(s.is_finite() && s > 0.0);
        let bound = semigroup_sobolev_bound(&op, &mode).unwrap();
        assert!(bound >= s);
        assert!(mountain_pass_level(&op, &mode, LevelMethod::NehariInf).is_err());
        assert!(ground_state(&op, &mode, &GroundStateConfig::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn no_mans_land_below_the_level(seed in any::<u64>(), amp in 0.01f64..3.0) {
            let Sech { op, phi } = sech_case();
            let mode = cubic();
            static CONSTS: OnceLock<VariationalConstants> = OnceLock::new();
            let consts = CONSTS.get_or_init(|| VariationalConstants::from_sobolev(
                sobolev_from_level(energy(&sech_case().phi, &sech_case().op, &cubic()).unwrap().energy, 3.0),
                3.0, LevelMethod::NehariInf));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_field(op, &mut rng).scaled(amp);
            let r = energy(&f, op, &mode).unwrap();
            if r.energy < consts.l * (1.0 - 1e-3) {
                prop_assert!(r.nehari.abs() > 1e-6 * r.energy_norm.powi(2));
            }
            prop_assert!(r.lp_norm <= consts.s * r.energy_norm * (1.0 + 1e-6));
            let _ = phi;
        }

        #[test]
        fn projection_lands_on_the_manifold(seed in any::<u64>(), amp in 1e-3f64..1e3) {
            let op = dirichlet(0.0, 4.0, 64);
            let mode = EquationMode::subcritical(2.0, 1).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_field(&op, &mut rng).scaled(amp);
            let proj = nehari_projection(&f, &op, &mode).unwrap();
            let r = energy(&proj.projected, &op, &mode).unwrap();
            prop_assert!(r.nehari.abs() <= 1e-8 * r.energy_norm.powi(2));
            prop_assert!((proj.peak_energy - r.energy).abs() <= 1e-9 * r.energy);
        }
    }
}
