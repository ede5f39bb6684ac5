//! Heat semigroup, fractional powers and empirical checks of the decay
//! assumptions, all through the spectral calculus of [`SpectralOperator`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretization::{lp_norm, Field, Scalar};
use crate::operators::SpectralOperator;
use crate::{Error, Result};

/// `e^{−t(I+L)}f` when `shifted`, else `e^{−tL}f`.
pub fn apply_semigroup<T: Scalar>(op: &SpectralOperator, t: f64, f: &Field<T>, shifted: bool) -> Result<Field<T>> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    let shift = if shifted { 1.0 } else { 0.0 };
    op.apply_function(f, |mu| (-t * (mu + shift)).exp())
}

/// `(I+L)^{s/2}f`, or `L^{s/2}f` when `homogeneous`.
pub fn apply_power<T: Scalar>(op: &SpectralOperator, s: f64, f: &Field<T>, homogeneous: bool) -> Result<Field<T>> {
    if s == 0.0 {
        return Ok(f.clone());
    }
    let shift = if homogeneous { 0.0 } else { 1.0 };
    let base = op.min_eigenvalue() + shift;
    let scale = (op.max_eigenvalue() + shift).abs().max(1.0);
    if base < -1e-12 * scale || (base <= 1e-12 * scale && s < 0.0) {
        return Err(Error::InvalidPower { base, exponent: s / 2.0 });
    }
    let half = s / 2.0;
    op.apply_function(f, |mu| {
        let b = (mu + shift).max(0.0);
        if b == 0.0 {
            0.0
        } else {
            b.powf(half)
        }
    })
}

/// Column `K(t; ·, y)` of the discrete heat kernel of `e^{−tL}`.
pub fn heat_kernel_column(op: &SpectralOperator, t: f64, node: usize) -> Result<Field<f64>> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    if node >= op.len() {
        return Err(Error::InvalidGrid(format!("node {node} out of range")));
    }
    let mut delta = vec![0.0; op.len()];
    delta[node] = 1.0 / op.grid().weight();
    let delta = Field::new(op.grid(), delta)?;
    apply_semigroup(op, t, &delta, false)
}

/// Free heat kernel `(4πt)^{−d/2} exp(−r²/(4t))` on ℝᵈ.
pub fn free_heat_kernel(dim: usize, t: f64, distance: f64) -> f64 {
    (4.0 * std::f64::consts::PI * t).powf(-(dim as f64) / 2.0) * (-distance * distance / (4.0 * t)).exp()
}

/// Exponents and time samples of an L^q→L^r decay estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSpec {
    pub q: f64,
    pub r: f64,
    pub t_grid: Vec<f64>,
}

impl EstimateSpec {
    pub fn l2_to(r: f64, t_grid: Vec<f64>) -> Self {
        Self { q: 2.0, r, t_grid }
    }

    /// `log`-spaced samples over `[t_gap/10, t_gap]` with `t_gap = 1/(μ₁ + shift)`,
    /// the window where algebraic decay is visible before the spectral gap takes over.
    pub fn gap_window(op: &SpectralOperator, r: f64, shifted: bool, points: usize) -> Self {
        let bottom = op.min_eigenvalue() + if shifted { 1.0 } else { 0.0 };
        let t_gap = 1.0 / bottom.max(1e-12);
        Self::l2_to(r, log_space(t_gap / 10.0, t_gap, points))
    }

    /// Exponent γ with `1/γ = (d/2)(1/q − 1/r)`.
    pub fn gamma(&self, dim: usize) -> f64 {
        1.0 / (dim as f64 / 2.0 * (1.0 / self.q - 1.0 / self.r))
    }

    /// Predicted log-log slope `−(d/2)(1/q − 1/r)`.
    pub fn target_slope(&self, dim: usize) -> f64 {
        -(dim as f64) / 2.0 * (1.0 / self.q - 1.0 / self.r)
    }

    fn label(&self) -> String {
        let show = |x: f64| if x.is_infinite() { "inf".to_string() } else { format!("{x}") };
        format!("L{}->L{}", show(self.q), show(self.r))
    }
}

pub fn log_space(a: f64, b: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..points).map(|i| (la + (lb - la) * i as f64 / (points - 1) as f64).exp()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub operator: String,
    pub estimate: String,
    pub slope: f64,
    pub target: f64,
    /// `max_t ‖e^{−tA}‖·t^{−target}` over the sampled times.
    pub prefactor: f64,
    pub pass: bool,
    /// Worst-case ratio `‖e^{−tA}f‖_r/‖f‖₂` per sampled time.
    pub samples: Vec<(f64, f64)>,
}

/// Probe nodes at fixed fractions of every axis.
fn probe_nodes(op: &SpectralOperator) -> Vec<usize> {
    let grid = op.grid();
    [0.5, 0.3, 0.7, 0.1, 0.9]
        .iter()
        .map(|&frac| {
            let idx: Vec<usize> = grid
                .counts()
                .iter()
                .map(|&n| ((frac * (n - 1) as f64).round() as usize).min(n - 1))
                .collect();
            grid.linear_index(&idx)
        })
        .collect()
}

/// Worst-case `‖e^{−tA}f‖_r/‖f‖₂` at time `t`.
///
/// `r = 2` and `r = ∞` are exact operator norms: `e^{−t(μ₁+shift)}` and
/// `√max_x K(2t; x, x)`. Other exponents take the maximum over a probe family:
/// raw deltas and heat-smoothed deltas `K(t/2; ·, y)` (the L²→L^∞ extremals) at
/// five nodes, plus five random unit fields.
fn worst_ratio(op: &SpectralOperator, t: f64, r: f64, shifted: bool, rng: &mut ChaCha8Rng) -> Result<f64> {
    let shift = if shifted { 1.0 } else { 0.0 };
    if r == 2.0 {
        return Ok((-t * (op.min_eigenvalue() + shift)).exp());
    }
    if r.is_infinite() {
        let diag = op.heat_kernel_diagonal(2.0 * t);
        let max = diag.iter().cloned().fold(0.0, f64::max);
        return Ok(max.sqrt() * (-t * shift).exp());
    }
    let grid = op.grid();
    let mut probes = Vec::new();
    for node in probe_nodes(op) {
        let mut delta = vec![0.0; op.len()];
        delta[node] = 1.0;
        let delta = Field::new(grid, delta)?;
        probes.push(apply_semigroup(op, 0.5 * t, &delta, false)?);
        probes.push(delta);
    }
    for _ in 0..5 {
        probes.push(Field::new(grid, (0..op.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())?);
    }
    let mut worst: f64 = 0.0;
    for f in &probes {
        let n2 = lp_norm(f, 2.0)?;
        if n2 == 0.0 {
            continue;
        }
        let evolved = apply_semigroup(op, t, f, shifted)?;
        worst = worst.max(lp_norm(&evolved, r)? / n2);
    }
    Ok(worst)
}

/// Least-squares slope and intercept of `y` against `x`.
pub(crate) fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Fits the L²→L^r decay of the semigroup on `spec.t_grid`.
///
/// Passes when the measured decay is at least as fast as the predicted power
/// law (`slope ≤ target + 0.1`) and the prefactor is finite.
pub fn verify_l2lq_decay(op: &SpectralOperator, spec: &EstimateSpec, shifted: bool, seed: u64) -> Result<DecayReport> {
    if spec.t_grid.is_empty() {
        return Err(Error::EmptyInput("t_grid"));
    }
    if spec.q != 2.0 {
        return Err(Error::NotApplicable("decay is measured from L2 data only".into()));
    }
    if spec.t_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::NonPositiveTime(spec.t_grid.iter().cloned().fold(f64::INFINITY, f64::min)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = spec.target_slope(op.dim());
    let samples: Vec<(f64, f64)> = spec
        .t_grid
        .iter()
        .map(|&t| worst_ratio(op, t, spec.r, shifted, &mut rng).map(|v| (t, v)))
        .collect::<Result<_>>()?;
    let lx: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let ly: Vec<f64> = samples.iter().map(|s| s.1.max(f64::MIN_POSITIVE).ln()).collect();
    let (slope, _) = if samples.len() > 1 { fit_line(&lx, &ly) } else { (0.0, 0.0) };
    let prefactor = samples.iter().map(|&(t, v)| v * t.powf(-target)).fold(0.0, f64::max);
    let pass = slope <= target + 0.1 && prefactor.is_finite();
    Ok(DecayReport {
        operator: op.spec().label(),
        estimate: format!("{}{}", spec.label(), if shifted { "(shifted)" } else { "" }),
        slope,
        target,
        prefactor,
        pass,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussReport {
    pub operator: String,
    /// Smallest exponent constant `c` whose prefactor is within 5% of the best.
    pub c: f64,
    /// Prefactor `C` for the fitted `c`.
    pub big_c: f64,
    /// `max K(t; x, y) / K_free(t; x, y)` over the sampled pairs (domination by the free kernel).
    pub max_violation_ratio: f64,
    pub pairs: usize,
}

/// Samples the discrete kernel at five source nodes and the times in `t_grid`,
/// over pairs with `|x − y| ≤ max_scaled_distance·√t`, and fits
/// `K ≤ C t^{−d/2} exp(−|x−y|²/(ct))`.
pub fn verify_gaussian_bound(op: &SpectralOperator, t_grid: &[f64], max_scaled_distance: f64) -> Result<GaussReport> {
    if t_grid.is_empty() {
        return Err(Error::EmptyInput("t_grid"));
    }
    let d = op.dim();
    let grid = op.grid();
    // (t, r², K)
    let mut pts: Vec<(f64, f64, f64)> = Vec::new();
    let mut worst: f64 = 0.0;
    for &t in t_grid {
        for y in probe_nodes(op) {
            let col = heat_kernel_column(op, t, y)?;
            let py = grid.point(y);
            for (x, &k) in col.values().iter().enumerate() {
                let r2: f64 = grid.point(x).iter().zip(&py).map(|(a, b)| (a - b).powi(2)).sum();
                if r2 > max_scaled_distance.powi(2) * t {
                    continue;
                }
                worst = worst.max(k / free_heat_kernel(d, t, r2.sqrt()));
                pts.push((t, r2, k));
            }
        }
    }
    if pts.is_empty() {
        return Err(Error::EmptyInput("kernel sample pairs"));
    }
    let prefactor = |c: f64| {
        pts.iter()
            .map(|&(t, r2, k)| k * t.powf(d as f64 / 2.0) * (r2 / (c * t)).exp())
            .fold(0.0, f64::max)
    };
    let candidates = log_space(1.0, 64.0, 121);
    let best = prefactor(*candidates.last().unwrap());
    let c = candidates.iter().cloned().find(|&c| prefactor(c) <= 1.05 * best).unwrap_or(64.0);
    Ok(GaussReport {
        operator: op.spec().label(),
        c,
        big_c: prefactor(c),
        max_violation_ratio: worst,
        pairs: pts.len(),
    })
}

/// `‖e^{−tL}f‖_{L²(ℝ₊; Ḣ¹(L))} / ‖f‖₂`, evaluated mode by mode from
/// `∫₀^∞ μ e^{−2μt} dt = 1/2`. Zero field returns 0.
pub fn verify_spacetime<T: Scalar>(op: &SpectralOperator, f: &Field<T>) -> Result<f64> {
    if !(op.min_eigenvalue() > 0.0) {
        return Err(Error::NotApplicable(format!(
            "space-time estimate needs a positive spectrum, bottom is {}",
            op.min_eigenvalue()
        )));
    }
    let c = op.to_spectral_scalar(f.values());
    let mass: f64 = c.iter().map(|x| x.modulus_sqr()).sum();
    if mass == 0.0 {
        return Ok(0.0);
    }
    let spacetime: f64 = c
        .iter()
        .zip(op.mode_eigenvalues())
        .map(|(x, &mu)| x.modulus_sqr() * mu / (2.0 * mu))
        .sum();
    Ok((spacetime / mass).sqrt())
}
