//! Post-processing of trajectories: dissipation/blow-up verdicts, the
//! concavity functional, and monitors for the invariance, coercivity and
//! negativity properties of the stable and unstable sets.

use serde::{Deserialize, Serialize};

use crate::discretization::{lp_norm_of, Field};
use crate::evolution::{Trajectory, TrajectorySample};
use crate::operators::SpectralOperator;
use crate::variational::{energy_norm, EquationMode, VariationalConstants};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    Dissipates { rate_stat: f64 },
    BlowsUp { t_est: f64 },
    Undecided { reason: String },
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Dissipates { .. } => "Dissipates",
            Verdict::BlowsUp { .. } => "BlowsUp",
            Verdict::Undecided { .. } => "Undecided",
        }
    }
}

/// Classifies a finished trajectory.
///
/// Blow-up when a cap or step underflow set `t_detect`. Dissipation when the
/// energy norm fell below 10⁻³ of its initial value and, in subcritical mode,
/// `r(t) = √t·‖u(t)‖_E` is non-increasing over the last decade of sample
/// times; `rate_stat = r(final)/r(t_final/2)`.
pub fn verdict(traj: &Trajectory) -> Verdict {
    if let Some(t) = traj.t_detect {
        return Verdict::BlowsUp { t_est: t };
    }
    let Some(last) = traj.samples.last() else {
        return Verdict::Undecided { reason: "empty trajectory".into() };
    };
    let first = &traj.samples[0];
    if !(last.energy_norm < 1e-3 * first.energy_norm) {
        return Verdict::Undecided { reason: "no decay, no explosion within t_max".into() };
    }
    let r = |s: &TrajectorySample| s.t.sqrt() * s.energy_norm;
    let tail: Vec<&TrajectorySample> = traj.samples.iter().filter(|s| s.t >= last.t / 10.0).collect();
    let mid = traj
        .samples
        .iter()
        .min_by(|a, b| (a.t - last.t / 2.0).abs().total_cmp(&(b.t - last.t / 2.0).abs()))
        .expect("non-empty");
    let rate_stat = if r(mid) > 0.0 { r(last) / r(mid) } else { 0.0 };
    if !traj.mode.is_critical() {
        let monotone = tail.windows(2).all(|w| r(w[1]) <= r(w[0]));
        if !monotone || !(rate_stat < 1.0) {
            return Verdict::Undecided { reason: format!("energy decayed but sqrt(t)*norm is not decreasing (rate_stat {rate_stat})") };
        }
    }
    Verdict::Dissipates { rate_stat }
}

/// `χ_R = 1` on `|x − c| ≤ R`, `0` on `|x − c| ≥ R + 1`, with a smooth step
/// between, centered at the domain center `c`.
pub fn cutoff(grid: &crate::Grid, radius: f64) -> Vec<f64> {
    let center = grid.domain().center();
    let bump = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    (0..grid.len())
        .map(|i| {
            let x = grid.point(i);
            let r = x.iter().zip(&center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let s = radius + 1.0 - r;
            if s >= 1.0 {
                1.0
            } else if s <= 0.0 {
                0.0
            } else {
                bump(s) / (bump(s) + bump(1.0 - s))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcavityReport {
    #[serde(rename = "A")]
    pub a: f64,
    pub alpha: f64,
    #[serde(rename = "R")]
    pub radius: Option<f64>,
    pub times: Vec<f64>,
    pub i: Vec<f64>,
    pub i_prime: Vec<f64>,
    pub i_second: Vec<f64>,
    /// `min (I″I − (1+α)I′²)` over the final third of the samples.
    pub margin: f64,
    /// `A/(α‖χ_R u₀‖²)`, the latest time the concavity argument allows.
    pub t_tilde: f64,
}

/// Defaults `A = 10·max(1, ‖u₀‖²/(l − E(u₀)))`, `α = 0.1`.
pub fn default_concavity_parameters(u0_mass: f64, level: f64, e0: f64) -> (f64, f64) {
    let gap = level - e0;
    let ratio = if gap > 0.0 { u0_mass / gap } else { 1.0 };
    (10.0 * ratio.max(1.0), 0.1)
}

/// Second-order three-point derivative of `y` on uneven `x`; one-sided at the ends.
fn derivative(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            if i == 0 {
                (y[1] - y[0]) / (x[1] - x[0])
            } else if i == n - 1 {
                (y[n - 1] - y[n - 2]) / (x[n - 1] - x[n - 2])
            } else {
                let (h0, h1) = (x[i] - x[i - 1], x[i + 1] - x[i]);
                -h1 / (h0 * (h0 + h1)) * y[i - 1] + (h1 - h0) / (h0 * h1) * y[i] + h0 / (h1 * (h0 + h1)) * y[i + 1]
            }
        })
        .collect()
}

/// Concavity functional from a sampled series `I′(t)`.
pub fn concavity_from_series(times: &[f64], i_prime: &[f64], a: f64, alpha: f64, radius: Option<f64>) -> Result<ConcavityReport> {
    if times.len() < 5 {
        return Err(Error::InsufficientSamples { needed: 5, got: times.len() });
    }
    if !(a > 0.0 && alpha > 0.0) {
        return Err(Error::InvalidConfig(format!("A and alpha must be positive, got {a} and {alpha}")));
    }
    // drop repeated times so differences stay defined
    let mut t = vec![times[0]];
    let mut ip = vec![i_prime[0]];
    for (&ti, &v) in times.iter().zip(i_prime).skip(1) {
        if ti > *t.last().unwrap() {
            t.push(ti);
            ip.push(v);
        }
    }
    if t.len() < 5 {
        return Err(Error::InsufficientSamples { needed: 5, got: t.len() });
    }
    let mut i = vec![a];
    for k in 1..t.len() {
        i.push(i[k - 1] + 0.5 * (t[k] - t[k - 1]) * (ip[k] + ip[k - 1]));
    }
    let i_second = derivative(&t, &ip);
    let n = t.len();
    let start = (2 * n) / 3;
    let margin = (start..n - 1)
        .chain(std::iter::once(n - 1).filter(|_| start >= n - 1))
        .map(|k| i_second[k] * i[k] - (1.0 + alpha) * ip[k] * ip[k])
        .fold(f64::INFINITY, f64::min);
    let t_tilde = a / (alpha * ip[0]);
    Ok(ConcavityReport { a, alpha, radius, times: t, i, i_prime: ip, i_second, margin, t_tilde })
}

/// `I(t) = ∫₀ᵗ‖χ_R u‖² + A` along a trajectory; `I″` by differencing `I′`.
/// With a radius the stored states are weighted by [`cutoff`]; without one,
/// `I′` is the sampled mass.
pub fn concavity(traj: &Trajectory, a: f64, alpha: f64, radius: Option<f64>) -> Result<ConcavityReport> {
    if traj.mode.is_critical() && radius.is_none() {
        return Err(Error::InvalidConfig("critical mode needs a cutoff radius R".into()));
    }
    let times: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
    let i_prime: Vec<f64> = match radius {
        None => traj.samples.iter().map(|s| s.mass).collect(),
        Some(r) => {
            if traj.states.len() != traj.samples.len() {
                return Err(Error::NotApplicable("cutoff concavity needs stored states".into()));
            }
            let grid = traj.states[0].grid();
            let chi: Vec<f64> = cutoff(grid, r).iter().map(|c| c * c).collect();
            let w = grid.weight();
            traj.states
                .iter()
                .map(|u| w * u.values().iter().zip(&chi).map(|(v, c)| c * v * v).sum::<f64>())
                .collect()
        }
    };
    concavity_from_series(&times, &i_prime, a, alpha, radius)
}

fn check_initial_set(traj: &Trajectory, consts: &VariationalConstants) -> Result<f64> {
    let s0 = traj.samples.first().ok_or(Error::EmptyInput("trajectory samples"))?;
    if !(s0.energy < consts.l) || s0.nehari == 0.0 {
        return Err(Error::NotApplicable(format!(
            "initial datum is not in the stable or unstable set (E = {}, l = {}, J = {})",
            s0.energy, consts.l, s0.nehari
        )));
    }
    Ok(s0.nehari.signum())
}

/// `J` keeps its initial sign while `E < l`. Samples in the band
/// `|J| ≤ 10⁻⁸‖u‖²_E` only count as a violation when three or more occur in a row.
pub fn invariance_check(traj: &Trajectory, consts: &VariationalConstants) -> Result<bool> {
    let sign = check_initial_set(traj, consts)?;
    let mut band_run = 0;
    for s in &traj.samples {
        if !(s.energy < consts.l) {
            band_run = 0;
            continue;
        }
        if s.nehari.abs() <= 1e-8 * s.energy_norm * s.energy_norm {
            if s.energy_norm == 0.0 {
                continue;
            }
            band_run += 1;
            if band_run >= 3 {
                return Ok(false);
            }
            continue;
        }
        band_run = 0;
        if s.nehari.signum() != sign {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `δ̂ = min J/‖u‖²_E` over samples with `‖u‖_E ≥ 10⁻⁹`.
pub fn coercivity_check(traj: &Trajectory) -> Result<f64> {
    traj.samples
        .iter()
        .filter(|s| s.energy_norm >= 1e-9)
        .map(|s| s.nehari / (s.energy_norm * s.energy_norm))
        .reduce(f64::min)
        .ok_or(Error::EmptyInput("samples with nonzero energy norm"))
}

/// `max ‖u(t)‖²_E` over the samples, to compare against `y_C`.
pub fn max_energy_norm_sq(traj: &Trajectory) -> f64 {
    traj.samples.iter().map(|s| s.energy_norm * s.energy_norm).fold(0.0, f64::max)
}

/// `J < −(p+1)(l − E)` at every sample strictly before `t_detect`.
pub fn negativity_gap_check(traj: &Trajectory, consts: &VariationalConstants) -> Result<bool> {
    if check_initial_set(traj, consts)? > 0.0 {
        return Err(Error::NotApplicable("initial datum is in the stable set".into()));
    }
    let p = traj.mode.p();
    let before = |s: &&TrajectorySample| traj.t_detect.map_or(true, |t| s.t < t);
    Ok(traj.samples.iter().filter(before).all(|s| s.nehari < -(p + 1.0) * (consts.l - s.energy)))
}

/// `‖e^{−tL}u₀‖_{L^q((0,∞)×Ω)}`, `q = 2(d+2)/(d−2)`, by Simpson quadrature on
/// `(0, 10/μ₁)` plus a bound for the remaining tail.
pub fn linear_profile_smallness(u0: &Field, op: &SpectralOperator, mode: &EquationMode) -> Result<f64> {
    if !mode.is_critical() {
        return Err(Error::InvalidMode("the linear-profile norm is defined in critical mode".into()));
    }
    if op.spec().assumption_class == crate::AssumptionClass::A {
        return Err(Error::NotApplicable("needs an operator of class B".into()));
    }
    let mu1 = op.min_eigenvalue();
    if !(mu1 > 0.0) {
        return Err(Error::Spectrum(format!("needs a positive bottom eigenvalue, got {mu1}")));
    }
    let d = mode.dim() as f64;
    let q = 2.0 * (d + 2.0) / (d - 2.0);
    let w = op.grid().weight();
    let c0 = op.to_spectral(u0.values());
    let mu = op.mode_eigenvalues();
    let at = |t: f64| -> Vec<f64> { c0.iter().zip(mu).map(|(c, m)| c * (-t * m).exp()).collect() };
    let density = |t: f64| lp_norm_of(&op.from_spectral(&at(t)), w, q).powf(q);
    let t_cap = 10.0 / mu1;
    // t = T s², dense near t = 0 where high modes decay
    let n = 400;
    let g = |s: f64| 2.0 * t_cap * s * density(t_cap * s * s);
    let hs = 1.0 / n as f64;
    let mut integral = g(0.0) + g(1.0);
    for k in 1..n {
        integral += if k % 2 == 1 { 4.0 } else { 2.0 } * g(k as f64 * hs);
    }
    integral *= hs / 3.0;
    // ‖f‖_q^q ≤ ‖f‖_∞^{q−2}‖f‖₂² ≤ w^{−(q−2)/2}‖f‖₂^q and ‖f(t)‖₂ ≤ e^{−μ₁(t−T)}‖f(T)‖₂
    let l2_cap = at(t_cap).iter().map(|x| x * x).sum::<f64>().sqrt();
    integral += w.powf(-(q - 2.0) / 2.0) * l2_cap.powf(q) / (q * mu1);
    Ok(integral.powf(1.0 / q))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPoint {
    pub t: f64,
    pub tau: f64,
    pub total: f64,
    /// `‖e^{−tL}u₀‖_E`.
    pub linear: f64,
    /// `‖e^{−(t−τ)L}(u(τ) − e^{−τL}u₀)‖_E`, the Duhamel integral over `(0, τ)`.
    pub early: f64,
    /// `‖u(t) − e^{−(t−τ)L}u(τ)‖_E`, the Duhamel integral over `(τ, t)`.
    pub late: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingReport {
    pub points: Vec<SplitPoint>,
    /// `max ‖u(t) − (linear + early + late)‖_E / ‖u(t)‖_E`.
    pub reconstruction_residual: f64,
    /// `total ≤ linear + early + late` at every checkpoint.
    pub triangle_holds: bool,
}

/// Splits `u(t)` at `checkpoints` sample indices into the linear flow and the
/// two Duhamel pieces before and after `τ ≈ t/2`.
pub fn splitting_check(traj: &Trajectory, op: &SpectralOperator, checkpoints: &[usize]) -> Result<SplittingReport> {
    if traj.states.len() != traj.samples.len() || traj.states.is_empty() {
        return Err(Error::NotApplicable("splitting check needs stored states".into()));
    }
    let mode = traj.mode;
    let shift = mode.shift();
    let flow = |t: f64, f: &Field| op.apply_function(f, |mu| (-t * (mu + shift)).exp());
    let u0 = &traj.states[0];
    let mut points = Vec::new();
    let mut residual: f64 = 0.0;
    let mut triangle = true;
    for &k in checkpoints {
        let t = traj.samples.get(k).ok_or(Error::InvalidConfig(format!("checkpoint {k} out of range")))?.t;
        let j = (0..=k)
            .min_by(|&a, &b| (traj.samples[a].t - t / 2.0).abs().total_cmp(&(traj.samples[b].t - t / 2.0).abs()))
            .unwrap();
        let tau = traj.samples[j].t;
        let lin = flow(t, u0)?;
        let early = flow(t - tau, &traj.states[j].try_sub(&flow(tau, u0)?)?)?;
        let late = traj.states[k].try_sub(&flow(t - tau, &traj.states[j])?)?;
        let sum = lin.try_add(&early)?.try_add(&late)?;
        let total = energy_norm(&traj.states[k], op, &mode)?;
        let point = SplitPoint {
            t,
            tau,
            total,
            linear: energy_norm(&lin, op, &mode)?,
            early: energy_norm(&early, op, &mode)?,
            late: energy_norm(&late, op, &mode)?,
        };
        if total > 0.0 {
            residual = residual.max(energy_norm(&sum.try_sub(&traj.states[k])?, op, &mode)? / total);
        }
        triangle &= point.total <= (point.linear + point.early + point.late) * (1.0 + 1e-12);
        points.push(point);
    }
    Ok(SplittingReport { points, reconstruction_residual: residual, triangle_holds: triangle })
}
