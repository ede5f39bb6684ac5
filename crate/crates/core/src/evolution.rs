//! Time integration of `∂ₜu + Au = σ|u|^{p−1}u` with exponential
//! integrators in the eigenbasis of `A`, where the linear flow is exact.
//!
//! All stepping happens on spectral coefficients; by Parseval their
//! Euclidean norm is the discrete L² norm, so step-doubling errors and mass
//! are measured there directly.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::diagnostics::Verdict;
use crate::discretization::{lp_norm_of, Field};
use crate::operators::SpectralOperator;
use crate::variational::{energy_norm_sq_coeffs, report_from_norms, EquationMode, FunctionalReport};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ExponentialEuler,
    #[default]
    Etdrk2,
}

impl Scheme {
    fn order(self) -> f64 {
        match self {
            Scheme::ExponentialEuler => 1.0,
            Scheme::Etdrk2 => 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Step-doubling error target, relative to the L² norm of the state.
    pub rel_tol: f64,
    pub t_max: f64,
    pub blowup_sup_cap: f64,
    pub blowup_energy_cap: f64,
    pub scheme: Scheme,
    /// Sampling cadence; steps are shortened to land on every multiple.
    pub sample_dt: f64,
    /// Extra sample whenever mass or sup norm moved by this fraction since the last one.
    pub growth_trigger: f64,
    /// Drop the nonlinearity (linear test mode).
    pub linear: bool,
    /// Keep the state at every sample.
    pub store_states: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt_init: 1e-3,
            dt_min: 1e-14,
            dt_max: 0.05,
            rel_tol: 1e-6,
            t_max: 20.0,
            blowup_sup_cap: 1e6,
            blowup_energy_cap: 1e100,
            scheme: Scheme::Etdrk2,
            sample_dt: 0.01,
            growth_trigger: 0.005,
            linear: false,
            store_states: true,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.dt_init > 0.0 && self.dt_min > 0.0) {
            return bad("dt_init and dt_min must be positive".into());
        }
        if !(self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return bad(format!(
                "need dt_min <= dt_init <= dt_max, got {} / {} / {}",
                self.dt_min, self.dt_init, self.dt_max
            ));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return bad(format!("rel_tol must lie in (0, 1), got {}", self.rel_tol));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return bad(format!("t_max must be positive and finite, got {}", self.t_max));
        }
        if !(self.blowup_sup_cap > 0.0 && self.blowup_energy_cap > 0.0) {
            return bad("blow-up caps must be positive".into());
        }
        if !(self.sample_dt > 0.0) {
            return bad(format!("sample_dt must be positive, got {}", self.sample_dt));
        }
        if !(self.growth_trigger > 0.0) {
            return bad(format!("growth_trigger must be positive, got {}", self.growth_trigger));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub mass: f64,
    pub energy_norm: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    #[serde(rename = "J")]
    pub nehari: f64,
    #[serde(rename = "lp")]
    pub lp_norm: f64,
    #[serde(rename = "sup")]
    pub sup_norm: f64,
    /// `∫₀ᵗ ‖uₛ‖² ds`.
    pub dissipation_cum: f64,
    /// Space-time norm `‖u‖_{L^q((0,t)×Ω)}`, `q = 2(d+2)/(d−2)`; 0 outside critical mode.
    pub s_norm_cum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    TMax,
    SupCap,
    EnergyCap,
    StepUnderflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub smallest_dt: f64,
    pub largest_dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    /// State at each sample when `store_states` is set.
    pub states: Vec<Field>,
    pub mode: EquationMode,
    pub verdict: Option<Verdict>,
    pub t_detect: Option<f64>,
    pub halt: HaltReason,
    pub stats: StepStats,
}

pub const CSV_HEADER: &str = "t,mass,energy_norm,E,J,lp,sup,dissipation_cum,s_norm_cum";

impl Trajectory {
    pub fn initial(&self) -> &TrajectorySample {
        &self.samples[0]
    }

    pub fn last(&self) -> &TrajectorySample {
        self.samples.last().expect("trajectory has at least one sample")
    }

    /// CSV with the fixed header and shortest round-trip decimals.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for s in &self.samples {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                s.t, s.mass, s.energy_norm, s.energy, s.nehari, s.lp_norm, s.sup_norm, s.dissipation_cum, s.s_norm_cum
            )?;
        }
        Ok(())
    }
}

/// `φ₁(z) = (e^z − 1)/z`.
fn phi1(z: f64) -> f64 {
    if z == 0.0 {
        1.0
    } else {
        z.exp_m1() / z
    }
}

/// `φ₂(z) = (e^z − 1 − z)/z²`, by series near 0.
fn phi2(z: f64) -> f64 {
    if z.abs() < 1e-2 {
        1.0 / 2.0 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z * (1.0 / 120.0 + z / 720.0)))
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

/// Exponential propagator on spectral coefficients.
pub(crate) struct Propagator<'a> {
    op: &'a SpectralOperator,
    mode: EquationMode,
    linear: bool,
    /// Eigenvalues of `A` in mode order.
    symbol: Vec<f64>,
}

impl<'a> Propagator<'a> {
    pub(crate) fn new(op: &'a SpectralOperator, mode: &EquationMode, linear: bool) -> Self {
        let shift = mode.shift();
        let symbol = op.mode_eigenvalues().iter().map(|mu| mu + shift).collect();
        Self { op, mode: *mode, linear, symbol }
    }

    /// Coefficients of `N(u)`, or `None` on overflow.
    pub(crate) fn nonlinear(&self, c: &[f64]) -> Option<Vec<f64>> {
        if self.linear {
            return Some(vec![0.0; c.len()]);
        }
        let u = self.op.from_spectral(c);
        let n = self.mode.nonlinearity(&u);
        if n.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(self.op.to_spectral(&n))
    }

    pub(crate) fn step(&self, c: &[f64], h: f64, scheme: Scheme) -> Option<Vec<f64>> {
        let n0 = self.nonlinear(c)?;
        let mut out = Vec::with_capacity(c.len());
        for (k, &a) in self.symbol.iter().enumerate() {
            let z = -h * a;
            out.push(z.exp() * c[k] + h * phi1(z) * n0[k]);
        }
        if scheme == Scheme::Etdrk2 && !self.linear {
            let n1 = self.nonlinear(&out)?;
            for (k, &a) in self.symbol.iter().enumerate() {
                out[k] += h * phi2(-h * a) * (n1[k] - n0[k]);
            }
        }
        out.iter().all(|v| v.is_finite()).then_some(out)
    }

    /// Coefficients of `uₜ = −Au + N(u)`.
    fn time_derivative(&self, c: &[f64]) -> Option<Vec<f64>> {
        let n = self.nonlinear(c)?;
        Some(self.symbol.iter().zip(c).zip(&n).map(|((a, x), nk)| -a * x + nk).collect())
    }
}

fn norm2(c: &[f64]) -> f64 {
    c.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_inputs(u: &Field, op: &SpectralOperator, mode: &EquationMode) -> Result<()> {
    if **u.grid() != **op.grid() {
        return Err(Error::GridMismatch);
    }
    if op.dim() != mode.dim() {
        return Err(Error::InvalidMode(format!("mode is {}-dimensional, operator {}-dimensional", mode.dim(), op.dim())));
    }
    Ok(())
}

/// One exponential step of size `dt`. Overflow of the nonlinearity is
/// reported as [`Error::NonFiniteValue`] so callers can treat it as blow-up.
pub fn step(u: &Field, dt: f64, op: &SpectralOperator, mode: &EquationMode, scheme: Scheme) -> Result<Field> {
    if !(dt > 0.0) {
        return Err(Error::NonPositiveTime(dt));
    }
    check_inputs(u, op, mode)?;
    let prop = Propagator::new(op, mode, false);
    let c = prop.step(&op.to_spectral(u.values()), dt, scheme).ok_or(Error::NonFiniteValue(0))?;
    Field::new(u.grid(), op.from_spectral(&c))
}

struct SampleState {
    report: FunctionalReport,
    mass: f64,
    sup: f64,
}

/// Functionals at `c`; in linear test mode `E = ½‖u‖²_E` and `J = ‖u‖²_E`,
/// the Lyapunov pair of the linear flow.
fn evaluate(op: &SpectralOperator, mode: &EquationMode, linear: bool, c: &[f64]) -> (SampleState, Vec<f64>) {
    let u = op.from_spectral(c);
    let w = op.grid().weight();
    let lp = lp_norm_of(&u, w, mode.p() + 1.0);
    let norm_sq = energy_norm_sq_coeffs(op, mode, c);
    let mut report = report_from_norms(mode, norm_sq, lp);
    if linear {
        report.energy = 0.5 * norm_sq;
        report.nehari = norm_sq;
    }
    let sup = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (SampleState { report, mass: c.iter().map(|x| x * x).sum(), sup }, u)
}

/// Adaptive integration with step doubling.
///
/// Halts at `t_max`, when the sup norm or energy norm passes its cap, or when
/// the step size falls below `dt_min` (or below `8ε·t`, where the time axis
/// stops resolving steps); the last two set `t_detect`.
pub fn integrate(u0: &Field, op: &SpectralOperator, mode: &EquationMode, cfg: &IntegratorConfig) -> Result<Trajectory> {
    cfg.validate()?;
    check_inputs(u0, op, mode)?;
    let prop = Propagator::new(op, mode, cfg.linear);
    let w = op.grid().weight();
    let q_space_time = if mode.is_critical() {
        let d = mode.dim() as f64;
        Some(2.0 * (d + 2.0) / (d - 2.0))
    } else {
        None
    };
    let dissipation_rate = |c: &[f64]| prop.time_derivative(c).map(|v| v.iter().map(|x| x * x).sum::<f64>());
    let space_time_rate = |c: &[f64]| match q_space_time {
        Some(q) => lp_norm_of(&op.from_spectral(c), w, q).powf(q),
        None => 0.0,
    };

    let mut c = op.to_spectral(u0.values());
    let floor = 1e-10 * norm2(&c).max(f64::MIN_POSITIVE);
    let mut t = 0.0;
    let mut dt = cfg.dt_init;
    let mut dissipation = 0.0;
    let mut space_time = 0.0;
    let mut samples = Vec::new();
    let mut states = Vec::new();
    let mut stats = StepStats { smallest_dt: f64::INFINITY, ..Default::default() };
    let mut t_detect = None;

    let record = |t: f64, c: &[f64], dissipation: f64, space_time: f64, samples: &mut Vec<TrajectorySample>, states: &mut Vec<Field>| {
        let (s, u) = evaluate(op, mode, cfg.linear, c);
        samples.push(TrajectorySample {
            t,
            mass: s.mass,
            energy_norm: s.report.energy_norm,
            energy: s.report.energy,
            nehari: s.report.nehari,
            lp_norm: s.report.lp_norm,
            sup_norm: s.sup,
            dissipation_cum: dissipation,
            s_norm_cum: q_space_time.map_or(0.0, |q| space_time.powf(1.0 / q)),
        });
        if cfg.store_states {
            states.push(Field::from_raw(op.grid(), u));
        }
        s
    };

    let first = record(0.0, &c, 0.0, 0.0, &mut samples, &mut states);
    if first.sup > cfg.blowup_sup_cap || first.report.energy_norm > cfg.blowup_energy_cap {
        return Ok(Trajectory { samples, states, mode: *mode, verdict: None, t_detect: Some(0.0), halt: HaltReason::SupCap, stats });
    }
    let (mut last_mass, mut last_sup) = (first.mass, first.sup);
    let mut rate_here = dissipation_rate(&c).unwrap_or(f64::INFINITY);
    let mut st_here = space_time_rate(&c);
    let mut next_sample = cfg.sample_dt;
    let exponent = 1.0 / (cfg.scheme.order() + 1.0);
    let end_eps = 1e-12 * cfg.t_max;

    let halt = loop {
        if t >= cfg.t_max - end_eps {
            break HaltReason::TMax;
        }
        let h = dt.min(cfg.t_max - t).min(next_sample - t);
        let clamped = h < dt;
        let trial = prop.step(&c, h, cfg.scheme).and_then(|full| {
            let half = prop.step(&c, 0.5 * h, cfg.scheme)?;
            let two = prop.step(&half, 0.5 * h, cfg.scheme)?;
            Some((full, half, two))
        });
        let Some((full, half, two)) = trial else {
            stats.rejected += 1;
            dt = 0.25 * h;
            if dt < cfg.dt_min {
                t_detect = Some(t);
                break HaltReason::StepUnderflow;
            }
            continue;
        };
        let diff: Vec<f64> = full.iter().zip(&two).map(|(a, b)| a - b).collect();
        let err = norm2(&diff) / (cfg.rel_tol * norm2(&two).max(floor));
        let factor = if err > 0.0 { 0.9 * err.powf(-exponent) } else { 2.0 };
        if err > 1.0 {
            stats.rejected += 1;
            dt = h * factor.clamp(0.2, 1.0);
            if dt < cfg.dt_min {
                t_detect = Some(t);
                break HaltReason::StepUnderflow;
            }
            continue;
        }
        // local extrapolation: the two half steps plus their estimated error
        let gain = 1.0 / (2f64.powf(cfg.scheme.order()) - 1.0);
        let two: Vec<f64> = two.iter().zip(&full).map(|(b, a)| b + gain * (b - a)).collect();
        let (Some(rate_half), Some(rate_next)) = (dissipation_rate(&half), dissipation_rate(&two)) else {
            stats.rejected += 1;
            dt = 0.25 * h;
            if dt < cfg.dt_min {
                t_detect = Some(t);
                break HaltReason::StepUnderflow;
            }
            continue;
        };
        // Simpson on the step-doubling midpoint
        dissipation += h / 6.0 * (rate_here + 4.0 * rate_half + rate_next);
        let st_next = space_time_rate(&two);
        space_time += h / 6.0 * (st_here + 4.0 * space_time_rate(&half) + st_next);
        rate_here = rate_next;
        st_here = st_next;
        c = two;
        t += h;
        stats.accepted += 1;
        stats.smallest_dt = stats.smallest_dt.min(h);
        stats.largest_dt = stats.largest_dt.max(h);
        let grown = (h * factor.clamp(0.2, 2.0)).min(cfg.dt_max);
        dt = if clamped { grown.max(dt) } else { grown };

        let (s, _) = evaluate(op, mode, cfg.linear, &c);
        let capped = if s.sup > cfg.blowup_sup_cap {
            Some(HaltReason::SupCap)
        } else if s.report.energy_norm > cfg.blowup_energy_cap {
            Some(HaltReason::EnergyCap)
        } else {
            None
        };
        let on_cadence = t >= next_sample - end_eps;
        let moved = (s.mass - last_mass).abs() > cfg.growth_trigger * last_mass
            || (s.sup - last_sup).abs() > cfg.growth_trigger * last_sup;
        if on_cadence {
            while next_sample <= t + end_eps {
                next_sample += cfg.sample_dt;
            }
        }
        if on_cadence || moved || capped.is_some() {
            let s = record(t, &c, dissipation, space_time, &mut samples, &mut states);
            last_mass = s.mass;
            last_sup = s.sup;
        }
        if let Some(reason) = capped {
            t_detect = Some(t);
            break reason;
        }
        // steps of a few ulps no longer advance the clock
        if dt < cfg.dt_min.max(8.0 * f64::EPSILON * t) {
            t_detect = Some(t);
            break HaltReason::StepUnderflow;
        }
    };
    if samples.last().map(|s| s.t) != Some(t) {
        record(t, &c, dissipation, space_time, &mut samples, &mut states);
    }
    if stats.accepted == 0 {
        stats.smallest_dt = 0.0;
    }
    Ok(Trajectory { samples, states, mode: *mode, verdict: None, t_detect, halt, stats })
}

/// Picard iterates of the Duhamel map on `[0, t_span]`, evaluated at `t_span`.
///
/// Iterate 0 is the linear flow. Each further iterate integrates the previous
/// one's nonlinearity exactly against the semigroup, with the nonlinearity
/// interpolated linearly between `n_quad` equal time slices.
pub fn picard_iterate(
    u0: &Field,
    op: &SpectralOperator,
    mode: &EquationMode,
    t_span: f64,
    n_iter: usize,
    n_quad: usize,
) -> Result<Vec<Field>> {
    Ok(picard_with_increments(u0, op, mode, t_span, n_iter, n_quad)?.0)
}

/// [`picard_iterate`] plus `sup_s ‖uₖ₊₁(s) − uₖ(s)‖₂` for each consecutive pair.
pub fn picard_with_increments(
    u0: &Field,
    op: &SpectralOperator,
    mode: &EquationMode,
    t_span: f64,
    n_iter: usize,
    n_quad: usize,
) -> Result<(Vec<Field>, Vec<f64>)> {
    if !(t_span > 0.0) {
        return Err(Error::NonPositiveTime(t_span));
    }
    if n_quad == 0 {
        return Err(Error::EmptyInput("n_quad"));
    }
    check_inputs(u0, op, mode)?;
    let prop = Propagator::new(op, mode, false);
    let delta = t_span / n_quad as f64;
    let decay: Vec<f64> = prop.symbol.iter().map(|a| (-delta * a).exp()).collect();
    let w1: Vec<f64> = prop.symbol.iter().map(|a| delta * phi1(-delta * a)).collect();
    let w2: Vec<f64> = prop.symbol.iter().map(|a| delta * phi2(-delta * a)).collect();

    let c0 = op.to_spectral(u0.values());
    let mut slices = vec![c0.clone()];
    for j in 0..n_quad {
        slices.push(slices[j].iter().zip(&decay).map(|(x, e)| x * e).collect());
    }
    let to_field = |c: &[f64]| Field::new(u0.grid(), op.from_spectral(c));
    let mut iterates = vec![to_field(&slices[n_quad])?];
    let mut increments = Vec::new();
    let scale = slices.iter().map(|c| norm2(c)).fold(0.0, f64::max);
    for k in 1..=n_iter {
        let g: Vec<Vec<f64>> = slices
            .iter()
            .map(|c| prop.nonlinear(c).ok_or(Error::NonFiniteValue(0)))
            .collect::<Result<_>>()?;
        let mut next = vec![c0.clone()];
        for j in 0..n_quad {
            let v = (0..c0.len())
                .map(|m| decay[m] * next[j][m] + w1[m] * g[j][m] + w2[m] * (g[j + 1][m] - g[j][m]))
                .collect();
            next.push(v);
        }
        let inc = next
            .iter()
            .zip(&slices)
            .map(|(a, b)| norm2(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>()))
            .fold(0.0, f64::max);
        if let Some(&prev) = increments.last() {
            if inc > 2.0 * prev && inc > 1e-13 * scale {
                return Err(Error::PicardDivergence { iteration: k, previous: prev, current: inc });
            }
        }
        increments.push(inc);
        slices = next;
        iterates.push(to_field(&slices[n_quad])?);
    }
    Ok((iterates, increments))
}

/// `max_t |E(u(t)) + ∫₀ᵗ‖uₛ‖² − E(u₀)| / max(|E(u₀)|, 1)`.
pub fn energy_identity_residual(traj: &Trajectory) -> Result<f64> {
    if traj.samples.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: traj.samples.len() });
    }
    let e0 = traj.samples[0].energy;
    let scale = e0.abs().max(1.0);
    Ok(traj
        .samples
        .iter()
        .map(|s| (s.energy + s.dissipation_cum - e0).abs() / scale)
        .fold(0.0, f64::max))
}

/// Checks `½ d/dt‖u‖² = −J(u)` at interior samples with the second-order
/// three-point derivative on the (possibly uneven) sample times; normalized
/// by `max(max|J|, 1)`. Samples closer than `10⁴ε·t` to a neighbour are
/// skipped: their time differences carry rounding error above 10⁻⁴.
pub fn mass_identity_residual(traj: &Trajectory) -> Result<f64> {
    let s = &traj.samples;
    if s.len() < 3 {
        return Err(Error::InsufficientSamples { needed: 3, got: s.len() });
    }
    let scale = s.iter().map(|x| x.nehari.abs()).fold(1.0, f64::max);
    let mut worst: f64 = 0.0;
    for i in 1..s.len() - 1 {
        let (h0, h1) = (s[i].t - s[i - 1].t, s[i + 1].t - s[i].t);
        let resolvable = 1e4 * f64::EPSILON * s[i + 1].t;
        if h0 <= resolvable || h1 <= resolvable {
            continue;
        }
        let (m0, m1, m2) = (0.5 * s[i - 1].mass, 0.5 * s[i].mass, 0.5 * s[i + 1].mass);
        let derivative = -h1 / (h0 * (h0 + h1)) * m0 + (h1 - h0) / (h0 * h1) * m1 + h0 / (h1 * (h0 + h1)) * m2;
        worst = worst.max((derivative + s[i].nehari).abs() / scale);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{build_grid, lp_norm, DomainSpec};
    use crate::operators::{assemble, OperatorSpec};
    use crate::semigroup::apply_semigroup;
    use crate::variational::NonlinearitySign;
    use std::f64::consts::PI;

    fn dirichlet(lo: f64, hi: f64, n: usize) -> SpectralOperator {
        let g = build_grid(DomainSpec::interval(lo, hi), n).unwrap();
        assemble(&OperatorSpec::dirichlet_laplacian(1), &g).unwrap()
    }

    fn cubic() -> EquationMode {
        EquationMode::subcritical(3.0, 1).unwrap()
    }

    #[test]
    fn phi_functions_are_continuous_at_the_series_switch() {
        for z in [1e-2 - 1e-12, -1e-2 + 1e-12] {
            let series = phi2(z);
            let direct = (z.exp_m1() - z) / (z * z);
            assert!((series - direct).abs() < 1e-11);
        }
        assert_eq!(phi1(0.0), 1.0);
        assert!((phi1(-1e-9) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn linear_step_is_the_semigroup() {
        let op = dirichlet(0.0, PI, 80);
        let u = Field::from_fn(op.grid(), |x| x[0] * (PI - x[0])).unwrap();
        let prop = Propagator::new(&op, &cubic(), true);
        let c = prop.step(&op.to_spectral(u.values()), 0.3, Scheme::Etdrk2).unwrap();
        let exact = apply_semigroup(&op, 0.3, &u, true).unwrap();
        let got = op.from_spectral(&c);
        for (a, b) in got.iter().zip(exact.values()) {
            assert!((a - b).abs() < 1e-13);
        }
        let zero = step(&Field::zeros(op.grid()), 0.1, &op, &cubic(), Scheme::ExponentialEuler).unwrap();
        assert!(zero.is_zero());
        assert!(step(&u, 0.0, &op, &cubic(), Scheme::Etdrk2).is_err());
    }

    #[test]
    fn exponential_euler_local_error_is_second_order() {
        let op = dirichlet(0.0, PI, 64);
        let mode = cubic();
        let u = op.eigenvector(0).scaled(1.5);
        let prop = Propagator::new(&op, &mode, false);
        let c0 = op.to_spectral(u.values());
        let reference = |dt: f64| {
            let mut c = c0.clone();
            for _ in 0..10_000 {
                c = prop.step(&c, dt / 10_000.0, Scheme::Etdrk2).unwrap();
            }
            c
        };
        let errs: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&dt| {
                let one = prop.step(&c0, dt, Scheme::ExponentialEuler).unwrap();
                norm2(&one.iter().zip(reference(dt)).map(|(a, b)| a - b).collect::<Vec<_>>())
            })
            .collect();
        for pair in errs.windows(2) {
            let order = (pair[0] / pair[1]).log2();
            assert!((1.7..=2.3).contains(&order), "order {order}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig::default().validate().is_ok());
        let cfg = IntegratorConfig { dt_min: 1.0, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        let cfg = IntegratorConfig { blowup_sup_cap: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_data_stays_zero() {
        let op = dirichlet(0.0, 1.0, 20);
        let cfg = IntegratorConfig { t_max: 0.5, ..Default::default() };
        let traj = integrate(&Field::zeros(op.grid()), &op, &cubic(), &cfg).unwrap();
        assert_eq!(traj.halt, HaltReason::TMax);
        assert!(traj.samples.iter().all(|s| s.mass == 0.0 && s.energy == 0.0));
        assert_eq!(energy_identity_residual(&traj).unwrap(), 0.0);
        assert_eq!(mass_identity_residual(&traj).unwrap(), 0.0);
        assert!((traj.last().t - 0.5).abs() < 1e-12);
    }

    #[test]
    fn linear_mode_identities() {
        let op = dirichlet(0.0, PI, 100);
        let u = Field::from_fn(op.grid(), |x| x[0].sin() + 0.3 * (3.0 * x[0]).sin()).unwrap();
        let cfg = IntegratorConfig { t_max: 2.0, linear: true, ..Default::default() };
        let traj = integrate(&u, &op, &cubic(), &cfg).unwrap();
        let res = energy_identity_residual(&traj).unwrap();
        assert!(res <= 10.0 * cfg.rel_tol, "{res} {:?}", traj.stats);
        // single-mode closed form: mass(t) = mass(0)·e^{−2(μ+1)t}
        let e = op.eigenvector(0);
        let traj = integrate(&e, &op, &cubic(), &cfg).unwrap();
        let a = op.eigenvalues()[0] + 1.0;
        for s in &traj.samples {
            assert!((s.mass - (-2.0 * a * s.t).exp()).abs() < 1e-12);
        }
        assert!(mass_identity_residual(&traj).unwrap() < 1e-3);
    }

    #[test]
    fn absorbing_large_data_dissipates() {
        let op = dirichlet(-10.0, 10.0, 200);
        let mode = cubic().with_sign(NonlinearitySign::Absorbing);
        let u = Field::from_fn(op.grid(), |x| 20.0 * (-x[0] * x[0]).exp()).unwrap();
        let cfg = IntegratorConfig { t_max: 10.0, ..Default::default() };
        let traj = integrate(&u, &op, &mode, &cfg).unwrap();
        assert_eq!(traj.halt, HaltReason::TMax);
        assert!(traj.last().energy_norm < 1e-3 * traj.initial().energy_norm);
        for pair in traj.samples.windows(2) {
            assert!(pair[1].energy <= pair[0].energy + 10.0 * cfg.rel_tol * pair[0].energy.abs().max(1.0));
        }
        assert!(energy_identity_residual(&traj).unwrap() < 1e-3);
    }

    #[test]
    fn small_data_energy_and_mass_identities() {
        let op = dirichlet(-10.0, 10.0, 200);
        let u = Field::from_fn(op.grid(), |x| 0.8 / x[0].cosh()).unwrap();
        let cfg = IntegratorConfig { t_max: 10.0, ..Default::default() };
        let traj = integrate(&u, &op, &cubic(), &cfg).unwrap();
        assert!(energy_identity_residual(&traj).unwrap() < 1e-3);
        assert!(mass_identity_residual(&traj).unwrap() < 1e-2);
        for pair in traj.samples.windows(2) {
            assert!(pair[1].t > pair[0].t);
            assert!(pair[1].dissipation_cum >= pair[0].dissipation_cum);
            if pair[0].nehari >= 0.0 {
                assert!(pair[1].mass <= pair[0].mass * (1.0 + 1e-9));
            }
        }
        assert_eq!(traj.states.len(), traj.samples.len());
    }

    #[test]
    fn schemes_agree() {
        let op = dirichlet(-8.0, 8.0, 160);
        let u = Field::from_fn(op.grid(), |x| 1.2 / x[0].cosh()).unwrap();
        let cfg = IntegratorConfig { t_max: 1.0, rel_tol: 1e-7, ..Default::default() };
        let a = integrate(&u, &op, &cubic(), &cfg).unwrap();
        let b = integrate(&u, &op, &cubic(), &IntegratorConfig { scheme: Scheme::ExponentialEuler, ..cfg.clone() }).unwrap();
        let (ua, ub) = (a.states.last().unwrap(), b.states.last().unwrap());
        let rel = lp_norm(&ua.try_sub(ub).unwrap(), 2.0).unwrap() / lp_norm(ua, 2.0).unwrap();
        assert!(rel < 1e-4, "{rel}");
    }

    #[test]
    fn large_data_blows_up() {
        let op = dirichlet(-10.0, 10.0, 200);
        let u = Field::from_fn(op.grid(), |x| 3.0 / x[0].cosh()).unwrap();
        let traj = integrate(&u, &op, &cubic(), &IntegratorConfig::default()).unwrap();
        assert_eq!(traj.halt, HaltReason::SupCap);
        let t = traj.t_detect.unwrap();
        assert!(t > 0.0 && t < 1.0);
        assert!(traj.last().sup_norm > 1e6);
        let mut csv = Vec::new();
        traj.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert_eq!(text.lines().count(), traj.samples.len() + 1);
    }

    #[test]
    fn picard_contracts_to_the_integrator() {
        let op = dirichlet(-5.0, 5.0, 100);
        let mode = cubic();
        let u = Field::from_fn(op.grid(), |x| 0.5 * (-x[0] * x[0]).exp()).unwrap();
        let (its, inc) = picard_with_increments(&u, &op, &mode, 0.5, 6, 1600).unwrap();
        let lin = apply_semigroup(&op, 0.5, &u, true).unwrap();
        assert!(its[0].try_sub(&lin).unwrap().sup_norm() < 1e-14);
        for pair in inc.windows(2) {
            if pair[0] > 1e-14 {
                assert!(pair[1] / pair[0] < 0.5, "{inc:?}");
            }
        }
        let cfg = IntegratorConfig { t_max: 0.5, rel_tol: 1e-8, ..Default::default() };
        let traj = integrate(&u, &op, &mode, &cfg).unwrap();
        let end = traj.states.last().unwrap();
        let rel = lp_norm(&its.last().unwrap().try_sub(end).unwrap(), 2.0).unwrap() / lp_norm(end, 2.0).unwrap();
        assert!(rel < 10.0 * cfg.rel_tol, "{rel}");

        let zero = picard_iterate(&Field::zeros(op.grid()), &op, &mode, 0.5, 3, 10).unwrap();
        assert!(zero.iter().all(|f| f.is_zero()));
    }

    #[test]
    fn picard_reports_divergence() {
        let op = dirichlet(-5.0, 5.0, 60);
        let u = Field::from_fn(op.grid(), |x| 6.0 * (-x[0] * x[0]).exp()).unwrap();
        let r = picard_iterate(&u, &op, &cubic(), 0.5, 12, 100);
        assert!(matches!(r, Err(Error::PicardDivergence { .. }) | Err(Error::NonFiniteValue(_))), "{r:?}");
    }
}
