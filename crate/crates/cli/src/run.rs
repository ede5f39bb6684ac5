//! Single runs and the reports of the non-evolution subcommands.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use heatlab::diagnostics::{
    coercivity_check, concavity, invariance_check, linear_profile_smallness, max_energy_norm_sq, negativity_gap_check,
    splitting_check, verdict, SplittingReport, Verdict,
};
use heatlab::evolution::{
    energy_identity_residual, integrate, mass_identity_residual, HaltReason, StepStats, Trajectory,
};
use heatlab::semigroup::{
    log_space, verify_gaussian_bound, verify_l2lq_decay, verify_spacetime, DecayReport, EstimateSpec,
};
use heatlab::variational::{
    classify, maximize_sobolev_ratio, mountain_pass_level, semigroup_sobolev_bound, FunctionalReport, LevelMethod,
    Membership, RatioConfig, VariationalConstants,
};
use heatlab::{
    assemble, build_grid, AssumptionClass, EquationMode, Field, Grid, NonlinearitySign, OperatorKind, PotentialSign,
    PotentialSpec, SpectralOperator,
};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::recipes::make_initial_data;
use crate::CliError;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONSTANTS_FILE: &str = "constants.json";

/// Grid, operator and mode of a validated config.
pub struct Setup {
    pub grid: Arc<Grid>,
    pub op: SpectralOperator,
    pub mode: EquationMode,
}

pub fn setup(cfg: &ExperimentConfig) -> Result<Setup, CliError> {
    cfg.validate()?;
    let grid = build_grid(cfg.domain(), cfg.n)?;
    let op = assemble(&cfg.operator_spec()?, &grid)?;
    let mode = cfg.mode()?;
    Ok(Setup { grid, op, mode })
}

/// Thresholds of the source-sign problem; the absorbing sign shares them.
pub fn constants(setup: &Setup, method: LevelMethod) -> Result<VariationalConstants, CliError> {
    Ok(mountain_pass_level(&setup.op, &setup.mode.with_sign(NonlinearitySign::Source), method)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsDoc {
    pub operator: String,
    pub assumption_class: AssumptionClass,
    pub mode: EquationMode,
    pub bottom_eigenvalue: f64,
    pub constants: VariationalConstants,
    /// Energy of the initial datum that `constants.delta` refers to.
    pub initial_energy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcavitySummary {
    #[serde(rename = "A")]
    pub a: f64,
    pub alpha: f64,
    #[serde(rename = "R")]
    pub radius: Option<f64>,
    pub margin: f64,
    pub t_tilde: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaSummary {
    /// Sign of `J` kept while `E < l`; stable and unstable data only.
    pub invariance: Option<bool>,
    /// Measured coercivity `min J/‖u‖²_E`; stable data only.
    pub delta_hat: Option<f64>,
    /// A priori coercivity for the initial energy.
    pub delta: Option<f64>,
    pub max_energy_norm_sq: f64,
    pub y_c: Option<f64>,
    /// `J < −(p+1)(l − E)` before the detection time; unstable data only.
    pub negativity_gap: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub verdict: Verdict,
    pub halt: HaltReason,
    pub t_detect: Option<f64>,
    pub t_final: f64,
    pub rate_stat: Option<f64>,
    /// Functionals of the initial datum; membership only for the source sign.
    pub initial: FunctionalReport,
    pub concavity: Option<ConcavitySummary>,
    pub concavity_error: Option<String>,
    pub lemmas: LemmaSummary,
    pub energy_identity_residual: f64,
    pub mass_identity_residual: f64,
    pub s_norm_cum: f64,
    /// Space-time norm accumulated up to the sample nearest `t_final/2`.
    pub s_norm_cum_mid: f64,
    /// `‖e^{−tL}u₀‖` in the space-time norm; critical mode only.
    pub linear_profile_norm: Option<f64>,
    pub splitting: Option<SplittingReport>,
    pub stats: StepStats,
    pub samples: usize,
    pub config: ExperimentConfig,
}

/// Everything a run produces, before anything is written.
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub summary: Summary,
    pub constants: ConstantsDoc,
}

/// Runs one experiment in memory.
pub fn simulate(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let s = setup(cfg)?;
    let consts = constants(&s, cfg.level_method())?;
    let u0 = make_initial_data(&cfg.recipe(), &s.op, &s.mode, Some(&consts))?;
    let source = s.mode.sign() == NonlinearitySign::Source;
    let initial = if source { classify(&u0, &s.op, &s.mode, &consts)? } else { heatlab::variational::energy(&u0, &s.op, &s.mode)? };
    let consts = if initial.energy < consts.l { consts.with_initial_energy(initial.energy) } else { consts };

    let mut traj = integrate(&u0, &s.op, &s.mode, &cfg.integrator())?;
    let v = verdict(&traj);
    traj.verdict = Some(v.clone());
    let rate_stat = match &v {
        Verdict::Dissipates { rate_stat } => Some(*rate_stat),
        _ => None,
    };

    let first = *traj.initial();
    let radius = cfg.effective_cutoff_radius();
    let (a, alpha) = cfg.concavity_parameters(first.mass, consts.l, first.energy);
    let (concavity_summary, concavity_error) = match concavity(&traj, a, alpha, radius) {
        Ok(r) => (Some(ConcavitySummary { a, alpha, radius, margin: r.margin, t_tilde: r.t_tilde }), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let stable = source && initial.membership == Membership::Mplus;
    let unstable = source && initial.membership == Membership::Mminus;
    let lemmas = LemmaSummary {
        invariance: if stable || unstable { Some(invariance_check(&traj, &consts)?) } else { None },
        delta_hat: if stable { Some(coercivity_check(&traj)?) } else { None },
        delta: stable.then_some(consts.delta),
        max_energy_norm_sq: max_energy_norm_sq(&traj),
        y_c: source.then_some(consts.y_c),
        negativity_gap: if unstable { Some(negativity_gap_check(&traj, &consts)?) } else { None },
    };

    let critical_b = s.mode.is_critical() && s.op.spec().assumption_class == AssumptionClass::B;
    let linear_profile_norm = if critical_b { Some(linear_profile_smallness(&u0, &s.op, &s.mode)?) } else { None };
    let splitting = if s.mode.is_critical() && matches!(v, Verdict::Dissipates { .. }) {
        let n = traj.samples.len();
        let mut checkpoints = vec![n / 4, n / 2, n - 1];
        checkpoints.dedup();
        Some(splitting_check(&traj, &s.op, &checkpoints)?)
    } else {
        None
    };

    let last = *traj.last();
    let mid = traj
        .samples
        .iter()
        .min_by(|x, y| (x.t - last.t / 2.0).abs().total_cmp(&(y.t - last.t / 2.0).abs()))
        .expect("trajectories hold at least the initial sample");
    let summary = Summary {
        verdict: v,
        halt: traj.halt,
        t_detect: traj.t_detect,
        t_final: last.t,
        rate_stat,
        initial,
        concavity: concavity_summary,
        concavity_error,
        lemmas,
        energy_identity_residual: residual_or_zero(energy_identity_residual(&traj)),
        mass_identity_residual: residual_or_zero(mass_identity_residual(&traj)),
        s_norm_cum: last.s_norm_cum,
        s_norm_cum_mid: mid.s_norm_cum,
        linear_profile_norm,
        splitting,
        stats: traj.stats,
        samples: traj.samples.len(),
        config: cfg.clone(),
    };
    let constants = ConstantsDoc {
        operator: s.op.spec().label(),
        assumption_class: s.op.spec().assumption_class,
        mode: s.mode,
        bottom_eigenvalue: s.op.min_eigenvalue(),
        constants: consts,
        initial_energy: Some(summary.initial.energy),
    };
    Ok(RunOutput { trajectory: traj, summary, constants })
}

/// Too few samples for an identity check means nothing was violated.
fn residual_or_zero(r: heatlab::Result<f64>) -> f64 {
    r.unwrap_or(0.0)
}

/// Writes `bytes` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.join(name).display()));
    fs::create_dir_all(dir).map_err(io)?;
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, dir.join(name)).map_err(io)
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// Runs one experiment and writes the trajectory CSV, the summary and the
/// constants into `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Summary, CliError> {
    let out = simulate(cfg)?;
    let mut csv = Vec::new();
    out.trajectory.write_csv(&mut csv).map_err(|e| CliError::Io(e.to_string()))?;
    write_atomic(&cfg.out_dir, TRAJECTORY_FILE, &csv)?;
    write_atomic(&cfg.out_dir, CONSTANTS_FILE, to_json(&out.constants).as_bytes())?;
    write_atomic(&cfg.out_dir, SUMMARY_FILE, to_json(&out.summary).as_bytes())?;
    Ok(out.summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundStateDoc {
    pub operator: String,
    pub mode: EquationMode,
    /// Constants from the configured route.
    pub constants: VariationalConstants,
    /// Sobolev constant from the other route, when it applies.
    pub cross_check_s: Option<f64>,
    /// Upper bound on the Sobolev constant from the semigroup integral.
    pub semigroup_bound: Option<f64>,
}

/// Variational constants by the configured route, cross-checked by the other
/// one, plus the extremal profile (ground state or ratio maximizer).
pub fn ground_state_report(cfg: &ExperimentConfig) -> Result<(GroundStateDoc, Field), CliError> {
    let s = setup(cfg)?;
    let source = s.mode.with_sign(NonlinearitySign::Source);
    let method = cfg.level_method();
    let consts = mountain_pass_level(&s.op, &source, method)?;
    let (cross_check_s, profile) = match method {
        LevelMethod::NehariInf => {
            let (ratio, _) = maximize_sobolev_ratio(&s.op, &source, &RatioConfig::default())?;
            (Some(ratio), consts.ground_state.clone().expect("the Nehari route caches the ground state"))
        }
        LevelMethod::SobolevFormula => {
            let (_, maximizer) = maximize_sobolev_ratio(&s.op, &source, &RatioConfig::default())?;
            let cross = if s.mode.is_critical() {
                None
            } else {
                Some(mountain_pass_level(&s.op, &source, LevelMethod::NehariInf)?.s)
            };
            (cross, maximizer)
        }
    };
    let semigroup_bound = semigroup_sobolev_bound(&s.op, &source).ok();
    let doc = GroundStateDoc { operator: s.op.spec().label(), mode: s.mode, constants: consts, cross_check_s, semigroup_bound };
    Ok((doc, profile))
}

/// Nodal values as CSV with one coordinate column per axis.
pub fn field_csv(f: &Field) -> String {
    let grid = f.grid();
    let mut out: String = (1..=grid.dim()).map(|k| format!("x{k},")).collect();
    out.push_str("value\n");
    for (i, v) in f.values().iter().enumerate() {
        for x in grid.point(i) {
            out.push_str(&format!("{x},"));
        }
        out.push_str(&format!("{v}\n"));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationDoc {
    pub initial: FunctionalReport,
    pub constants: VariationalConstants,
    pub config: ExperimentConfig,
}

/// Functionals of the configured initial datum relative to the level.
pub fn classify_report(cfg: &ExperimentConfig) -> Result<ClassificationDoc, CliError> {
    let s = setup(cfg)?;
    let consts = constants(&s, cfg.level_method())?;
    let u0 = make_initial_data(&cfg.recipe(), &s.op, &s.mode, Some(&consts))?;
    let initial = classify(&u0, &s.op, &s.mode.with_sign(NonlinearitySign::Source), &consts)?;
    let consts = if initial.energy < consts.l { consts.with_initial_energy(initial.energy) } else { consts };
    Ok(ClassificationDoc { initial, constants: consts, config: cfg.clone() })
}

pub const VERIFY_HEADER: &str = "operator,estimate,slope,target,prefactor,pass";

/// One row of the `verify` CSV.
///
/// Decay rows carry the fitted log-log slope and its target. The `gaussian`
/// row carries the fitted exponent constant `c` as slope, the largest ratio
/// to the free kernel as target and `C` as prefactor. The `spacetime` row
/// carries the measured ratio as slope, `1/√2` as target and their distance
/// as prefactor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub operator: String,
    pub estimate: String,
    pub slope: f64,
    pub target: f64,
    pub prefactor: f64,
    pub pass: bool,
}

impl From<DecayReport> for VerifyRow {
    fn from(r: DecayReport) -> Self {
        // `+ 0.0` turns a −0 target into 0
        Self { operator: r.operator, estimate: r.estimate, slope: r.slope, target: r.target + 0.0, prefactor: r.prefactor, pass: r.pass }
    }
}

pub fn verify_csv(rows: &[VerifyRow]) -> String {
    let mut out = format!("{VERIFY_HEADER}\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{},{}\n", r.operator, r.estimate, r.slope, r.target, r.prefactor, r.pass));
    }
    out
}

/// Whether the kernel is pointwise below the free one (Dirichlet conditions,
/// nonnegative potential).
fn dominated_by_free_kernel(kind: &OperatorKind) -> bool {
    match kind {
        OperatorKind::DirichletLaplacian => true,
        OperatorKind::RobinHalfline { .. } => false,
        OperatorKind::Schrodinger { potential } => match potential {
            PotentialSpec::Zero => true,
            PotentialSpec::TabulatedBounded { values } => values.iter().all(|&v| v >= 0.0),
            PotentialSpec::InversePower { sign, coupling, .. } => *sign == PotentialSign::Positive || *coupling == 0.0,
        },
    }
}

/// Semigroup verifiers for the configured operator: L²→L² , L²→L^{p+1} and
/// L²→L^∞ decay on the spectral-gap window, the Gaussian bound and the
/// space-time identity (the last two for class-B operators).
pub fn verify_rows(cfg: &ExperimentConfig) -> Result<Vec<VerifyRow>, CliError> {
    let s = setup(cfg)?;
    let shifted = !s.mode.is_critical();
    let mut rows = Vec::new();
    for r in [2.0, s.mode.p() + 1.0, f64::INFINITY] {
        let spec = EstimateSpec::gap_window(&s.op, r, shifted, 8);
        rows.push(verify_l2lq_decay(&s.op, &spec, shifted, cfg.seed)?.into());
    }
    let label = s.op.spec().label();
    if s.op.spec().assumption_class == AssumptionClass::B {
        let t_gap = 1.0 / s.op.min_eigenvalue().max(1e-12);
        let g = verify_gaussian_bound(&s.op, &log_space(t_gap / 100.0, t_gap, 5), 4.0)?;
        let dominated = !dominated_by_free_kernel(&s.op.spec().kind) || g.max_violation_ratio <= 1.02;
        rows.push(VerifyRow {
            operator: label.clone(),
            estimate: "gaussian".into(),
            slope: g.c,
            target: g.max_violation_ratio,
            prefactor: g.big_c,
            pass: g.big_c.is_finite() && dominated,
        });
        if s.op.min_eigenvalue() > 0.0 {
            let probe = make_initial_data(
                &crate::recipes::Recipe::Gaussian { amplitude: 1.0, center: None, width: 1.0 },
                &s.op,
                &s.mode,
                None,
            )?;
            let ratio = verify_spacetime(&s.op, &probe)?;
            let target = std::f64::consts::FRAC_1_SQRT_2;
            rows.push(VerifyRow {
                operator: label,
                estimate: "spacetime".into(),
                slope: ratio,
                target,
                prefactor: (ratio - target).abs(),
                pass: (ratio - target).abs() <= 1e-8,
            });
        }
    }
    Ok(rows)
}
