//! Flat TOML experiment description.
//!
//! Every key is optional; missing keys take the defaults of
//! [`ExperimentConfig::default`], which describe the one-dimensional cubic
//! problem on `(−20, 20)` started from half the ground state.

use std::path::{Path, PathBuf};

use heatlab::diagnostics::default_concavity_parameters;
use heatlab::evolution::{IntegratorConfig, Scheme};
use heatlab::variational::LevelMethod;
use heatlab::{
    DomainSpec, EquationMode, NonlinearitySign, OperatorKind, OperatorSpec, PotentialSign, PotentialSpec, Regime,
};
use serde::{Deserialize, Serialize};

use crate::recipes::Recipe;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorName {
    DirichletLaplacian,
    Schrodinger,
    RobinHalfline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialName {
    Zero,
    InversePower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeName {
    Subcritical,
    Critical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecipeName {
    Zero,
    Gaussian,
    ScaledGroundState,
    Eigenmode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub operator: OperatorName,
    pub potential: PotentialName,
    pub potential_alpha: f64,
    pub potential_coupling: f64,
    pub potential_sign: PotentialSign,
    pub robin_sigma: f64,
    pub dim: usize,
    /// Cube `(lower, upper)^dim`; the half-line operator uses `(0, upper)`.
    pub lower: f64,
    pub upper: f64,
    /// Nodes per axis.
    pub n: usize,

    pub regime: RegimeName,
    /// Ignored in critical mode, where `p = (d+2)/(d−2)`.
    pub p: f64,
    pub sign: NonlinearitySign,

    pub initial: RecipeName,
    pub amplitude: f64,
    /// Defaults to the grid node nearest the domain center.
    pub center: Option<Vec<f64>>,
    pub width: f64,
    pub lambda: f64,
    pub mode_index: usize,

    pub scheme: Scheme,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub rel_tol: f64,
    pub t_max: f64,
    pub blowup_sup_cap: f64,
    pub blowup_energy_cap: f64,
    pub sample_dt: f64,
    pub growth_trigger: f64,

    /// Defaults to the Nehari infimum in subcritical mode and to the Sobolev
    /// formula in critical mode.
    pub level_method: Option<LevelMethod>,
    /// Concavity constant `A`; defaults to `10·max(1, ‖u₀‖²/(l − E(u₀)))`.
    pub concavity_a: Option<f64>,
    pub concavity_alpha: f64,
    /// Cutoff radius `R` of the localized concavity functional. Critical mode
    /// defaults to the domain inradius minus one.
    pub cutoff_radius: Option<f64>,

    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let ic = IntegratorConfig::default();
        Self {
            operator: OperatorName::DirichletLaplacian,
            potential: PotentialName::Zero,
            potential_alpha: 0.0,
            potential_coupling: 0.0,
            potential_sign: PotentialSign::Positive,
            robin_sigma: 0.0,
            dim: 1,
            lower: -20.0,
            upper: 20.0,
            n: 1600,
            regime: RegimeName::Subcritical,
            p: 3.0,
            sign: NonlinearitySign::Source,
            initial: RecipeName::ScaledGroundState,
            amplitude: 1.0,
            center: None,
            width: 1.0,
            lambda: 0.5,
            mode_index: 0,
            scheme: ic.scheme,
            dt_init: ic.dt_init,
            dt_min: ic.dt_min,
            dt_max: ic.dt_max,
            rel_tol: ic.rel_tol,
            t_max: ic.t_max,
            blowup_sup_cap: ic.blowup_sup_cap,
            blowup_energy_cap: ic.blowup_energy_cap,
            sample_dt: ic.sample_dt,
            growth_trigger: ic.growth_trigger,
            level_method: None,
            concavity_a: None,
            concavity_alpha: 0.1,
            cutoff_radius: None,
            out_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

fn bad(key: &str, message: impl Into<String>) -> CliError {
    CliError::Config { key: key.to_string(), message: message.into() }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configs are always representable")
    }

    /// Replaces one key by a TOML-literal value, as a sweep axis does.
    pub fn with_key(&self, key: &str, value: &toml::Value) -> Result<Self, CliError> {
        let mut table = toml::Table::try_from(self).expect("configs are always representable");
        if !table.contains_key(key) && !OPTIONAL_KEYS.contains(&key) {
            return Err(bad(key, "unknown key"));
        }
        table.insert(key.to_string(), value.clone());
        let cfg: Self = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| bad(key, e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Consistency checks, run before any computation.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.dim == 0 {
            return Err(bad("dim", "must be at least 1"));
        }
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
            return Err(bad("upper", format!("need lower < upper, got {} and {}", self.lower, self.upper)));
        }
        if self.operator == OperatorName::RobinHalfline && self.lower != 0.0 {
            return Err(bad("lower", "the half-line operator lives on (0, upper); set lower = 0"));
        }
        if self.n < 2 {
            return Err(bad("n", "need at least 2 nodes per axis"));
        }
        if self.regime == RegimeName::Subcritical && !(self.p > 1.0 && self.p.is_finite()) {
            return Err(bad("p", format!("exponent must exceed 1, got {}", self.p)));
        }
        self.mode().map_err(|e| bad(if self.regime == RegimeName::Critical { "regime" } else { "p" }, e.to_string()))?;
        self.operator_spec().map_err(|e| bad("operator", e.to_string()))?;
        if let Some(c) = &self.center {
            if c.len() != self.dim {
                return Err(bad("center", format!("need {} coordinates, got {}", self.dim, c.len())));
            }
        }
        if !(self.width > 0.0) {
            return Err(bad("width", format!("must be positive, got {}", self.width)));
        }
        if !self.amplitude.is_finite() {
            return Err(bad("amplitude", "must be finite"));
        }
        if !self.lambda.is_finite() {
            return Err(bad("lambda", "must be finite"));
        }
        if self.mode_index >= self.n.pow(self.dim as u32) {
            return Err(bad("mode_index", format!("only {} modes on this grid", self.n.pow(self.dim as u32))));
        }
        if self.initial == RecipeName::ScaledGroundState && self.regime == RegimeName::Critical {
            return Err(bad("initial", "ground-state recipes need the subcritical regime"));
        }
        for (key, v) in [
            ("dt_init", self.dt_init),
            ("dt_min", self.dt_min),
            ("dt_max", self.dt_max),
            ("t_max", self.t_max),
            ("blowup_sup_cap", self.blowup_sup_cap),
            ("blowup_energy_cap", self.blowup_energy_cap),
            ("sample_dt", self.sample_dt),
            ("growth_trigger", self.growth_trigger),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(key, format!("must be positive and finite, got {v}")));
            }
        }
        if !(self.dt_min <= self.dt_init) {
            return Err(bad("dt_min", "must not exceed dt_init"));
        }
        if !(self.dt_init <= self.dt_max) {
            return Err(bad("dt_max", "must not be below dt_init"));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(bad("rel_tol", format!("must lie in (0, 1), got {}", self.rel_tol)));
        }
        if let Some(a) = self.concavity_a {
            if !(a > 0.0) {
                return Err(bad("concavity_a", "must be positive"));
            }
        }
        if !(self.concavity_alpha > 0.0) {
            return Err(bad("concavity_alpha", "must be positive"));
        }
        if let Some(r) = self.cutoff_radius {
            if !(r > 0.0) {
                return Err(bad("cutoff_radius", "must be positive"));
            }
        }
        if self.level_method == Some(LevelMethod::NehariInf) && self.regime == RegimeName::Critical {
            return Err(bad("level_method", "the Nehari infimum has no minimizer in critical mode; use sobolev_formula"));
        }
        Ok(())
    }

    pub fn domain(&self) -> DomainSpec {
        match self.operator {
            OperatorName::RobinHalfline => DomainSpec::halfline(self.upper),
            _ if self.dim == 1 => DomainSpec::interval(self.lower, self.upper),
            _ => DomainSpec::cube(self.lower, self.upper, self.dim),
        }
    }

    pub fn operator_spec(&self) -> heatlab::Result<OperatorSpec> {
        let kind = match self.operator {
            OperatorName::DirichletLaplacian => OperatorKind::DirichletLaplacian,
            OperatorName::RobinHalfline => OperatorKind::RobinHalfline { sigma: self.robin_sigma },
            OperatorName::Schrodinger => OperatorKind::Schrodinger {
                potential: match self.potential {
                    PotentialName::Zero => PotentialSpec::Zero,
                    PotentialName::InversePower => PotentialSpec::InversePower {
                        alpha: self.potential_alpha,
                        coupling: self.potential_coupling,
                        sign: self.potential_sign,
                    },
                },
            },
        };
        OperatorSpec::new(kind, self.dim)
    }

    pub fn mode(&self) -> heatlab::Result<EquationMode> {
        let regime = match self.regime {
            RegimeName::Subcritical => Regime::Subcritical { p: self.p },
            RegimeName::Critical => Regime::Critical,
        };
        EquationMode::new(regime, self.sign, self.dim)
    }

    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig {
            dt_init: self.dt_init,
            dt_min: self.dt_min,
            dt_max: self.dt_max,
            rel_tol: self.rel_tol,
            t_max: self.t_max,
            blowup_sup_cap: self.blowup_sup_cap,
            blowup_energy_cap: self.blowup_energy_cap,
            scheme: self.scheme,
            sample_dt: self.sample_dt,
            growth_trigger: self.growth_trigger,
            linear: false,
            store_states: true,
        }
    }

    pub fn recipe(&self) -> Recipe {
        match self.initial {
            RecipeName::Zero => Recipe::Zero,
            RecipeName::Gaussian => {
                Recipe::Gaussian { amplitude: self.amplitude, center: self.center.clone(), width: self.width }
            }
            RecipeName::ScaledGroundState => Recipe::ScaledGroundState { lambda: self.lambda },
            RecipeName::Eigenmode => Recipe::Eigenmode { k: self.mode_index, amplitude: self.amplitude },
        }
    }

    pub fn level_method(&self) -> LevelMethod {
        self.level_method.unwrap_or(match self.regime {
            RegimeName::Subcritical => LevelMethod::NehariInf,
            RegimeName::Critical => LevelMethod::SobolevFormula,
        })
    }

    /// Cutoff radius actually used by the concavity monitor.
    pub fn effective_cutoff_radius(&self) -> Option<f64> {
        match (self.cutoff_radius, self.regime) {
            (Some(r), _) => Some(r),
            (None, RegimeName::Critical) => Some((self.domain().inradius() - 1.0).max(0.5)),
            (None, RegimeName::Subcritical) => None,
        }
    }

    /// `(A, α)` for the concavity monitor.
    pub fn concavity_parameters(&self, mass0: f64, level: f64, e0: f64) -> (f64, f64) {
        let (a, _) = default_concavity_parameters(mass0, level, e0);
        (self.concavity_a.unwrap_or(a), self.concavity_alpha)
    }
}

/// Keys that serialize to nothing when unset and so are absent from a table.
const OPTIONAL_KEYS: &[&str] = &["center", "level_method", "concavity_a", "cutoff_radius"];
