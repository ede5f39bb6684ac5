//! Initial-data recipes.

use heatlab::variational::{ground_state, EquationMode, GroundStateConfig, VariationalConstants};
use heatlab::{Error, Field, NonlinearitySign, SpectralOperator};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Recipe {
    Zero,
    /// `amplitude·exp(−|x − center|²/width²)`.
    Gaussian { amplitude: f64, center: Option<Vec<f64>>, width: f64 },
    /// `lambda·φ` with `φ` the ground state.
    ScaledGroundState { lambda: f64 },
    /// The `k`-th eigenvector (from the bottom), scaled to sup norm `amplitude`
    /// with a positive largest entry.
    Eigenmode { k: usize, amplitude: f64 },
}

/// Builds the initial datum. The ground-state recipe reuses the state cached
/// in `consts` and otherwise solves for it, always with the source sign.
pub fn make_initial_data(
    recipe: &Recipe,
    op: &SpectralOperator,
    mode: &EquationMode,
    consts: Option<&VariationalConstants>,
) -> heatlab::Result<Field> {
    let grid = op.grid();
    match recipe {
        Recipe::Zero => Ok(Field::zeros(grid)),
        Recipe::Gaussian { amplitude, center, width } => {
            let c = center.clone().unwrap_or_else(|| grid.point(grid.center_node()));
            if c.len() != grid.dim() {
                return Err(Error::InvalidConfig(format!("center needs {} coordinates", grid.dim())));
            }
            Field::from_fn(grid, |x| {
                let r2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum();
                amplitude * (-r2 / (width * width)).exp()
            })
        }
        Recipe::ScaledGroundState { lambda } => {
            if mode.is_critical() {
                return Err(Error::InvalidMode("there is no ground state in critical mode".into()));
            }
            let phi = match consts.and_then(|c| c.ground_state.as_ref()) {
                Some(phi) => phi.clone(),
                None => ground_state(op, &mode.with_sign(NonlinearitySign::Source), &GroundStateConfig::default())?,
            };
            Ok(phi.scaled(*lambda))
        }
        Recipe::Eigenmode { k, amplitude } => {
            if *k >= op.len() {
                return Err(Error::InvalidConfig(format!("mode {k} out of range ({} modes)", op.len())));
            }
            let e = op.eigenvector(*k);
            let peak = e.values().iter().cloned().fold(0.0, |m: f64, v| if v.abs() > m.abs() { v } else { m });
            Ok(e.scaled(amplitude / peak))
        }
    }
}
