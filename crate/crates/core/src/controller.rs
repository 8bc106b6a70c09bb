//! Control confidence from a quadratic free energy.
//!
//! The user's one-step control problem is modelled as
//! `F(u) = ‖G u − e‖² / (2σ_eff²) + ½ uᵀ P u` over `u = (dx, dy, dψ)`, where
//! `G = [I₂ | rot90(r)]` maps a hand displacement to a tip displacement for a
//! lever arm `r` and `σ_eff² = σ₀² + σ_act² ‖r‖²` grows with the lever. The
//! Hessian of `F` is the control precision; the entropy of the Gaussian it
//! defines gives the control channel.

use std::f64::consts::PI;

use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::confidence::{Channel, ConfidenceScore, SquashParams};
use crate::error::{invalid, Result};
use crate::toyworld::{forward_kinematics, Pose, ToolSpec};

/// Hand displacement `(dx, dy, dψ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    pub dx: f64,
    pub dy: f64,
    pub dpsi: f64,
}

impl ControlSignal {
    pub fn new(dx: f64, dy: f64, dpsi: f64) -> Self {
        Self { dx, dy, dpsi }
    }

    fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.dx, self.dy, self.dpsi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerParams {
    /// Baseline tip-observation noise std (meters).
    pub sigma_0: f64,
    /// Execution noise std per joint (radians).
    pub sigma_act: f64,
    /// Prior precision over the control signal, row-major.
    pub prior_precision: [[f64; 3]; 3],
    /// Squash for the control channel.
    pub squash: SquashParams,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            sigma_0: 1.0,
            sigma_act: 0.0,
            prior_precision: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            squash: SquashParams {
                h_ref: gaussian_entropy_3d(4f64.ln()),
                scale: 1.0,
            },
        }
    }
}

impl ControllerParams {
    pub fn prior(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.prior_precision[i][j])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_0 > 0.0) {
            return invalid("sigma_0 must be positive");
        }
        if !(self.sigma_act >= 0.0) {
            return invalid("sigma_act must be non-negative");
        }
        if !(self.squash.scale > 0.0) {
            return invalid("control squash scale must be positive");
        }
        let p = self.prior();
        if !is_symmetric(&p, 1e-12) || p.cholesky().is_none() {
            return invalid("prior precision must be symmetric positive definite");
        }
        Ok(())
    }

    fn effective_variance(&self, lever: f64) -> f64 {
        self.sigma_0 * self.sigma_0 + self.sigma_act * self.sigma_act * lever * lever
    }
}

/// Posterior precision over the control signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlPrecision(pub Matrix3<f64>);

impl ControlPrecision {
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn ln_det(&self) -> Result<f64> {
        let det = self.0.determinant();
        if !(det > 0.0) {
            return invalid(format!(
                "control precision determinant {det} is not positive"
            ));
        }
        Ok(det.ln())
    }

    pub fn to_rows(&self) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = self.0[(i, j)];
            }
        }
        out
    }
}

impl Serialize for ControlPrecision {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ControlPrecision {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = <[[f64; 3]; 3]>::deserialize(d)?;
        Ok(Self(Matrix3::from_fn(|i, j| rows[i][j])))
    }
}

fn is_symmetric(m: &Matrix3<f64>, tol: f64) -> bool {
    (0..3).all(|i| (0..3).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol * (1.0 + m[(i, j)].abs())))
}

/// Entropy of a 3-D Gaussian with precision log-determinant `ln_det`.
pub fn gaussian_entropy_3d(ln_det: f64) -> f64 {
    1.5 * (1.0 + (2.0 * PI).ln()) - 0.5 * ln_det
}

/// Lever arm `tip − hand` with the hand at `pose`.
pub fn lever_arm(tool: &ToolSpec, pose: Pose) -> [f64; 2] {
    let tip = forward_kinematics(tool, pose);
    [tip[0] - pose.x, tip[1] - pose.y]
}

fn jacobian(r: [f64; 2]) -> Matrix2x3<f64> {
    Matrix2x3::new(1.0, 0.0, -r[1], 0.0, 1.0, r[0])
}

/// Free energy with the lever arm taken at the hand-frame reference pose.
pub fn free_energy(
    u: ControlSignal,
    e: [f64; 2],
    tool: &ToolSpec,
    params: &ControllerParams,
) -> f64 {
    free_energy_at(u, e, tool, Pose::default(), params)
}

pub fn free_energy_at(
    u: ControlSignal,
    e: [f64; 2],
    tool: &ToolSpec,
    pose: Pose,
    params: &ControllerParams,
) -> f64 {
    let r = lever_arm(tool, pose);
    let var = params.effective_variance(r[0].hypot(r[1]));
    let u = u.vector();
    let resid = jacobian(r) * u - Vector2::new(e[0], e[1]);
    resid.norm_squared() / (2.0 * var) + 0.5 * (u.transpose() * params.prior() * u)[(0, 0)]
}

/// Exact Hessian of [`free_energy`] in `u`: `GᵀG / σ_eff² + P`.
pub fn control_precision(tool: &ToolSpec, params: &ControllerParams) -> Result<ControlPrecision> {
    control_precision_at(tool, Pose::default(), params)
}

/// Control precision with the lever arm taken at `pose`. The heading only
/// rotates the lever, so the determinant does not depend on it.
pub fn control_precision_at(
    tool: &ToolSpec,
    pose: Pose,
    params: &ControllerParams,
) -> Result<ControlPrecision> {
    params.validate()?;
    let r = lever_arm(tool, pose);
    let g = jacobian(r);
    let var = params.effective_variance(r[0].hypot(r[1]));
    let pi = g.transpose() * g / var + params.prior();
    // symmetrise away rounding in the product
    Ok(ControlPrecision(0.5 * (pi + pi.transpose())))
}

/// Control-channel confidence for a precision matrix.
pub fn control_confidence(
    precision: &ControlPrecision,
    squash: &SquashParams,
) -> Result<ConfidenceScore> {
    let h = gaussian_entropy_3d(precision.ln_det()?);
    ConfidenceScore::new(Channel::Control, h, squash.apply(h)?)
}

/// Convenience: control confidence value of a tool under `params`.
pub fn tool_control_confidence(tool: &ToolSpec, params: &ControllerParams) -> Result<f64> {
    Ok(control_confidence(&control_precision(tool, params)?, &params.squash)?.value)
}
