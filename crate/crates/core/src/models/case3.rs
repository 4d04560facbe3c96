//! Lateral-directional model with the pitch channels substituted as
//! measured inputs. Roll and yaw accelerations are coupled through Izx.
//!
//! States (β, p, φ, r); inputs (δa, δr, θm, qm, αm);
//! measurements (βm, pm, φm, rm, ay) with ay in g.

use nalgebra::DVector;

use super::constants::ModelConstants;
use crate::error::{Error, Result};
use crate::statespace::StateSpaceModel;

pub const STATES: [&str; 4] = ["beta", "p", "phi", "r"];
pub const MEASUREMENTS: [&str; 5] = ["beta_m", "p_m", "phi_m", "r_m", "ay_m"];
pub const INPUTS: [&str; 5] = ["delta_a", "delta_r", "theta_m", "q_m", "alpha_m"];
pub const PARAMETERS: [&str; 20] = [
    "C_Y_beta",
    "C_Y_delta_r",
    "beta_0",
    "C_L_beta",
    "C_L_p",
    "C_L_r",
    "C_L_delta_a",
    "C_L_delta_r",
    "C_L_0",
    "phi_0",
    "C_N_beta",
    "C_N_p",
    "C_N_r",
    "C_N_delta_a",
    "C_N_delta_r",
    "C_N_0",
    "C_Y_0",
    "C_Y_p",
    "C_Y_r",
    "C_Y_delta_a",
];
pub const INITIAL_THETA: [f64; 20] = [
    -0.5, 0.1, -0.01, 0.01, -0.35, 0.01, 0.06, 0.01, -0.002, 0.002, 0.07, -0.055, -0.05, 0.003,
    -0.04, 0.0068, -0.025, 0.5, -1.0, 0.005,
];

const CY_B: usize = 0;
const CY_DR: usize = 1;
const BETA_0: usize = 2;
const CL_B: usize = 3;
const CL_P: usize = 4;
const CL_R: usize = 5;
const CL_DA: usize = 6;
const CL_DR: usize = 7;
const CL_0: usize = 8;
const PHI_0: usize = 9;
const CN_B: usize = 10;
const CN_P: usize = 11;
const CN_R: usize = 12;
const CN_DA: usize = 13;
const CN_DR: usize = 14;
const CN_0: usize = 15;
const CY_0: usize = 16;
const CY_P: usize = 17;
const CY_R: usize = 18;
const CY_DA: usize = 19;

/// Reference length used to non-dimensionalise p and r in the rolling
/// moment.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum RollReference {
    /// Wing span b, as in the yawing moment.
    #[default]
    Span,
    /// Mean chord c̄ (must be supplied as a constant).
    Chord,
}

#[derive(Clone, Debug)]
pub struct Case3Model {
    constants: ModelConstants,
    span: f64,
    velocity: f64,
    qbar: f64,
    roll_length: f64,
}

/// Solve `[1, −Izx/Ixx; −Izx/Izz, 1]·[ṗ; ṙ] = [roll; yaw]`.
pub fn solve_roll_yaw(roll: f64, yaw: f64, ixx: f64, izz: f64, izx: f64) -> Result<(f64, f64)> {
    let a = izx / ixx;
    let c = izx / izz;
    let det = 1.0 - a * c;
    if !(det.abs() > 1e-12) || !det.is_finite() {
        return Err(Error::Constants(format!(
            "roll/yaw coupling matrix is singular (determinant {det})"
        )));
    }
    Ok(((roll + a * yaw) / det, (yaw + c * roll) / det))
}

impl Case3Model {
    pub fn new(constants: ModelConstants, roll_reference: RollReference) -> Result<Self> {
        constants.validate()?;
        constants.validate_lateral_inertia()?;
        let span = constants.require(constants.span, "b")?;
        let velocity = constants.require(constants.velocity, "V")?;
        let qbar = constants.require(constants.qbar, "qbar")?;
        let roll_length = match roll_reference {
            RollReference::Span => span,
            RollReference::Chord => constants.require(constants.cbar, "cbar")?,
        };
        Ok(Self {
            constants,
            span,
            velocity,
            qbar,
            roll_length,
        })
    }

    pub fn constants(&self) -> &ModelConstants {
        &self.constants
    }

    fn side_force(&self, x: &DVector<f64>, th: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let (beta, p, r) = (x[0], x[1], x[3]);
        let (da, dr) = (u[0], u[1]);
        let s = self.span / (2.0 * self.velocity);
        th[CY_B] * beta + th[CY_P] * s * p + th[CY_R] * s * r + th[CY_DA] * da + th[CY_DR] * dr
    }

    /// Right-hand sides of the roll and yaw equations before decoupling.
    pub fn moment_terms(&self, x: &DVector<f64>, th: &DVector<f64>, u: &DVector<f64>) -> (f64, f64) {
        let k = &self.constants;
        let (beta, p, r) = (x[0], x[1], x[3]);
        let (da, dr, q_m) = (u[0], u[1], u[3]);
        let qsb = self.qbar * k.area * self.span;
        let sl = self.roll_length / (2.0 * self.velocity);
        let sn = self.span / (2.0 * self.velocity);
        let roll = qsb / k.ixx
            * (th[CL_B] * beta
                + th[CL_P] * sl * p
                + th[CL_R] * sl * r
                + th[CL_DA] * da
                + th[CL_DR] * dr
                + th[CL_0])
            + (k.iyy - k.izz) / k.ixx * r * q_m
            + k.izx / k.ixx * p * q_m;
        let yaw = qsb / k.izz
            * (th[CN_B] * beta
                + th[CN_P] * sn * p
                + th[CN_R] * sn * r
                + th[CN_DA] * da
                + th[CN_DR] * dr
                + th[CN_0])
            + (k.ixx - k.iyy) / k.izz * p * q_m
            - k.izx / k.izz * r * q_m;
        (roll, yaw)
    }
}

impl StateSpaceModel for Case3Model {
    fn state_names(&self) -> Vec<String> {
        STATES.iter().map(|s| s.to_string()).collect()
    }
    fn measurement_names(&self) -> Vec<String> {
        MEASUREMENTS.iter().map(|s| s.to_string()).collect()
    }
    fn parameter_names(&self) -> Vec<String> {
        PARAMETERS.iter().map(|s| s.to_string()).collect()
    }
    fn input_names(&self) -> Vec<String> {
        INPUTS.iter().map(|s| s.to_string()).collect()
    }

    fn derivative(
        &self,
        x: &DVector<f64>,
        th: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let k = &self.constants;
        let (p, phi, r) = (x[1], x[2], x[3]);
        let (theta_m, q_m, alpha_m) = (u[2], u[3], u[4]);
        let v = self.velocity;

        let beta_dot = self.qbar * k.area / (k.mass * v) * (self.side_force(x, th, u) + th[BETA_0])
            + k.gravity / v * phi.sin() * theta_m.cos()
            + p * alpha_m.sin()
            - r * alpha_m.cos();

        let (roll, yaw) = self.moment_terms(x, th, u);
        let (p_dot, r_dot) = solve_roll_yaw(roll, yaw, k.ixx, k.izz, k.izx)?;

        let tan_theta = theta_m.tan();
        let phi_dot = p + q_m * tan_theta * phi.sin() + r * tan_theta * phi.cos() + th[PHI_0];

        Ok(DVector::from_vec(vec![beta_dot, p_dot, phi_dot, r_dot]))
    }

    fn observe(
        &self,
        x: &DVector<f64>,
        xdot: &DVector<f64>,
        th: &DVector<f64>,
        u: &DVector<f64>,
    ) -> DVector<f64> {
        let k = &self.constants;
        let (beta, p, phi, r) = (x[0], x[1], x[2], x[3]);
        let (p_dot, r_dot) = (xdot[1], xdot[3]);
        let v = self.velocity;
        DVector::from_vec(vec![
            beta - k.k_beta_z_beta * p / v + k.k_beta_x_beta * r / v,
            p,
            phi,
            r,
            self.qbar * k.area / (k.mass * k.gravity) * (self.side_force(x, th, u) + th[CY_0])
                - k.z_ay / k.gravity * p_dot
                + k.x_ay / k.gravity * r_dot,
        ])
    }

    fn initial_state(&self, z0: &DVector<f64>, _u0: &DVector<f64>) -> DVector<f64> {
        let k = &self.constants;
        let v = self.velocity;
        let (p, phi, r) = (z0[1], z0[2], z0[3]);
        let beta = z0[0] + k.k_beta_z_beta * p / v - k.k_beta_x_beta * r / v;
        DVector::from_vec(vec![beta, p, phi, r])
    }
}
