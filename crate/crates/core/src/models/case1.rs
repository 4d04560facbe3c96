//! Short-period longitudinal model with measured lateral channels
//! substituted as inputs.
//!
//! States (α, q, θ); inputs (δe, φm, βm, pm, rm, αm);
//! measurements (αm, qm, θm, an, ax) with accelerations in g.

use nalgebra::DVector;

use super::constants::ModelConstants;
use crate::error::Result;
use crate::statespace::StateSpaceModel;

pub const STATES: [&str; 3] = ["alpha", "q", "theta_pitch"];
pub const MEASUREMENTS: [&str; 5] = ["alpha_m", "q_m", "theta_m", "an_m", "ax_m"];
pub const INPUTS: [&str; 6] = ["delta_e", "phi_m", "beta_m", "p_m", "r_m", "alpha_m"];
pub const PARAMETERS: [&str; 13] = [
    "C_N_alpha",
    "C_N_delta_e",
    "C_L_0",
    "C_m_alpha",
    "C_m_q",
    "C_m_delta_e",
    "C_m_0",
    "theta_0",
    "C_N_0",
    "C_A_alpha",
    "C_A_alpha2",
    "C_A_delta_e",
    "C_A_0",
];
pub const INITIAL_THETA: [f64; 13] = [
    4.0, 0.24, 0.17, -0.48, -17.0, -0.9, -0.05, -0.02, 0.175, -0.3, 0.03, -0.083, -0.015,
];

// parameter slots
const CN_A: usize = 0;
const CN_DE: usize = 1;
const CL_0: usize = 2;
const CM_A: usize = 3;
const CM_Q: usize = 4;
const CM_DE: usize = 5;
const CM_0: usize = 6;
const TH_0: usize = 7;
const CN_0: usize = 8;
const CA_A: usize = 9;
const CA_A2: usize = 10;
const CA_DE: usize = 11;
const CA_0: usize = 12;

#[derive(Clone, Debug)]
pub struct Case1Model {
    constants: ModelConstants,
    cbar: f64,
    velocity: f64,
    qbar: f64,
}

/// Normal- and axial-force coefficients.
fn force_coefficients(alpha: f64, de: f64, th: &DVector<f64>) -> (f64, f64) {
    let cn = th[CN_A] * alpha + th[CN_DE] * de + th[CN_0];
    let ca = th[CA_A] * alpha + th[CA_A2] * alpha * alpha + th[CA_DE] * de + th[CA_0];
    (cn, ca)
}

impl Case1Model {
    pub fn new(constants: ModelConstants) -> Result<Self> {
        constants.validate()?;
        let cbar = constants.require(constants.cbar, "cbar")?;
        let velocity = constants.require(constants.velocity, "V")?;
        let qbar = constants.require(constants.qbar, "qbar")?;
        Ok(Self {
            constants,
            cbar,
            velocity,
            qbar,
        })
    }

    pub fn constants(&self) -> &ModelConstants {
        &self.constants
    }
}

impl StateSpaceModel for Case1Model {
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
        let (alpha, q, theta) = (x[0], x[1], x[2]);
        let (de, phi_m, beta_m, p_m, r_m, alpha_m) = (u[0], u[1], u[2], u[3], u[4], u[5]);
        let v = self.velocity;

        let (cn, ca) = force_coefficients(alpha, de, th);
        let cl = cn * alpha.cos() - ca * alpha.sin() + th[CL_0];

        let alpha_dot = -self.qbar * k.area / (k.mass * v) * cl
            + q
            + k.gravity / v
                * (phi_m.cos() * alpha_m.cos() * theta.cos() + alpha_m.sin() * theta.sin())
            - beta_m * (p_m * alpha_m.cos() + r_m * alpha_m.sin());

        let q_dot = self.qbar * k.area * self.cbar / k.iyy
            * (th[CM_A] * alpha
                + th[CM_Q] * self.cbar / (2.0 * v) * q
                + th[CM_DE] * de
                + th[CM_0])
            + (k.izz - k.ixx) / k.iyy * r_m * p_m;

        let theta_dot = q * phi_m.cos() - r_m * phi_m.sin() + th[TH_0];

        Ok(DVector::from_vec(vec![alpha_dot, q_dot, theta_dot]))
    }

    fn observe(
        &self,
        x: &DVector<f64>,
        xdot: &DVector<f64>,
        th: &DVector<f64>,
        u: &DVector<f64>,
    ) -> DVector<f64> {
        let k = &self.constants;
        let (alpha, q, theta) = (x[0], x[1], x[2]);
        let q_dot = xdot[1];
        let (cn, ca) = force_coefficients(alpha, u[0], th);
        let force_scale = self.qbar * k.area / (k.mass * k.gravity);
        DVector::from_vec(vec![
            alpha - k.k_alpha_x_alpha * q / self.velocity,
            q,
            theta,
            force_scale * cn + k.x_an / k.gravity * q_dot,
            -force_scale * ca + k.z_ax / k.gravity * q_dot,
        ])
    }

    fn initial_state(&self, z0: &DVector<f64>, _u0: &DVector<f64>) -> DVector<f64> {
        let q = z0[1];
        let alpha = z0[0] + self.constants.k_alpha_x_alpha * q / self.velocity;
        DVector::from_vec(vec![alpha, q, z0[2]])
    }
}
