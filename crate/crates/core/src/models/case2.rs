//! Longitudinal model flown through an aileron roll: airspeed, sideslip and
//! the lateral rates enter as measured inputs, and the normal-force slopes
//! are tied to the lift slopes (C_Nα = C_Lα, C_Nδe = C_Lδe).
//!
//! States (α, q, θ); inputs (δe, φm, βm, Vm, pm, rm, αm);
//! measurements (αm, qm, θm, an).

use nalgebra::DVector;

use super::constants::ModelConstants;
use crate::error::{Error, Result};
use crate::statespace::StateSpaceModel;

pub const STATES: [&str; 3] = ["alpha", "q", "theta_pitch"];
pub const MEASUREMENTS: [&str; 4] = ["alpha_m", "q_m", "theta_m", "an_m"];
pub const INPUTS: [&str; 7] = ["delta_e", "phi_m", "beta_m", "V_m", "p_m", "r_m", "alpha_m"];
pub const PARAMETERS: [&str; 10] = [
    "C_L_alpha",
    "C_L_delta_e",
    "C_L_0",
    "C_m_alpha",
    "C_m_q",
    "C_m_alphadot",
    "C_m_delta_e",
    "C_m_0",
    "theta_0",
    "C_N_0",
];
pub const INITIAL_THETA: [f64; 10] = [4.0, 0.15, 0.2, -0.5, -11.5, -5.0, -1.38, -0.06, -0.01, 0.2];

const CL_A: usize = 0;
const CL_DE: usize = 1;
const CL_0: usize = 2;
const CM_A: usize = 3;
const CM_Q: usize = 4;
const CM_AD: usize = 5;
const CM_DE: usize = 6;
const CM_0: usize = 7;
const TH_0: usize = 8;
const CN_0: usize = 9;

/// Source of the dynamic pressure, which the record does not tabulate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DynamicPressure {
    Constant(f64),
    /// ½·ρ·Vm² from the measured airspeed channel.
    FromDensity(f64),
}

impl DynamicPressure {
    fn at(self, vm: f64) -> f64 {
        match self {
            DynamicPressure::Constant(q) => q,
            DynamicPressure::FromDensity(rho) => 0.5 * rho * vm * vm,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Case2Model {
    constants: ModelConstants,
    cbar: f64,
    qbar: DynamicPressure,
}

impl Case2Model {
    pub fn new(constants: ModelConstants, qbar: DynamicPressure) -> Result<Self> {
        constants.validate()?;
        let cbar = constants.require(constants.cbar, "cbar")?;
        match qbar {
            DynamicPressure::Constant(q) | DynamicPressure::FromDensity(q) if !(q > 0.0) => {
                return Err(Error::Config(format!(
                    "dynamic pressure source must be positive, got {q}"
                )))
            }
            _ => {}
        }
        Ok(Self {
            constants,
            cbar,
            qbar,
        })
    }

    pub fn constants(&self) -> &ModelConstants {
        &self.constants
    }

    pub fn dynamic_pressure(&self) -> DynamicPressure {
        self.qbar
    }
}

impl StateSpaceModel for Case2Model {
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
        let (de, phi_m, beta_m, vm, p_m, r_m, alpha_m) = (u[0], u[1], u[2], u[3], u[4], u[5], u[6]);
        let cos_beta = beta_m.cos();
        if cos_beta.abs() < 1e-6 {
            return Err(Error::DegenerateInput(format!(
                "cos(beta_m) = {cos_beta} too close to zero"
            )));
        }
        if !(vm > 0.0) {
            return Err(Error::DegenerateInput(format!("V_m = {vm} must be positive")));
        }
        let qbar = self.qbar.at(vm);
        let cl = th[CL_A] * alpha + th[CL_DE] * de + th[CL_0];

        let alpha_dot = -qbar * k.area / (k.mass * vm * cos_beta) * cl
            + q
            + k.gravity / (vm * cos_beta)
                * (phi_m.cos() * alpha_m.cos() * theta.cos() + alpha_m.sin() * theta.sin())
            - beta_m.tan() * (p_m * alpha_m.cos() + r_m * alpha_m.sin());

        // α̇ does not depend on q̇, so it can be substituted directly.
        let rate_scale = self.cbar / (2.0 * vm);
        let q_dot = qbar * k.area * self.cbar / k.iyy
            * (th[CM_A] * alpha
                + th[CM_Q] * rate_scale * q
                + th[CM_AD] * rate_scale * alpha_dot
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
        let (de, vm) = (u[0], u[3]);
        let qbar = self.qbar.at(vm);
        let cn = th[CL_A] * alpha + th[CL_DE] * de + th[CN_0];
        DVector::from_vec(vec![
            k.k_alpha * alpha - k.k_alpha_x_alpha * q / vm,
            q,
            theta,
            qbar * k.area / (k.mass * k.gravity) * cn + k.x_an / k.gravity * xdot[1],
        ])
    }

    fn initial_state(&self, z0: &DVector<f64>, u0: &DVector<f64>) -> DVector<f64> {
        let k = &self.constants;
        let q = z0[1];
        let alpha = (z0[0] + k.k_alpha_x_alpha * q / u0[3]) / k.k_alpha;
        DVector::from_vec(vec![alpha, q, z0[2]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::measurement_jacobian;
    use crate::statespace::AugmentedState;

    const QBAR: f64 = 90.0;
    const V: f64 = 380.0;

    fn model() -> Case2Model {
        Case2Model::new(ModelConstants::case2(), DynamicPressure::Constant(QBAR)).unwrap()
    }

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn inputs(beta: f64) -> DVector<f64> {
        v(&[0.02, 0.1, beta, V, 0.3, -0.05, 0.06])
    }

    #[test]
    fn zero_params_zero_inputs_gives_gravity_over_vm() {
        let mut u = v(&[0.0; 7]);
        u[3] = V;
        let d = model().derivative(&v(&[0.0; 3]), &v(&[0.0; 10]), &u).unwrap();
        assert!((d[0] - 32.2 / V).abs() < 1e-15);
    }

    #[test]
    fn zero_sideslip_reduces_to_linear_lift_form() {
        let m = model();
        let th = v(&INITIAL_THETA);
        let x = v(&[0.05, 0.1, 0.02]);
        let u = inputs(0.0);
        let d = m.derivative(&x, &th, &u).unwrap();
        let k = ModelConstants::case2();
        let cl = th[CL_A] * x[0] + th[CL_DE] * u[0] + th[CL_0];
        let expected = -QBAR * k.area / (k.mass * V) * cl
            + x[1]
            + 32.2 / V * (u[1].cos() * u[6].cos() * x[2].cos() + u[6].sin() * x[2].sin());
        assert!((d[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn alpha_rate_damping_couples_into_pitch_only_when_nonzero() {
        let m = model();
        let mut th = v(&INITIAL_THETA);
        th[CM_AD] = 0.0;
        let u = inputs(0.05);
        let x1 = v(&[0.05, 0.1, 0.02]);
        // change θ, which moves α̇ through gravity but nothing else in q̇
        let x2 = v(&[0.05, 0.1, 0.4]);
        let d1 = m.derivative(&x1, &th, &u).unwrap();
        let d2 = m.derivative(&x2, &th, &u).unwrap();
        assert_ne!(d1[0], d2[0]);
        assert_eq!(d1[1], d2[1]);
        th[CM_AD] = -5.0;
        let d1 = m.derivative(&x1, &th, &u).unwrap();
        let d2 = m.derivative(&x2, &th, &u).unwrap();
        assert_ne!(d1[1], d2[1]);
    }

    #[test]
    fn degenerate_sideslip_is_rejected() {
        let err = model()
            .derivative(&v(&[0.0; 3]), &v(&[0.0; 10]), &inputs(std::f64::consts::FRAC_PI_2))
            .unwrap_err();
        assert!(matches!(err, Error::DegenerateInput(_)));
    }

    #[test]
    fn alpha_measurement_and_zero_normal_acceleration() {
        let m = model();
        let z = m.observe(&v(&[0.07, 0.0, 0.0]), &v(&[0.0; 3]), &v(&[0.0; 10]), &inputs(0.0));
        assert_eq!(z[0], 0.07);
        assert_eq!(z[3], 0.0);
    }

    #[test]
    fn normal_acceleration_slope_uses_lift_slope() {
        let m = model();
        let mut th = v(&INITIAL_THETA);
        // isolate the static term by removing every q̇ contribution
        th[CM_A] = 0.0;
        th[CM_AD] = 0.0;
        let mut k = ModelConstants::case2();
        k.x_an = 0.0;
        let m0 = Case2Model::new(k.clone(), DynamicPressure::Constant(QBAR)).unwrap();
        let xa = AugmentedState::new(v(&[0.05, 0.1, 0.02]), th.clone()).stacked();
        let h = measurement_jacobian(&m0, &xa, &inputs(0.0)).unwrap();
        let expected = QBAR * k.area / (k.mass * k.gravity) * th[CL_A];
        assert!((h[(3, 0)] - expected).abs() < 1e-6 * expected.abs());
        let _ = m;
    }

    #[test]
    fn density_source_scales_with_airspeed_squared() {
        let rho = 0.002;
        let m = Case2Model::new(ModelConstants::case2(), DynamicPressure::FromDensity(rho)).unwrap();
        let th = v(&INITIAL_THETA);
        let x = v(&[0.05, 0.0, 0.0]);
        let mut u = inputs(0.0);
        u[4] = 0.0;
        let z = m.observe(&x, &v(&[0.0; 3]), &th, &u);
        let k = ModelConstants::case2();
        let cn = th[CL_A] * x[0] + th[CL_DE] * u[0] + th[CN_0];
        let expected = 0.5 * rho * V * V * k.area / (k.mass * k.gravity) * cn;
        assert!((z[3] - expected).abs() < 1e-12);
    }
}
