//! Built-in excitation scenarios with the tabulated reference values as
//! the hidden truth.

use nalgebra::{DMatrix, DVector};

use super::SimConfig;
use crate::error::{Error, Result};
use crate::models::{AircraftModel, CaseId};
use crate::statespace::{numeric_jacobian, ChannelSeries, StateSpaceModel};

const CASE1_THETA: [f64; 13] = [
    4.6469, 0.0555, 0.0162, -0.5468, -19.8027, -1.1229, -0.0495, 0.0007, 0.2195, -0.1398,
    -3.2088, -0.0651, -0.0155,
];
const CASE1_R: [f64; 5] = [0.49e-6, 0.04e-6, 0.40e-6, 15.98e-6, 17.70e-6];
const CASE1_Q: [f64; 3] = [0.134e-6, 2.287e-6, 1.204e-6];

const CASE2_THETA: [f64; 10] = [
    4.9235, 0.1554, 0.2409, -0.5293, -11.8596, -6.8959, -0.9731, -0.0425, 0.0003, 0.2538,
];
const CASE2_R: [f64; 4] = [1.241e-6, 0.051e-6, 0.460e-6, 5.668e-6];
const CASE2_Q: [f64; 3] = [0.180e-6, 2.954e-6, 2.646e-6];
const CASE2_SPEED: f64 = 400.0;

const CASE3_THETA: [f64; 20] = [
    -0.4579, 0.1040, -0.0143, -0.0168, -0.3100, 0.0740, 0.0557, 0.0072, -0.0020, 0.0018, 0.0656,
    -0.0429, -0.0880, 0.0004, -0.0478, 0.0067, -0.0259, -0.2828, 0.2224, 0.0384,
];
const CASE3_R: [f64; 5] = [0.0871e-6, 0.0623e-6, 0.2255e-6, 0.0200e-6, 43.8064e-6];
const CASE3_Q: [f64; 4] = [4.2163e-6, 5.1340e-6, 4.9426e-6, 1.4324e-6];
const CASE3_ALPHA: f64 = 0.05;

/// Knobs of a built-in scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub dt: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Control doublet amplitude in degrees.
    pub excitation_deg: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            dt: 0.02,
            n_samples: 2000,
            seed: 0,
            excitation_deg: 0.3,
        }
    }
}

/// Reference parameters and noise levels of a case.
pub fn reference_truth(case: CaseId) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
    let (theta, q, r): (&[f64], &[f64], &[f64]) = match case {
        CaseId::Case1Longitudinal => (&CASE1_THETA, &CASE1_Q, &CASE1_R),
        CaseId::Case2Longitudinal => (&CASE2_THETA, &CASE2_Q, &CASE2_R),
        CaseId::Case3Lateral => (&CASE3_THETA, &CASE3_Q, &CASE3_R),
    };
    (
        DVector::from_column_slice(theta),
        DMatrix::from_diagonal(&DVector::from_column_slice(q)),
        DMatrix::from_diagonal(&DVector::from_column_slice(r)),
    )
}

/// Square doublet in radians: +A on [t_start, t_start + t_up), −A on the
/// following `t_down` seconds, zero elsewhere. The whole doublet must fit
/// inside `times`.
pub fn doublet_input(
    name: &str,
    times: &[f64],
    amplitude_deg: f64,
    t_start: f64,
    t_up: f64,
    t_down: f64,
) -> Result<ChannelSeries> {
    let (first, last) = match (times.first(), times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::Config("doublet needs a time grid".into())),
    };
    let tol = 1e-9 * (1.0 + last.abs());
    if !(t_start >= first - tol && t_up > 0.0 && t_down > 0.0)
        || t_start + t_up + t_down > last + tol
    {
        return Err(Error::Config(format!(
            "doublet timing start {t_start}, up {t_up}, down {t_down} does not fit [{first}, {last}]"
        )));
    }
    let a = amplitude_deg.to_radians();
    let eps = 1e-9 * (1.0 + t_start.abs());
    let values = times
        .iter()
        .map(|&t| {
            let s = t - t_start;
            if s < -eps {
                0.0
            } else if s < t_up - eps {
                a
            } else if s < t_up + t_down - eps {
                -a
            } else {
                0.0
            }
        })
        .collect();
    ChannelSeries::new(name, times.to_vec(), values)
}

/// Equilibrium state and input vector.
#[derive(Clone, Debug, PartialEq)]
pub struct TrimPoint {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
}

/// Newton iteration on the free variables `v` until `residual(v)` vanishes.
fn newton<F>(mut v: DVector<f64>, residual: F) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    for _ in 0..50 {
        let r = residual(&v)?;
        if r.amax() < 1e-13 {
            return Ok(v);
        }
        let j = numeric_jacobian(&residual, &v, None)?;
        let step = j
            .lu()
            .solve(&r)
            .ok_or_else(|| Error::Config("trim Jacobian is singular".into()))?;
        v -= step;
    }
    let r = residual(&v)?;
    if r.amax() < 1e-9 {
        Ok(v)
    } else {
        Err(Error::Config(format!("trim did not converge (residual {:e})", r.amax())))
    }
}

/// Level, wings-level equilibrium of a built-in model for parameters
/// `theta`: α and δe for the longitudinal cases (θ = α, q = 0), β, δa and
/// δr for the lateral case (p = r = φ = 0). Only the rate equations are
/// zeroed; the attitude angles still move with their bias terms.
pub fn trim(model: &AircraftModel, theta: &DVector<f64>) -> Result<TrimPoint> {
    match model.case() {
        CaseId::Case1Longitudinal | CaseId::Case2Longitudinal => {
            let case2 = model.case() == CaseId::Case2Longitudinal;
            let build = |v: &DVector<f64>| {
                let (alpha, de) = (v[0], v[1]);
                let x = DVector::from_vec(vec![alpha, 0.0, alpha]);
                let u = if case2 {
                    DVector::from_vec(vec![de, 0.0, 0.0, CASE2_SPEED, 0.0, 0.0, alpha])
                } else {
                    DVector::from_vec(vec![de, 0.0, 0.0, 0.0, 0.0, alpha])
                };
                (x, u)
            };
            let v = newton(DVector::from_vec(vec![0.03, -0.05]), |v| {
                let (x, u) = build(v);
                let d = model.derivative(&x, theta, &u)?;
                Ok(DVector::from_vec(vec![d[0], d[1]]))
            })?;
            let (x, u) = build(&v);
            Ok(TrimPoint { x, u })
        }
        CaseId::Case3Lateral => {
            let build = |v: &DVector<f64>| {
                let x = DVector::from_vec(vec![v[0], 0.0, 0.0, 0.0]);
                let u = DVector::from_vec(vec![v[1], v[2], CASE3_ALPHA, 0.0, CASE3_ALPHA]);
                (x, u)
            };
            let v = newton(DVector::zeros(3), |v| {
                let (x, u) = build(v);
                let d = model.derivative(&x, theta, &u)?;
                Ok(DVector::from_vec(vec![d[0], d[1], d[3]]))
            })?;
            let (x, u) = build(&v);
            Ok(TrimPoint { x, u })
        }
    }
}

fn sinusoid(name: &str, times: &[f64], offset: f64, amp: f64, omega: f64, phase: f64) -> Result<ChannelSeries> {
    let values = times.iter().map(|&t| offset + amp * (omega * t + phase).sin()).collect();
    ChannelSeries::new(name, times.to_vec(), values)
}

/// Repeated doublets every ten seconds, alternating in sign, on top of
/// `trim`.
fn doublet_train(name: &str, times: &[f64], trim: f64, amplitude_deg: f64, first: f64) -> Result<ChannelSeries> {
    let end = times[times.len() - 1];
    let mut values = vec![trim; times.len()];
    let mut start = first;
    let mut sign = 1.0;
    while start + 2.0 <= end {
        let d = doublet_input(name, times, sign * amplitude_deg, start, 1.0, 1.0)?;
        for (v, dv) in values.iter_mut().zip(d.values()) {
            *v += dv;
        }
        start += 10.0;
        sign = -sign;
    }
    ChannelSeries::new(name, times.to_vec(), values)
}

/// Simulation set-up for a built-in model: tabulated reference values as
/// truth, trimmed initial state, control doublets and small sinusoids on
/// the measured cross-axis channels.
pub fn builtin_scenario(model: &AircraftModel, spec: &ScenarioSpec) -> Result<SimConfig> {
    if spec.n_samples < 10 || !(spec.dt > 0.0) {
        return Err(Error::Config("scenario needs at least ten samples and a positive step".into()));
    }
    let case = model.case();
    let (theta, q, r) = reference_truth(case);
    let trim_point = trim(model, &theta)?;
    let times: Vec<f64> = (0..spec.n_samples).map(|k| k as f64 * spec.dt).collect();
    let a = spec.excitation_deg;
    let u0 = &trim_point.u;
    let inputs = match case {
        CaseId::Case1Longitudinal => vec![
            doublet_train("delta_e", &times, u0[0], a, 2.0)?,
            sinusoid("phi_m", &times, 0.0, 0.02, 0.31, 0.0)?,
            sinusoid("beta_m", &times, 0.0, 0.005, 0.73, 0.4)?,
            sinusoid("p_m", &times, 0.0, 0.01, 0.53, 1.0)?,
            sinusoid("r_m", &times, 0.0, 0.005, 0.41, 0.3)?,
        ],
        CaseId::Case2Longitudinal => vec![
            doublet_train("delta_e", &times, u0[0], a, 2.0)?,
            sinusoid("phi_m", &times, 0.0, 0.02, 0.31, 0.0)?,
            sinusoid("beta_m", &times, 0.0, 0.005, 0.73, 0.4)?,
            sinusoid("V_m", &times, CASE2_SPEED, 2.0, 0.11, 0.0)?,
            sinusoid("p_m", &times, 0.0, 0.01, 0.53, 1.0)?,
            sinusoid("r_m", &times, 0.0, 0.005, 0.41, 0.3)?,
        ],
        CaseId::Case3Lateral => vec![
            doublet_train("delta_a", &times, u0[0], a, 2.0)?,
            doublet_train("delta_r", &times, u0[1], a, 7.0)?,
            sinusoid("theta_m", &times, CASE3_ALPHA, 0.005, 0.29, 0.0)?,
            sinusoid("q_m", &times, 0.0, 0.005, 0.29, 1.5707963267948966)?,
            sinusoid("alpha_m", &times, CASE3_ALPHA, 0.002, 0.37, 0.2)?,
        ],
    };
    Ok(SimConfig {
        theta,
        q,
        r,
        x0: trim_point.x,
        t0: 0.0,
        dt: spec.dt,
        n_samples: spec.n_samples,
        seed: spec.seed,
        inputs,
    })
}
