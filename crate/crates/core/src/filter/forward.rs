use nalgebra::{DMatrix, DVector};

use super::{FilterStep, FilterTrajectory};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, sym_solve, symmetrize};
use crate::statespace::{
    measure, measurement_jacobian, propagate, transition_matrix, AugmentedState, StateSpaceModel,
};

/// Initial conditions and noise statistics for one pass.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterSetup {
    pub x0: DVector<f64>,
    pub theta0: DVector<f64>,
    /// (n+p) × (n+p) initial covariance.
    pub p0: DMatrix<f64>,
    /// n × n process noise of the model states; parameters get none.
    pub q: DMatrix<f64>,
    /// m × m measurement noise.
    pub r: DMatrix<f64>,
}

impl FilterSetup {
    fn validate(&self, model: &dyn StateSpaceModel, data: &Dataset) -> Result<()> {
        let n = model.n_states();
        let p = model.n_params();
        let m = model.n_meas();
        let na = n + p;
        let dims_ok = self.x0.len() == n
            && self.theta0.len() == p
            && self.p0.shape() == (na, na)
            && self.q.shape() == (n, n)
            && self.r.shape() == (m, m)
            && data.n_meas() == m
            && data.inputs.len() == model.input_names().len();
        if !dims_ok {
            return Err(Error::Dimension(format!(
                "filter setup does not match model dimensions (n={n}, p={p}, m={m})"
            )));
        }
        for (name, mat) in [("P0", &self.p0), ("Q", &self.q), ("R", &self.r)] {
            let scale = mat.abs().max().max(f64::MIN_POSITIVE);
            if crate::linalg::asymmetry(mat) > 1e-9 * scale {
                return Err(Error::Config(format!("{name} is not symmetric")));
            }
            if mat.nrows() > 0 && min_eigenvalue(mat) < -1e-9 * scale {
                return Err(Error::Config(format!("{name} is not positive semidefinite")));
            }
        }
        Ok(())
    }
}

fn finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Forward EKF pass over `data` on the state vector augmented with the
/// model parameters.
///
/// The first sample is processed with the prior `(x0, θ0, P0)` directly;
/// every later sample is preceded by an RK4 time update with covariance
/// transition Φ P Φᵀ + diag(Q, 0). Measurement updates use the Joseph form.
pub fn ekf_forward(
    model: &dyn StateSpaceModel,
    data: &Dataset,
    setup: &FilterSetup,
) -> Result<FilterTrajectory> {
    setup.validate(model, data)?;
    let n = model.n_states();
    let p = model.n_params();
    let na = n + p;
    let m = model.n_meas();
    let identity = DMatrix::<f64>::identity(na, na);

    let mut q_aug = DMatrix::zeros(na, na);
    q_aug.view_mut((0, 0), (n, n)).copy_from(&setup.q);

    let mut steps: Vec<FilterStep> = Vec::with_capacity(data.len());
    let mut x_prior = AugmentedState::new(setup.x0.clone(), setup.theta0.clone()).stacked();
    let mut p_prior = setup.p0.clone();

    for k in 0..data.len() {
        let t = data.times[k];
        if k > 0 {
            let prev = steps.last_mut().expect("previous step");
            let t_prev = prev.t;
            let dt = t - t_prev;
            let phi = transition_matrix(model, &prev.x_post, t_prev, dt, &data.inputs)
                .map_err(|e| divergence_or(e, k))?;
            x_prior = propagate(model, &prev.x_post, t_prev, dt, &data.inputs)
                .map_err(|e| divergence_or(e, k))?;
            p_prior = &phi * &prev.p_post * phi.transpose() + &q_aug;
            symmetrize(&mut p_prior);
            prev.phi = phi;
        }

        let u = data.inputs.at(t)?;
        let h = measurement_jacobian(model, &x_prior, &u).map_err(|e| divergence_or(e, k))?;
        let z_hat = measure(model, &x_prior, &u).map_err(|e| divergence_or(e, k))?;
        let z = &data.measurements[k];
        let innovation = z - &z_hat;

        let ph_t = &p_prior * h.transpose();
        let mut s = &h * &ph_t + &setup.r;
        symmetrize(&mut s);
        // K = P Hᵀ S⁻¹, obtained from S Kᵀ = H P
        let gain = sym_solve(&s, &ph_t.transpose())
            .ok_or(Error::Singular {
                what: "innovation covariance",
                step: k,
            })?
            .transpose();

        let x_post = &x_prior + &gain * &innovation;
        let i_kh = &identity - &gain * &h;
        let mut p_post = &i_kh * &p_prior * i_kh.transpose() + &gain * &setup.r * gain.transpose();
        symmetrize(&mut p_post);

        if !finite(&x_post) || p_post.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: k });
        }

        let h_post = measurement_jacobian(model, &x_post, &u).map_err(|e| divergence_or(e, k))?;
        let filtered_residue = z - measure(model, &x_post, &u).map_err(|e| divergence_or(e, k))?;

        steps.push(FilterStep {
            t,
            x_smooth: x_post.clone(),
            p_smooth: p_post.clone(),
            cross: DMatrix::zeros(na, na),
            phi: identity.clone(),
            h_prior: h,
            h_smooth: h_post.clone(),
            h_post,
            gain,
            innovation_cov: s,
            smoothed_residue: filtered_residue.clone(),
            filtered_residue,
            innovation,
            x_prior: x_prior.clone(),
            p_prior: p_prior.clone(),
            x_post,
            p_post,
        });
        debug_assert_eq!(steps[k].innovation.len(), m);
    }

    let mut traj = FilterTrajectory {
        n_states: n,
        n_params: p,
        steps,
        predicted: Vec::new(),
        smoothed: false,
    };
    traj.predicted = predicted_dynamics(model, data, &setup.x0, &traj.final_theta())
        .unwrap_or_else(|e| {
            log::warn!("open-loop prediction failed: {e}");
            Vec::new()
        });
    Ok(traj)
}

fn divergence_or(e: Error, step: usize) -> Error {
    match e {
        Error::NonFinite { .. } | Error::JacobianNonFinite { .. } => Error::Divergence { step },
        other => other,
    }
}

/// Noise-free open-loop propagation of the model states from `x0` with
/// fixed parameters `theta`, one entry per sample.
pub fn predicted_dynamics(
    model: &dyn StateSpaceModel,
    data: &Dataset,
    x0: &DVector<f64>,
    theta: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    let n = model.n_states();
    let mut xa = AugmentedState::new(x0.clone(), theta.clone()).stacked();
    let mut out = Vec::with_capacity(data.len());
    out.push(x0.clone());
    for k in 1..data.len() {
        let dt = data.times[k] - data.times[k - 1];
        xa = propagate(model, &xa, data.times[k - 1], dt, &data.inputs)?;
        out.push(xa.rows(0, n).into_owned());
    }
    Ok(out)
}
