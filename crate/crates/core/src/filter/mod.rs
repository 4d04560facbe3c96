//! Augmented-state extended Kalman filter, Rauch–Tung–Striebel smoother and
//! the three residue series used for tuning.

mod forward;
mod residues;
mod smoother;

use nalgebra::{DMatrix, DVector};

pub use forward::{ekf_forward, predicted_dynamics, FilterSetup};
pub use residues::{residue_series, ResidueBounds, ResidueSeries};
pub use smoother::rts_smooth;

/// Everything recorded at one sample of a forward/backward pass. All
/// vectors and covariances are for the augmented dimension n+p.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterStep {
    pub t: f64,
    pub x_prior: DVector<f64>,
    pub p_prior: DMatrix<f64>,
    pub x_post: DVector<f64>,
    pub p_post: DMatrix<f64>,
    pub x_smooth: DVector<f64>,
    pub p_smooth: DMatrix<f64>,
    /// Cov(x_{k+1}, x_k | all data); zero on the last step.
    pub cross: DMatrix<f64>,
    /// Transition matrix from this sample to the next; identity on the last
    /// step.
    pub phi: DMatrix<f64>,
    /// Measurement Jacobians at the prior, posterior and smoothed means.
    pub h_prior: DMatrix<f64>,
    pub h_post: DMatrix<f64>,
    pub h_smooth: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    /// Innovation covariance H P⁻ Hᵀ + R.
    pub innovation_cov: DMatrix<f64>,
    pub innovation: DVector<f64>,
    pub filtered_residue: DVector<f64>,
    pub smoothed_residue: DVector<f64>,
}

/// Per-sample record of one filter (and optionally smoother) pass.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterTrajectory {
    pub n_states: usize,
    pub n_params: usize,
    pub steps: Vec<FilterStep>,
    /// Open-loop propagation from the initial state with the final
    /// parameter estimate.
    pub predicted: Vec<DVector<f64>>,
    pub smoothed: bool,
}

impl FilterTrajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn augmented_dim(&self) -> usize {
        self.n_states + self.n_params
    }

    pub fn n_meas(&self) -> usize {
        self.steps.first().map_or(0, |s| s.innovation.len())
    }

    /// Parameter estimate after the last measurement update.
    pub fn final_theta(&self) -> DVector<f64> {
        let last = self.steps.last().expect("non-empty trajectory");
        last.x_post.rows(self.n_states, self.n_params).into_owned()
    }

    /// Parameter block of the last posterior covariance.
    pub fn final_theta_covariance(&self) -> DMatrix<f64> {
        let last = self.steps.last().expect("non-empty trajectory");
        last.p_post
            .view((self.n_states, self.n_states), (self.n_params, self.n_params))
            .into_owned()
    }

    /// Posterior parameter estimate at every sample.
    pub fn theta_trajectory(&self) -> Vec<DVector<f64>> {
        self.steps
            .iter()
            .map(|s| s.x_post.rows(self.n_states, self.n_params).into_owned())
            .collect()
    }
}
