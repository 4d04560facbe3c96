use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::filter::FilterTrajectory;
use crate::linalg::{outer, project_psd, symmetrized};
use crate::statespace::{propagate, StateSpaceModel};

/// Smallest variance any estimator hands back.
pub const NOISE_FLOOR: f64 = 1e-14;

/// A covariance estimate together with the number of entries that had to
/// be raised to the floor to keep it positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseEstimate {
    pub matrix: DMatrix<f64>,
    pub clamped: usize,
}

impl NoiseEstimate {
    pub(crate) fn projected(raw: &DMatrix<f64>, diagonal_only: bool) -> Self {
        let (matrix, clamped) = project_psd(raw, NOISE_FLOOR, diagonal_only);
        if clamped > 0 {
            log::warn!("{clamped} noise variance(s) raised to {NOISE_FLOOR:e}");
        }
        Self { matrix, clamped }
    }
}

fn require_smoothed(traj: &FilterTrajectory) -> Result<()> {
    if traj.is_empty() {
        return Err(Error::EmptyData("empty trajectory".into()));
    }
    if !traj.smoothed {
        return Err(Error::Config("trajectory has not been smoothed".into()));
    }
    Ok(())
}

/// Measurement-noise covariance from the smoothed residues:
/// (1/N) Σ [s sᵀ + H P_{k|N} Hᵀ].
pub fn estimate_r_smoothed(traj: &FilterTrajectory, diagonal_only: bool) -> Result<NoiseEstimate> {
    require_smoothed(traj)?;
    let m = traj.n_meas();
    let mut acc = DMatrix::zeros(m, m);
    for s in &traj.steps {
        acc += outer(&s.smoothed_residue, &s.smoothed_residue);
        acc += &s.h_smooth * &s.p_smooth * s.h_smooth.transpose();
    }
    acc /= traj.len() as f64;
    Ok(NoiseEstimate::projected(&symmetrized(acc), diagonal_only))
}

/// Process-noise samples w_k = x_{k+1|N} − f_d(x_{k|N}) of the model
/// states, one per consecutive pair of samples.
pub fn process_noise_samples(
    traj: &FilterTrajectory,
    model: &dyn StateSpaceModel,
    data: &Dataset,
) -> Result<Vec<DVector<f64>>> {
    require_smoothed(traj)?;
    let n = traj.n_states;
    let steps = &traj.steps;
    (0..steps.len().saturating_sub(1))
        .map(|k| {
            let dt = steps[k + 1].t - steps[k].t;
            let pred = propagate(model, &steps[k].x_smooth, steps[k].t, dt, &data.inputs)?;
            Ok((&steps[k + 1].x_smooth - pred).rows(0, n).into_owned())
        })
        .collect()
}

/// State block of Var(x_{k+1} − Φ x_k | all data).
pub(crate) fn smoothed_transition_variance(traj: &FilterTrajectory, k: usize) -> DMatrix<f64> {
    let n = traj.n_states;
    let cur = &traj.steps[k];
    let next = &traj.steps[k + 1];
    let phi = &cur.phi;
    let cp = &cur.cross * phi.transpose();
    let v = &next.p_smooth + phi * &cur.p_smooth * phi.transpose() - &cp - cp.transpose();
    symmetrized(v.view((0, 0), (n, n)).into_owned())
}

/// Options for [`estimate_q_smoothed`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProcessNoiseOptions {
    /// Add the smoothed-covariance correction (the EM form). Without it the
    /// estimate is the plain second moment of the process-noise samples.
    pub covariance_correction: bool,
    pub diagonal_only: bool,
}

impl Default for ProcessNoiseOptions {
    fn default() -> Self {
        Self {
            covariance_correction: true,
            diagonal_only: true,
        }
    }
}

/// Process-noise covariance of the model states from the smoothed
/// trajectory:
/// (1/(N−1)) Σ [w wᵀ + P_{k+1|N} + Φ P_{k|N} Φᵀ − C_k Φᵀ − Φ C_kᵀ].
pub fn estimate_q_smoothed(
    traj: &FilterTrajectory,
    model: &dyn StateSpaceModel,
    data: &Dataset,
    options: ProcessNoiseOptions,
) -> Result<NoiseEstimate> {
    let w = process_noise_samples(traj, model, data)?;
    if w.is_empty() {
        return Err(Error::EmptyData("process noise needs at least two samples".into()));
    }
    let n = traj.n_states;
    let mut acc = DMatrix::zeros(n, n);
    for (k, wk) in w.iter().enumerate() {
        acc += outer(wk, wk);
        if options.covariance_correction {
            acc += smoothed_transition_variance(traj, k);
        }
    }
    acc /= w.len() as f64;
    Ok(NoiseEstimate::projected(&symmetrized(acc), options.diagonal_only))
}

/// Next initial covariance: the smoothed covariance at the first sample,
/// with the parameter block scaled by `scale` (and the state–parameter
/// blocks by √scale, which keeps the result positive semidefinite).
pub fn update_p0(traj: &FilterTrajectory, scale: f64) -> Result<DMatrix<f64>> {
    require_smoothed(traj)?;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Config(format!("P0 scale must be positive, got {scale}")));
    }
    let n = traj.n_states;
    let mut p0 = symmetrized(traj.steps[0].p_smooth.clone());
    let na = p0.nrows();
    let root = scale.sqrt();
    for i in 0..na {
        for j in 0..na {
            let f = match (i < n, j < n) {
                (true, true) => 1.0,
                (false, false) => scale,
                _ => root,
            };
            p0[(i, j)] *= f;
        }
    }
    Ok(p0)
}

/// Starting guess for R: half the variance of the first differences of
/// each measurement channel, which removes slowly varying signal content.
pub fn seed_r(data: &Dataset) -> DMatrix<f64> {
    let m = data.n_meas();
    let mut d = DVector::zeros(m);
    let n = data.len();
    if n >= 3 {
        for i in 0..m {
            let diffs: Vec<f64> = (1..n)
                .map(|k| data.measurements[k][i] - data.measurements[k - 1][i])
                .collect();
            let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
            let var = diffs.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                / (diffs.len() - 1) as f64;
            d[i] = (0.5 * var).max(NOISE_FLOOR);
        }
    } else {
        d.fill(1.0);
    }
    DMatrix::from_diagonal(&d)
}
