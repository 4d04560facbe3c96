use super::FilterTrajectory;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{sym_solve, symmetrize};
use crate::statespace::{measure, measurement_jacobian, StateSpaceModel};

/// Rauch–Tung–Striebel backward pass over a completed forward trajectory.
///
/// Fills the smoothed means and covariances, the lag-one cross-covariance
/// Cov(x_{k+1}, x_k | all data), the measurement Jacobians at the smoothed
/// means and the smoothed residues z_k − h(x_{k|N}).
pub fn rts_smooth(
    mut traj: FilterTrajectory,
    model: &dyn StateSpaceModel,
    data: &Dataset,
) -> Result<FilterTrajectory> {
    let len = traj.steps.len();
    if len == 0 {
        return Err(Error::EmptyData("cannot smooth an empty trajectory".into()));
    }
    {
        let last = &mut traj.steps[len - 1];
        last.x_smooth = last.x_post.clone();
        last.p_smooth = last.p_post.clone();
        last.cross.fill(0.0);
    }
    for k in (0..len.saturating_sub(1)).rev() {
        let (head, tail) = traj.steps.split_at_mut(k + 1);
        let cur = &mut head[k];
        let next = &tail[0];
        // G = P⁺_k Φᵀ (P⁻_{k+1})⁻¹, from P⁻_{k+1} Gᵀ = Φ P⁺_k
        let g_t = sym_solve(&next.p_prior, &(&cur.phi * &cur.p_post)).ok_or(Error::Singular {
            what: "predicted covariance",
            step: k + 1,
        })?;
        let g = g_t.transpose();
        cur.x_smooth = &cur.x_post + &g * (&next.x_smooth - &next.x_prior);
        let mut ps = &cur.p_post + &g * (&next.p_smooth - &next.p_prior) * &g_t;
        symmetrize(&mut ps);
        cur.p_smooth = ps;
        cur.cross = &next.p_smooth * &g_t;
        if cur.x_smooth.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: k });
        }
    }
    for (k, step) in traj.steps.iter_mut().enumerate() {
        let u = data.inputs.at(step.t)?;
        step.h_smooth = measurement_jacobian(model, &step.x_smooth, &u)?;
        step.smoothed_residue = &data.measurements[k] - measure(model, &step.x_smooth, &u)?;
    }
    traj.smoothed = true;
    Ok(traj)
}
