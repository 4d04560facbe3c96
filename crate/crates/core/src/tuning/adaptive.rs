//! Innovation-based alternatives to the smoothed estimators: a windowed
//! covariance-matching rule and a steady-state rule.

use nalgebra::{DMatrix, DVector};

use super::noise::NoiseEstimate;
use crate::error::{Error, Result};
use crate::filter::FilterTrajectory;
use crate::linalg::{outer, symmetrized};

/// Process- and measurement-noise estimates from one adaptive rule.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveEstimate {
    pub q: NoiseEstimate,
    pub r: NoiseEstimate,
}

fn centred_covariance(samples: &[DVector<f64>]) -> DMatrix<f64> {
    let dim = samples[0].len();
    let count = samples.len() as f64;
    let mean = samples.iter().fold(DVector::zeros(dim), |acc, s| acc + s) / count;
    let mut acc = DMatrix::zeros(dim, dim);
    for s in samples {
        let d = s - &mean;
        acc += outer(&d, &d);
    }
    acc / (count - 1.0)
}

/// Number of trailing samples the adaptive rules average over by default.
/// The first half of a pass still carries the transient of the diffuse
/// parameter prior, whose H P⁻ Hᵀ would swamp the innovation statistics.
pub fn default_window(len: usize) -> usize {
    len.div_ceil(2).max(3.min(len))
}

/// Covariance matching over the last `window` samples (the last half of
/// the record when `None`):
///
/// R̂ = Ĉ_ν − mean(H P⁻ Hᵀ), and
/// Q̂ = Ĉ_d − mean(Φ P⁺_{k−1} Φᵀ − P⁺_k) with d_k = x⁺_k − x⁻_k,
/// both restricted to the model states where relevant.
pub fn mt_estimate(
    traj: &FilterTrajectory,
    window: Option<usize>,
    diagonal_only: bool,
) -> Result<AdaptiveEstimate> {
    let len = traj.len();
    let w = window.unwrap_or_else(|| default_window(len));
    if w > len {
        return Err(Error::Config(format!(
            "window of {w} samples exceeds the record length {len}"
        )));
    }
    if w < 3 {
        return Err(Error::Config(format!("window must hold at least 3 samples, got {w}")));
    }
    let n = traj.n_states;
    let m = traj.n_meas();
    let first = len - w;
    let steps = &traj.steps[first..];

    let innovations: Vec<_> = steps.iter().map(|s| s.innovation.clone()).collect();
    let mut hph = DMatrix::zeros(m, m);
    for s in steps {
        hph += &s.h_prior * &s.p_prior * s.h_prior.transpose();
    }
    hph /= w as f64;
    let r_raw = symmetrized(centred_covariance(&innovations) - hph);

    let start = first.max(1);
    let corrections: Vec<_> = (start..len)
        .map(|k| (&traj.steps[k].x_post - &traj.steps[k].x_prior).rows(0, n).into_owned())
        .collect();
    let mut transfer = DMatrix::zeros(n, n);
    for k in start..len {
        let prev = &traj.steps[k - 1];
        let cur = &traj.steps[k];
        let d = &prev.phi * &prev.p_post * prev.phi.transpose() - &cur.p_post;
        transfer += d.view((0, 0), (n, n));
    }
    transfer /= corrections.len() as f64;
    let q_raw = symmetrized(centred_covariance(&corrections) - transfer);

    Ok(AdaptiveEstimate {
        q: NoiseEstimate::projected(&q_raw, diagonal_only),
        r: NoiseEstimate::projected(&r_raw, diagonal_only),
    })
}

/// Steady-state rule: Ĉ_ν = mean(ν νᵀ), R̂ = Ĉ_ν − mean(H P⁻ Hᵀ) and
/// Q̂ = K̄ Ĉ_ν K̄ᵀ with the terminal gain K̄. Means run over the last half
/// of the record, as in `mt_estimate`.
pub fn ms_estimate(traj: &FilterTrajectory, diagonal_only: bool) -> Result<AdaptiveEstimate> {
    let len = traj.len();
    if len == 0 {
        return Err(Error::EmptyData("empty trajectory".into()));
    }
    let n = traj.n_states;
    let m = traj.n_meas();
    let w = default_window(len);
    let mut c_nu = DMatrix::zeros(m, m);
    let mut hph = DMatrix::zeros(m, m);
    for s in &traj.steps[len - w..] {
        c_nu += outer(&s.innovation, &s.innovation);
        hph += &s.h_prior * &s.p_prior * s.h_prior.transpose();
    }
    c_nu /= w as f64;
    hph /= w as f64;
    let r_raw = symmetrized(&c_nu - hph);
    let gain = traj.steps[len - 1].gain.rows(0, n).into_owned();
    let q_raw = symmetrized(&gain * &c_nu * gain.transpose());
    Ok(AdaptiveEstimate {
        q: NoiseEstimate::projected(&q_raw, diagonal_only),
        r: NoiseEstimate::projected(&r_raw, diagonal_only),
    })
}
