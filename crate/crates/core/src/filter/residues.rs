use nalgebra::{DMatrix, DVector};

use super::FilterTrajectory;

/// One-sigma bands for the three residue series at one sample.
///
/// Filtered and smoothed variances `R − H P Hᵀ` can go negative when the
/// linearisation loses positive semidefiniteness; the band then holds
/// `sqrt(|variance|)` and the channel is flagged.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidueBounds {
    pub innovation: DVector<f64>,
    pub filtered: DVector<f64>,
    pub smoothed: DVector<f64>,
    pub filtered_negative: Vec<bool>,
    pub smoothed_negative: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidueSeries {
    pub innovation: Vec<DVector<f64>>,
    pub filtered: Vec<DVector<f64>>,
    pub smoothed: Vec<DVector<f64>>,
    pub bounds: Vec<ResidueBounds>,
}

impl ResidueSeries {
    /// Number of (sample, channel) pairs whose variance went negative.
    pub fn psd_loss_count(&self) -> usize {
        self.bounds
            .iter()
            .map(|b| {
                b.filtered_negative.iter().filter(|&&f| f).count()
                    + b.smoothed_negative.iter().filter(|&&f| f).count()
            })
            .sum()
    }
}

fn signed_band(variances: DVector<f64>) -> (DVector<f64>, Vec<bool>) {
    let flags = variances.iter().map(|&v| v < 0.0).collect();
    (variances.map(|v| v.abs().sqrt()), flags)
}

/// Diagonal of `R − H P Hᵀ`.
pub(crate) fn reduced_variance(r: &DMatrix<f64>, h: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    r - h * p * h.transpose()
}

/// Innovation, filtered and smoothed residues with their one-sigma bands.
pub fn residue_series(traj: &FilterTrajectory, r: &DMatrix<f64>) -> ResidueSeries {
    let mut out = ResidueSeries {
        innovation: Vec::with_capacity(traj.len()),
        filtered: Vec::with_capacity(traj.len()),
        smoothed: Vec::with_capacity(traj.len()),
        bounds: Vec::with_capacity(traj.len()),
    };
    for s in &traj.steps {
        let innovation_var = (&s.h_prior * &s.p_prior * s.h_prior.transpose() + r).diagonal();
        let (filtered, filtered_negative) =
            signed_band(reduced_variance(r, &s.h_post, &s.p_post).diagonal());
        let (smoothed, smoothed_negative) =
            signed_band(reduced_variance(r, &s.h_smooth, &s.p_smooth).diagonal());
        out.innovation.push(s.innovation.clone());
        out.filtered.push(s.filtered_residue.clone());
        out.smoothed.push(s.smoothed_residue.clone());
        out.bounds.push(ResidueBounds {
            innovation: innovation_var.map(|v| v.max(0.0).sqrt()),
            filtered,
            smoothed,
            filtered_negative,
            smoothed_negative,
        });
    }
    out
}
