use nalgebra::{DMatrix, DVector};

use super::noise::{process_noise_samples, smoothed_transition_variance};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::filter::FilterTrajectory;
use crate::linalg::{log_det_spd, spd_quad_form, sym_inverse, symmetrized};
use crate::statespace::{propagate, StateSpaceModel};

pub const COST_NAMES: [&str; 8] = ["J1", "J2", "J3", "J4", "J5", "J6", "J7", "J8"];

/// The eight consistency measures of one filter/smoother pass.
///
/// J1–J3 are normalised squared innovation, filtered and smoothed
/// residues (each ≈ m when the statistics are right), J4 the squared
/// normalised mean of the smoothed residues (≈ 0), J5 the mean negative
/// log-likelihood term ln|S| + νᵀS⁻¹ν, and J6–J8 normalised squared
/// process-noise proxies (each ≈ n).
#[derive(Clone, Debug, PartialEq)]
pub struct CostVector {
    pub values: [f64; 8],
    /// Samples left out of each mean because the normaliser was not
    /// positive definite.
    pub skipped: [usize; 8],
}

impl CostVector {
    /// Cost `i` with 1-based numbering.
    pub fn j(&self, i: usize) -> f64 {
        self.values[i - 1]
    }

    pub fn total_skipped(&self) -> usize {
        self.skipped.iter().sum()
    }
}

#[derive(Default)]
struct Mean {
    sum: f64,
    used: usize,
    skipped: usize,
}

impl Mean {
    fn add(&mut self, v: Option<f64>) {
        match v {
            Some(v) => {
                self.sum += v;
                self.used += 1;
            }
            None => self.skipped += 1,
        }
    }

    fn value(&self) -> f64 {
        if self.used == 0 {
            f64::NAN
        } else {
            self.sum / self.used as f64
        }
    }
}

fn state_block(m: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    symmetrized(m.view((0, 0), (n, n)).into_owned())
}

fn state_rows(v: &DVector<f64>, n: usize) -> DVector<f64> {
    v.rows(0, n).into_owned()
}

/// Evaluate J1–J8 on a smoothed trajectory. `q` and `r` are the statistics
/// the pass was run with.
pub fn compute_costs(
    traj: &FilterTrajectory,
    model: &dyn StateSpaceModel,
    data: &Dataset,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<CostVector> {
    if !traj.smoothed {
        return Err(Error::Config("costs need a smoothed trajectory".into()));
    }
    let n = traj.n_states;
    let steps = &traj.steps;
    let len = steps.len();
    if len < 2 {
        return Err(Error::EmptyData("costs need at least two samples".into()));
    }
    let m = traj.n_meas();

    let mut j = [Mean::default(), Mean::default(), Mean::default(), Mean::default(),
        Mean::default(), Mean::default(), Mean::default(), Mean::default()];
    let mut smoothed_mean = DVector::zeros(m);

    for s in steps {
        j[0].add(spd_quad_form(&s.innovation_cov, &s.innovation));
        let filtered_cov = symmetrized(r - &s.h_post * &s.p_post * s.h_post.transpose());
        j[1].add(spd_quad_form(&filtered_cov, &s.filtered_residue));
        let smoothed_cov = symmetrized(r - &s.h_smooth * &s.p_smooth * s.h_smooth.transpose());
        j[2].add(spd_quad_form(&smoothed_cov, &s.smoothed_residue));
        j[4].add(
            log_det_spd(&s.innovation_cov)
                .zip(spd_quad_form(&s.innovation_cov, &s.innovation))
                .map(|(ld, qf)| ld + qf),
        );
        smoothed_mean += &s.smoothed_residue;
    }
    smoothed_mean /= len as f64;
    let j4 = sym_inverse(r).map(|ri| smoothed_mean.dot(&(ri * &smoothed_mean)));

    let w8 = process_noise_samples(traj, model, data)?;
    for k in 0..len - 1 {
        let cur = &steps[k];
        let next = &steps[k + 1];
        let gain_next = state_block(&(&next.p_prior - &next.p_post), n);
        let gain_cur = &cur.phi * (&cur.p_prior - &cur.p_post) * cur.phi.transpose();

        let dt = next.t - cur.t;
        let from_prior = propagate(model, &cur.x_prior, cur.t, dt, &data.inputs)?;
        let w6 = state_rows(&(&next.x_post - from_prior), n);
        let n6 = &gain_next + state_block(&gain_cur, n);
        j[5].add(spd_quad_form(&n6, &w6));

        let w7 = state_rows(&(&next.x_post - &next.x_prior), n);
        j[6].add(spd_quad_form(&gain_next, &w7));

        let n8 = symmetrized(q - smoothed_transition_variance(traj, k));
        j[7].add(spd_quad_form(&n8, &w8[k]));
    }

    let mut values = [0.0; 8];
    let mut skipped = [0; 8];
    for i in 0..8 {
        values[i] = j[i].value();
        skipped[i] = j[i].skipped;
    }
    values[3] = j4.unwrap_or(f64::NAN);
    skipped[3] = usize::from(j4.is_none());
    for (i, &s) in skipped.iter().enumerate() {
        if s > 0 {
            log::debug!("{}: {s} sample(s) skipped, normaliser not positive definite", COST_NAMES[i]);
        }
    }
    Ok(CostVector { values, skipped })
}
