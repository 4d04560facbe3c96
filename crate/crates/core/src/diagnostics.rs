//! Post-estimation diagnostics: Cramér–Rao percentages, rounded
//! correlation matrices, noise-sample autocorrelation and a screen for
//! poorly identified parameters.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::filter::{residue_series, FilterTrajectory, ResidueSeries};
use crate::linalg::symmetrized;
use crate::statespace::StateSpaceModel;
use crate::tuning::{
    process_noise_samples, CostVector, IterationRecord, Method, NoiseStatistics, RecipeOutcome,
};

/// 100·σ_i/|Θ_i| for every parameter. A zero estimate gives +∞.
pub fn crb_percent(theta: &[f64], sigma: &[f64]) -> Result<Vec<f64>> {
    if theta.len() != sigma.len() {
        return Err(Error::Dimension(format!(
            "{} estimates vs {} standard deviations",
            theta.len(),
            sigma.len()
        )));
    }
    Ok(theta
        .iter()
        .zip(sigma)
        .map(|(&t, &s)| if t == 0.0 { f64::INFINITY } else { 100.0 * s / t.abs() })
        .collect())
}

/// Correlation matrix scaled by 100 and rounded half away from zero.
pub fn correlation_matrix(cov: &DMatrix<f64>, names: &[String]) -> Result<Vec<Vec<i64>>> {
    if !cov.is_square() || cov.nrows() != names.len() {
        return Err(Error::Dimension("covariance does not match the name list".into()));
    }
    let cov = symmetrized(cov.clone());
    let sd: Vec<f64> = (0..cov.nrows())
        .map(|i| {
            let v = cov[(i, i)];
            if v > 0.0 {
                Ok(v.sqrt())
            } else {
                Err(Error::ZeroVariance(names[i].clone()))
            }
        })
        .collect::<Result<_>>()?;
    let n = cov.nrows();
    Ok((0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        100
                    } else {
                        let c = (cov[(i, j)] / (sd[i] * sd[j])).clamp(-1.0, 1.0);
                        (100.0 * c).round() as i64
                    }
                })
                .collect()
        })
        .collect())
}

/// Autocorrelation of `series` at lags 0..=max_lag, normalised by the lag-0
/// power. Each lag product is averaged over the N−l available pairs and the
/// series is taken as zero-mean, so a constant series has unit correlation
/// at every lag.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Vec<f64> {
    let n = series.len();
    if n == 0 {
        return Vec::new();
    }
    let lag_power = |l: usize| -> f64 {
        let s: f64 = series[..n - l]
            .iter()
            .zip(&series[l..])
            .map(|(a, b)| a * b)
            .sum();
        s / (n - l) as f64
    };
    let r0 = lag_power(0);
    (0..=max_lag.min(n - 1))
        .map(|l| if r0 == 0.0 { 0.0 } else { lag_power(l) / r0 })
        .collect()
}

/// Measurement- and process-noise samples of a smoothed pass with their
/// per-channel autocorrelation up to lag N/10.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSamples {
    /// Smoothed residues z_k − h(x_{k|N}).
    pub v: Vec<DVector<f64>>,
    /// x_{k+1|N} − f_d(x_{k|N}), model states only.
    pub w: Vec<DVector<f64>>,
    pub v_autocorr: Vec<Vec<f64>>,
    pub w_autocorr: Vec<Vec<f64>>,
}

fn channel_autocorr(samples: &[DVector<f64>]) -> Vec<Vec<f64>> {
    let Some(first) = samples.first() else {
        return Vec::new();
    };
    let max_lag = samples.len() / 10;
    (0..first.len())
        .map(|i| {
            let ch: Vec<f64> = samples.iter().map(|s| s[i]).collect();
            autocorrelation(&ch, max_lag)
        })
        .collect()
}

pub fn noise_samples(
    traj: &FilterTrajectory,
    model: &dyn StateSpaceModel,
    data: &Dataset,
) -> Result<NoiseSamples> {
    let w = process_noise_samples(traj, model, data)?;
    let v: Vec<_> = traj.steps.iter().map(|s| s.smoothed_residue.clone()).collect();
    Ok(NoiseSamples {
        v_autocorr: channel_autocorr(&v),
        w_autocorr: channel_autocorr(&w),
        v,
        w,
    })
}

/// Thresholds for [`weak_parameter_screen`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakScreen {
    /// %CRB at or above which a parameter is flagged.
    pub pct_crb: f64,
    /// Cross-method spread (percent of the mean) at or above which a
    /// parameter is flagged, when spreads are supplied.
    pub spread: f64,
}

impl Default for WeakScreen {
    fn default() -> Self {
        Self {
            pct_crb: 20.0,
            spread: 50.0,
        }
    }
}

/// A parameter the screen considers poorly identified.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakParameter {
    pub name: String,
    pub pct_crb: f64,
    pub spread: Option<f64>,
}

/// Spread (max − min) of each parameter across several estimates, as a
/// percentage of the absolute mean.
pub fn cross_method_spread(estimates: &[&[f64]]) -> Vec<f64> {
    let Some(first) = estimates.first() else {
        return Vec::new();
    };
    (0..first.len())
        .map(|i| {
            let vals: Vec<f64> = estimates.iter().map(|e| e[i]).collect();
            let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            if mean == 0.0 {
                if max == min { 0.0 } else { f64::INFINITY }
            } else {
                100.0 * (max - min) / mean.abs()
            }
        })
        .collect()
}

/// Parameters whose %CRB (or cross-method spread) reaches the threshold,
/// sorted by decreasing %CRB.
pub fn weak_parameter_screen(
    report: &EstimationReport,
    thresholds: WeakScreen,
    spread: Option<&[f64]>,
) -> Vec<WeakParameter> {
    let mut out: Vec<WeakParameter> = report
        .parameter_names
        .iter()
        .enumerate()
        .filter_map(|(i, name)| {
            let pct = report.pct_crb[i];
            let sp = spread.map(|s| s[i]);
            let weak = pct >= thresholds.pct_crb || sp.is_some_and(|s| s >= thresholds.spread);
            weak.then(|| WeakParameter {
                name: name.clone(),
                pct_crb: pct,
                spread: sp,
            })
        })
        .collect();
    out.sort_by(|a, b| b.pct_crb.total_cmp(&a.pct_crb));
    out
}

/// Everything a run produces, ready to be written out or compared.
#[derive(Clone, Debug)]
pub struct EstimationReport {
    pub method: Method,
    pub state_names: Vec<String>,
    pub measurement_names: Vec<String>,
    pub parameter_names: Vec<String>,
    pub theta_hat: Vec<f64>,
    pub sigma_theta: Vec<f64>,
    pub pct_crb: Vec<f64>,
    pub corr_100: Vec<Vec<i64>>,
    pub statistics: NoiseStatistics,
    /// Initial state and parameter vector of the last pass.
    pub x0: DVector<f64>,
    pub theta0: DVector<f64>,
    pub cost_history: Vec<CostVector>,
    pub history: Vec<IterationRecord>,
    pub residues: ResidueSeries,
    pub theta_trajectory: Vec<DVector<f64>>,
    pub trajectory: FilterTrajectory,
    pub converged: bool,
    pub flags: Vec<String>,
}

impl EstimationReport {
    pub fn from_outcome(model: &dyn StateSpaceModel, outcome: RecipeOutcome) -> Result<Self> {
        let names = model.parameter_names();
        let traj = &outcome.trajectory;
        let theta_hat: Vec<f64> = traj.final_theta().iter().copied().collect();
        let cov = traj.final_theta_covariance();
        let sigma_theta: Vec<f64> = cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect();
        let pct_crb = crb_percent(&theta_hat, &sigma_theta)?;
        let mut flags = outcome.flags.clone();
        for (i, &v) in pct_crb.iter().enumerate() {
            if v.is_infinite() {
                flags.push(format!("{} estimated as exactly zero; %CRB undefined", names[i]));
            }
        }
        let corr_100 = if names.is_empty() {
            Vec::new()
        } else {
            correlation_matrix(&cov, &names)?
        };
        let residues = residue_series(traj, &outcome.statistics.r);
        let lost = residues.psd_loss_count();
        if lost > 0 {
            flags.push(format!("{lost} residue variance(s) lost positive semidefiniteness"));
        }
        Ok(Self {
            method: outcome.method,
            state_names: model.state_names(),
            measurement_names: model.measurement_names(),
            parameter_names: names,
            theta_hat,
            sigma_theta,
            pct_crb,
            corr_100,
            cost_history: outcome.history.iter().map(|h| h.costs.clone()).collect(),
            history: outcome.history,
            residues,
            theta_trajectory: traj.theta_trajectory(),
            statistics: outcome.statistics,
            x0: outcome.x0,
            theta0: outcome.theta0,
            trajectory: outcome.trajectory,
            converged: outcome.converged,
            flags,
        })
    }

    pub fn final_costs(&self) -> &CostVector {
        self.cost_history.last().expect("at least one iteration")
    }

    pub fn q_diag(&self) -> Vec<f64> {
        self.statistics.q.diagonal().iter().copied().collect()
    }

    pub fn r_diag(&self) -> Vec<f64> {
        self.statistics.r.diagonal().iter().copied().collect()
    }
}
