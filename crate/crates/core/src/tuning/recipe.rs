use nalgebra::{DMatrix, DVector};

use super::adaptive::{ms_estimate, mt_estimate};
use super::costs::{compute_costs, CostVector};
use super::noise::{
    estimate_q_smoothed, estimate_r_smoothed, seed_r, update_p0, NoiseEstimate,
    ProcessNoiseOptions, NOISE_FLOOR,
};
use super::Method;
use crate::data::Dataset;
use crate::diagnostics::EstimationReport;
use crate::error::{Error, Result};
use crate::filter::{ekf_forward, rts_smooth, FilterSetup, FilterTrajectory};
use crate::linalg::{min_eigenvalue, project_psd};
use crate::statespace::StateSpaceModel;

/// How the parameter block of P0 is set between iterations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParamPrior {
    /// Keep the starting diffuse prior (standard deviation
    /// `max(fraction·|Θ_i|, floor)` from the initial guess) and drop the
    /// state–parameter correlations. Reusing the smoothed parameter
    /// covariance counts the same record again on every pass and shrinks
    /// the reported uncertainty with the iteration count.
    Fixed { fraction: f64, floor: f64 },
    /// Carry the smoothed covariance at the first sample forward.
    Smoothed,
}

impl Default for ParamPrior {
    fn default() -> Self {
        ParamPrior::Fixed {
            fraction: 1.0,
            floor: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecipeConfig {
    pub method: Method,
    pub max_iterations: usize,
    /// Relative change of Θ and of J1, J3, J6, J8 below which an iteration
    /// counts towards convergence.
    pub tolerance: f64,
    /// Consecutive quiet iterations needed to stop early.
    pub plateau: usize,
    /// Multiplier on the parameter block of P0; `None` picks 1 for the
    /// reference method and 10 for MT/MS.
    pub p0_scale: Option<f64>,
    pub param_prior: ParamPrior,
    /// Initial variance of each model state.
    pub state_prior_variance: f64,
    /// Initial Q (diagonal value).
    pub q_seed: f64,
    /// Initial R; by default half the variance of first differences.
    pub r_seed: Option<DMatrix<f64>>,
    /// Initial model state; by default derived from the first sample.
    pub x0: Option<DVector<f64>>,
    pub diagonal_only: bool,
    pub covariance_correction: bool,
    /// MT averaging window in samples; the whole record when `None`.
    pub mt_window: Option<usize>,
    /// Aitken extrapolation of slowly converging noise variances.
    pub extrapolation: Option<Extrapolation>,
}

/// Componentwise Aitken Δ² extrapolation of the Q and R diagonals in log
/// space. When three successive updates of a variance shrink geometrically
/// with ratio ρ, the variance jumps to the predicted limit. The fixed point
/// of the loop is unchanged; only the path to it is shortened.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extrapolation {
    /// Plain passes between two jumps.
    pub every: usize,
    /// Ratios outside (0, max_ratio) are left alone.
    pub max_ratio: f64,
    /// Log-step below which a component counts as settled.
    pub min_step: f64,
    /// Largest factor a single jump may apply.
    pub max_factor: f64,
}

impl Default for Extrapolation {
    fn default() -> Self {
        Self {
            every: 4,
            max_ratio: 0.995,
            min_step: 1e-3,
            max_factor: 10.0,
        }
    }
}

impl Extrapolation {
    /// Extrapolated log-variances from the last three updates, or `None`
    /// when no component qualifies.
    fn jump(&self, h: &[DVector<f64>]) -> Option<DVector<f64>> {
        let [a, b, c] = h else { return None };
        let mut out = c.clone();
        let mut moved = false;
        let cap = self.max_factor.ln();
        for i in 0..c.len() {
            let d1 = b[i] - a[i];
            let d2 = c[i] - b[i];
            if d2.abs() < self.min_step || d1 == 0.0 {
                continue;
            }
            let rho = d2 / d1;
            if !(rho > 0.0 && rho < self.max_ratio) {
                continue;
            }
            let step = (d2 * rho / (1.0 - rho)).clamp(-cap, cap);
            out[i] += step;
            moved = true;
        }
        moved.then_some(out)
    }
}

fn log_diagonals(q: &DMatrix<f64>, r: &DMatrix<f64>) -> DVector<f64> {
    let d: Vec<f64> = q.diagonal().iter().chain(r.diagonal().iter()).map(|v| v.ln()).collect();
    DVector::from_vec(d)
}

/// Rescale rows and columns so that the diagonal becomes `exp(target)`.
fn rescale_diagonal(m: &DMatrix<f64>, target: &[f64]) -> DMatrix<f64> {
    let d: Vec<f64> = (0..m.nrows())
        .map(|i| (target[i].exp() / m[(i, i)]).sqrt())
        .collect();
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * d[i] * d[j])
}

impl Default for RecipeConfig {
    fn default() -> Self {
        Self {
            method: Method::Reference,
            max_iterations: 100,
            tolerance: 1e-6,
            plateau: 5,
            p0_scale: None,
            param_prior: ParamPrior::default(),
            state_prior_variance: 1e-4,
            q_seed: 1e-8,
            r_seed: None,
            x0: None,
            diagonal_only: true,
            covariance_correction: true,
            mt_window: None,
            extrapolation: Some(Extrapolation::default()),
        }
    }
}

impl RecipeConfig {
    /// Defaults for `method`. Extrapolation is only switched on for the
    /// EM updates of the reference method; the adaptive rules do not move
    /// along a smooth path and a jump can throw them off.
    pub fn for_method(method: Method) -> Self {
        Self {
            method,
            extrapolation: match method {
                Method::Reference => Some(Extrapolation::default()),
                Method::Mt | Method::Ms => None,
            },
            ..Self::default()
        }
    }

    pub fn effective_p0_scale(&self) -> f64 {
        self.p0_scale.unwrap_or(match self.method {
            Method::Reference => 1.0,
            Method::Mt | Method::Ms => 10.0,
        })
    }

    /// Reject settings the loop cannot run with.
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(self.tolerance >= 0.0) || self.plateau == 0 {
            return Err(Error::Config("tolerance must be ≥ 0 and plateau ≥ 1".into()));
        }
        if !(self.q_seed > 0.0) || !(self.state_prior_variance > 0.0) {
            return Err(Error::Config("seed variances must be positive".into()));
        }
        let scale = self.effective_p0_scale();
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Config(format!("P0 scale must be positive, got {scale}")));
        }
        Ok(())
    }
}

/// Statistics used for one pass.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseStatistics {
    pub method: Method,
    pub p0: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

/// Summary of one pass of the loop.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    /// Final posterior parameter estimate of the pass.
    pub theta: Vec<f64>,
    pub q_diag: Vec<f64>,
    pub r_diag: Vec<f64>,
    pub costs: CostVector,
}

/// Full result of an iterated run.
#[derive(Clone, Debug)]
pub struct RecipeOutcome {
    pub method: Method,
    pub history: Vec<IterationRecord>,
    /// Last forward/backward pass.
    pub trajectory: FilterTrajectory,
    /// Statistics the last pass was run with.
    pub statistics: NoiseStatistics,
    pub x0: DVector<f64>,
    pub theta0: DVector<f64>,
    pub converged: bool,
    pub flags: Vec<String>,
}

impl RecipeOutcome {
    pub fn final_costs(&self) -> &CostVector {
        &self.history.last().expect("at least one iteration").costs
    }
}

fn relative_change(new: f64, old: f64) -> f64 {
    let scale = new.abs().max(old.abs());
    if scale == 0.0 {
        0.0
    } else {
        (new - old).abs() / scale
    }
}

fn vector_change(new: &[f64], old: &[f64]) -> f64 {
    let num: f64 = new.iter().zip(old).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let den: f64 = old.iter().map(|a| a * a).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

fn quiet(cur: &IterationRecord, prev: &IterationRecord, tol: f64) -> bool {
    vector_change(&cur.theta, &prev.theta) < tol
        && [1, 3, 6, 8]
            .iter()
            .all(|&i| relative_change(cur.costs.j(i), prev.costs.j(i)) < tol)
}

fn initial_p0(n: usize, theta: &DVector<f64>, config: &RecipeConfig) -> DMatrix<f64> {
    let p = theta.len();
    let mut p0 = DMatrix::zeros(n + p, n + p);
    for i in 0..n {
        p0[(i, i)] = config.state_prior_variance;
    }
    let (fraction, floor) = match config.param_prior {
        ParamPrior::Fixed { fraction, floor } => (fraction, floor),
        ParamPrior::Smoothed => (1.0, 10.0),
    };
    let scale = config.effective_p0_scale();
    for i in 0..p {
        let sigma = (fraction * theta[i].abs()).max(floor);
        p0[(n + i, n + i)] = sigma * sigma * scale;
    }
    p0
}

fn one_pass(
    model: &dyn StateSpaceModel,
    data: &Dataset,
    setup: &FilterSetup,
) -> Result<FilterTrajectory> {
    let traj = ekf_forward(model, data, setup)?;
    rts_smooth(traj, model, data)
}

fn note_clamps(flags: &mut Vec<String>, what: &str, est: &NoiseEstimate) {
    if est.clamped > 0 {
        flags.push(format!(
            "{what}: {} variance(s) raised to the floor",
            est.clamped
        ));
    }
}

/// Iterated estimation of Θ together with P0, Q and R.
///
/// Each pass runs the filter and smoother, re-centres Θ0 and x0 on the
/// new estimates, refreshes P0 and then re-estimates Q and R with the
/// configured method. The loop stops after `max_iterations` passes, or
/// earlier when Θ and the monitored costs have been stable for `plateau`
/// passes in a row.
pub fn run_recipe(
    model: &dyn StateSpaceModel,
    data: &Dataset,
    theta_init: &DVector<f64>,
    config: &RecipeConfig,
) -> Result<RecipeOutcome> {
    config.validate()?;
    let n = model.n_states();
    let p = model.n_params();
    if theta_init.len() != p {
        return Err(Error::Dimension(format!(
            "initial Θ has {} entries, model expects {p}",
            theta_init.len()
        )));
    }
    if data.len() < 3 {
        return Err(Error::EmptyData("the loop needs at least three samples".into()));
    }
    let x0 = match &config.x0 {
        Some(x) => x.clone(),
        None => model.initial_state(&data.measurements[0], &data.inputs.at(data.times[0])?),
    };
    let base_p0 = initial_p0(n, theta_init, config);
    let mut setup = FilterSetup {
        x0: x0.clone(),
        theta0: theta_init.clone(),
        p0: base_p0.clone(),
        q: DMatrix::identity(n, n) * config.q_seed,
        r: config.r_seed.clone().unwrap_or_else(|| seed_r(data)),
    };
    let scale = config.effective_p0_scale();
    let q_options = ProcessNoiseOptions {
        covariance_correction: config.covariance_correction,
        diagonal_only: config.diagonal_only,
    };

    let mut history: Vec<IterationRecord> = Vec::new();
    let mut quiet_run = 0;
    let mut converged = false;
    let mut last: Option<(FilterTrajectory, FilterSetup)> = None;
    let mut flags = Vec::new();
    let mut noise_history: Vec<DVector<f64>> = Vec::new();
    let mut since_jump = 0;

    for iteration in 1..=config.max_iterations {
        let abort = |e: Error, theta: &DVector<f64>| Error::RecipeAborted {
            iteration,
            last_theta: theta.iter().copied().collect(),
            source: Box::new(e),
        };
        let traj = one_pass(model, data, &setup).map_err(|e| abort(e, &setup.theta0))?;
        let costs = compute_costs(&traj, model, data, &setup.q, &setup.r)
            .map_err(|e| abort(e, &setup.theta0))?;
        let theta = traj.final_theta();
        let record = IterationRecord {
            iteration,
            theta: theta.iter().copied().collect(),
            q_diag: setup.q.diagonal().iter().copied().collect(),
            r_diag: setup.r.diagonal().iter().copied().collect(),
            costs,
        };
        log::debug!(
            "iteration {iteration}: J1={:.4} J3={:.4} J6={:.4} J8={:.4}",
            record.costs.j(1),
            record.costs.j(3),
            record.costs.j(6),
            record.costs.j(8)
        );
        if let Some(prev) = history.last() {
            if quiet(&record, prev, config.tolerance) {
                quiet_run += 1;
            } else {
                quiet_run = 0;
            }
        }
        history.push(record);
        if quiet_run >= config.plateau {
            converged = true;
            last = Some((traj, setup));
            break;
        }
        if iteration == config.max_iterations {
            last = Some((traj, setup));
            break;
        }

        // next pass
        let mut next = setup.clone();
        next.theta0 = theta.clone();
        next.x0 = traj.steps[0].x_smooth.rows(0, n).into_owned();
        next.p0 = match config.param_prior {
            ParamPrior::Smoothed => update_p0(&traj, scale).map_err(|e| abort(e, &theta))?,
            ParamPrior::Fixed { .. } => {
                let mut p0 = base_p0.clone();
                p0.view_mut((0, 0), (n, n))
                    .copy_from(&traj.steps[0].p_smooth.view((0, 0), (n, n)));
                p0
            }
        };
        if min_eigenvalue(&next.p0) < 0.0 {
            // round-off from a singular smoother step
            next.p0 = project_psd(&next.p0, NOISE_FLOOR, false).0;
        }
        flags.clear();
        let (q, r) = match config.method {
            Method::Reference => {
                let r = estimate_r_smoothed(&traj, config.diagonal_only)
                    .map_err(|e| abort(e, &theta))?;
                let q = estimate_q_smoothed(&traj, model, data, q_options)
                    .map_err(|e| abort(e, &theta))?;
                (q, r)
            }
            Method::Mt => {
                let est = mt_estimate(&traj, config.mt_window, config.diagonal_only)
                    .map_err(|e| abort(e, &theta))?;
                (est.q, est.r)
            }
            Method::Ms => {
                let est = ms_estimate(&traj, config.diagonal_only).map_err(|e| abort(e, &theta))?;
                (est.q, est.r)
            }
        };
        note_clamps(&mut flags, "Q", &q);
        note_clamps(&mut flags, "R", &r);
        next.q = q.matrix;
        next.r = r.matrix;
        if let Some(ex) = config.extrapolation {
            noise_history.push(log_diagonals(&next.q, &next.r));
            if noise_history.len() > 3 {
                noise_history.remove(0);
            }
            since_jump += 1;
            if since_jump >= ex.every {
                if let Some(target) = ex.jump(&noise_history) {
                    let (tq, tr) = target.as_slice().split_at(n);
                    next.q = rescale_diagonal(&next.q, tq);
                    next.r = rescale_diagonal(&next.r, tr);
                    log::debug!("iteration {iteration}: extrapolated noise variances");
                    noise_history.clear();
                    since_jump = 0;
                }
            }
        }
        setup = next;
    }

    let (trajectory, setup) = last.expect("loop ran at least once");
    if !converged {
        flags.push(format!(
            "stopped after {} iterations without meeting the tolerance",
            history.len()
        ));
    }
    let skipped = history.last().map_or(0, |h| h.costs.total_skipped());
    if skipped > 0 {
        flags.push(format!("{skipped} cost sample(s) skipped for a non-positive-definite normaliser"));
    }
    Ok(RecipeOutcome {
        method: config.method,
        history,
        statistics: NoiseStatistics {
            method: config.method,
            p0: setup.p0.clone(),
            q: setup.q.clone(),
            r: setup.r.clone(),
        },
        x0: setup.x0,
        theta0: setup.theta0,
        trajectory,
        converged,
        flags,
    })
}

/// A single filter/smoother pass with fixed statistics, for regenerating
/// the outputs of an earlier run.
pub fn replay(
    model: &dyn StateSpaceModel,
    data: &Dataset,
    setup: &FilterSetup,
    method: Method,
) -> Result<RecipeOutcome> {
    let trajectory = one_pass(model, data, setup)?;
    let costs = compute_costs(&trajectory, model, data, &setup.q, &setup.r)?;
    let mut flags = vec!["single pass with stored statistics".to_string()];
    if costs.total_skipped() > 0 {
        flags.push(format!(
            "{} cost sample(s) skipped for a non-positive-definite normaliser",
            costs.total_skipped()
        ));
    }
    let record = IterationRecord {
        iteration: 1,
        theta: trajectory.final_theta().iter().copied().collect(),
        q_diag: setup.q.diagonal().iter().copied().collect(),
        r_diag: setup.r.diagonal().iter().copied().collect(),
        costs,
    };
    Ok(RecipeOutcome {
        method,
        history: vec![record],
        trajectory,
        statistics: NoiseStatistics {
            method,
            p0: setup.p0.clone(),
            q: setup.q.clone(),
            r: setup.r.clone(),
        },
        x0: setup.x0.clone(),
        theta0: setup.theta0.clone(),
        converged: true,
        flags,
    })
}

/// The reference recipe (smoothed-statistics estimators) packaged as a
/// report.
pub fn reference_recipe(
    model: &dyn StateSpaceModel,
    data: &Dataset,
    theta_init: &DVector<f64>,
    config: &RecipeConfig,
) -> Result<EstimationReport> {
    let config = RecipeConfig {
        method: Method::Reference,
        ..config.clone()
    };
    let outcome = run_recipe(model, data, theta_init, &config)?;
    EstimationReport::from_outcome(model, outcome)
}

/// Any method packaged as a report.
pub fn estimate(
    model: &dyn StateSpaceModel,
    data: &Dataset,
    theta_init: &DVector<f64>,
    config: &RecipeConfig,
) -> Result<EstimationReport> {
    let outcome = run_recipe(model, data, theta_init, config)?;
    EstimationReport::from_outcome(model, outcome)
}
