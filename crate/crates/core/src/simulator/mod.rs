//! Synthetic flight records: propagate a model with known parameters,
//! inject process and measurement noise of known covariance, and keep the
//! truth for later comparison.

mod scenario;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::statespace::{
    measure, propagate, AugmentedState, ChannelSeries, InputSet, StateSpaceModel,
};

pub use scenario::{
    builtin_scenario, doublet_input, reference_truth, trim, ScenarioSpec, TrimPoint,
};

/// Everything needed to generate one record.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub theta: DVector<f64>,
    /// n × n process-noise covariance per sample.
    pub q: DMatrix<f64>,
    /// m × m measurement-noise covariance.
    pub r: DMatrix<f64>,
    pub x0: DVector<f64>,
    pub t0: f64,
    pub dt: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Exogenous channels. A model input that shares its name with a
    /// measurement and is not supplied here is fed back from the simulated
    /// (noisy) measurement.
    pub inputs: Vec<ChannelSeries>,
}

/// A simulated record with its hidden truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedRun {
    pub dataset: Dataset,
    /// True model state at each sample.
    pub states: Vec<DVector<f64>>,
    /// Process noise added between samples k and k+1.
    pub process_noise: Vec<DVector<f64>>,
    pub measurement_noise: Vec<DVector<f64>>,
    /// Every measurement and input channel once, measurements first.
    pub channels: Vec<ChannelSeries>,
    pub config: SimConfig,
}

/// Square root `L` with `L Lᵀ = M` for a positive semidefinite `M`.
fn psd_root(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        return Ok(ch.l());
    }
    let eig = m.clone().symmetric_eigen();
    let scale = m.abs().max().max(f64::MIN_POSITIVE);
    if eig.eigenvalues.iter().any(|&v| v < -1e-12 * scale) {
        return Err(Error::Config(format!("{what} is not positive semidefinite")));
    }
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&root))
}

fn draws(rng: &mut ChaCha8Rng, root: &DMatrix<f64>, count: usize) -> Vec<DVector<f64>> {
    let dim = root.ncols();
    (0..count)
        .map(|_| {
            let e = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
            root * e
        })
        .collect()
}

const ECHO_ITERATIONS: usize = 20;
const ECHO_TOLERANCE: f64 = 1e-13;

/// Generate a record from `config`. The same configuration always yields
/// bit-identical output.
pub fn simulate_dataset(model: &dyn StateSpaceModel, config: &SimConfig) -> Result<SimulatedRun> {
    let n = model.n_states();
    let m = model.n_meas();
    let p = model.n_params();
    if config.theta.len() != p || config.x0.len() != n {
        return Err(Error::Dimension(format!(
            "simulation expects {p} parameters and {n} states"
        )));
    }
    if config.q.shape() != (n, n) || config.r.shape() != (m, m) {
        return Err(Error::Dimension("Q or R does not match the model".into()));
    }
    if config.n_samples < 10 || !(config.dt > 0.0) {
        return Err(Error::Config(
            "simulation needs at least ten samples and a positive step".into(),
        ));
    }
    let q_root = psd_root(&config.q, "Q")?;
    let r_root = psd_root(&config.r, "R")?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let process_noise = draws(&mut rng, &q_root, config.n_samples - 1);
    let measurement_noise = draws(&mut rng, &r_root, config.n_samples);
    let times: Vec<f64> = (0..config.n_samples)
        .map(|k| config.t0 + k as f64 * config.dt)
        .collect();

    let meas_names = model.measurement_names();
    let mut echoes: Vec<(String, usize)> = Vec::new();
    for name in model.input_names() {
        if config.inputs.iter().any(|c| c.name() == name) {
            continue;
        }
        match meas_names.iter().position(|mn| *mn == name) {
            Some(j) => echoes.push((name, j)),
            None => {
                return Err(Error::Config(format!("no signal supplied for input `{name}`")))
            }
        }
    }

    let mut echo_values: Vec<Vec<f64>> = vec![vec![0.0; config.n_samples]; echoes.len()];
    let mut result = None;
    for iteration in 0..=ECHO_ITERATIONS {
        let mut pool = config.inputs.clone();
        for ((name, _), values) in echoes.iter().zip(&echo_values) {
            pool.push(ChannelSeries::new(name.clone(), times.clone(), values.clone())?);
        }
        let inputs = InputSet::select(&pool, &model.input_names())?;
        let (states, measurements) = run_once(
            model,
            config,
            &times,
            &inputs,
            &process_noise,
            &measurement_noise,
        )?;
        let mut change = 0.0_f64;
        for ((_, j), values) in echoes.iter().zip(echo_values.iter_mut()) {
            for (k, v) in values.iter_mut().enumerate() {
                change = change.max((measurements[k][*j] - *v).abs());
                *v = measurements[k][*j];
            }
        }
        result = Some((states, measurements, inputs, pool));
        if change < ECHO_TOLERANCE {
            break;
        }
        if iteration == ECHO_ITERATIONS {
            log::warn!("fed-back input channels still changing by {change:e}");
        }
    }
    let (states, measurements, _, _) = result.expect("at least one pass");

    // final inputs with the converged echo values
    let mut pool = config.inputs.clone();
    for ((name, _), values) in echoes.iter().zip(&echo_values) {
        pool.push(ChannelSeries::new(name.clone(), times.clone(), values.clone())?);
    }
    let inputs = InputSet::select(&pool, &model.input_names())?;

    let mut channels = Vec::new();
    for (j, name) in meas_names.iter().enumerate() {
        let values = measurements.iter().map(|z| z[j]).collect();
        channels.push(ChannelSeries::new(name.clone(), times.clone(), values)?);
    }
    for c in inputs.channels() {
        if !meas_names.iter().any(|n| n == c.name()) {
            channels.push(c.clone());
        }
    }
    let dataset = Dataset::new(times, measurements, inputs)?;
    Ok(SimulatedRun {
        dataset,
        states,
        process_noise,
        measurement_noise,
        channels,
        config: config.clone(),
    })
}

type Trace = (Vec<DVector<f64>>, Vec<DVector<f64>>);

fn run_once(
    model: &dyn StateSpaceModel,
    config: &SimConfig,
    times: &[f64],
    inputs: &InputSet,
    process_noise: &[DVector<f64>],
    measurement_noise: &[DVector<f64>],
) -> Result<Trace> {
    let n = model.n_states();
    let mut states = Vec::with_capacity(times.len());
    let mut measurements = Vec::with_capacity(times.len());
    let mut xa = AugmentedState::new(config.x0.clone(), config.theta.clone()).stacked();
    for (k, &t) in times.iter().enumerate() {
        let u = inputs.at(t)?;
        measurements.push(measure(model, &xa, &u)? + &measurement_noise[k]);
        states.push(xa.rows(0, n).into_owned());
        if k + 1 < times.len() {
            xa = propagate(model, &xa, t, times[k + 1] - t, inputs)?;
            let mut x = xa.rows_mut(0, n);
            x += &process_noise[k];
        }
    }
    Ok((states, measurements))
}
