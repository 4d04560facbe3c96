//! Time-aligned measurement record plus the exogenous channels a model
//! needs.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::statespace::{ChannelSeries, InputSet, StateSpaceModel};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub times: Vec<f64>,
    /// One measurement vector per sample, in the model's measurement order.
    pub measurements: Vec<DVector<f64>>,
    /// Exogenous channels in the model's input order.
    pub inputs: InputSet,
}

impl Dataset {
    pub fn new(times: Vec<f64>, measurements: Vec<DVector<f64>>, inputs: InputSet) -> Result<Self> {
        if times.len() != measurements.len() {
            return Err(Error::Dimension(format!(
                "{} sample times vs {} measurement vectors",
                times.len(),
                measurements.len()
            )));
        }
        if times.is_empty() {
            return Err(Error::EmptyData("dataset has no samples".into()));
        }
        if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Dataset(format!(
                "time not strictly increasing at row {}",
                i + 1
            )));
        }
        let m = measurements[0].len();
        if let Some(k) = measurements.iter().position(|z| z.len() != m) {
            return Err(Error::Dimension(format!("measurement {k} has wrong length")));
        }
        if let Some(k) = measurements
            .iter()
            .position(|z| z.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Dataset(format!("non-finite measurement at row {k}")));
        }
        for c in inputs.channels() {
            let (a, b) = c.span();
            if a > times[0] || b < times[times.len() - 1] {
                return Err(Error::Dataset(format!(
                    "input channel `{}` does not cover the measurement span",
                    c.name()
                )));
            }
        }
        Ok(Self {
            times,
            measurements,
            inputs,
        })
    }

    /// Assemble a dataset for `model` from a pool of named channels: every
    /// measurement and every input must be present. One channel may serve
    /// both roles.
    pub fn from_channels(
        model: &dyn StateSpaceModel,
        times: Vec<f64>,
        pool: &[ChannelSeries],
    ) -> Result<Self> {
        let names = model.measurement_names();
        let mut columns = Vec::with_capacity(names.len());
        for n in &names {
            let c = pool
                .iter()
                .find(|c| c.name() == n)
                .ok_or_else(|| Error::Dataset(format!("missing measurement column `{n}`")))?;
            columns.push(c);
        }
        let measurements = (0..times.len())
            .map(|k| {
                columns
                    .iter()
                    .map(|c| c.at(times[k]))
                    .collect::<Result<Vec<_>>>()
                    .map(DVector::from_vec)
            })
            .collect::<Result<Vec<_>>>()?;
        let inputs = InputSet::select(pool, &model.input_names())?;
        Self::new(times, measurements, inputs)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_meas(&self) -> usize {
        self.measurements[0].len()
    }

    /// Measurement channel `i` as a series.
    pub fn measurement_channel(&self, i: usize, name: &str) -> Result<ChannelSeries> {
        ChannelSeries::new(
            name,
            self.times.clone(),
            self.measurements.iter().map(|z| z[i]).collect(),
        )
    }
}
