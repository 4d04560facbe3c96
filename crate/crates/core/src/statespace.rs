//! Continuous-time nonlinear state-space plumbing: exogenous channels,
//! RK4 propagation of the augmented (state, parameter) vector, and
//! central-difference Jacobians.

use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative slack allowed when a query time lands a rounding error outside
/// the sampled span.
const TIME_SLACK: f64 = 1e-9;

/// A named, time-stamped exogenous or measured channel.
///
/// Angles are held in radians.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSeries {
    name: String,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl ChannelSeries {
    pub fn new(name: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if times.len() != values.len() {
            return Err(Error::Dimension(format!(
                "channel `{name}`: {} times vs {} values",
                times.len(),
                values.len()
            )));
        }
        if times.len() < 2 {
            return Err(Error::Dataset(format!(
                "channel `{name}` needs at least two samples"
            )));
        }
        if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Dataset(format!(
                "channel `{name}`: times not strictly increasing at index {}",
                i + 1
            )));
        }
        if let Some(i) = values
            .iter()
            .chain(times.iter())
            .position(|v| !v.is_finite())
        {
            return Err(Error::Dataset(format!(
                "channel `{name}`: non-finite entry at position {i}"
            )));
        }
        Ok(Self {
            name,
            times,
            values,
        })
    }

    /// Uniformly sampled channel starting at `t0`.
    pub fn uniform(name: impl Into<String>, t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        let times = (0..values.len()).map(|k| t0 + k as f64 * dt).collect();
        Self::new(name, times, values)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn span(&self) -> (f64, f64) {
        (self.times[0], self.times[self.times.len() - 1])
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Linear interpolation, exact at the sample times.
    pub fn at(&self, t: f64) -> Result<f64> {
        interpolate_channel(self, t)
    }
}

/// Piecewise-linear interpolation of `series` at `t`.
pub fn interpolate_channel(series: &ChannelSeries, t: f64) -> Result<f64> {
    let (start, end) = series.span();
    let slack = TIME_SLACK * (1.0 + start.abs().max(end.abs()));
    if !(t >= start - slack && t <= end + slack) {
        return Err(Error::OutOfRange {
            channel: series.name.clone(),
            t,
            start,
            end,
        });
    }
    let times = &series.times;
    let values = &series.values;
    if t <= start {
        return Ok(values[0]);
    }
    if t >= end {
        return Ok(values[values.len() - 1]);
    }
    // index of the first knot strictly greater than t
    let hi = times.partition_point(|&s| s <= t);
    let lo = hi - 1;
    if times[lo] == t {
        return Ok(values[lo]);
    }
    let w = (t - times[lo]) / (times[hi] - times[lo]);
    Ok(values[lo] + w * (values[hi] - values[lo]))
}

/// Exogenous channels in the order a model consumes them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InputSet {
    channels: Vec<ChannelSeries>,
}

impl InputSet {
    pub fn new(channels: Vec<ChannelSeries>) -> Self {
        Self { channels }
    }

    /// Pick the named channels out of `pool`, in `names` order.
    pub fn select(pool: &[ChannelSeries], names: &[String]) -> Result<Self> {
        let channels = names
            .iter()
            .map(|n| {
                pool.iter()
                    .find(|c| c.name() == n)
                    .cloned()
                    .ok_or_else(|| Error::Dataset(format!("missing input channel `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { channels })
    }

    pub fn channels(&self) -> &[ChannelSeries] {
        &self.channels
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    /// Input vector at time `t`.
    pub fn at(&self, t: f64) -> Result<DVector<f64>> {
        let mut u = DVector::zeros(self.channels.len());
        for (i, c) in self.channels.iter().enumerate() {
            u[i] = c.at(t)?;
        }
        Ok(u)
    }
}

/// How the model's `derivative` is to be read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    /// `derivative` returns ẋ; propagation uses RK4.
    Continuous,
    /// `derivative` returns x at the next sample directly.
    Discrete,
}

/// A nonlinear state-space model with unknown parameters and exogenous
/// inputs: ẋ = f(x, θ, u), z = h(x, ẋ, θ, u).
pub trait StateSpaceModel: Debug + Send + Sync {
    fn state_names(&self) -> Vec<String>;
    fn measurement_names(&self) -> Vec<String>;
    fn parameter_names(&self) -> Vec<String>;
    /// Exogenous channel names, in the order they appear in `u`.
    fn input_names(&self) -> Vec<String>;

    fn n_states(&self) -> usize {
        self.state_names().len()
    }
    fn n_meas(&self) -> usize {
        self.measurement_names().len()
    }
    fn n_params(&self) -> usize {
        self.parameter_names().len()
    }

    fn kind(&self) -> ModelKind {
        ModelKind::Continuous
    }

    fn derivative(
        &self,
        x: &DVector<f64>,
        theta: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<DVector<f64>>;

    fn observe(
        &self,
        x: &DVector<f64>,
        xdot: &DVector<f64>,
        theta: &DVector<f64>,
        u: &DVector<f64>,
    ) -> DVector<f64>;

    /// Optional analytic ∂f/∂[x; θ] (n × (n+p)). Numeric differences are
    /// used when this returns `None`.
    fn derivative_jacobian(
        &self,
        _x: &DVector<f64>,
        _theta: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> Option<DMatrix<f64>> {
        None
    }

    /// Optional analytic ∂z/∂[x; θ] (m × (n+p)).
    fn measurement_jacobian(
        &self,
        _x: &DVector<f64>,
        _theta: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> Option<DMatrix<f64>> {
        None
    }

    /// State guess from the first measurement sample.
    fn initial_state(&self, z0: &DVector<f64>, _u0: &DVector<f64>) -> DVector<f64> {
        let n = self.n_states();
        DVector::from_fn(n, |i, _| if i < z0.len() { z0[i] } else { 0.0 })
    }
}

/// Model state concatenated with the parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedState {
    pub x: DVector<f64>,
    pub theta: DVector<f64>,
}

impl AugmentedState {
    pub fn new(x: DVector<f64>, theta: DVector<f64>) -> Self {
        Self { x, theta }
    }

    pub fn stacked(&self) -> DVector<f64> {
        let n = self.x.len();
        let mut v = DVector::zeros(n + self.theta.len());
        v.rows_mut(0, n).copy_from(&self.x);
        v.rows_mut(n, self.theta.len()).copy_from(&self.theta);
        v
    }

    pub fn from_stacked(v: &DVector<f64>, n_states: usize) -> Self {
        Self {
            x: v.rows(0, n_states).into_owned(),
            theta: v.rows(n_states, v.len() - n_states).into_owned(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.theta.iter()).all(|v| v.is_finite())
    }
}

fn check_finite(v: &DVector<f64>, t: f64, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            t,
            what: what.to_string(),
        })
    }
}

/// One classical fourth-order Runge–Kutta step of the model state; the
/// parameters are random constants and pass through unchanged.
pub fn rk4_step(
    model: &dyn StateSpaceModel,
    state: &AugmentedState,
    t: f64,
    dt: f64,
    inputs: &InputSet,
) -> Result<AugmentedState> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("integration step must be positive, got {dt}")));
    }
    let theta = &state.theta;
    let x = &state.x;
    let eval = |x: &DVector<f64>, tau: f64| -> Result<DVector<f64>> {
        let u = inputs.at(tau)?;
        let d = model.derivative(x, theta, &u)?;
        check_finite(&d, tau, "state derivative")?;
        Ok(d)
    };
    let h = dt;
    let k1 = eval(x, t)?;
    let k2 = eval(&(x + &k1 * (0.5 * h)), t + 0.5 * h)?;
    let k3 = eval(&(x + &k2 * (0.5 * h)), t + 0.5 * h)?;
    let k4 = eval(&(x + &k3 * h), t + h)?;
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    check_finite(&next, t + h, "propagated state")?;
    Ok(AugmentedState {
        x: next,
        theta: theta.clone(),
    })
}

/// Advance the stacked augmented vector from `t` to `t + dt`.
pub fn propagate(
    model: &dyn StateSpaceModel,
    xa: &DVector<f64>,
    t: f64,
    dt: f64,
    inputs: &InputSet,
) -> Result<DVector<f64>> {
    let n = model.n_states();
    let state = AugmentedState::from_stacked(xa, n);
    match model.kind() {
        ModelKind::Continuous => Ok(rk4_step(model, &state, t, dt, inputs)?.stacked()),
        ModelKind::Discrete => {
            let u = inputs.at(t)?;
            let next = model.derivative(&state.x, &state.theta, &u)?;
            check_finite(&next, t + dt, "propagated state")?;
            Ok(AugmentedState::new(next, state.theta).stacked())
        }
    }
}

/// Default central-difference step for a component of magnitude `v`.
pub fn default_step(v: f64) -> f64 {
    (1e-6 * v.abs()).max(1e-6)
}

/// Central-difference Jacobian ∂f_i/∂x_j of `f` at `at`.
///
/// `scale` overrides the per-component step; the default is
/// `max(1e-6, 1e-6·|x_j|)`.
pub fn numeric_jacobian<F>(f: F, at: &DVector<f64>, scale: Option<&[f64]>) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = at.len();
    let mut x = at.clone();
    let mut columns: Vec<DVector<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let h = match scale {
            Some(s) => s[j],
            None => default_step(at[j]),
        };
        x[j] = at[j] + h;
        let fp = f(&x).map_err(|_| Error::JacobianNonFinite { component: j })?;
        x[j] = at[j] - h;
        let fm = f(&x).map_err(|_| Error::JacobianNonFinite { component: j })?;
        x[j] = at[j];
        if fp.iter().chain(fm.iter()).any(|v| !v.is_finite()) {
            return Err(Error::JacobianNonFinite { component: j });
        }
        columns.push((fp - fm) / (2.0 * h));
    }
    let m = columns.first().map_or(0, |c| c.len());
    Ok(DMatrix::from_fn(m, n, |i, j| columns[j][i]))
}

/// ∂f/∂[x; θ] for the continuous dynamics (n × (n+p)), analytic when the
/// model provides it.
pub fn derivative_jacobian(
    model: &dyn StateSpaceModel,
    xa: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = model.n_states();
    let s = AugmentedState::from_stacked(xa, n);
    if let Some(j) = model.derivative_jacobian(&s.x, &s.theta, u) {
        return Ok(j);
    }
    numeric_jacobian(
        |v| {
            let s = AugmentedState::from_stacked(v, n);
            model.derivative(&s.x, &s.theta, u)
        },
        xa,
        None,
    )
}

/// State-transition matrix of the augmented system over one sample.
///
/// Continuous models use the second-order expansion Φ = I + F·dt + F²·dt²/2
/// of the augmented Jacobian F (parameter rows zero); discrete models use
/// the Jacobian of their map.
pub fn transition_matrix(
    model: &dyn StateSpaceModel,
    xa: &DVector<f64>,
    t: f64,
    dt: f64,
    inputs: &InputSet,
) -> Result<DMatrix<f64>> {
    let n = model.n_states();
    let na = xa.len();
    let u = inputs.at(t)?;
    let top = derivative_jacobian(model, xa, &u)?;
    match model.kind() {
        ModelKind::Continuous => {
            let mut f = DMatrix::zeros(na, na);
            f.view_mut((0, 0), (n, na)).copy_from(&top);
            let fdt = f * dt;
            let mut phi = DMatrix::identity(na, na);
            phi += &fdt;
            phi += (&fdt * &fdt) * 0.5;
            Ok(phi)
        }
        ModelKind::Discrete => {
            let mut phi = DMatrix::identity(na, na);
            phi.view_mut((0, 0), (n, na)).copy_from(&top);
            Ok(phi)
        }
    }
}

/// Predicted measurement for the stacked augmented vector. Continuous models
/// see ẋ evaluated at the same instant.
pub fn measure(
    model: &dyn StateSpaceModel,
    xa: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = model.n_states();
    let s = AugmentedState::from_stacked(xa, n);
    let xdot = match model.kind() {
        ModelKind::Continuous => model.derivative(&s.x, &s.theta, u)?,
        ModelKind::Discrete => DVector::zeros(n),
    };
    Ok(model.observe(&s.x, &xdot, &s.theta, u))
}

/// ∂z/∂[x; θ] of the composite h(x, f(x, θ, u), θ, u).
pub fn measurement_jacobian(
    model: &dyn StateSpaceModel,
    xa: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = model.n_states();
    let s = AugmentedState::from_stacked(xa, n);
    if let Some(h) = model.measurement_jacobian(&s.x, &s.theta, u) {
        return Ok(h);
    }
    numeric_jacobian(|v| measure(model, v, u), xa, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// ẋ = a·x with a = θ₀.
    #[derive(Debug)]
    struct Decay;

    impl StateSpaceModel for Decay {
        fn state_names(&self) -> Vec<String> {
            vec!["x".into()]
        }
        fn measurement_names(&self) -> Vec<String> {
            vec!["x_m".into()]
        }
        fn parameter_names(&self) -> Vec<String> {
            vec!["a".into()]
        }
        fn input_names(&self) -> Vec<String> {
            vec![]
        }
        fn derivative(
            &self,
            x: &DVector<f64>,
            theta: &DVector<f64>,
            _u: &DVector<f64>,
        ) -> Result<DVector<f64>> {
            Ok(x * theta[0])
        }
        fn observe(
            &self,
            x: &DVector<f64>,
            _xdot: &DVector<f64>,
            _theta: &DVector<f64>,
            _u: &DVector<f64>,
        ) -> DVector<f64> {
            x.clone()
        }
    }

    fn ch(times: &[f64], values: &[f64]) -> ChannelSeries {
        ChannelSeries::new("c", times.to_vec(), values.to_vec()).unwrap()
    }

    #[test]
    fn interpolation_midpoint_and_knots() {
        let c = ch(&[0.0, 1.0], &[0.0, 2.0]);
        assert_eq!(c.at(0.5).unwrap(), 1.0);
        let c = ch(&[0.0, 2.0, 4.0], &[1.0, 3.0, 2.0]);
        assert_eq!(c.at(3.0).unwrap(), 2.5);
        for (t, v) in c.times().iter().zip(c.values()) {
            assert_eq!(c.at(*t).unwrap(), *v);
        }
    }

    #[test]
    fn interpolation_out_of_range_names_channel() {
        let c = ChannelSeries::new("delta_e", vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        match c.at(1.5) {
            Err(Error::OutOfRange { channel, .. }) => assert_eq!(channel, "delta_e"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn channel_rejects_non_monotone_times() {
        assert!(ChannelSeries::new("c", vec![0.0, 1.0, 1.0], vec![0.0; 3]).is_err());
        assert!(ChannelSeries::new("c", vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn rk4_matches_exponential_decay() {
        let s = AugmentedState::new(DVector::from_vec(vec![1.0]), DVector::from_vec(vec![-1.0]));
        let next = rk4_step(&Decay, &s, 0.0, 0.1, &InputSet::default()).unwrap();
        assert!((next.x[0] - 0.904_837_4).abs() < 1e-7);
        assert_eq!(next.theta, s.theta);
    }

    fn decay_error(dt: f64) -> f64 {
        let steps = (1.0 / dt).round() as usize;
        let mut s = AugmentedState::new(DVector::from_vec(vec![1.0]), DVector::from_vec(vec![-1.0]));
        for k in 0..steps {
            s = rk4_step(&Decay, &s, k as f64 * dt, dt, &InputSet::default()).unwrap();
        }
        (s.x[0] - (-1.0_f64).exp()).abs()
    }

    #[test]
    fn rk4_is_fourth_order() {
        let e1 = decay_error(0.01);
        let e2 = decay_error(0.005);
        assert!(e1 < 1e-8, "global error {e1}");
        let ratio = e1 / e2;
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn rk4_rejects_non_finite_derivative() {
        let s = AugmentedState::new(
            DVector::from_vec(vec![f64::MAX]),
            DVector::from_vec(vec![10.0]),
        );
        let err = rk4_step(&Decay, &s, 2.0, 0.1, &InputSet::default()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn jacobian_of_identity_and_square() {
        let at = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let j = numeric_jacobian(|v| Ok(v.clone()), &at, None).unwrap();
        assert!((j - DMatrix::identity(3, 3)).abs().max() < 1e-9);
        let at = DVector::from_vec(vec![3.0]);
        let j = numeric_jacobian(|v| Ok(v.map(|a| a * a)), &at, None).unwrap();
        assert!((j[(0, 0)] - 6.0).abs() < 1e-5);
    }

    #[test]
    fn jacobian_names_bad_component() {
        // the backward step on component 1 lands on the pole at 0
        let at = DVector::from_vec(vec![1.0, 1.0]);
        let err = numeric_jacobian(
            |v| Ok(DVector::from_vec(vec![v[0], 1.0 / v[1]])),
            &at,
            Some(&[1e-6, 1.0]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::JacobianNonFinite { component: 1 }));
    }

    proptest! {
        #[test]
        fn jacobian_of_linear_map_is_the_map(
            entries in proptest::collection::vec(-10.0f64..10.0, 12),
            at in proptest::collection::vec(-5.0f64..5.0, 4),
        ) {
            let a = DMatrix::from_row_slice(3, 4, &entries);
            let at = DVector::from_vec(at);
            let j = numeric_jacobian(|v| Ok(&a * v), &at, None).unwrap();
            let scale = a.abs().max().max(1.0);
            prop_assert!((j - &a).abs().max() <= 1e-9 * scale);
        }

        #[test]
        fn interpolation_is_collinear_between_knots(
            v0 in -10.0f64..10.0, v1 in -10.0f64..10.0, w in 0.0f64..1.0,
        ) {
            let c = ch(&[1.0, 3.0], &[v0, v1]);
            let t = 1.0 + 2.0 * w;
            let got = c.at(t).unwrap();
            prop_assert!((got - (v0 + w * (v1 - v0))).abs() < 1e-12);
        }
    }
}
