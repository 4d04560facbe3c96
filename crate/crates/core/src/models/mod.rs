//! The three flight-test model definitions.

pub mod case1;
pub mod case2;
pub mod case3;
mod constants;
pub mod linear;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

pub use case2::DynamicPressure;
pub use case3::RollReference;
pub use constants::ModelConstants;
pub use linear::LinearModel;

use crate::error::{Error, Result};
use crate::statespace::StateSpaceModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CaseId {
    Case1Longitudinal,
    Case2Longitudinal,
    Case3Lateral,
}

impl CaseId {
    pub const ALL: [CaseId; 3] = [
        CaseId::Case1Longitudinal,
        CaseId::Case2Longitudinal,
        CaseId::Case3Lateral,
    ];

    pub fn number(self) -> u8 {
        match self {
            CaseId::Case1Longitudinal => 1,
            CaseId::Case2Longitudinal => 2,
            CaseId::Case3Lateral => 3,
        }
    }

    pub fn constants(self) -> ModelConstants {
        match self {
            CaseId::Case1Longitudinal => ModelConstants::case1(),
            CaseId::Case2Longitudinal => ModelConstants::case2(),
            CaseId::Case3Lateral => ModelConstants::case3(),
        }
    }

    pub fn layout(self) -> ParameterLayout {
        let (names, values): (&[&str], &[f64]) = match self {
            CaseId::Case1Longitudinal => (&case1::PARAMETERS, &case1::INITIAL_THETA),
            CaseId::Case2Longitudinal => (&case2::PARAMETERS, &case2::INITIAL_THETA),
            CaseId::Case3Lateral => (&case3::PARAMETERS, &case3::INITIAL_THETA),
        };
        ParameterLayout {
            names: names.iter().map(|s| s.to_string()).collect(),
            initial: values.to_vec(),
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "case-{}", self.number())
    }
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().trim_start_matches("case").trim_start_matches(['-', '_']) {
            "1" => Ok(CaseId::Case1Longitudinal),
            "2" => Ok(CaseId::Case2Longitudinal),
            "3" => Ok(CaseId::Case3Lateral),
            _ => Err(Error::Config(format!("unknown case `{s}` (expected 1, 2 or 3)"))),
        }
    }
}

/// Ordered parameter names with the starting guess for each.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterLayout {
    pub names: Vec<String>,
    pub initial: Vec<f64>,
}

impl ParameterLayout {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn initial_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.initial)
    }
}

/// Settings that the tables leave open.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelOptions {
    /// Overrides the tabulated constants when set.
    pub constants: Option<ModelConstants>,
    /// Required for case 2.
    pub dynamic_pressure: Option<DynamicPressure>,
    /// Case 3 rolling-moment reference length.
    pub roll_reference: RollReference,
}

/// One of the built-in flight-test models.
#[derive(Clone, Debug)]
pub enum AircraftModel {
    Case1(case1::Case1Model),
    Case2(case2::Case2Model),
    Case3(case3::Case3Model),
}

impl AircraftModel {
    pub fn case(&self) -> CaseId {
        match self {
            AircraftModel::Case1(_) => CaseId::Case1Longitudinal,
            AircraftModel::Case2(_) => CaseId::Case2Longitudinal,
            AircraftModel::Case3(_) => CaseId::Case3Lateral,
        }
    }

    pub fn layout(&self) -> ParameterLayout {
        self.case().layout()
    }

    pub fn initial_theta(&self) -> DVector<f64> {
        self.layout().initial_vector()
    }

    pub fn constants(&self) -> &ModelConstants {
        match self {
            AircraftModel::Case1(m) => m.constants(),
            AircraftModel::Case2(m) => m.constants(),
            AircraftModel::Case3(m) => m.constants(),
        }
    }

    fn inner(&self) -> &dyn StateSpaceModel {
        match self {
            AircraftModel::Case1(m) => m,
            AircraftModel::Case2(m) => m,
            AircraftModel::Case3(m) => m,
        }
    }
}

impl StateSpaceModel for AircraftModel {
    fn state_names(&self) -> Vec<String> {
        self.inner().state_names()
    }
    fn measurement_names(&self) -> Vec<String> {
        self.inner().measurement_names()
    }
    fn parameter_names(&self) -> Vec<String> {
        self.inner().parameter_names()
    }
    fn input_names(&self) -> Vec<String> {
        self.inner().input_names()
    }
    fn derivative(
        &self,
        x: &DVector<f64>,
        theta: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.inner().derivative(x, theta, u)
    }
    fn observe(
        &self,
        x: &DVector<f64>,
        xdot: &DVector<f64>,
        theta: &DVector<f64>,
        u: &DVector<f64>,
    ) -> DVector<f64> {
        self.inner().observe(x, xdot, theta, u)
    }
    fn derivative_jacobian(
        &self,
        x: &DVector<f64>,
        theta: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Option<DMatrix<f64>> {
        self.inner().derivative_jacobian(x, theta, u)
    }
    fn initial_state(&self, z0: &DVector<f64>, u0: &DVector<f64>) -> DVector<f64> {
        self.inner().initial_state(z0, u0)
    }
}

/// Build a case model from the tabulated constants (or the overrides in
/// `options`).
///
/// Case 2 fails with a configuration error unless a dynamic-pressure
/// source is given.
pub fn builtin_model(case: CaseId, options: &ModelOptions) -> Result<AircraftModel> {
    let constants = options.constants.clone().unwrap_or_else(|| case.constants());
    Ok(match case {
        CaseId::Case1Longitudinal => AircraftModel::Case1(case1::Case1Model::new(constants)?),
        CaseId::Case2Longitudinal => {
            let qbar = options
                .dynamic_pressure
                .or(constants.qbar.map(DynamicPressure::Constant))
                .ok_or_else(|| {
                    Error::Config(
                        "case 2 requires the dynamic pressure `qbar` (or an air density)".into(),
                    )
                })?;
            AircraftModel::Case2(case2::Case2Model::new(constants, qbar)?)
        }
        CaseId::Case3Lateral => AircraftModel::Case3(case3::Case3Model::new(
            constants,
            options.roll_reference,
        )?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn options() -> ModelOptions {
        ModelOptions {
            dynamic_pressure: Some(DynamicPressure::Constant(90.0)),
            ..ModelOptions::default()
        }
    }

    #[test]
    fn dimensions_per_case() {
        let dims: Vec<_> = CaseId::ALL
            .iter()
            .map(|&c| {
                let m = builtin_model(c, &options()).unwrap();
                (m.n_states(), m.n_meas(), m.n_params())
            })
            .collect();
        assert_eq!(dims, vec![(3, 5, 13), (3, 4, 10), (4, 5, 20)]);
        for c in CaseId::ALL {
            let l = c.layout();
            assert_eq!(l.names.len(), l.initial.len());
        }
    }

    #[test]
    fn tabulated_constants() {
        let k = ModelConstants::case1();
        assert_eq!((k.velocity, k.qbar, k.iyy), (Some(403.1), Some(83.08), 3922.4));
        let k = ModelConstants::case3();
        assert_eq!((k.izx, k.span, k.k_beta_x_beta), (69.0, Some(6.81), 2.73));
        assert_eq!(
            CaseId::Case2Longitudinal.layout().initial,
            vec![4.0, 0.15, 0.2, -0.5, -11.5, -5.0, -1.38, -0.06, -0.01, 0.2]
        );
        assert_eq!(CaseId::Case1Longitudinal.layout().names[0], "C_N_alpha");
    }

    #[test]
    fn case2_without_dynamic_pressure_is_a_config_error() {
        let err = builtin_model(CaseId::Case2Longitudinal, &ModelOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Config(ref s) if s.contains("qbar")));
    }

    #[test]
    fn case_parsing() {
        assert_eq!("1".parse::<CaseId>().unwrap(), CaseId::Case1Longitudinal);
        assert_eq!("case-3".parse::<CaseId>().unwrap(), CaseId::Case3Lateral);
        assert!("4".parse::<CaseId>().is_err());
    }

    fn bias_free_part(case: CaseId, x: &DVector<f64>, th: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let m = builtin_model(case, &options()).unwrap();
        let zero = DVector::zeros(th.len());
        m.derivative(x, th, u).unwrap() - m.derivative(x, &zero, u).unwrap()
    }

    fn sample_point(case: CaseId) -> (DVector<f64>, DVector<f64>) {
        match case {
            CaseId::Case1Longitudinal => (
                DVector::from_vec(vec![0.05, 0.1, 0.02]),
                DVector::from_vec(vec![-0.05, 0.02, 0.01, 0.03, -0.01, 0.05]),
            ),
            CaseId::Case2Longitudinal => (
                DVector::from_vec(vec![0.05, 0.1, 0.02]),
                DVector::from_vec(vec![-0.05, 0.02, 0.01, 390.0, 0.03, -0.01, 0.05]),
            ),
            CaseId::Case3Lateral => (
                DVector::from_vec(vec![0.02, 0.1, 0.05, -0.03]),
                DVector::from_vec(vec![0.01, -0.02, 0.05, 0.02, 0.07]),
            ),
        }
    }

    #[test]
    fn lateral_model_with_zero_cross_inertia_matches_decoupled_solution() {
        let mut k = ModelConstants::case3();
        k.izx = 0.0;
        let m = builtin_model(
            CaseId::Case3Lateral,
            &ModelOptions {
                constants: Some(k),
                ..ModelOptions::default()
            },
        )
        .unwrap();
        let AircraftModel::Case3(inner) = &m else { unreachable!() };
        let (x, u) = sample_point(CaseId::Case3Lateral);
        let th = m.initial_theta();
        let (roll, yaw) = inner.moment_terms(&x, &th, &u);
        let d = m.derivative(&x, &th, &u).unwrap();
        assert_eq!((d[1], d[3]), (roll, yaw));
    }

    proptest! {
        #[test]
        fn dynamics_are_linear_in_parameters(
            a in -2.0f64..2.0, b in -2.0f64..2.0, seed in 0usize..3,
        ) {
            let case = CaseId::ALL[seed];
            let (x, u) = sample_point(case);
            let t1 = case.layout().initial_vector();
            let t2 = t1.map(|v| 0.5 * v + 0.01);
            let combo = &t1 * a + &t2 * b;
            let mut lhs = bias_free_part(case, &x, &combo, &u);
            let mut rhs = bias_free_part(case, &x, &t1, &u) * a + bias_free_part(case, &x, &t2, &u) * b;
            if case == CaseId::Case2Longitudinal {
                // q̇ carries the product C_mα̇·α̇ and is bilinear in Θ
                lhs[1] = 0.0;
                rhs[1] = 0.0;
            }
            let scale = lhs.abs().max().max(1.0);
            prop_assert!((lhs - rhs).abs().max() < 1e-9 * scale);
        }
    }
}
