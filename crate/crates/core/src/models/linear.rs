//! Discrete-time linear Gaussian model x_{k+1} = A x_k, z_k = C x_k with no
//! unknown parameters. Useful as a reference where the extended filter must
//! reduce to the ordinary Kalman filter.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::statespace::{ModelKind, StateSpaceModel};

#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    a: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(a: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || c.ncols() != a.nrows() {
            return Err(Error::Dimension(format!(
                "A is {}x{}, C is {}x{}",
                a.nrows(),
                a.ncols(),
                c.nrows(),
                c.ncols()
            )));
        }
        Ok(Self { a, c })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
}

impl StateSpaceModel for LinearModel {
    fn state_names(&self) -> Vec<String> {
        (0..self.a.nrows()).map(|i| format!("x{i}")).collect()
    }
    fn measurement_names(&self) -> Vec<String> {
        (0..self.c.nrows()).map(|i| format!("z{i}")).collect()
    }
    fn parameter_names(&self) -> Vec<String> {
        Vec::new()
    }
    fn input_names(&self) -> Vec<String> {
        Vec::new()
    }
    fn kind(&self) -> ModelKind {
        ModelKind::Discrete
    }

    fn derivative(
        &self,
        x: &DVector<f64>,
        _theta: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        Ok(&self.a * x)
    }

    fn observe(
        &self,
        x: &DVector<f64>,
        _xdot: &DVector<f64>,
        _theta: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> DVector<f64> {
        &self.c * x
    }

    fn derivative_jacobian(
        &self,
        _x: &DVector<f64>,
        _theta: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> Option<DMatrix<f64>> {
        Some(self.a.clone())
    }

    fn measurement_jacobian(
        &self,
        _x: &DVector<f64>,
        _theta: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> Option<DMatrix<f64>> {
        Some(self.c.clone())
    }
}
