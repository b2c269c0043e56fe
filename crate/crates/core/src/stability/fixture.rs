//! A two-dimensional system with a structural break at `t = 1` that has no
//! equivalent CARMA representation across the break.
//!
//! Before the break `A_1 = [[0,1],[1,1]]`, `B_1 = (1,2)'`, `C_1 = (0,1)'`
//! (already companion form); after it `A_2 = diag(-2,-3)`,
//! `B_2 = C_2 = (1,1)'`, whose companion realization is
//! `𝒜_2 = [[0,1],[-6,-5]]`, `ℬ_2 = (5,2)'`, `𝒞_2 = (0,1)'`. Both share the
//! transfer function `(2z+5)/(z²+5z+6)`, but they act differently on the
//! state carried over from before the break.

use nalgebra::{DMatrix, DVector};

use crate::function::{MatrixFunction, ScalarFunction};
use crate::linalg::matrix_exp;
use crate::model::StateSpaceModel;
use crate::LevyModel;

fn step(left: f64, right: f64) -> ScalarFunction {
    ScalarFunction::step(1.0, left, right)
}

/// The step-coefficient state-space model with the break at `t = 1`.
pub fn structural_break_model(levy: LevyModel) -> StateSpaceModel {
    let a = MatrixFunction::from_rows(vec![
        vec![step(0.0, -2.0), step(1.0, 0.0)],
        vec![step(1.0, 0.0), step(1.0, -3.0)],
    ])
    .expect("2x2");
    let b = MatrixFunction::column(vec![step(1.0, 1.0), step(2.0, 1.0)]).expect("2x1");
    let c = MatrixFunction::column(vec![step(0.0, 1.0), step(1.0, 1.0)]).expect("2x1");
    StateSpaceModel::new(a, b, c, levy).expect("consistent shapes")
}

/// `ℬ_2' e^{𝒜_2 τ} x - B_2' e^{A_2 τ} x`: the difference between the two
/// post-break realizations applied to the state `x` at the break.
pub fn structural_break_gap(tau: f64, x: [f64; 2]) -> f64 {
    let carma_a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -6.0, -5.0]);
    let carma_b = DVector::from_row_slice(&[5.0, 2.0]);
    let a2 = DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, -3.0]);
    let b2 = DVector::from_row_slice(&[1.0, 1.0]);
    let x = DVector::from_row_slice(&x);
    carma_b.dot(&(matrix_exp(&(carma_a * tau)) * &x)) - b2.dot(&(matrix_exp(&(a2 * tau)) * &x))
}
