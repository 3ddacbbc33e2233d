use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{penalty_weights, Factorized, InferenceError, RidgeOptions};
use crate::cv::{contiguous_folds, training_rows};
use crate::sampling::RegressionProblem;

/// Minimum number of rows each fold must hold for λ selection.
pub const MIN_ROWS_PER_FOLD: usize = 10;

/// Log-spaced candidate penalties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid {
            min: 1e-5,
            max: 1e5,
            points: 50,
        }
    }
}

impl LambdaGrid {
    /// Candidate values in increasing order.
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        let (lo, hi) = (self.min.log10(), self.max.log10());
        let step = (hi - lo) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                if i + 1 == self.points {
                    self.max
                } else {
                    10f64.powf(lo + step * i as f64)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSearch {
    pub grid: Vec<f64>,
    /// Mean held-out MSE across folds, per grid value.
    pub cv_errors: Vec<f64>,
    pub lambda_hat: f64,
}

impl LambdaSearch {
    pub fn best_index(&self) -> usize {
        self.grid
            .iter()
            .position(|&l| l == self.lambda_hat)
            .expect("lambda_hat is a grid value")
    }
}

/// K-fold cross-validation of the Ridge penalty over contiguous row blocks.
///
/// Each fold's training design is factorized once; every candidate λ then
/// costs one small QR. Ties go to the smaller λ.
pub fn select_lambda(
    problem: &RegressionProblem,
    grid: &LambdaGrid,
    folds: usize,
    opts: &RidgeOptions,
) -> Result<LambdaSearch, InferenceError> {
    let rows = problem.rows();
    let needed = MIN_ROWS_PER_FOLD;
    if folds < 2 || rows / folds < needed {
        return Err(InferenceError::InsufficientRows { rows, folds, needed });
    }
    let lambdas = grid.values();
    let penalty = penalty_weights(problem.x.ncols(), opts);
    let mut sums = vec![0.0; lambdas.len()];
    for held_out in contiguous_folds(rows, folds) {
        let train = problem.select_rows(&training_rows(rows, &held_out));
        let fact = Factorized::new(&train.x, &train.y)?;
        let x_val = problem.x.rows(held_out.start, held_out.len());
        let y_val = problem.y.rows(held_out.start, held_out.len());
        for (sum, &lambda) in sums.iter_mut().zip(&lambdas) {
            let beta: DVector<f64> = fact.coefficients(lambda, &penalty)?;
            let resid = y_val - x_val * beta;
            *sum += resid.norm_squared() / held_out.len() as f64;
        }
    }
    let cv_errors: Vec<f64> = sums.iter().map(|s| s / folds as f64).collect();
    if cv_errors.iter().any(|e| !e.is_finite()) {
        return Err(InferenceError::NumericalFailure("non-finite cross-validation error".into()));
    }
    let mut best = 0;
    for (i, &e) in cv_errors.iter().enumerate() {
        if e < cv_errors[best] {
            best = i;
        }
    }
    Ok(LambdaSearch {
        lambda_hat: lambdas[best],
        grid: lambdas,
        cv_errors,
    })
}
