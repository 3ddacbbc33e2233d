//! OLS and Ridge fits of ΔP on the MLOFI components, with the usual
//! inference statistics.
//!
//! Both estimators go through one thin QR factorization X = QR. Ridge then
//! solves the small stacked system [R; √λ·D] β ≈ [Qᵀy; 0], which is the
//! augmented least-squares form of (XᵀX + λD) β = Xᵀy and reduces to plain
//! OLS when λ = 0.

mod collinearity;
mod lambda;
mod summary;

pub use collinearity::{diagnose_collinearity, CollinearityDiagnostics};
pub use lambda::{select_lambda, LambdaGrid, LambdaSearch};
pub use summary::{significance_summary, CoefficientSummary};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::sampling::RegressionProblem;

/// Rank tolerance relative to the largest singular value.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Two-sided significance level used for counting significant coefficients.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("{rows} rows cannot identify {cols} coefficients with a residual degree of freedom")]
    Underdetermined { rows: usize, cols: usize },
    #[error("design matrix is rank deficient (condition ratio {ratio:e})")]
    RankDeficient { ratio: f64 },
    #[error("penalty must be finite and non-negative, got {0}")]
    InvalidLambda(f64),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("need at least {needed} rows per fold, have {rows} rows for {folds} folds")]
    InsufficientRows {
        rows: usize,
        folds: usize,
        needed: usize,
    },
    #[error("no fits to summarize")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ols,
    Ridge,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ols => "ols",
            Method::Ridge => "ridge",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RidgeOptions {
    /// Penalize α together with the slopes, as in the cost ‖y − Xβ‖² + λ‖β‖².
    pub penalize_intercept: bool,
    /// Rescale slope columns to unit standard deviation before penalizing.
    pub standardize: bool,
}

impl Default for RidgeOptions {
    fn default() -> Self {
        RidgeOptions {
            penalize_intercept: true,
            standardize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    /// α followed by β¹..βᴹ.
    pub coeffs: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub sigma2_hat: f64,
    pub sse: f64,
    pub sst: f64,
    pub r2: f64,
    pub adj_r2: f64,
    pub lambda: f64,
    pub dof: usize,
    pub rows: usize,
}

impl RegressionFit {
    pub fn slopes(&self) -> &[f64] {
        &self.coeffs[1..]
    }

    pub fn predict_row(&self, row: impl IntoIterator<Item = f64>) -> f64 {
        row.into_iter().zip(&self.coeffs).map(|(x, b)| x * b).sum()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        x * DVector::from_column_slice(&self.coeffs)
    }

    pub fn coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|b| b * b).sum::<f64>().sqrt()
    }
}

/// Thin QR of a design matrix, reusable across penalties.
#[derive(Debug, Clone)]
pub struct Factorized {
    r: DMatrix<f64>,
    qty: DVector<f64>,
}

impl Factorized {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self, InferenceError> {
        let (rows, cols) = x.shape();
        if rows < cols {
            return Err(InferenceError::Underdetermined { rows, cols });
        }
        let qr = x.clone().qr();
        let mut qty = y.clone();
        qr.q_tr_mul(&mut qty);
        Ok(Factorized {
            r: qr.r(),
            qty: qty.rows(0, cols).into_owned(),
        })
    }

    pub fn cols(&self) -> usize {
        self.r.ncols()
    }

    /// Ratio of the smallest to the largest singular value of X.
    pub fn condition_ratio(&self) -> f64 {
        let sv = self.r.clone().singular_values();
        let max = sv.max();
        if max == 0.0 {
            return 0.0;
        }
        sv.min() / max
    }

    /// Solves the penalized problem; returns β and the triangular factor of
    /// XᵀX + λD.
    fn solve(&self, lambda: f64, penalty: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>), InferenceError> {
        let p = self.cols();
        let (r, rhs) = if lambda == 0.0 {
            (self.r.clone(), self.qty.clone())
        } else {
            let mut stacked = DMatrix::zeros(2 * p, p);
            stacked.view_mut((0, 0), (p, p)).copy_from(&self.r);
            for (j, w) in penalty.iter().enumerate() {
                stacked[(p + j, j)] = (lambda * w).sqrt();
            }
            let mut rhs = DVector::zeros(2 * p);
            rhs.rows_mut(0, p).copy_from(&self.qty);
            let qr = stacked.qr();
            qr.q_tr_mul(&mut rhs);
            (qr.r(), rhs.rows(0, p).into_owned())
        };
        let beta = r
            .solve_upper_triangular(&rhs)
            .ok_or_else(|| InferenceError::NumericalFailure("singular triangular factor".into()))?;
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(InferenceError::NumericalFailure("non-finite coefficients".into()));
        }
        Ok((beta, r))
    }

    /// Coefficients only, for cross-validation loops.
    pub fn coefficients(&self, lambda: f64, penalty: &[f64]) -> Result<DVector<f64>, InferenceError> {
        self.solve(lambda, penalty).map(|(beta, _)| beta)
    }
}

fn penalty_weights(cols: usize, opts: &RidgeOptions) -> Vec<f64> {
    (0..cols)
        .map(|j| if j == 0 && !opts.penalize_intercept { 0.0 } else { 1.0 })
        .collect()
}

fn check_dof(problem: &RegressionProblem) -> Result<usize, InferenceError> {
    let (rows, cols) = problem.x.shape();
    if rows <= cols {
        return Err(InferenceError::Underdetermined { rows, cols });
    }
    Ok(rows - cols)
}

/// Two-sided p-value of a t statistic.
pub fn two_sided_p(t: f64, dof: usize) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, dof as f64).expect("positive degrees of freedom");
    (2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0)
}

fn r_squared(sse: f64, sst: f64) -> f64 {
    if sst > 0.0 {
        1.0 - sse / sst
    } else if sse == 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn adjusted_r2(r2: f64, rows: usize, dof: usize) -> f64 {
    1.0 - (1.0 - r2) * (rows as f64 - 1.0) / dof as f64
}

/// Builds the fit record from coefficients and their covariance up to σ².
fn finish_fit(
    problem: &RegressionProblem,
    beta: &DVector<f64>,
    unscaled_cov: &DMatrix<f64>,
    lambda: f64,
    dof: usize,
) -> RegressionFit {
    let rows = problem.rows();
    let resid = &problem.y - &problem.x * beta;
    let sse = resid.norm_squared();
    let mean = problem.y.mean();
    let sst = problem.y.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    let sigma2_hat = sse / dof as f64;
    let r2 = r_squared(sse, sst);

    let coeffs: Vec<f64> = beta.iter().copied().collect();
    let std_errors: Vec<f64> = (0..coeffs.len())
        .map(|j| (sigma2_hat * unscaled_cov[(j, j)]).max(0.0).sqrt())
        .collect();
    let t_stats: Vec<f64> = coeffs
        .iter()
        .zip(&std_errors)
        .map(|(&b, &se)| {
            if se > 0.0 {
                b / se
            } else if b == 0.0 {
                0.0
            } else {
                b.signum() * f64::INFINITY
            }
        })
        .collect();
    let p_values = t_stats.iter().map(|&t| two_sided_p(t, dof)).collect();
    RegressionFit {
        coeffs,
        std_errors,
        t_stats,
        p_values,
        sigma2_hat,
        sse,
        sst,
        r2,
        adj_r2: adjusted_r2(r2, rows, dof),
        lambda,
        dof,
        rows,
    }
}

fn upper_inverse(r: &DMatrix<f64>) -> Result<DMatrix<f64>, InferenceError> {
    let p = r.ncols();
    r.solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| InferenceError::NumericalFailure("singular triangular factor".into()))
}

/// Ordinary least squares with classical standard errors.
pub fn fit_ols(problem: &RegressionProblem) -> Result<RegressionFit, InferenceError> {
    let dof = check_dof(problem)?;
    let fact = Factorized::new(&problem.x, &problem.y)?;
    let ratio = fact.condition_ratio();
    if !(ratio > RANK_TOLERANCE) {
        return Err(InferenceError::RankDeficient { ratio });
    }
    let (beta, r) = fact.solve(0.0, &[])?;
    let r_inv = upper_inverse(&r)?;
    let cov = &r_inv * r_inv.transpose();
    Ok(finish_fit(problem, &beta, &cov, 0.0, dof))
}

/// Ridge regression minimizing ‖y − Xβ‖² + λ‖Dβ‖², with sandwich standard
/// errors σ̂²·(XᵀX+λD)⁻¹XᵀX(XᵀX+λD)⁻¹.
pub fn fit_ridge(
    problem: &RegressionProblem,
    lambda: f64,
    opts: &RidgeOptions,
) -> Result<RegressionFit, InferenceError> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(InferenceError::InvalidLambda(lambda));
    }
    let dof = check_dof(problem)?;
    let scales = if opts.standardize {
        column_scales(&problem.x)
    } else {
        vec![1.0; problem.x.ncols()]
    };
    let x_scaled = DMatrix::from_fn(problem.x.nrows(), problem.x.ncols(), |r, c| problem.x[(r, c)] / scales[c]);
    let fact = Factorized::new(&x_scaled, &problem.y)?;
    let penalty = penalty_weights(problem.x.ncols(), opts);
    let (beta_scaled, r_pen) = fact.solve(lambda, &penalty)?;
    let a_inv_r = upper_inverse(&r_pen)?;
    let a_inv = &a_inv_r * a_inv_r.transpose();
    let gram = fact.r.transpose() * &fact.r;
    let cov_scaled = &a_inv * gram * &a_inv;

    let beta = DVector::from_fn(beta_scaled.len(), |j, _| beta_scaled[j] / scales[j]);
    let cov = DMatrix::from_fn(cov_scaled.nrows(), cov_scaled.ncols(), |i, j| {
        cov_scaled[(i, j)] / (scales[i] * scales[j])
    });
    Ok(finish_fit(problem, &beta, &cov, lambda, dof))
}

/// Sample standard deviation of each slope column (1 for the intercept and for
/// constant columns).
fn column_scales(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    (0..x.ncols())
        .map(|c| {
            if c == 0 {
                return 1.0;
            }
            let col = x.column(c);
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect()
}

/// Fits one method; Ridge uses `lambda`, OLS ignores it.
pub fn fit(
    problem: &RegressionProblem,
    method: Method,
    lambda: f64,
    opts: &RidgeOptions,
) -> Result<RegressionFit, InferenceError> {
    match method {
        Method::Ols => fit_ols(problem),
        Method::Ridge => fit_ridge(problem, lambda, opts),
    }
}
