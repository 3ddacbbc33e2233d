use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::InferenceError;
use crate::sampling::RegressionProblem;

/// Pearson correlations between the MLOFI columns and the spectrum of the
/// correlation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollinearityDiagnostics {
    /// Row-major M×M; `None` wherever a zero-variance column is involved.
    pub corr: Vec<Vec<Option<f64>>>,
    /// Eigenvalues of the correlation matrix of the non-degenerate columns,
    /// in descending order.
    pub eigenvalues: Vec<f64>,
    /// 0-based indices (among the M slope columns) with zero variance.
    pub degenerate_columns: Vec<usize>,
}

/// Correlation structure of the slope columns of a (usually pooled) problem.
pub fn diagnose_collinearity(problem: &RegressionProblem) -> Result<CollinearityDiagnostics, InferenceError> {
    let levels = problem.levels();
    let rows = problem.rows();
    if rows < levels + 1 {
        return Err(InferenceError::Underdetermined { rows, cols: levels + 1 });
    }
    let features = problem.x.columns(1, levels);
    let means = features.row_mean();
    let centered = DMatrix::from_fn(rows, levels, |r, c| features[(r, c)] - means[c]);
    let cross = centered.transpose() * &centered;

    let degenerate: Vec<usize> = (0..levels).filter(|&j| cross[(j, j)] <= 0.0).collect();
    let live: Vec<usize> = (0..levels).filter(|j| !degenerate.contains(j)).collect();

    let mut corr = vec![vec![None; levels]; levels];
    for &i in &live {
        for &j in &live {
            let value = if i == j {
                1.0
            } else {
                (cross[(i, j)] / (cross[(i, i)] * cross[(j, j)]).sqrt()).clamp(-1.0, 1.0)
            };
            corr[i][j] = Some(value);
        }
    }

    let sub = DMatrix::from_fn(live.len(), live.len(), |a, b| {
        corr[live[a]][live[b]].expect("live pair has a correlation")
    });
    let mut eigenvalues: Vec<f64> = if live.is_empty() {
        Vec::new()
    } else {
        SymmetricEigen::new(sub).eigenvalues.iter().copied().collect()
    };
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    Ok(CollinearityDiagnostics {
        corr,
        eigenvalues,
        degenerate_columns: degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn duplicated_column_gives_unit_correlation_and_zero_eigenvalue() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                let v: f64 = rng.random_range(-10.0..10.0);
                vec![v, v]
            })
            .collect();
        let d = diagnose_collinearity(&RegressionProblem::from_rows("d", 0, &xs, vec![0.0; 50])).unwrap();
        assert_eq!(d.corr[0][1], Some(1.0));
        assert!((d.eigenvalues[0] - 2.0).abs() < 1e-10);
        assert!(d.eigenvalues[1].abs() < 1e-10);
    }

    #[test]
    fn independent_columns_are_nearly_uncorrelated() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows = 4000;
        let xs: Vec<Vec<f64>> = (0..rows).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let d = diagnose_collinearity(&RegressionProblem::from_rows("d", 0, &xs, vec![0.0; rows])).unwrap();
        let bound = 3.0 / (rows as f64).sqrt();
        for i in 0..4 {
            for j in 0..4 {
                let c = d.corr[i][j].unwrap();
                if i == j {
                    assert_eq!(c, 1.0);
                } else {
                    assert!(c.abs() < bound, "{c}");
                    assert_eq!(Some(c), d.corr[j][i]);
                }
            }
        }
        assert!((d.eigenvalues.iter().sum::<f64>() - 4.0).abs() < 1e-8);
    }

    #[test]
    fn constant_column_is_reported() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 3.0, (i * i) as f64]).collect();
        let d = diagnose_collinearity(&RegressionProblem::from_rows("d", 0, &xs, vec![0.0; 10])).unwrap();
        assert_eq!(d.degenerate_columns, vec![1]);
        assert_eq!(d.corr[1][1], None);
        assert_eq!(d.corr[0][1], None);
        assert!(d.corr[0][2].is_some());
        assert_eq!(d.eigenvalues.len(), 2);
    }
}
