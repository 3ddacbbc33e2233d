use serde::{Deserialize, Serialize};

use super::{InferenceError, RegressionFit, SIGNIFICANCE_LEVEL};

/// Averages of one coefficient across many window fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub mean_coeff: f64,
    pub mean_std_error: f64,
    pub mean_t: f64,
    pub mean_p: f64,
    /// Percentage of fits with a two-sided p-value below 0.05.
    pub pct_significant: f64,
}

pub fn significance_summary(fits: &[RegressionFit]) -> Result<Vec<CoefficientSummary>, InferenceError> {
    let first = fits.first().ok_or(InferenceError::Empty)?;
    let n = fits.len() as f64;
    let mean = |f: &dyn Fn(&RegressionFit) -> f64| fits.iter().map(f).sum::<f64>() / n;
    Ok((0..first.coeffs.len())
        .map(|j| CoefficientSummary {
            mean_coeff: mean(&|fit| fit.coeffs[j]),
            mean_std_error: mean(&|fit| fit.std_errors[j]),
            mean_t: mean(&|fit| fit.t_stats[j]),
            mean_p: mean(&|fit| fit.p_values[j]),
            pct_significant: 100.0
                * fits.iter().filter(|fit| fit.p_values[j] < SIGNIFICANCE_LEVEL).count() as f64
                / n,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit_with_p(p: f64) -> RegressionFit {
        RegressionFit {
            coeffs: vec![1.0, 2.0],
            std_errors: vec![0.5, 1.0],
            t_stats: vec![2.0, 2.0],
            p_values: vec![0.5, p],
            sigma2_hat: 1.0,
            sse: 1.0,
            sst: 2.0,
            r2: 0.5,
            adj_r2: 0.4,
            lambda: 0.0,
            dof: 10,
            rows: 12,
        }
    }

    #[test]
    fn identical_fits_average_to_themselves() {
        let fit = fit_with_p(0.01);
        let s = significance_summary(&[fit.clone(), fit.clone(), fit]).unwrap();
        assert_eq!(s[1].mean_coeff, 2.0);
        assert_eq!(s[1].mean_std_error, 1.0);
        assert_eq!(s[1].mean_t, 2.0);
        assert_eq!(s[1].mean_p, 0.01);
        assert_eq!(s[1].pct_significant, 100.0);
        assert_eq!(s[0].pct_significant, 0.0);
    }

    #[test]
    fn half_significant() {
        let s = significance_summary(&[fit_with_p(0.04), fit_with_p(0.06)]).unwrap();
        assert_eq!(s[1].pct_significant, 50.0);
        assert!((s[1].mean_p - 0.05).abs() < 1e-15);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(significance_summary(&[]), Err(InferenceError::Empty));
    }
}
