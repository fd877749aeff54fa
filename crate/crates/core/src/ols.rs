//! Classical linear regression and its AIC score.

use std::f64::consts::PI;

use crate::basis::{basis_row, design_matrix, BasisTerm};
use crate::data::FittingSet;
use crate::error::{Error, Result};
use crate::linalg::solve_ls;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub terms: Vec<BasisTerm>,
    pub coefficients: Vec<f64>,
    /// ML error variance `RSS / N`.
    pub sigma2_ml: f64,
    /// Unbiased sample variance `RSS / (N − K)`.
    pub sample_variance: f64,
    pub n: usize,
    pub k: usize,
}

pub fn fit_ols(set: &FittingSet, terms: &[BasisTerm]) -> Result<OlsFit> {
    let n = set.len();
    let k = terms.len();
    if !terms.iter().any(BasisTerm::is_intercept) {
        return Err(Error::pre("OLS terms must include the intercept"));
    }
    if n <= k {
        return Err(Error::pre(format!("need N > K, got N={n}, K={k}")));
    }
    let z = design_matrix(terms, set.scenarios());
    let sol = solve_ls(z.view(), set.responses())?;
    let rss = sol.residual_sum_of_squares;
    // exact fits leave only rounding noise in the residuals
    let scale: f64 = set.responses().iter().map(|v| v * v).sum();
    if !(rss > 1e-24 * scale) {
        return Err(Error::DegenerateFit);
    }
    Ok(OlsFit {
        terms: terms.to_vec(),
        coefficients: sol.coefficients,
        sigma2_ml: rss / n as f64,
        sample_variance: rss / (n - k) as f64,
        n,
        k,
    })
}

/// `N (log(2π σ̂²) + 1) + 2 (K + 1)`.
pub fn aic_ols(fit: &OlsFit) -> f64 {
    let n = fit.n as f64;
    n * ((2.0 * PI * fit.sigma2_ml).ln() + 1.0) + 2.0 * (fit.k as f64 + 1.0)
}

impl OlsFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        dot(&self.coefficients, &basis_row(&self.terms, x))
    }

    pub fn aic(&self) -> f64 {
        aic_ols(self)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1, Array2};

    fn t(e: &[u32]) -> BasisTerm {
        BasisTerm::new(e.to_vec())
    }

    #[test]
    fn exact_fit_is_degenerate() {
        let x = array![[0.0], [0.5], [1.0], [-1.0]];
        let y = x.column(0).mapv(|v| 2.0 + 3.0 * v);
        let set = FittingSet::new(x, y).unwrap();
        assert!(matches!(fit_ols(&set, &[t(&[0]), t(&[1])]), Err(Error::DegenerateFit)));
    }

    #[test]
    fn intercept_only_hand_values() {
        let set = FittingSet::new(Array2::zeros((4, 1)), array![0.0, 1.0, 2.0, 3.0]).unwrap();
        let f = fit_ols(&set, &[t(&[0])]).unwrap();
        assert!((f.coefficients[0] - 1.5).abs() < 1e-12);
        assert!((f.sigma2_ml - 1.25).abs() < 1e-12);
        assert!((f.sample_variance - 5.0 / 3.0).abs() < 1e-12);
        // Theorem: σ̂² = (N−K)/N · s
        assert!((f.sigma2_ml - 3.0 / 4.0 * f.sample_variance).abs() < 1e-12);
        // 4·(ln(2π·1.25)+1) + 4
        assert!((aic_ols(&f) - 16.2441).abs() < 1e-3);
        assert_eq!(f.predict(&[0.7]), f.coefficients[0]);
    }

    #[test]
    fn n_equal_k_rejected() {
        let set = FittingSet::new(array![[0.0], [1.0]], array![1.0, 2.0]).unwrap();
        assert!(matches!(fit_ols(&set, &[t(&[0]), t(&[1])]), Err(Error::Precondition(_))));
    }

    #[test]
    fn aic_arithmetic() {
        let base = OlsFit { terms: vec![], coefficients: vec![], sigma2_ml: 0.8, sample_variance: 1.0, n: 10, k: 3 };
        let more = OlsFit { k: 4, ..base.clone() };
        assert!((aic_ols(&more) - aic_ols(&base) - 2.0).abs() < 1e-12);
        let scaled = OlsFit { sigma2_ml: 0.8 * std::f64::consts::E.powi(2), ..base.clone() };
        assert!((aic_ols(&scaled) - aic_ols(&base) - 20.0).abs() < 1e-10);
    }

    #[test]
    fn predict_linear() {
        let f = OlsFit { terms: vec![t(&[0, 0]), t(&[1, 0])], coefficients: vec![2.0, 3.0], sigma2_ml: 1.0, sample_variance: 1.0, n: 3, k: 2 };
        assert_eq!(f.predict(&[0.5, 0.0]), 3.5);
        assert_eq!(f.predict(&[0.0, 0.0]), 2.0);
    }

    #[test]
    fn residual_mean_zero_with_intercept() {
        let n = 50;
        let x = Array2::from_shape_fn((n, 2), |(i, j)| ((i * 7 + j * 13) % 17) as f64 / 8.5 - 1.0);
        let y = Array1::from_shape_fn(n, |i| (i as f64 * 0.37).sin() + x[[i, 0]] * 2.0);
        let set = FittingSet::new(x, y).unwrap();
        let terms = [t(&[0, 0]), t(&[1, 0]), t(&[0, 1]), t(&[1, 1])];
        let f = fit_ols(&set, &terms).unwrap();
        let mean: f64 = (0..n).map(|i| set.responses()[i] - f.predict(&set.scenario(i))).sum::<f64>() / n as f64;
        assert!(mean.abs() < 1e-10);
    }
}
