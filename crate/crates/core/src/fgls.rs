//! Feasible generalized least squares under multiplicative heteroscedasticity.
//!
//! Error variances follow `σᵢ² = exp(vᵢᵀα)`. The ML fit alternates a Newton
//! solve for `α` on the concentrated likelihood with a weighted least-squares
//! update of `β`, starting from OLS.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::basis::{basis_row, design_matrix, BasisTerm};
use crate::data::FittingSet;
use crate::error::{Error, Result};
use crate::linalg::{solve_ls, solve_wls};
use crate::ols::{dot, OlsFit};

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceModel {
    /// Variance regressors; the first is the intercept.
    pub terms: Vec<BasisTerm>,
    pub alpha: Vec<f64>,
}

impl VarianceModel {
    pub fn variance(&self, x: &[f64]) -> f64 {
        dot(&self.alpha, &basis_row(&self.terms, x)).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FglsFit {
    pub terms: Vec<BasisTerm>,
    pub coefficients: Vec<f64>,
    pub variance_model: VarianceModel,
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FglsOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FglsOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreuschPaganResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

const MAX_BACKTRACK: usize = 50;
const MAX_NEWTON: usize = 100;

/// `Σ [vᵢᵀα + exp(−vᵢᵀα) εᵢ²]`, twice the negative concentrated log-likelihood
/// up to `N log 2π`.
fn objective(v: ArrayView2<f64>, e2: &[f64], alpha: &[f64]) -> f64 {
    v.outer_iter()
        .zip(e2)
        .map(|(row, &e)| {
            let va: f64 = row.iter().zip(alpha).map(|(a, b)| a * b).sum();
            va + (-va).exp() * e
        })
        .sum()
}

fn newton_alpha(v: ArrayView2<f64>, e2: &[f64], start: &[f64]) -> Result<Vec<f64>> {
    let n = v.nrows();
    let mut alpha = start.to_vec();
    let mut f = objective(v, e2, &alpha);
    for _ in 0..MAX_NEWTON {
        // Newton step solves a weighted LS problem: weights rᵢ, response (rᵢ − 1)/rᵢ
        let r: Vec<f64> = v
            .outer_iter()
            .zip(e2)
            .map(|(row, &e)| (-row.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>()).exp() * e)
            .collect();
        let u = Array1::from_iter(r.iter().map(|&ri| if ri > 0.0 { (ri - 1.0) / ri } else { 0.0 }));
        let delta = solve_wls(v, u.view(), Array1::from(r.clone()).view())?.coefficients;
        let grad: Vec<f64> = (0..alpha.len())
            .map(|k| v.column(k).iter().zip(&r).map(|(vk, ri)| vk * (1.0 - ri)).sum())
            .collect();
        let slope = dot(&grad, &delta);
        if -slope < 1e-12 * n as f64 {
            return Ok(alpha);
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACK {
            let trial: Vec<f64> = alpha.iter().zip(&delta).map(|(a, d)| a + t * d).collect();
            let ft = objective(v, e2, &trial);
            if ft.is_finite() && ft <= f + 1e-4 * t * slope {
                alpha = trial;
                f = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::Divergence("variance-parameter Newton search failed to descend".into()));
        }
    }
    Ok(alpha)
}

fn rel_change(new: &[f64], old: &[f64]) -> f64 {
    let d = new.iter().zip(old).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let s = old.iter().map(|v| v.abs()).fold(0.0, f64::max);
    d / (1.0 + s)
}

pub fn fit_fgls(
    set: &FittingSet,
    terms: &[BasisTerm],
    variance_terms: &[BasisTerm],
    options: FglsOptions,
) -> Result<FglsFit> {
    fit_fgls_from(set, terms, variance_terms, options, None)
}

/// As [`fit_fgls`], warm-starting `α` when a start of matching length is given.
pub(crate) fn fit_fgls_from(
    set: &FittingSet,
    terms: &[BasisTerm],
    variance_terms: &[BasisTerm],
    options: FglsOptions,
    alpha_start: Option<&[f64]>,
) -> Result<FglsFit> {
    let (n, k, m) = (set.len(), terms.len(), variance_terms.len());
    if !variance_terms.first().is_some_and(BasisTerm::is_intercept) {
        return Err(Error::pre("the variance model must start with the intercept"));
    }
    if n < k + m {
        return Err(Error::pre(format!("need N ≥ K + M, got N={n}, K={k}, M={m}")));
    }
    let z = design_matrix(terms, set.scenarios());
    let v = design_matrix(variance_terms, set.scenarios());
    let y = set.responses();
    let mut beta = solve_ls(z.view(), y)?.coefficients;
    let residuals = |beta: &[f64]| -> Vec<f64> {
        z.outer_iter()
            .zip(y)
            .map(|(row, &yi)| {
                let r = yi - row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
                r * r
            })
            .collect()
    };
    let mut e2 = residuals(&beta);
    let mean = e2.iter().sum::<f64>() / n as f64;
    if !(mean > 0.0) {
        return Err(Error::DegenerateFit);
    }
    let mut alpha = match alpha_start {
        Some(a) if a.len() == m => a.to_vec(),
        _ => {
            let mut a = vec![0.0; m];
            a[0] = mean.ln();
            a
        }
    };
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=options.max_iter {
        iterations = it;
        let alpha_new = newton_alpha(v.view(), &e2, &alpha)?;
        let w = v.dot(&Array1::from(alpha_new.clone())).mapv(|s| (-s).exp());
        let beta_new = solve_wls(z.view(), y, w.view())?.coefficients;
        let change = rel_change(&beta_new, &beta).max(rel_change(&alpha_new, &alpha));
        beta = beta_new;
        alpha = alpha_new;
        e2 = residuals(&beta);
        if change < options.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("FGLS did not converge in {iterations} iterations");
    }
    let log_likelihood = -0.5 * (n as f64 * (2.0 * PI).ln() + objective(v.view(), &e2, &alpha));
    Ok(FglsFit {
        terms: terms.to_vec(),
        coefficients: beta,
        variance_model: VarianceModel {
            terms: variance_terms.to_vec(),
            alpha,
        },
        iterations,
        converged,
        log_likelihood,
        n,
    })
}

/// `N log 2π + Σ vᵢᵀα̂ + Σ exp(−vᵢᵀα̂) ε̂ᵢ² + 2(K + M)` over the fitting set.
pub fn aic_fgls(fit: &FglsFit, set: &FittingSet) -> f64 {
    let n = set.len() as f64;
    let vm = &fit.variance_model;
    let v = design_matrix(&vm.terms, set.scenarios());
    let e2: Vec<f64> = (0..set.len())
        .map(|i| (set.responses()[i] - fit.predict(&set.scenario(i))).powi(2))
        .collect();
    n * (2.0 * PI).ln() + objective(v.view(), &e2, &vm.alpha) + 2.0 * (fit.terms.len() + vm.terms.len()) as f64
}

impl FglsFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        dot(&self.coefficients, &basis_row(&self.terms, x))
    }

    /// The AIC from the stored log-likelihood; equals [`aic_fgls`] on the fitting set.
    pub fn aic(&self) -> f64 {
        -2.0 * self.log_likelihood + 2.0 * (self.terms.len() + self.variance_model.terms.len()) as f64
    }
}

/// Classical Breusch–Pagan LM test of `ε²` on the variance regressors
/// (first column the intercept).
pub fn breusch_pagan(residuals: &[f64], regressors: ArrayView2<f64>) -> Result<BreuschPaganResult> {
    let (n, m) = regressors.dim();
    if m < 2 {
        return Err(Error::pre("Breusch–Pagan needs the intercept plus at least one regressor"));
    }
    if residuals.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: residuals.len() });
    }
    let s2 = residuals.iter().map(|e| e * e).sum::<f64>() / n as f64;
    if !(s2 > 0.0) {
        return Err(Error::DegenerateNormalization);
    }
    let g = Array1::from_iter(residuals.iter().map(|e| e * e / s2));
    let sol = solve_ls(regressors, g.view())?;
    let gbar = g.sum() / n as f64;
    let fitted: Array1<f64> = regressors.dot(&Array1::from(sol.coefficients));
    let ess: f64 = fitted.iter().map(|f| (f - gbar).powi(2)).sum();
    let statistic = ess / 2.0;
    let df = m - 1;
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::pre(e.to_string()))?;
    let p_value = chi.sf(statistic).clamp(0.0, 1.0);
    Ok(BreuschPaganResult { statistic, df, p_value })
}

/// Greedy AIC-driven variance-model selection over the degree ≤ 2 terms of a
/// finished OLS proxy.
pub fn select_variance_model_type1(
    set: &FittingSet,
    ols_fit: &OlsFit,
    m_max: usize,
    options: FglsOptions,
) -> Result<(VarianceModel, FglsFit)> {
    if m_max == 0 {
        return Err(Error::pre("m_max must be at least 1"));
    }
    let dim = set.dim();
    let mut pool: Vec<BasisTerm> = ols_fit
        .terms
        .iter()
        .filter(|t| !t.is_intercept() && t.degree() <= 2)
        .cloned()
        .collect();
    pool.sort();
    let mut chosen = vec![BasisTerm::intercept(dim)];
    let mut best = fit_fgls(set, &ols_fit.terms, &chosen, options)?;
    let mut best_aic = aic_fgls(&best, set);
    while chosen.len() < m_max && !pool.is_empty() {
        let scored: Vec<Option<(f64, FglsFit)>> = pool
            .par_iter()
            .map(|cand| {
                let mut vt = chosen.clone();
                vt.push(cand.clone());
                let mut start = best.variance_model.alpha.clone();
                start.push(0.0);
                match fit_fgls_from(set, &ols_fit.terms, &vt, options, Some(&start)) {
                    Ok(f) => Some((aic_fgls(&f, set), f)),
                    Err(e) => {
                        log::debug!("variance candidate {cand} skipped: {e}");
                        None
                    }
                }
            })
            .collect();
        let mut winner: Option<(usize, f64, FglsFit)> = None;
        for (i, s) in scored.into_iter().enumerate() {
            if let Some((aic, f)) = s {
                if winner.as_ref().is_none_or(|w| aic < w.1) {
                    winner = Some((i, aic, f));
                }
            }
        }
        match winner {
            Some((i, aic, f)) if aic < best_aic => {
                chosen.push(pool.remove(i));
                best = f;
                best_aic = aic;
            }
            _ => break,
        }
    }
    Ok((best.variance_model.clone(), best))
}

/// Builds the `N × M` variance-regressor matrix.
pub fn variance_design(terms: &[BasisTerm], set: &FittingSet) -> Array2<f64> {
    design_matrix(terms, set.scenarios())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ols::{aic_ols, fit_ols};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn t(e: &[u32]) -> BasisTerm {
        BasisTerm::new(e.to_vec())
    }

    fn hetero(seed: u64, n: usize, a0: f64, a1: f64) -> FittingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let y = Array1::from_shape_fn(n, |i| {
            let sd = (0.5 * (a0 + a1 * x[[i, 0]])).exp();
            1.0 + x[[i, 0]] - 2.0 * x[[i, 1]] + sd * rng.sample::<f64, _>(StandardNormal)
        });
        FittingSet::new(x, y).unwrap()
    }

    fn lin() -> Vec<BasisTerm> {
        vec![t(&[0, 0]), t(&[0, 1]), t(&[1, 0])]
    }

    #[test]
    fn intercept_variance_reduces_to_ols() {
        let set = hetero(1, 300, 0.0, 1.5);
        let f = fit_fgls(&set, &lin(), &[t(&[0, 0])], FglsOptions::default()).unwrap();
        let o = fit_ols(&set, &lin()).unwrap();
        for (a, b) in f.coefficients.iter().zip(&o.coefficients) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!((f.variance_model.alpha[0] - o.sigma2_ml.ln()).abs() < 1e-6);
        assert!((aic_fgls(&f, &set) - aic_ols(&o)).abs() < 1e-6);
        assert!((f.aic() - aic_fgls(&f, &set)).abs() < 1e-9);
    }

    #[test]
    fn recovers_variance_parameters() {
        let set = hetero(2, 2000, 0.5, 2.0);
        let f = fit_fgls(&set, &lin(), &[t(&[0, 0]), t(&[1, 0])], FglsOptions::default()).unwrap();
        assert!(f.converged);
        let a = &f.variance_model.alpha;
        assert!((a[0] - 0.5).abs() < 0.3 && (a[1] - 2.0).abs() < 0.3, "{a:?}");
    }

    #[test]
    fn score_equations_at_convergence() {
        let set = hetero(3, 500, 0.0, 1.0);
        let vt = [t(&[0, 0]), t(&[1, 0])];
        let f = fit_fgls(&set, &lin(), &vt, FglsOptions { tol: 1e-12, max_iter: 200 }).unwrap();
        let z = design_matrix(&lin(), set.scenarios());
        let v = design_matrix(&vt, set.scenarios());
        let mut sb = [0.0; 3];
        let mut scale_b = [0.0; 3];
        let mut sa = [0.0; 2];
        for i in 0..set.len() {
            let x = set.scenario(i);
            let e = set.responses()[i] - f.predict(&x);
            let w = 1.0 / f.variance_model.variance(&x);
            for k in 0..3 {
                sb[k] += z[[i, k]] * w * e;
                scale_b[k] += (z[[i, k]] * w * set.responses()[i]).abs();
            }
            for k in 0..2 {
                sa[k] += v[[i, k]] * (1.0 - w * e * e);
            }
        }
        for k in 0..3 {
            assert!(sb[k].abs() <= 1e-6 * scale_b[k]);
        }
        for k in 0..2 {
            assert!(sa[k].abs() <= 1e-6 * set.len() as f64);
        }
    }

    #[test]
    fn aic_adds_two_per_zero_variance_term() {
        let set = hetero(4, 100, 0.0, 0.0);
        let f = fit_fgls(&set, &lin(), &[t(&[0, 0])], FglsOptions::default()).unwrap();
        let mut g = f.clone();
        g.variance_model.terms.push(t(&[1, 0]));
        g.variance_model.alpha.push(0.0);
        assert!((aic_fgls(&g, &set) - aic_fgls(&f, &set) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn precondition_checks() {
        let set = hetero(5, 4, 0.0, 0.0);
        assert!(fit_fgls(&set, &lin(), &[t(&[0, 0]), t(&[1, 0])], FglsOptions::default()).is_err());
        let set = hetero(5, 40, 0.0, 0.0);
        assert!(fit_fgls(&set, &lin(), &[t(&[1, 0])], FglsOptions::default()).is_err());
    }

    #[test]
    fn weight_scale_invariance() {
        let set = hetero(6, 200, 0.0, 1.0);
        let z = design_matrix(&lin(), set.scenarios());
        let w = Array1::from_shape_fn(200, |i| (-(set.scenarios()[[i, 0]])).exp());
        let a = solve_wls(z.view(), set.responses(), w.view()).unwrap().coefficients;
        let b = solve_wls(z.view(), set.responses(), (w * 3f64.exp()).view()).unwrap().coefficients;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn bp_equal_magnitudes() {
        let e = [1.0, -1.0, 1.0, -1.0, 1.0];
        let v = Array2::from_shape_fn((5, 2), |(i, j)| if j == 0 { 1.0 } else { i as f64 });
        let r = breusch_pagan(&e, v.view()).unwrap();
        assert!(r.statistic.abs() < 1e-12);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        assert_eq!(r.df, 1);
        let c = Array2::from_shape_fn((5, 2), |_| 1.0);
        assert!(matches!(breusch_pagan(&e, c.view()), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn type1_picks_driving_term() {
        let set = hetero(7, 1000, 0.0, 2.0);
        let o = fit_ols(&set, &lin()).unwrap();
        let (vm, _) = select_variance_model_type1(&set, &o, 3, FglsOptions::default()).unwrap();
        assert_eq!(vm.terms[1], t(&[1, 0]));
        let (vm, _) = select_variance_model_type1(&set, &o, 1, FglsOptions::default()).unwrap();
        assert_eq!(vm.terms, vec![t(&[0, 0])]);
    }
}
