//! Generalized additive models built from P-spline smooths of monomial terms.
//!
//! Each selected term `e_k(X)` becomes the argument of a cubic B-spline smooth
//! on equally spaced knots with a second-difference penalty. Columns are
//! mean-centered over the fitting rows and the last column of each smooth is
//! dropped, so the intercept stays identifiable.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, ArrayView1};
use rayon::prelude::*;

use crate::basis::BasisTerm;
use crate::data::FittingSet;
use crate::error::{Error, Result};
use crate::glm::{check_pairing, pearson_dispersion, Family, IrlsOptions, IrlsProblem, Link};
use crate::linalg::{scale_rows, HouseholderQr};

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothSpec {
    pub term: BasisTerm,
    /// Number of spline functions `J ≥ 4`.
    pub splines: usize,
    pub range: (f64, f64),
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedSmooth {
    pub spec: SmoothSpec,
    /// `J` coefficients; the last is the dropped column and always 0.
    pub coefficients: Vec<f64>,
    pub means: Vec<f64>,
}

impl FittedSmooth {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let (lo, hi) = self.spec.range;
        let b = bspline_basis(self.spec.term.eval(x), lo, hi, self.spec.splines);
        b.iter()
            .zip(&self.means)
            .zip(&self.coefficients)
            .map(|((b, m), c)| (b - m) * c)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GamFit {
    pub intercept: f64,
    pub smooths: Vec<FittedSmooth>,
    pub family: Family,
    pub link: Link,
    /// Pearson dispersion with the effective df in place of `K`.
    pub dispersion: f64,
    pub effective_df: f64,
    pub deviance: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GamSettings {
    pub splines_per_smooth: usize,
    pub family: Family,
    pub link: Link,
    pub irls: IrlsOptions,
}

impl Default for GamSettings {
    fn default() -> Self {
        Self {
            splines_per_smooth: 8,
            family: Family::Gaussian,
            link: Link::Identity,
            irls: IrlsOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GamCriterion {
    Gcv,
    Aic,
}

impl FromStr for GamCriterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gcv" => Ok(GamCriterion::Gcv),
            "aic" => Ok(GamCriterion::Aic),
            other => Err(Error::pre(format!("unknown GAM criterion `{other}`"))),
        }
    }
}

impl fmt::Display for GamCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GamCriterion::Gcv => "gcv",
            GamCriterion::Aic => "aic",
        })
    }
}

/// Nine log-spaced values from 1e-4 to 1e4.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..9).map(|i| 10f64.powi(i - 4)).collect()
}

fn cardinal(u: f64) -> (f64, f64) {
    // value and d/du of the cardinal cubic B-spline on [0, 4)
    if !(0.0..4.0).contains(&u) {
        (0.0, 0.0)
    } else if u < 1.0 {
        (u.powi(3) / 6.0, u * u / 2.0)
    } else if u < 2.0 {
        (
            (-3.0 * u.powi(3) + 12.0 * u * u - 12.0 * u + 4.0) / 6.0,
            (-9.0 * u * u + 24.0 * u - 12.0) / 6.0,
        )
    } else if u < 3.0 {
        (
            (3.0 * u.powi(3) - 24.0 * u * u + 60.0 * u - 44.0) / 6.0,
            (9.0 * u * u - 48.0 * u + 60.0) / 6.0,
        )
    } else {
        ((4.0 - u).powi(3) / 6.0, -(4.0 - u).powi(2) / 2.0)
    }
}

fn bspline_at(z: f64, lo: f64, h: f64, j: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; j];
    let mut d = vec![0.0; j];
    for (i, (vi, di)) in v.iter_mut().zip(d.iter_mut()).enumerate() {
        let knot = lo + (i as f64 - 3.0) * h;
        let (a, b) = cardinal((z - knot) / h);
        *vi = a;
        *di = b / h;
    }
    (v, d)
}

/// Uncentered cubic B-spline values at `z` for `j` functions on `[lo, hi]`,
/// extended linearly outside the range.
pub fn bspline_basis(z: f64, lo: f64, hi: f64, j: usize) -> Vec<f64> {
    let h = (hi - lo) / (j as f64 - 3.0);
    let edge = if z < lo {
        lo
    } else if z > hi {
        hi
    } else {
        return bspline_at(z, lo, h, j).0;
    };
    let (v, d) = bspline_at(edge, lo, h, j);
    v.iter().zip(&d).map(|(v, d)| v + d * (z - edge)).collect()
}

/// Centered B-spline columns for a smooth argument, with the column means.
pub fn bspline_columns(z: &[f64], spec: &SmoothSpec) -> Result<(Array2<f64>, Vec<f64>)> {
    let (lo, hi) = spec.range;
    let j = spec.splines;
    if j < 4 {
        return Err(Error::pre(format!("a smooth needs at least 4 splines, got {j}")));
    }
    if !(hi > lo) {
        return Err(Error::DegenerateSmooth);
    }
    let n = z.len();
    let mut b = Array2::zeros((n, j));
    for (i, &zi) in z.iter().enumerate() {
        for (c, v) in bspline_basis(zi, lo, hi, j).into_iter().enumerate() {
            b[[i, c]] = v;
        }
    }
    let means: Vec<f64> = (0..j).map(|c| b.column(c).sum() / n as f64).collect();
    for (c, m) in means.iter().enumerate() {
        b.column_mut(c).mapv_inplace(|v| v - m);
    }
    Ok((b, means))
}

/// Second-difference operator `D₂`, `(J−2) × J`.
pub fn second_difference(j: usize) -> Array2<f64> {
    let mut d = Array2::zeros((j.saturating_sub(2), j));
    for r in 0..j.saturating_sub(2) {
        d[[r, r]] = 1.0;
        d[[r, r + 1]] = -2.0;
        d[[r, r + 2]] = 1.0;
    }
    d
}

struct Assembled {
    z: Array2<f64>,
    penalty: Array2<f64>,
    specs: Vec<SmoothSpec>,
    means: Vec<Vec<f64>>,
}

fn assemble(set: &FittingSet, terms: &[BasisTerm], lambdas: &[f64], j: usize) -> Result<Assembled> {
    if lambdas.len() != terms.len() {
        return Err(Error::DimensionMismatch {
            expected: terms.len(),
            got: lambdas.len(),
        });
    }
    if let Some(l) = lambdas.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
        return Err(Error::pre(format!("smoothing parameters must be non-negative, got {l}")));
    }
    let n = set.len();
    let cols = 1 + terms.len() * (j - 1);
    let mut z = Array2::zeros((n, cols));
    z.column_mut(0).fill(1.0);
    let mut penalty = Array2::zeros((terms.len() * (j - 2), cols));
    let d2 = second_difference(j);
    let mut specs = Vec::with_capacity(terms.len());
    let mut means = Vec::with_capacity(terms.len());
    for (k, (term, &lambda)) in terms.iter().zip(lambdas).enumerate() {
        let arg: Vec<f64> = set.scenarios().outer_iter().map(|r| term.eval(&r.to_vec())).collect();
        let lo = arg.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = arg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let spec = SmoothSpec {
            term: term.clone(),
            splines: j,
            range: (lo, hi),
            lambda,
        };
        let (b, m) = bspline_columns(&arg, &spec)?;
        let c0 = 1 + k * (j - 1);
        z.slice_mut(s![.., c0..c0 + j - 1]).assign(&b.slice(s![.., ..j - 1]));
        let r0 = k * (j - 2);
        penalty
            .slice_mut(s![r0..r0 + j - 2, c0..c0 + j - 1])
            .assign(&(d2.slice(s![.., ..j - 1]).to_owned() * lambda.sqrt()));
        specs.push(spec);
        means.push(m);
    }
    Ok(Assembled { z, penalty, specs, means })
}

/// Penalized IRLS fit with fixed smoothing parameters (one per term).
pub fn fit_gam(set: &FittingSet, terms: &[BasisTerm], lambdas: &[f64], settings: &GamSettings) -> Result<GamFit> {
    fit_gam_impl(set, terms, lambdas, settings).map(|(fit, _)| fit)
}

fn fit_gam_impl(
    set: &FittingSet,
    terms: &[BasisTerm],
    lambdas: &[f64],
    settings: &GamSettings,
) -> Result<(GamFit, Vec<f64>)> {
    let j = settings.splines_per_smooth;
    if j < 4 {
        return Err(Error::pre(format!("a smooth needs at least 4 splines, got {j}")));
    }
    check_pairing(settings.family, settings.link)?;
    if let Some(t) = terms.iter().find(|t| t.is_intercept()) {
        return Err(Error::pre(format!("the intercept `{t}` cannot be a smooth argument")));
    }
    let a = assemble(set, terms, lambdas, j)?;
    let out = IrlsProblem {
        z: a.z.view(),
        y: set.responses(),
        family: settings.family,
        link: settings.link,
        penalty: (!terms.is_empty()).then(|| a.penalty.view()),
        options: settings.irls,
        init_mu: None,
    }
    .run()?;
    if !out.converged {
        log::warn!("PIRLS did not converge in {} iterations", out.iterations);
    }
    let df = penalized_df(&a.z, &a.penalty, &out.weights)?;
    let n = set.len();
    let y = set.responses();
    let phi = settings.family.likelihood_dispersion(out.deviance, n);
    let smooths = a
        .specs
        .into_iter()
        .zip(a.means)
        .enumerate()
        .map(|(k, (spec, means))| {
            let c0 = 1 + k * (j - 1);
            let mut coefficients = out.beta[c0..c0 + j - 1].to_vec();
            coefficients.push(0.0);
            FittedSmooth { spec, coefficients, means }
        })
        .collect();
    let fit = GamFit {
        intercept: out.beta[0],
        smooths,
        family: settings.family,
        link: settings.link,
        dispersion: pearson_dispersion(settings.family, y, &out.mu, n as f64 - df),
        effective_df: df,
        deviance: out.deviance,
        log_likelihood: settings.family.log_likelihood(y, &out.mu, phi),
        iterations: out.iterations,
        converged: out.converged,
        n,
        dim: set.dim(),
    };
    Ok((fit, out.beta))
}

/// `tr((ZᵀWZ + S)⁻¹ ZᵀWZ) = ‖√W Z R⁻¹‖_F²` where `R` factors the augmented system.
fn penalized_df(z: &Array2<f64>, penalty: &Array2<f64>, weights: &[f64]) -> Result<f64> {
    let n = z.nrows();
    let zeros = ndarray::Array1::zeros(n);
    let (zs, _) = scale_rows(z.view(), zeros.view(), ArrayView1::from(weights))?;
    let r = zs.nrows();
    let mut aug = Array2::zeros((r + penalty.nrows(), z.ncols()));
    aug.slice_mut(s![..r, ..]).assign(&zs);
    aug.slice_mut(s![r.., ..]).assign(penalty);
    let qr = HouseholderQr::factor(aug.view())?;
    Ok(zs
        .outer_iter()
        .map(|row| qr.solve_rt(&row.to_vec()).iter().map(|v| v * v).sum::<f64>())
        .sum())
}

pub fn effective_df(fit: &GamFit) -> f64 {
    fit.effective_df
}

/// `N D / (N − df)²`.
pub fn gcv_gam(fit: &GamFit) -> Result<f64> {
    gcv(fit.n, fit.deviance, fit.effective_df)
}

pub(crate) fn gcv(n: usize, deviance: f64, df: f64) -> Result<f64> {
    let n = n as f64;
    if df >= n {
        return Err(Error::pre(format!("GCV needs df < N, got df={df}, N={n}")));
    }
    Ok(n * deviance / (n - df).powi(2))
}

/// `−2 l + 2 (df + p)`.
pub fn aic_gam(fit: &GamFit) -> f64 {
    -2.0 * fit.log_likelihood + 2.0 * (fit.effective_df + fit.family.extra_params() as f64)
}

impl GamFit {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.intercept + self.smooths.iter().map(|s| s.eval(x)).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.link.inverse(self.linear_predictor(x))
    }

    pub fn criterion(&self, c: GamCriterion) -> Result<f64> {
        match c {
            GamCriterion::Gcv => gcv_gam(self),
            GamCriterion::Aic => Ok(aic_gam(self)),
        }
    }

    pub fn terms(&self) -> Vec<BasisTerm> {
        self.smooths.iter().map(|s| s.spec.term.clone()).collect()
    }
}

/// Smoothing-parameter search: a shared-λ grid scan followed by one
/// coordinate-wise pass per smooth. Ties keep the larger λ.
pub fn select_lambda(
    set: &FittingSet,
    terms: &[BasisTerm],
    settings: &GamSettings,
    grid: &[f64],
    criterion: GamCriterion,
) -> Result<Vec<f64>> {
    select_lambda_fit(set, terms, settings, grid, criterion).map(|(l, _)| l)
}

/// As [`select_lambda`], also returning the fit at the selected values.
pub fn select_lambda_fit(
    set: &FittingSet,
    terms: &[BasisTerm],
    settings: &GamSettings,
    grid: &[f64],
    criterion: GamCriterion,
) -> Result<(Vec<f64>, GamFit)> {
    if grid.is_empty() {
        return Err(Error::pre("empty λ grid"));
    }
    let mut desc = grid.to_vec();
    desc.sort_by(|a, b| b.total_cmp(a));
    let k = terms.len();
    // criteria that agree to rounding (e.g. exact fits) count as ties
    let mean_sq = set.responses().iter().map(|v| v * v).sum::<f64>() / set.len() as f64;
    let better = |c: f64, best: f64| c < best - 1e-9 * (best.abs() + 1e-6 * mean_sq);
    let score = |l: &[f64]| -> Option<(f64, GamFit)> {
        let fit = fit_gam(set, terms, l, settings).ok()?;
        let c = fit.criterion(criterion).ok()?;
        c.is_finite().then_some((c, fit))
    };
    let pick = |cands: Vec<Vec<f64>>| -> Option<(Vec<f64>, f64, GamFit)> {
        let scored: Vec<_> = cands.into_par_iter().map(|l| score(&l).map(|s| (l, s))).collect();
        let mut best: Option<(Vec<f64>, f64, GamFit)> = None;
        for (l, (c, fit)) in scored.into_iter().flatten() {
            if best.as_ref().is_none_or(|b| better(c, b.1)) {
                best = Some((l, c, fit));
            }
        }
        best
    };
    let (mut lambdas, mut value, mut fit) = pick(desc.iter().map(|&l| vec![l; k]).collect())
        .ok_or_else(|| Error::NoCandidate("no λ on the grid produced a finite criterion".into()))?;
    if desc.len() > 1 {
        for s in 0..k {
            let cands = desc
                .iter()
                .map(|&l| {
                    let mut v = lambdas.clone();
                    v[s] = l;
                    v
                })
                .collect();
            if let Some((l, c, f)) = pick(cands) {
                if better(c, value) {
                    lambdas = l;
                    value = c;
                    fit = f;
                }
            }
        }
    }
    Ok((lambdas, fit))
}
