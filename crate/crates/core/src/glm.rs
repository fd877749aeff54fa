//! Exponential-family generalized linear models fitted by IRLS.
//!
//! The working response is `s = η + (y − μ) g′(μ)` and the working weight
//! `w = g′(μ)⁻² V(μ)⁻¹`; each round solves a weighted least-squares problem
//! through QR. The same core drives penalized fits (GAM) by appending
//! penalty rows beneath the weighted design.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use statrs::function::gamma::ln_gamma;

use crate::basis::{basis_row, design_matrix, BasisTerm};
use crate::data::FittingSet;
use crate::error::{Error, Result};
use crate::linalg::{scale_rows, solve_ls};
use crate::ols::dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Gaussian,
    Gamma,
    InverseGaussian,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Link {
    Identity,
    Log,
    Inverse,
    InverseSquare,
    Sqrt,
}

impl Family {
    pub fn variance(self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::Gamma => mu * mu,
            Family::InverseGaussian => mu * mu * mu,
            Family::Poisson => mu,
        }
    }

    pub fn valid_mu(self, mu: f64) -> bool {
        match self {
            Family::Gaussian => mu.is_finite(),
            _ => mu.is_finite() && mu > 0.0,
        }
    }

    pub fn valid_y(self, y: f64) -> bool {
        match self {
            Family::Gaussian => true,
            Family::Gamma | Family::InverseGaussian => y > 0.0,
            Family::Poisson => y >= 0.0,
        }
    }

    /// Dispersion fixed at 1 (Poisson) rather than estimated.
    pub fn dispersion_known(self) -> bool {
        matches!(self, Family::Poisson)
    }

    /// Number of extra likelihood parameters counted by AIC.
    pub fn extra_params(self) -> usize {
        if self.dispersion_known() {
            0
        } else {
            1
        }
    }

    pub fn unit_deviance(self, y: f64, mu: f64) -> f64 {
        match self {
            Family::Gaussian => (y - mu).powi(2),
            Family::Gamma => 2.0 * (-(y / mu).ln() + (y - mu) / mu),
            Family::InverseGaussian => (y - mu).powi(2) / (mu * mu * y),
            Family::Poisson => {
                let ylog = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
                2.0 * (ylog - (y - mu))
            }
        }
    }

    pub fn deviance(self, y: ArrayView1<f64>, mu: &[f64]) -> f64 {
        y.iter().zip(mu).map(|(&y, &m)| self.unit_deviance(y, m)).sum()
    }

    /// Full log-likelihood including the normalizer `c(y, φ)`.
    pub fn log_likelihood(self, y: ArrayView1<f64>, mu: &[f64], phi: f64) -> f64 {
        y.iter()
            .zip(mu)
            .map(|(&y, &m)| match self {
                Family::Gaussian => -0.5 * (2.0 * PI * phi).ln() - (y - m).powi(2) / (2.0 * phi),
                Family::Gamma => {
                    let nu = 1.0 / phi;
                    (nu - 1.0) * y.ln() - y * nu / m - ln_gamma(nu) + nu * nu.ln() - nu * m.ln()
                }
                Family::InverseGaussian => {
                    -0.5 * (2.0 * PI * phi * y.powi(3)).ln() - (y - m).powi(2) / (2.0 * phi * m * m * y)
                }
                Family::Poisson => y * m.ln() - m - ln_gamma(y + 1.0),
            })
            .sum()
    }

    /// Dispersion plugged into the likelihood for AIC: the ML-style
    /// `deviance / N`, or 1 when the dispersion is known.
    pub fn likelihood_dispersion(self, deviance: f64, n: usize) -> f64 {
        if self.dispersion_known() {
            1.0
        } else {
            deviance / n as f64
        }
    }
}

impl Link {
    pub fn link(self, mu: f64) -> f64 {
        match self {
            Link::Identity => mu,
            Link::Log => mu.ln(),
            Link::Inverse => 1.0 / mu,
            Link::InverseSquare => 1.0 / (mu * mu),
            Link::Sqrt => mu.sqrt(),
        }
    }

    /// `dη/dμ`.
    pub fn derivative(self, mu: f64) -> f64 {
        match self {
            Link::Identity => 1.0,
            Link::Log => 1.0 / mu,
            Link::Inverse => -1.0 / (mu * mu),
            Link::InverseSquare => -2.0 / (mu * mu * mu),
            Link::Sqrt => 0.5 / mu.sqrt(),
        }
    }

    /// `g⁻¹(η)`; errors when `η` lies outside the range of the link.
    pub fn inverse(self, eta: f64) -> Result<f64> {
        let mu = match self {
            Link::Identity => eta,
            Link::Log => eta.exp(),
            Link::Inverse if eta != 0.0 => 1.0 / eta,
            Link::InverseSquare if eta > 0.0 => 1.0 / eta.sqrt(),
            Link::Sqrt if eta >= 0.0 => eta * eta,
            _ => return Err(Error::Domain(format!("linear predictor {eta} outside the {self} link range"))),
        };
        if mu.is_finite() {
            Ok(mu)
        } else {
            Err(Error::Domain(format!("g⁻¹({eta}) is not finite")))
        }
    }

    pub fn is_canonical_for(self, family: Family) -> bool {
        matches!(
            (family, self),
            (Family::Gaussian, Link::Identity)
                | (Family::Poisson, Link::Log)
                | (Family::Gamma, Link::Inverse)
                | (Family::InverseGaussian, Link::InverseSquare)
        )
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Gaussian => "gaussian",
            Family::Gamma => "gamma",
            Family::InverseGaussian => "invgauss",
            Family::Poisson => "poisson",
        })
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Link::Identity => "identity",
            Link::Log => "log",
            Link::Inverse => "inverse",
            Link::InverseSquare => "invsquare",
            Link::Sqrt => "sqrt",
        })
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "gaussian" => Family::Gaussian,
            "gamma" => Family::Gamma,
            "invgauss" | "inverse_gaussian" => Family::InverseGaussian,
            "poisson" => Family::Poisson,
            other => return Err(Error::pre(format!("unknown family `{other}`"))),
        })
    }
}

impl FromStr for Link {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "identity" => Link::Identity,
            "log" => Link::Log,
            "inverse" => Link::Inverse,
            "invsquare" | "inverse_square" => Link::InverseSquare,
            "sqrt" => Link::Sqrt,
            other => return Err(Error::pre(format!("unknown link `{other}`"))),
        })
    }
}

/// Rejects family/link pairings outside the supported set.
pub fn check_pairing(family: Family, link: Link) -> Result<()> {
    if link == Link::InverseSquare && family != Family::InverseGaussian {
        return Err(Error::pre("the invsquare link is only paired with the invgauss family"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 50 }
    }
}

/// Raw IRLS/PIRLS result on a prepared design.
#[derive(Debug, Clone)]
pub(crate) struct IrlsOutcome {
    pub beta: Vec<f64>,
    pub mu: Vec<f64>,
    /// Working weights at the final `μ̂`.
    pub weights: Vec<f64>,
    pub deviance: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) struct IrlsProblem<'a> {
    pub z: ArrayView2<'a, f64>,
    pub y: ArrayView1<'a, f64>,
    pub family: Family,
    pub link: Link,
    /// Square-root penalty rows `P` with `PᵀP = S`, one column per coefficient.
    pub penalty: Option<ArrayView2<'a, f64>>,
    pub options: IrlsOptions,
    pub init_mu: Option<&'a [f64]>,
}

const MAX_HALVINGS: usize = 10;

impl IrlsProblem<'_> {
    fn penalty_value(&self, beta: &[f64]) -> f64 {
        match self.penalty {
            None => 0.0,
            Some(p) => p.outer_iter().map(|row| dot(row.as_slice().unwrap_or(&row.to_vec()), beta).powi(2)).sum(),
        }
    }

    fn eval(&self, beta: &[f64]) -> Option<(Vec<f64>, Vec<f64>, f64)> {
        let eta: Vec<f64> = self.z.outer_iter().map(|r| r.iter().zip(beta).map(|(a, b)| a * b).sum()).collect();
        let mut mu = Vec::with_capacity(eta.len());
        for &e in &eta {
            let m = self.link.inverse(e).ok()?;
            if !self.family.valid_mu(m) {
                return None;
            }
            mu.push(m);
        }
        let dev = self.family.deviance(self.y, &mu);
        dev.is_finite().then_some((eta, mu, dev))
    }

    pub fn run(&self) -> Result<IrlsOutcome> {
        let (n, p) = self.z.dim();
        if let Some(bad) = self.y.iter().find(|v| !self.family.valid_y(**v)) {
            return Err(Error::Domain(format!("response {bad} outside the {} support", self.family)));
        }
        let mut mu: Vec<f64> = match self.init_mu {
            Some(m) => m.to_vec(),
            None => self.y.iter().map(|v| v + 0.1).collect(),
        };
        let mut eta: Vec<f64> = mu.iter().map(|&m| self.link.link(m)).collect();
        if mu.iter().any(|&m| !self.family.valid_mu(m)) || eta.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFiniteIterate("initial mean outside the family/link domain".into()));
        }
        let mut dev_old = self.family.deviance(self.y, &mu);
        let mut beta_old: Option<Vec<f64>> = None;
        let mut converged = false;
        let mut iterations = 0;
        let mut weights = vec![0.0; n];
        let mut deviance = dev_old;

        for it in 1..=self.options.max_iter {
            iterations = it;
            let mut s = Array1::zeros(n);
            let mut w = Array1::zeros(n);
            for i in 0..n {
                let gp = self.link.derivative(mu[i]);
                s[i] = eta[i] + (self.y[i] - mu[i]) * gp;
                w[i] = 1.0 / (gp * gp * self.family.variance(mu[i]));
            }
            if s.iter().chain(w.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteIterate("working response or weight".into()));
            }
            let mut beta = self.solve_weighted(&s, &w)?;
            let mut evaluated = self.eval(&beta);
            let mut halvings = 0;
            while evaluated.is_none() {
                let Some(prev) = &beta_old else {
                    return Err(Error::NonFiniteIterate("first IRLS step left the domain".into()));
                };
                if halvings == MAX_HALVINGS {
                    return Err(Error::NonFiniteIterate("step halving failed to restore a valid iterate".into()));
                }
                halvings += 1;
                for (b, o) in beta.iter_mut().zip(prev) {
                    *b = 0.5 * (*b + o);
                }
                evaluated = self.eval(&beta);
            }
            let (eta_new, mu_new, dev) = evaluated.unwrap();
            let pen_dev = dev + self.penalty_value(&beta);
            let change = (pen_dev - dev_old).abs() / (pen_dev.abs() + 0.1);
            eta = eta_new;
            mu = mu_new;
            deviance = dev;
            dev_old = pen_dev;
            beta_old = Some(beta);
            // constant weights: the first weighted solve is already the optimum
            let exact = self.family == Family::Gaussian && self.link == Link::Identity;
            if change < self.options.tol || exact {
                converged = true;
                break;
            }
        }
        for i in 0..n {
            let gp = self.link.derivative(mu[i]);
            weights[i] = 1.0 / (gp * gp * self.family.variance(mu[i]));
        }
        let beta = beta_old.unwrap_or_else(|| vec![0.0; p]);
        Ok(IrlsOutcome {
            beta,
            mu,
            weights,
            deviance,
            iterations,
            converged,
        })
    }

    fn solve_weighted(&self, s: &Array1<f64>, w: &Array1<f64>) -> Result<Vec<f64>> {
        let (zs, ys) = scale_rows(self.z, s.view(), w.view())?;
        match self.penalty {
            None => Ok(solve_ls(zs.view(), ArrayView1::from(&ys))?.coefficients),
            Some(pen) => {
                let (r, p) = (zs.nrows(), zs.ncols());
                let mut a = Array2::zeros((r + pen.nrows(), p));
                a.slice_mut(ndarray::s![..r, ..]).assign(&zs);
                a.slice_mut(ndarray::s![r.., ..]).assign(&pen);
                let mut rhs = ys;
                rhs.extend(std::iter::repeat_n(0.0, pen.nrows()));
                Ok(solve_ls(a.view(), ArrayView1::from(&rhs))?.coefficients)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub terms: Vec<BasisTerm>,
    pub coefficients: Vec<f64>,
    pub family: Family,
    pub link: Link,
    /// Pearson χ² / (N − K); 1 for Poisson.
    pub dispersion: f64,
    pub deviance: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n: usize,
}

pub fn fit_glm(
    set: &FittingSet,
    terms: &[BasisTerm],
    family: Family,
    link: Link,
    options: IrlsOptions,
) -> Result<GlmFit> {
    fit_glm_from(set, terms, family, link, options, None)
}

/// As [`fit_glm`], optionally warm-started from a given mean vector.
pub(crate) fn fit_glm_from(
    set: &FittingSet,
    terms: &[BasisTerm],
    family: Family,
    link: Link,
    options: IrlsOptions,
    init_mu: Option<&[f64]>,
) -> Result<GlmFit> {
    check_pairing(family, link)?;
    let (n, k) = (set.len(), terms.len());
    if n <= k {
        return Err(Error::pre(format!("need N > K, got N={n}, K={k}")));
    }
    let z = design_matrix(terms, set.scenarios());
    let out = IrlsProblem {
        z: z.view(),
        y: set.responses(),
        family,
        link,
        penalty: None,
        options,
        init_mu,
    }
    .run()?;
    if !out.converged {
        log::warn!("IRLS did not converge in {} iterations", out.iterations);
    }
    Ok(assemble_fit(set, terms.to_vec(), family, link, out))
}

pub(crate) fn pearson_dispersion(family: Family, y: ArrayView1<f64>, mu: &[f64], dof: f64) -> f64 {
    if family.dispersion_known() {
        return 1.0;
    }
    let chi2: f64 = y
        .iter()
        .zip(mu)
        .map(|(&y, &m)| (y - m).powi(2) / family.variance(m))
        .sum();
    chi2 / dof
}

fn assemble_fit(set: &FittingSet, terms: Vec<BasisTerm>, family: Family, link: Link, out: IrlsOutcome) -> GlmFit {
    let n = set.len();
    let k = terms.len();
    let y = set.responses();
    let dispersion = pearson_dispersion(family, y, &out.mu, (n - k) as f64);
    let phi = family.likelihood_dispersion(out.deviance, n);
    GlmFit {
        terms,
        coefficients: out.beta,
        family,
        link,
        dispersion,
        deviance: out.deviance,
        log_likelihood: family.log_likelihood(y, &out.mu, phi),
        iterations: out.iterations,
        converged: out.converged,
        n,
    }
}

/// `(y − μ̂) / √V(μ̂)` over the fitting set.
pub fn pearson_residuals(fit: &GlmFit, set: &FittingSet) -> Result<Vec<f64>> {
    (0..set.len())
        .map(|i| {
            let mu = fit.predict(&set.scenario(i))?;
            Ok((set.responses()[i] - mu) / fit.family.variance(mu).sqrt())
        })
        .collect()
}

/// `−2 l(β̂, φ) + 2 (K + p)`.
pub fn aic_glm(fit: &GlmFit) -> f64 {
    -2.0 * fit.log_likelihood + 2.0 * (fit.coefficients.len() + fit.family.extra_params()) as f64
}

impl GlmFit {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        dot(&self.coefficients, &basis_row(&self.terms, x))
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.link.inverse(self.linear_predictor(x))
    }

    pub fn aic(&self) -> f64 {
        aic_glm(self)
    }
}
