//! Synthetic stand-in for a cash-flow-projection model: a polynomial with a
//! soft-plus kink as ground truth, and heteroscedastic normal inner
//! simulations averaged per outer scenario.
//!
//! Each inner simulation draws `σ(x)·W + h·σ(x)·Z` with `σ²(x) = exp(γᵀv(x))`
//! and `v(x) = (1, x₁, …, x_D)`. Under antithetic pairing consecutive draws
//! share `Z` with opposite signs, so the `Z` part cancels in the mean and
//! `Var(y − f*) = σ²(x)/n`; without pairing it adds `h²σ²(x)/n`.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::basis::{is_downward_closed, BasisTerm};
use crate::data::{BasePoint, FittingSet, ValidationPoint, ValidationSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub terms: Vec<BasisTerm>,
    pub beta: Vec<f64>,
    /// Weight `a ≥ 0` of the kink `a·softplus(−ℓ(x))`.
    pub asymmetry: f64,
    /// `ℓ(x) = kink[0] + Σ_d kink[d+1]·x_d`.
    pub kink: Vec<f64>,
    /// Log-variance coefficients over `(1, x₁, …, x_D)`.
    pub gamma: Vec<f64>,
    /// Scale `h` of the antithetic noise component.
    pub antithetic_scale: f64,
    pub antithetic: bool,
    /// Asset values are `asset_level·(1 + asset_tilt·mean(x))`.
    pub asset_level: f64,
    pub asset_tilt: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// A quadratic-plus-interaction truth in `dim` risk factors with a kink
    /// in `x₁` and noise variance growing in `x₁`.
    pub fn example(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::pre("dimension must be positive"));
        }
        let mut terms = vec![BasisTerm::intercept(dim)];
        let mut beta = vec![100.0];
        for d in 0..dim {
            terms.push(BasisTerm::linear(dim, d));
            beta.push(10.0 / (d + 1) as f64);
        }
        let mut sq = vec![0; dim];
        sq[0] = 2;
        terms.push(BasisTerm::new(sq));
        beta.push(4.0);
        if dim > 1 {
            let mut inter = vec![0; dim];
            inter[0] = 1;
            inter[1] = 1;
            terms.push(BasisTerm::new(inter));
            beta.push(-3.0);
        }
        let mut kink = vec![0.0; dim + 1];
        kink[1] = 3.0;
        let mut gamma = vec![0.0; dim + 1];
        gamma[0] = 2.0f64.ln() * 2.0;
        gamma[1] = 2.0;
        let spec = Self {
            dim,
            terms,
            beta,
            asymmetry: 2.0,
            kink,
            gamma,
            antithetic_scale: 1.0,
            antithetic: true,
            asset_level: 1000.0,
            asset_tilt: 0.05,
            seed,
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::pre("dimension must be positive"));
        }
        if self.terms.len() != self.beta.len() {
            return Err(Error::DimensionMismatch { expected: self.terms.len(), got: self.beta.len() });
        }
        if let Some(t) = self.terms.iter().find(|t| t.dim() != self.dim) {
            return Err(Error::pre(format!("term {t} has the wrong dimension")));
        }
        if !is_downward_closed(&self.terms) {
            return Err(Error::pre("true term set must be downward closed"));
        }
        if self.kink.len() != self.dim + 1 || self.gamma.len() != self.dim + 1 {
            return Err(Error::pre(format!("kink and gamma need {} coefficients", self.dim + 1)));
        }
        if !(self.asymmetry >= 0.0) || !(self.antithetic_scale >= 0.0) {
            return Err(Error::pre("asymmetry and antithetic scale must be non-negative"));
        }
        // exp(γᵀv) must be finite on the whole cube
        let worst = self.gamma[0] + self.gamma[1..].iter().map(|g| g.abs()).sum::<f64>();
        if !worst.exp().is_finite() {
            return Err(Error::pre("noise variance overflows on [-1,1]^D"));
        }
        Ok(())
    }

    fn linear(&self, c: &[f64], x: &[f64]) -> f64 {
        c[0] + c[1..].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Inner-simulation noise variance `exp(γᵀv(x))`.
    pub fn noise_variance(&self, x: &[f64]) -> f64 {
        self.linear(&self.gamma, x).exp()
    }

    fn asset(&self, x: &[f64]) -> f64 {
        self.asset_level * (1.0 + self.asset_tilt * x.iter().sum::<f64>() / self.dim as f64)
    }
}

fn softplus(u: f64) -> f64 {
    // log(1 + e^u) without overflow
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

/// Ground truth `f*(x) = Σ β_t t(x) + a·softplus(−ℓ(x))`.
pub fn true_value(spec: &SyntheticSpec, x: &[f64]) -> f64 {
    let poly: f64 = spec.terms.iter().zip(&spec.beta).map(|(t, b)| b * t.eval(x)).sum();
    poly + spec.asymmetry * softplus(-spec.linear(&spec.kink, x))
}

/// Mean inner-simulation noise at one scenario.
fn mean_noise(spec: &SyntheticSpec, x: &[f64], n: usize, rng: &mut ChaCha8Rng) -> f64 {
    let sigma = spec.noise_variance(x).sqrt();
    let h = spec.antithetic_scale * sigma;
    let mut sum = 0.0;
    let mut z = 0.0;
    for j in 0..n {
        let w: f64 = rng.sample(StandardNormal);
        if !spec.antithetic || j % 2 == 0 {
            z = rng.sample(StandardNormal);
        } else {
            z = -z;
        }
        // an unpaired last draw counts as a half-weight pair, so its z cancels
        let paired = !spec.antithetic || j % 2 == 1 || j + 1 < n;
        sum += sigma * w + if paired { h * z } else { 0.0 };
    }
    sum / n as f64
}

fn check_inputs(spec: &SyntheticSpec, scenarios: &[Vec<f64>], inner_sims: usize) -> Result<()> {
    spec.check()?;
    if inner_sims == 0 {
        return Err(Error::pre("need at least one inner simulation"));
    }
    if let Some(s) = scenarios.iter().find(|s| s.len() != spec.dim) {
        return Err(Error::DimensionMismatch { expected: spec.dim, got: s.len() });
    }
    Ok(())
}

/// Fitting values: truth plus the mean of `inner_sims` noisy simulations.
pub fn make_fitting_set(spec: &SyntheticSpec, scenarios: &[Vec<f64>], inner_sims: usize) -> Result<FittingSet> {
    check_inputs(spec, scenarios, inner_sims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = scenarios.len();
    let x = Array2::from_shape_fn((n, spec.dim), |(i, d)| scenarios[i][d]);
    let y: Array1<f64> = scenarios
        .iter()
        .map(|s| true_value(spec, s) + mean_noise(spec, s, inner_sims, &mut rng))
        .collect();
    FittingSet::new(x, y)
}

/// Validation values with asset values and, optionally, the all-zero base
/// scenario (simulated with the same inner count).
pub fn make_validation_set(
    spec: &SyntheticSpec,
    scenarios: &[Vec<f64>],
    inner_sims: usize,
    with_base: bool,
) -> Result<ValidationSet> {
    check_inputs(spec, scenarios, inner_sims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let points = scenarios
        .iter()
        .map(|s| ValidationPoint {
            scenario: s.clone(),
            y: true_value(spec, s) + mean_noise(spec, s, inner_sims, &mut rng),
            asset: Some(spec.asset(s)),
        })
        .collect();
    let base = with_base.then(|| {
        let x0 = vec![0.0; spec.dim];
        let y = true_value(spec, &x0) + mean_noise(spec, &x0, inner_sims, &mut rng);
        BasePoint { scenario: x0, y }
    });
    ValidationSet::new(spec.dim, points, base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sobol::sobol_points;

    fn spec() -> SyntheticSpec {
        SyntheticSpec::example(2, 7).unwrap()
    }

    #[test]
    fn truth_by_hand() {
        let mut s = spec();
        s.beta.iter_mut().for_each(|b| *b = 0.0);
        s.asymmetry = 1.0;
        s.kink = vec![0.0, 1.0, 0.0];
        assert!((true_value(&s, &[0.0, 0.5]) - 2f64.ln()).abs() < 1e-15);
        s.asymmetry = 0.0;
        s.beta = vec![1.0, 0.0, 0.0, 2.0, 0.5];
        for x in [[0.3, -0.7], [1.0, 0.2]] {
            assert_eq!(true_value(&s, &x), true_value(&s, &[-x[0], -x[1]]));
        }
    }

    #[test]
    fn deterministic() {
        let pts = sobol_points(2, 50).unwrap();
        let a = make_fitting_set(&spec(), &pts, 2).unwrap();
        let b = make_fitting_set(&spec(), &pts, 2).unwrap();
        assert_eq!(a, b);
        let mut other = spec();
        other.seed = 8;
        assert_ne!(a, make_fitting_set(&other, &pts, 2).unwrap());
    }

    #[test]
    fn homoscedastic_variance() {
        let mut s = spec();
        s.gamma = vec![1.0, 0.0, 0.0];
        let pts = vec![vec![0.2, 0.1]; 20000];
        for n in [1, 2, 3, 4] {
            let set = make_fitting_set(&s, &pts, n).unwrap();
            let f = true_value(&s, &pts[0]);
            let e: Vec<f64> = set.responses().iter().map(|y| y - f).collect();
            let m = e.iter().sum::<f64>() / e.len() as f64;
            let v = e.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (e.len() - 1) as f64;
            let theory = 1f64.exp() / n as f64;
            assert!((v / theory - 1.0).abs() < 0.05, "n={n}: {v} vs {theory}");
        }
    }

    #[test]
    fn antithetic_beats_independent() {
        let pts = vec![vec![0.5, 0.0]; 10000];
        let var = |anti: bool| {
            let mut s = spec();
            s.antithetic = anti;
            let set = make_fitting_set(&s, &pts, 2).unwrap();
            let f = true_value(&s, &pts[0]);
            set.responses().iter().map(|y| (y - f).powi(2)).sum::<f64>() / pts.len() as f64
        };
        assert!(var(true) < var(false));
    }

    #[test]
    fn validation_base() {
        let pts = sobol_points(2, 10).unwrap();
        let v = make_validation_set(&spec(), &pts, 100, true).unwrap();
        assert_eq!(v.base().unwrap().scenario, vec![0.0, 0.0]);
        assert!(v.has_assets());
        assert!(make_validation_set(&spec(), &pts, 100, false).unwrap().base().is_none());
        assert!(make_fitting_set(&spec(), &pts, 0).is_err());
    }

    #[test]
    fn rejects_open_term_sets() {
        let mut s = spec();
        s.terms[1] = BasisTerm::new(vec![0, 3]);
        assert!(s.check().is_err());
    }
}
