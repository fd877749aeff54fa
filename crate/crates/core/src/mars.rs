//! Multivariate adaptive regression splines.
//!
//! The forward pass adds reflected hinge pairs `P·(x_d − t)₊, P·(t − x_d)₊`
//! from a candidate pool. After each step the pool gains the products of the
//! two hinges just selected with the single-factor pool on the other
//! dimensions. The backward pass deletes terms one at a time and keeps the
//! size with the smallest GCV.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;

use crate::data::FittingSet;
use crate::error::{Error, Result};
use crate::glm::{check_pairing, Family, IrlsOptions, IrlsProblem, Link};
use crate::linalg::{solve_ls, RANK_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Plus,
    Minus,
}

/// `max(x_d − t, 0)` or `max(t − x_d, 0)`; `dim` is zero-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hinge {
    pub dim: usize,
    pub knot: f64,
    pub sign: Sign,
}

impl Hinge {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let v = match self.sign {
            Sign::Plus => x[self.dim] - self.knot,
            Sign::Minus => self.knot - x[self.dim],
        };
        v.max(0.0)
    }

    fn key(&self) -> (usize, u64, Sign) {
        (self.dim, self.knot.to_bits(), self.sign)
    }
}

impl fmt::Display for Hinge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sign {
            Sign::Plus => write!(f, "h(x{}-{})", self.dim + 1, self.knot),
            Sign::Minus => write!(f, "h({}-x{})", self.knot, self.dim + 1),
        }
    }
}

/// A product of hinges on distinct dimensions; the empty product is the intercept.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HingeTerm {
    factors: Vec<Hinge>,
}

impl HingeTerm {
    pub fn intercept() -> Self {
        Self::default()
    }

    pub fn new(factors: Vec<Hinge>) -> Result<Self> {
        let mut dims: Vec<usize> = factors.iter().map(|h| h.dim).collect();
        dims.sort_unstable();
        if dims.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::pre("a hinge product cannot repeat a dimension"));
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[Hinge] {
        &self.factors
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn is_intercept(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn uses_dim(&self, d: usize) -> bool {
        self.factors.iter().any(|h| h.dim == d)
    }

    pub fn times(&self, h: Hinge) -> Result<Self> {
        let mut f = self.factors.clone();
        f.push(h);
        Self::new(f)
    }

    /// The term without its last factor.
    pub fn parent(&self) -> Option<HingeTerm> {
        (!self.factors.is_empty()).then(|| HingeTerm {
            factors: self.factors[..self.factors.len() - 1].to_vec(),
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.factors.iter().map(|h| h.eval(x)).product()
    }

    /// Order-independent identity of the product.
    pub fn key(&self) -> Vec<(usize, u64, Sign)> {
        let mut k: Vec<_> = self.factors.iter().map(Hinge::key).collect();
        k.sort();
        k
    }
}

impl fmt::Display for HingeTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return f.write_str("1");
        }
        for (i, h) in self.factors.iter().enumerate() {
            if i > 0 {
                f.write_str("*")?;
            }
            write!(f, "{h}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prune {
    None,
    Backward,
}

impl FromStr for Prune {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(Prune::None),
            "backward" => Ok(Prune::Backward),
            other => Err(Error::pre(format!("unknown pruning method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarsSettings {
    /// Maximum number of terms including the intercept.
    pub k_max: usize,
    pub t_min: f64,
    /// Maximum interaction order.
    pub degree: usize,
    pub prune: Prune,
    pub knot_cap: usize,
    /// GCV knot penalty `c`.
    pub penalty: f64,
    pub family: Family,
    pub link: Link,
}

impl Default for MarsSettings {
    fn default() -> Self {
        Self {
            k_max: 21,
            t_min: 1e-4,
            degree: 2,
            prune: Prune::Backward,
            knot_cap: 64,
            penalty: 0.0,
            family: Family::Gaussian,
            link: Link::Identity,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarsModel {
    /// Intercept first.
    pub terms: Vec<HingeTerm>,
    pub coefficients: Vec<f64>,
    pub family: Family,
    pub link: Link,
    /// RSS for gaussian-identity, otherwise the deviance.
    pub deviance: f64,
    pub n: usize,
    pub dim: usize,
}

impl MarsModel {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.terms.iter().zip(&self.coefficients).map(|(t, c)| c * t.eval(x)).sum()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.link.inverse(self.linear_predictor(x))
    }

    /// Distinct `(dim, knot)` pairs used by the model.
    pub fn knot_count(&self) -> usize {
        count_knots(&self.terms)
    }
}

fn count_knots(terms: &[HingeTerm]) -> usize {
    terms
        .iter()
        .flat_map(|t| t.factors.iter().map(|h| (h.dim, h.knot.to_bits())))
        .collect::<HashSet<_>>()
        .len()
}

/// Per-dimension knot values: all distinct stresses, thinned to `cap`
/// quantile-spaced values when there are more.
pub fn knot_pool(set: &FittingSet, cap: usize) -> Vec<Vec<f64>> {
    (0..set.dim())
        .map(|d| {
            let mut v: Vec<f64> = set.scenarios().column(d).to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            if cap >= 2 && v.len() > cap {
                let m = v.len() - 1;
                (0..cap).map(|i| v[(i * m + (cap - 1) / 2) / (cap - 1)]).collect()
            } else if cap == 1 && v.len() > 1 {
                vec![v[v.len() / 2]]
            } else {
                v
            }
        })
        .collect()
}

/// The single-factor pool `C₁`: both signs at every knot of every dimension.
pub fn initial_candidates(set: &FittingSet, knot_cap: usize) -> Vec<HingeTerm> {
    let mut out = Vec::new();
    for (d, knots) in knot_pool(set, knot_cap).into_iter().enumerate() {
        for t in knots {
            for sign in [Sign::Plus, Sign::Minus] {
                out.push(HingeTerm { factors: vec![Hinge { dim: d, knot: t, sign }] });
            }
        }
    }
    out
}

/// `N · RSS / (N − (K + cT))²`.
pub fn gcv_mars(rss: f64, n: usize, k: usize, knots: usize, c: f64) -> Result<f64> {
    crate::gam::gcv(n, rss, k as f64 + c * knots as f64)
}

#[derive(Debug, Clone, Copy)]
struct PoolPair {
    parent: usize,
    dim: usize,
    knot: f64,
}

/// Forward-pass outcome with bookkeeping for inspection.
#[derive(Debug, Clone)]
pub struct ForwardResult {
    pub model: MarsModel,
    /// Pool size in hinge functions before each iteration, plus the final size.
    pub pool_sizes: Vec<usize>,
    /// RSS (deviance) after the intercept fit and after every accepted pair.
    pub path: Vec<f64>,
}

struct Columns {
    n: usize,
    cols: Vec<Vec<f64>>,
}

impl Columns {
    fn matrix(&self, idx: &[usize], extra: &[&[f64]]) -> Array2<f64> {
        let k = idx.len() + extra.len();
        Array2::from_shape_fn((self.n, k), |(i, j)| {
            if j < idx.len() {
                self.cols[idx[j]][i]
            } else {
                extra[j - idx.len()][i]
            }
        })
    }
}

fn pair_columns(parent: &[f64], x: ArrayView1<f64>, knot: f64) -> (Vec<f64>, Vec<f64>) {
    let plus = parent.iter().zip(x).map(|(p, &v)| p * (v - knot).max(0.0)).collect();
    let minus = parent.iter().zip(x).map(|(p, &v)| p * (knot - v).max(0.0)).collect();
    (plus, minus)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthogonalizes `c` against `q` twice; `None` when `c` is numerically in their span.
fn orthogonalize(q: &[Vec<f64>], extra: Option<&[f64]>, c: &[f64]) -> Option<Vec<f64>> {
    let c0 = norm(c);
    if c0 == 0.0 {
        return None;
    }
    let mut u = c.to_vec();
    for _ in 0..2 {
        for qj in q.iter().map(Vec::as_slice).chain(extra) {
            let p = dotv(qj, &u);
            for (a, b) in u.iter_mut().zip(qj) {
                *a -= p * b;
            }
        }
    }
    let un = norm(&u);
    if un <= RANK_TOL * c0 * 1e2 {
        return None;
    }
    u.iter_mut().for_each(|a| *a /= un);
    Some(u)
}

struct Irls<'a> {
    y: ArrayView1<'a, f64>,
    family: Family,
    link: Link,
}

impl Irls<'_> {
    fn fit(&self, z: &Array2<f64>, init: Option<&[f64]>, max_iter: usize) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let out = IrlsProblem {
            z: z.view(),
            y: self.y,
            family: self.family,
            link: self.link,
            penalty: None,
            options: IrlsOptions { tol: 1e-8, max_iter },
            init_mu: init,
        }
        .run()?;
        Ok((out.beta, out.mu, out.deviance))
    }
}

fn is_gaussian(s: &MarsSettings) -> bool {
    s.family == Family::Gaussian && s.link == Link::Identity
}

pub fn forward_pass(set: &FittingSet, settings: &MarsSettings) -> Result<ForwardResult> {
    if settings.k_max < 3 {
        return Err(Error::pre("MARS needs k_max ≥ 3"));
    }
    if !(settings.t_min >= 0.0) {
        return Err(Error::pre("t_min must be non-negative"));
    }
    check_pairing(settings.family, settings.link)?;
    let n = set.len();
    let y = set.responses();
    let x = set.scenarios();
    let knots = knot_pool(set, settings.knot_cap);
    let mut pool: Vec<PoolPair> = Vec::new();
    let mut seen: HashSet<Vec<(usize, u64, Sign)>> = HashSet::new();
    for (d, ks) in knots.iter().enumerate() {
        for &t in ks {
            pool.push(PoolPair { parent: 0, dim: d, knot: t });
        }
    }
    let mut terms = vec![HingeTerm::intercept()];
    let mut cols = Columns { n, cols: vec![vec![1.0; n]] };
    let gaussian = is_gaussian(settings);
    let irls = Irls { y, family: settings.family, link: settings.link };
    let ysq: f64 = y.iter().map(|v| v * v).sum();

    // gaussian state: orthonormal basis and residual
    let mut q: Vec<Vec<f64>> = vec![vec![1.0 / (n as f64).sqrt(); n]];
    let ybar = y.sum() / n as f64;
    let mut resid: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    // generalized state
    let mut mu: Vec<f64> = Vec::new();
    let mut dev = if gaussian {
        dotv(&resid, &resid)
    } else {
        let (_, m, d) = irls.fit(&cols.matrix(&[0], &[]), None, 50)?;
        mu = m;
        d
    };
    let mut path = vec![dev];
    let mut pool_sizes = vec![2 * pool.len()];

    while terms.len() + 2 <= settings.k_max && dev > 1e-24 * ysq {
        let active: Vec<usize> = (0..terms.len()).collect();
        let scores: Vec<Option<f64>> = pool
            .par_iter()
            .map(|p| {
                let (cp, cm) = pair_columns(&cols.cols[p.parent], x.column(p.dim), p.knot);
                if gaussian {
                    let q1 = orthogonalize(&q, None, &cp)?;
                    let q2 = orthogonalize(&q, Some(&q1), &cm)?;
                    let r1 = dotv(&q1, &resid);
                    let r2 = dotv(&q2, &resid);
                    Some(dev - r1 * r1 - r2 * r2)
                } else {
                    if norm(&cp) == 0.0 || norm(&cm) == 0.0 {
                        return None;
                    }
                    let z = cols.matrix(&active, &[&cp, &cm]);
                    irls.fit(&z, Some(&mu), 25).ok().map(|(_, _, d)| d)
                }
            })
            .collect();
        let mut best: Option<(usize, f64)> = None;
        for (i, s) in scores.iter().enumerate() {
            if let Some(s) = *s {
                if s.is_finite() && best.is_none_or(|b| s < b.1) {
                    best = Some((i, s));
                }
            }
        }
        let Some((bi, new_dev)) = best else { break };
        let gain = dev - new_dev;
        if !(gain > 0.0) || gain < settings.t_min * dev {
            break;
        }
        let p = pool.remove(bi);
        let (cp, cm) = pair_columns(&cols.cols[p.parent], x.column(p.dim), p.knot);
        if gaussian {
            let q1 = orthogonalize(&q, None, &cp).expect("selected column is independent");
            q.push(q1);
            let q2 = orthogonalize(&q, None, &cm).expect("selected column is independent");
            q.push(q2);
            for qj in &q[q.len() - 2..] {
                let r = dotv(qj, &resid);
                for (a, b) in resid.iter_mut().zip(qj) {
                    *a -= r * b;
                }
            }
            dev = dotv(&resid, &resid);
        } else {
            let z = cols.matrix(&active, &[&cp, &cm]);
            let (_, m, d) = irls.fit(&z, Some(&mu), 25)?;
            mu = m;
            dev = d;
        }
        let parent = terms[p.parent].clone();
        for (sign, c) in [(Sign::Plus, cp), (Sign::Minus, cm)] {
            let term = parent.times(Hinge { dim: p.dim, knot: p.knot, sign })?;
            seen.insert(term.key());
            terms.push(term);
            cols.cols.push(c);
        }
        for new in [terms.len() - 2, terms.len() - 1] {
            if terms[new].order() + 1 > settings.degree {
                continue;
            }
            for (d, ks) in knots.iter().enumerate() {
                if terms[new].uses_dim(d) {
                    continue;
                }
                for &t in ks {
                    let probe = terms[new].times(Hinge { dim: d, knot: t, sign: Sign::Plus })?;
                    if seen.insert(probe.key()) {
                        pool.push(PoolPair { parent: new, dim: d, knot: t });
                    }
                }
            }
        }
        path.push(dev);
        pool_sizes.push(2 * pool.len());
    }
    let idx: Vec<usize> = (0..terms.len()).collect();
    let z = cols.matrix(&idx, &[]);
    let (coefficients, deviance) = refit(&z, &irls, gaussian, if gaussian { None } else { Some(&mu) })?;
    Ok(ForwardResult {
        model: MarsModel {
            terms,
            coefficients,
            family: settings.family,
            link: settings.link,
            deviance,
            n,
            dim: set.dim(),
        },
        pool_sizes,
        path,
    })
}

fn refit(z: &Array2<f64>, irls: &Irls, gaussian: bool, init: Option<&[f64]>) -> Result<(Vec<f64>, f64)> {
    if gaussian {
        let s = solve_ls(z.view(), irls.y)?;
        Ok((s.coefficients, s.residual_sum_of_squares))
    } else {
        let (b, _, d) = irls.fit(z, init, 50)?;
        Ok((b, d))
    }
}

pub fn backward_pass(model: &MarsModel, set: &FittingSet, settings: &MarsSettings) -> Result<MarsModel> {
    if settings.prune == Prune::None {
        return Ok(model.clone());
    }
    let n = set.len();
    let gaussian = model.family == Family::Gaussian && model.link == Link::Identity;
    let irls = Irls { y: set.responses(), family: model.family, link: model.link };
    let cols = Columns {
        n,
        cols: model
            .terms
            .iter()
            .map(|t| set.scenarios().outer_iter().map(|r| t.eval(&r.to_vec())).collect())
            .collect(),
    };
    let score = |active: &[usize], dev: f64| {
        let terms: Vec<HingeTerm> = active.iter().map(|&i| model.terms[i].clone()).collect();
        gcv_mars(dev, n, active.len(), count_knots(&terms), settings.penalty).unwrap_or(f64::INFINITY)
    };
    let mut active: Vec<usize> = (0..model.terms.len()).collect();
    let mut best_set = active.clone();
    let mut best = score(&active, model.deviance);
    while active.len() > 1 {
        let trials: Vec<Option<f64>> = (1..active.len())
            .into_par_iter()
            .map(|j| {
                let mut sub = active.clone();
                sub.remove(j);
                refit(&cols.matrix(&sub, &[]), &irls, gaussian, None).ok().map(|(_, d)| d)
            })
            .collect();
        let mut pick: Option<(usize, f64)> = None;
        for (j, d) in trials.into_iter().enumerate() {
            if let Some(d) = d {
                if pick.is_none_or(|p| d < p.1) {
                    pick = Some((j + 1, d));
                }
            }
        }
        let Some((j, dev)) = pick else { break };
        active.remove(j);
        let g = score(&active, dev);
        if g < best {
            best = g;
            best_set = active.clone();
        }
    }
    let z = cols.matrix(&best_set, &[]);
    let (coefficients, deviance) = refit(&z, &irls, gaussian, None)?;
    Ok(MarsModel {
        terms: best_set.iter().map(|&i| model.terms[i].clone()).collect(),
        coefficients,
        family: model.family,
        link: model.link,
        deviance,
        n,
        dim: model.dim,
    })
}

/// Forward pass followed by the configured pruning.
pub fn fit_mars(set: &FittingSet, settings: &MarsSettings) -> Result<(MarsModel, ForwardResult)> {
    let fwd = forward_pass(set, settings)?;
    let model = backward_pass(&fwd.model, set, settings)?;
    Ok((model, fwd))
}

pub fn predict_mars(model: &MarsModel, x: &[f64]) -> Result<f64> {
    model.predict(x)
}

/// Raw column for a hinge term over the fitting set.
pub fn term_column(term: &HingeTerm, set: &FittingSet) -> Array1<f64> {
    set.scenarios().outer_iter().map(|r| term.eval(&r.to_vec())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn distinct(d: usize, n: usize, seed: u64) -> FittingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0f64..1.0));
        let y = Array1::from_shape_fn(n, |i| x.row(i).sum() + rng.random_range(-0.1..0.1));
        FittingSet::new(x, y).unwrap()
    }

    #[test]
    fn c1_sizes() {
        assert_eq!(initial_candidates(&distinct(2, 3, 1), 64).len(), 12);
        let set = FittingSet::new(array![[0.0], [0.0], [1.0]], array![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(initial_candidates(&set, 64).len(), 4);
    }

    #[test]
    fn pool_after_first_iteration() {
        for (d, n) in [(2, 3), (3, 10), (5, 50)] {
            let set = distinct(d, n, 7);
            let s = MarsSettings { k_max: 3, t_min: 0.0, prune: Prune::None, ..Default::default() };
            let f = forward_pass(&set, &s).unwrap();
            assert_eq!(f.pool_sizes[0], 2 * d * n);
            assert_eq!(f.pool_sizes[1], 2 * (d * n - 1) + 4 * (d - 1) * n, "D={d} N={n}");
        }
    }

    #[test]
    fn exact_hinge_recovery() {
        let xs: Vec<f64> = (0..21).map(|i| -1.0 + 0.1 * i as f64).collect();
        let x = Array2::from_shape_fn((21, 1), |(i, _)| xs[i]);
        let y = x.column(0).mapv(|v| (v - 0.3).max(0.0));
        let set = FittingSet::new(x, y).unwrap();
        let f = forward_pass(&set, &MarsSettings { t_min: 0.0, ..Default::default() }).unwrap();
        assert_eq!(f.model.terms.len(), 3);
        assert!((f.model.terms[1].factors()[0].knot - 0.3).abs() < 1e-12);
        assert!(f.model.deviance < 1e-20);
    }

    #[test]
    fn huge_t_min_keeps_intercept() {
        let set = distinct(2, 40, 3);
        let f = forward_pass(&set, &MarsSettings { t_min: 1e300, ..Default::default() }).unwrap();
        assert_eq!(f.model.terms, vec![HingeTerm::intercept()]);
    }

    #[test]
    fn forward_path_decreases_and_matches_refit() {
        let set = distinct(3, 120, 4);
        let s = MarsSettings { k_max: 11, t_min: 0.0, prune: Prune::None, knot_cap: 16, ..Default::default() };
        let f = forward_pass(&set, &s).unwrap();
        assert!(f.path.windows(2).all(|w| w[1] < w[0]));
        assert!((f.path.last().unwrap() - f.model.deviance).abs() < 1e-8 * f.path[0]);
        assert!(f.model.terms.iter().all(|t| t.order() <= 2));
    }

    #[test]
    fn gcv_values() {
        assert!((gcv_mars(50.0, 100, 5, 4, 3.0).unwrap() - 0.7257).abs() < 1e-4);
        assert_eq!(gcv_mars(50.0, 100, 5, 4, 0.0).unwrap(), crate::gam::gcv(100, 50.0, 5.0).unwrap());
        assert!(gcv_mars(50.0, 100, 100, 0, 0.0).is_err());
    }

    #[test]
    fn predict_hinges() {
        let m = MarsModel {
            terms: vec![HingeTerm::intercept(), HingeTerm::new(vec![Hinge { dim: 0, knot: 0.0, sign: Sign::Plus }]).unwrap()],
            coefficients: vec![0.0, 1.0],
            family: Family::Gaussian,
            link: Link::Identity,
            deviance: 0.0,
            n: 1,
            dim: 1,
        };
        assert_eq!(predict_mars(&m, &[2.0]).unwrap(), 2.0);
        assert_eq!(predict_mars(&m, &[-1.0]).unwrap(), 0.0);
    }

    #[test]
    fn repeated_dimension_rejected() {
        let h = Hinge { dim: 1, knot: 0.0, sign: Sign::Plus };
        assert!(HingeTerm::new(vec![h, h]).is_err());
    }

    #[test]
    fn prune_none_is_identity() {
        let set = distinct(2, 60, 5);
        let s = MarsSettings { prune: Prune::None, k_max: 7, ..Default::default() };
        let f = forward_pass(&set, &s).unwrap();
        assert_eq!(backward_pass(&f.model, &set, &s).unwrap(), f.model);
    }

    #[test]
    fn poisson_mars_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Array2::from_shape_fn((150, 2), |_| rng.random_range(-1.0f64..1.0));
        let y = Array1::from_shape_fn(150, |i| ((1.0 + (x[[i, 0]] - 0.2).max(0.0) * 2.0) * 3.0 + rng.random_range(0.0..2.0)).floor());
        let set = FittingSet::new(x, y).unwrap();
        let s = MarsSettings { family: Family::Poisson, link: Link::Log, k_max: 7, knot_cap: 10, ..Default::default() };
        let (m, f) = fit_mars(&set, &s).unwrap();
        assert!(f.path.windows(2).all(|w| w[1] < w[0]));
        assert!(m.predict(&[0.5, 0.0]).unwrap() > 0.0);
    }
}
