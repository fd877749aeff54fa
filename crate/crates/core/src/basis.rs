//! Monomial basis terms, restriction settings and the principle of marginality.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// A monomial `Π_d x_d^{r_d}` identified by its exponent tuple.
///
/// The all-zero tuple is the intercept. Ordering is lexicographic on the
/// exponent tuple, which is also the engine's tie-break order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BasisTerm(Vec<u32>);

impl BasisTerm {
    pub fn new(exponents: Vec<u32>) -> Self {
        BasisTerm(exponents)
    }

    pub fn intercept(dim: usize) -> Self {
        BasisTerm(vec![0; dim])
    }

    /// The linear monomial `x_d` (zero-based `d`).
    pub fn linear(dim: usize, d: usize) -> Self {
        let mut e = vec![0; dim];
        e[d] = 1;
        BasisTerm(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_intercept(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    /// Evaluate at a scenario; `0^0 = 1`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .filter(|(e, _)| **e > 0)
            .map(|(&e, &v)| v.powi(e as i32))
            .product()
    }

    /// Partial-derivative monomials: one per positive exponent, that exponent decremented.
    pub fn derivatives(&self) -> impl Iterator<Item = BasisTerm> + '_ {
        self.0.iter().enumerate().filter(|(_, e)| **e > 0).map(|(d, _)| {
            let mut e = self.0.clone();
            e[d] -= 1;
            BasisTerm(e)
        })
    }
}

impl fmt::Display for BasisTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_intercept() {
            return f.write_str("1");
        }
        let mut first = true;
        for (d, &e) in self.0.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                f.write_str("*")?;
            }
            first = false;
            if e == 1 {
                write!(f, "x{}", d + 1)?;
            } else {
                write!(f, "x{}^{}", d + 1, e)?;
            }
        }
        Ok(())
    }
}

/// Restriction setting `Kmax-d1d2d3`.
///
/// `d1` caps each single exponent, `d2` the total degree and `d3` the
/// exponents appearing in interaction terms. `k_max` counts all terms
/// including the intercept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Restrictions {
    pub k_max: usize,
    pub d1: u32,
    pub d2: u32,
    pub d3: u32,
}

impl Restrictions {
    pub fn new(k_max: usize, d1: u32, d2: u32, d3: u32) -> Result<Self> {
        if k_max == 0 {
            return Err(Error::pre("k_max must be positive"));
        }
        if !(d3 <= d1 && d1 <= d2) {
            return Err(Error::pre(format!(
                "restrictions need d3 ≤ d1 ≤ d2, got {d1}{d2}{d3}"
            )));
        }
        Ok(Self { k_max, d1, d2, d3 })
    }

    pub fn admits(&self, term: &BasisTerm) -> bool {
        admissible(term, self)
    }
}

impl FromStr for Restrictions {
    type Err = Error;

    /// Parses `"<Kmax>-<d1><d2><d3>"`, e.g. `150-443`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::pre(format!("restriction `{s}` is not of the form <Kmax>-<d1><d2><d3>"));
        let (k, d) = s.trim().split_once('-').ok_or_else(bad)?;
        let k_max: usize = k.parse().map_err(|_| bad())?;
        let digits: Vec<u32> = d.chars().map(|c| c.to_digit(10)).collect::<Option<_>>().ok_or_else(bad)?;
        if digits.len() != 3 {
            return Err(bad());
        }
        Restrictions::new(k_max, digits[0], digits[1], digits[2])
    }
}

impl fmt::Display for Restrictions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}{}{}", self.k_max, self.d1, self.d2, self.d3)
    }
}

pub fn admissible(term: &BasisTerm, r: &Restrictions) -> bool {
    let e = term.exponents();
    let max = e.iter().copied().max().unwrap_or(0);
    let positive = e.iter().filter(|&&v| v > 0).count();
    max <= r.d1 && term.degree() <= r.d2 && (positive < 2 || e.iter().all(|&v| v <= r.d3))
}

/// Candidate terms under the principle of marginality: every admissible term
/// outside `current` whose partial-derivative monomials all lie in `current`.
/// Returned in lexicographic order, duplicate-free.
pub fn marginality_candidates(
    current: &BTreeSet<BasisTerm>,
    r: &Restrictions,
    dim: usize,
) -> Vec<BasisTerm> {
    // every candidate is some member times one more power of x_d
    let mut out = BTreeSet::new();
    for t in current {
        for d in 0..dim {
            let mut e = t.exponents().to_vec();
            e[d] += 1;
            let cand = BasisTerm(e);
            if current.contains(&cand) || !admissible(&cand, r) {
                continue;
            }
            if cand.derivatives().all(|p| current.contains(&p)) {
                out.insert(cand);
            }
        }
    }
    out.into_iter().collect()
}

/// True when every derivative of every member is a member.
pub fn is_downward_closed<'a>(terms: impl IntoIterator<Item = &'a BasisTerm> + Clone) -> bool {
    let set: BTreeSet<&BasisTerm> = terms.clone().into_iter().collect();
    terms
        .into_iter()
        .all(|t| t.derivatives().all(|p| set.contains(&p)))
}

/// Design matrix `z_ik = e_k(x^i)` for scenarios stored row-wise.
pub fn design_matrix(terms: &[BasisTerm], scenarios: ArrayView2<f64>) -> Array2<f64> {
    let n = scenarios.nrows();
    let mut z = Array2::zeros((n, terms.len()));
    for (i, row) in scenarios.outer_iter().enumerate() {
        let x = row.as_slice().map(|s| s.to_vec()).unwrap_or_else(|| row.to_vec());
        for (k, t) in terms.iter().enumerate() {
            z[[i, k]] = t.eval(&x);
        }
    }
    z
}

/// Evaluated basis vector for one scenario.
pub fn basis_row(terms: &[BasisTerm], x: &[f64]) -> Vec<f64> {
    terms.iter().map(|t| t.eval(x)).collect()
}

/// Every admissible term of the restriction setting in dimension `dim`,
/// lexicographically ordered (the intercept first).
pub fn admissible_universe(r: &Restrictions, dim: usize) -> Vec<BasisTerm> {
    let mut out = Vec::new();
    let mut e = vec![0u32; dim];
    fn rec(d: usize, e: &mut Vec<u32>, r: &Restrictions, out: &mut Vec<BasisTerm>) {
        if d == e.len() {
            let t = BasisTerm(e.clone());
            if admissible(&t, r) {
                out.push(t);
            }
            return;
        }
        let used: u32 = e[..d].iter().sum();
        for v in 0..=r.d1.min(r.d2 - used.min(r.d2)) {
            e[d] = v;
            rec(d + 1, e, r, out);
        }
        e[d] = 0;
    }
    rec(0, &mut e, r, &mut out);
    out.sort();
    out
}
