//! Local constant and local linear kernel regression over a small monomial basis.
//!
//! The multivariate kernel is a product of univariate kernels over the
//! non-intercept basis coordinates `z_k = e_k(x)`, each with its own
//! bandwidth. Models are memory-based and keep the fitting set.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;

use crate::basis::{basis_row, design_matrix, BasisTerm};
use crate::data::FittingSet;
use crate::error::{Error, Result};
use crate::linalg::{scale_rows, solve_square, HouseholderQr};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Gaussian,
    Epanechnikov,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelSpec {
    pub shape: Shape,
    /// 2 or 4.
    pub order: u8,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self { shape: Shape::Gaussian, order: 2 }
    }
}

impl KernelSpec {
    pub fn new(shape: Shape, order: u8) -> Result<Self> {
        if order != 2 && order != 4 {
            return Err(Error::pre(format!("kernel order must be 2 or 4, got {order}")));
        }
        Ok(Self { shape, order })
    }

    /// `D(u)`, symmetric with maximum at 0 for order 2.
    pub fn eval(&self, u: f64) -> f64 {
        let u2 = u * u;
        let base = match self.shape {
            Shape::Gaussian => (-0.5 * u2).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            Shape::Epanechnikov if u2 <= 1.0 => 0.75 * (1.0 - u2),
            Shape::Uniform if u2 <= 1.0 => 0.5,
            _ => 0.0,
        };
        if self.order == 2 {
            return base;
        }
        let m = match self.shape {
            Shape::Gaussian => (3.0 - u2) / 2.0,
            // full kernels (15/32)(1 − u²)(3 − 7u²) and (3/8)(3 − 5u²)
            Shape::Epanechnikov => 0.625 * (3.0 - 7.0 * u2),
            Shape::Uniform => 0.75 * (3.0 - 5.0 * u2),
        };
        base * m
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::Gaussian => "gaussian",
            Shape::Epanechnikov => "epanechnikov",
            Shape::Uniform => "uniform",
        })
    }
}

impl FromStr for Shape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gaussian" => Ok(Shape::Gaussian),
            "epanechnikov" => Ok(Shape::Epanechnikov),
            "uniform" => Ok(Shape::Uniform),
            other => Err(Error::pre(format!("unknown kernel shape `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelMode {
    Lc,
    Ll,
}

impl fmt::Display for KernelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelMode::Lc => "lc",
            KernelMode::Ll => "ll",
        })
    }
}

impl FromStr for KernelMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "lc" => Ok(KernelMode::Lc),
            "ll" => Ok(KernelMode::Ll),
            other => Err(Error::pre(format!("unknown kernel mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandwidthCriterion {
    Aic,
    LooCv,
}

impl FromStr for BandwidthCriterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "aic" => Ok(BandwidthCriterion::Aic),
            "loocv" => Ok(BandwidthCriterion::LooCv),
            other => Err(Error::pre(format!("unknown bandwidth selector `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HatDiagnostics {
    pub trace_h: f64,
    /// Mean squared residual at the fitting points.
    pub sigma2: f64,
}

/// A memory-based kernel regression model bound to its fitting data.
#[derive(Debug, Clone)]
pub struct KernelModel {
    terms: Vec<BasisTerm>,
    bandwidths: Vec<f64>,
    mode: KernelMode,
    spec: KernelSpec,
    data: Arc<FittingSet>,
    /// Basis coordinates of the fitting points.
    z: Array2<f64>,
    /// Where the fitting data lives on disk, recorded in model files.
    pub fitting_path: Option<PathBuf>,
}

impl PartialEq for KernelModel {
    fn eq(&self, other: &Self) -> bool {
        self.terms == other.terms
            && self.bandwidths == other.bandwidths
            && self.mode == other.mode
            && self.spec == other.spec
            && *self.data == *other.data
    }
}

impl KernelModel {
    /// `terms` start with the intercept; `bandwidths` cover the remaining terms.
    pub fn new(
        data: Arc<FittingSet>,
        terms: Vec<BasisTerm>,
        bandwidths: Vec<f64>,
        mode: KernelMode,
        spec: KernelSpec,
    ) -> Result<Self> {
        if !terms.first().is_some_and(BasisTerm::is_intercept) {
            return Err(Error::pre("kernel terms must start with the intercept"));
        }
        if bandwidths.len() + 1 != terms.len() {
            return Err(Error::DimensionMismatch {
                expected: terms.len() - 1,
                got: bandwidths.len(),
            });
        }
        if let Some(b) = bandwidths.iter().find(|b| !(**b > 0.0) || !b.is_finite()) {
            return Err(Error::pre(format!("bandwidths must be positive, got {b}")));
        }
        let z = design_matrix(&terms, data.scenarios());
        Ok(Self {
            terms,
            bandwidths,
            mode,
            spec,
            data,
            z,
            fitting_path: None,
        })
    }

    pub fn terms(&self) -> &[BasisTerm] {
        &self.terms
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn mode(&self) -> KernelMode {
        self.mode
    }

    pub fn spec(&self) -> KernelSpec {
        self.spec
    }

    pub fn data(&self) -> &FittingSet {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    fn weights(&self, z0: &[f64]) -> Vec<f64> {
        self.z
            .outer_iter()
            .map(|zi| {
                self.bandwidths
                    .iter()
                    .enumerate()
                    .map(|(k, l)| self.spec.eval((zi[k + 1] - z0[k + 1]) / l))
                    .product()
            })
            .collect()
    }

    /// Local fit at basis coordinates `z0`; `skip` drops one point's own weight.
    /// Returns the estimate and the factor `H_ii / K(z0, z0)`.
    fn local(&self, z0: &[f64], skip: Option<usize>, want_hat: bool) -> Result<(f64, f64)> {
        let mut w = self.weights(z0);
        if let Some(i) = skip {
            w[i] = 0.0;
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(Error::EmptyNeighborhood);
        }
        let y = self.data.responses();
        match self.mode {
            KernelMode::Lc => {
                let sw: f64 = w.iter().sum();
                if sw == 0.0 || !sw.is_finite() {
                    return Err(Error::EmptyNeighborhood);
                }
                Ok((w.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sw, 1.0 / sw))
            }
            KernelMode::Ll => self.local_linear(z0, &w, y, want_hat),
        }
    }

    fn local_linear(&self, z0: &[f64], w: &[f64], y: ArrayView1<f64>, want_hat: bool) -> Result<(f64, f64)> {
        let k = self.terms.len();
        // center at z0 so the intercept coefficient is the estimate
        let zc = Array2::from_shape_fn(self.z.dim(), |(i, j)| if j == 0 { 1.0 } else { self.z[[i, j]] - z0[j] });
        if w.iter().all(|v| *v >= 0.0) {
            let (zs, ys) = scale_rows(zc.view(), y, ArrayView1::from(w))?;
            let qr = HouseholderQr::factor(zs.view())?;
            let beta = qr.solve(&ys).coefficients;
            let hat = if want_hat {
                let mut e0 = vec![0.0; k];
                e0[0] = 1.0;
                qr.solve_rt(&e0).iter().map(|v| v * v).sum()
            } else {
                0.0
            };
            Ok((beta[0], hat))
        } else {
            let mut a = Array2::zeros((k, k));
            let mut b = vec![0.0; k];
            for (i, row) in zc.outer_iter().enumerate() {
                if w[i] == 0.0 {
                    continue;
                }
                for r in 0..k {
                    b[r] += w[i] * row[r] * y[i];
                    for c in 0..k {
                        a[[r, c]] += w[i] * row[r] * row[c];
                    }
                }
            }
            let beta = solve_square(&a, &b)?;
            let hat = if want_hat {
                let mut e0 = vec![0.0; k];
                e0[0] = 1.0;
                solve_square(&a, &e0)?[0]
            } else {
                0.0
            };
            Ok((beta[0], hat))
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let z0 = basis_row(&self.terms, x);
        self.local(&z0, None, false).map(|r| r.0)
    }

    fn self_weight(&self) -> f64 {
        self.spec.eval(0.0).powi(self.bandwidths.len() as i32)
    }
}

pub fn predict_lc(model: &KernelModel, x: &[f64]) -> Result<f64> {
    let m = KernelModel { mode: KernelMode::Lc, ..model.clone() };
    m.predict(x)
}

pub fn predict_ll(model: &KernelModel, x: &[f64]) -> Result<f64> {
    let m = KernelModel { mode: KernelMode::Ll, ..model.clone() };
    m.predict(x)
}

pub fn hat_trace(model: &KernelModel) -> Result<HatDiagnostics> {
    let n = model.data.len();
    let kii = model.self_weight();
    let y = model.data.responses();
    let per: Vec<Result<(f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let z0 = model.z.row(i).to_vec();
            let (f, h) = model.local(&z0, None, true)?;
            Ok((h * kii, (y[i] - f).powi(2)))
        })
        .collect();
    let mut trace_h = 0.0;
    let mut sse = 0.0;
    for r in per {
        let (h, e) = r?;
        trace_h += h;
        sse += e;
    }
    Ok(HatDiagnostics { trace_h, sigma2: sse / n as f64 })
}

/// `log σ̂² + (1 + tr(H)/N) / (1 − (tr(H) + 2)/N)`.
pub fn aic_hurvich(diag: &HatDiagnostics, n: usize) -> Result<f64> {
    let n = n as f64;
    let denom = 1.0 - (diag.trace_h + 2.0) / n;
    if !(denom > 0.0) {
        return Err(Error::pre(format!("improved AIC needs tr(H) + 2 < N, got tr(H)={}", diag.trace_h)));
    }
    Ok(diag.sigma2.ln() + (1.0 + diag.trace_h / n) / denom)
}

/// Leave-one-out cross-validation score.
pub fn loocv(model: &KernelModel) -> Result<f64> {
    let n = model.data.len();
    let y = model.data.responses();
    let errs: Vec<Result<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let z0 = model.z.row(i).to_vec();
            model.local(&z0, Some(i), false).map(|(f, _)| (y[i] - f).powi(2))
        })
        .collect();
    let mut s = 0.0;
    for e in errs {
        s += e?;
    }
    Ok(s / n as f64)
}

fn criterion(model: &KernelModel, c: BandwidthCriterion) -> f64 {
    let v = match c {
        BandwidthCriterion::Aic => hat_trace(model).and_then(|d| aic_hurvich(&d, model.data.len())),
        BandwidthCriterion::LooCv => loocv(model),
    };
    v.ok().filter(|v| v.is_finite()).unwrap_or(f64::INFINITY)
}

/// Deterministic stride subsample of `⌈fraction·N⌉` rows.
pub fn stride_subsample(n: usize, fraction: f64) -> Vec<usize> {
    let m = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    (0..m).map(|i| i * n / m).collect()
}

const GOLDEN_STEPS: usize = 30;

/// Coordinate-wise golden-section search on `log λ_k ∈ [log(0.01 r_k), log(100 r_k)]`,
/// two sweeps over a stride subsample of the fitting data.
pub fn select_bandwidths(
    set: &FittingSet,
    terms: &[BasisTerm],
    mode: KernelMode,
    spec: KernelSpec,
    crit: BandwidthCriterion,
    bw_fraction: f64,
) -> Result<Vec<f64>> {
    if !(bw_fraction > 0.0 && bw_fraction <= 1.0) {
        return Err(Error::pre(format!("bandwidth fraction must lie in (0, 1], got {bw_fraction}")));
    }
    let rows = stride_subsample(set.len(), bw_fraction);
    if rows.len() < 10 * terms.len() {
        return Err(Error::pre(format!(
            "bandwidth selection uses {} points but needs at least 10·K = {}",
            rows.len(),
            10 * terms.len()
        )));
    }
    let sub = Arc::new(set.select(&rows)?);
    let z = design_matrix(terms, sub.scenarios());
    let ranges: Vec<f64> = (1..terms.len())
        .map(|k| {
            let c = z.column(k);
            c.fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - c.fold(f64::INFINITY, |a, &b| a.min(b))
        })
        .collect();
    if let Some(k) = ranges.iter().position(|r| !(*r > 0.0)) {
        return Err(Error::pre(format!("basis term {} is constant on the fitting data", terms[k + 1])));
    }
    let mut bw = ranges.clone();
    let eval = |bw: &[f64]| -> f64 {
        KernelModel::new(sub.clone(), terms.to_vec(), bw.to_vec(), mode, spec)
            .map(|m| criterion(&m, crit))
            .unwrap_or(f64::INFINITY)
    };
    let mut best = eval(&bw);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _sweep in 0..2 {
        for k in 0..bw.len() {
            let (mut a, mut b) = ((0.01 * ranges[k]).ln(), (100.0 * ranges[k]).ln());
            let at = |t: f64, bw: &[f64]| {
                let mut v = bw.to_vec();
                v[k] = t.exp();
                (eval(&v), v)
            };
            let mut c = b - phi * (b - a);
            let mut d = a + phi * (b - a);
            let (mut fc, vc) = at(c, &bw);
            let (mut fd, vd) = at(d, &bw);
            let mut seen = vec![(fc, vc), (fd, vd)];
            for _ in 0..GOLDEN_STEPS {
                if fc <= fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - phi * (b - a);
                    let (f, v) = at(c, &bw);
                    fc = f;
                    seen.push((f, v));
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + phi * (b - a);
                    let (f, v) = at(d, &bw);
                    fd = f;
                    seen.push((f, v));
                }
            }
            for (f, v) in seen {
                if f < best {
                    best = f;
                    bw = v;
                }
            }
        }
    }
    if !best.is_finite() {
        return Err(Error::NoCandidate("bandwidth criterion is not finite on the search interval".into()));
    }
    Ok(bw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ols::fit_ols;
    use ndarray::{array, Array1};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn t(e: &[u32]) -> BasisTerm {
        BasisTerm::new(e.to_vec())
    }

    fn data(seed: u64, n: usize, f: impl Fn(f64, f64) -> f64) -> Arc<FittingSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0f64..1.0));
        let y = Array1::from_shape_fn(n, |i| f(x[[i, 0]], x[[i, 1]]) + 0.1 * rng.sample::<f64, _>(StandardNormal));
        Arc::new(FittingSet::new(x, y).unwrap())
    }

    fn lin() -> Vec<BasisTerm> {
        vec![t(&[0, 0]), t(&[0, 1]), t(&[1, 0])]
    }

    fn mean(y: ArrayView1<f64>) -> f64 {
        y.sum() / y.len() as f64
    }

    #[test]
    fn kernel_moments() {
        for shape in [Shape::Gaussian, Shape::Epanechnikov, Shape::Uniform] {
            for order in [2, 4] {
                let k = KernelSpec::new(shape, order).unwrap();
                let h = 1e-4;
                let (mut m0, mut m2) = (0.0, 0.0);
                let mut u = -10.0;
                while u < 10.0 {
                    let v = k.eval(u + h / 2.0);
                    m0 += v * h;
                    m2 += v * (u + h / 2.0).powi(2) * h;
                    u += h;
                }
                assert!((m0 - 1.0).abs() < 1e-3, "{shape} {order}: {m0}");
                if order == 4 {
                    assert!(m2.abs() < 1e-3, "{shape}: {m2}");
                }
                assert_eq!(k.eval(0.3), k.eval(-0.3));
                if order == 2 {
                    assert!(k.eval(0.0) >= k.eval(0.5));
                }
            }
        }
        assert!(KernelSpec::new(Shape::Gaussian, 6).is_err());
    }

    #[test]
    fn wide_lc_is_mean() {
        let d = data(1, 100, |a, b| a + b);
        let m = KernelModel::new(d.clone(), lin(), vec![1e9, 1e9], KernelMode::Lc, KernelSpec::default()).unwrap();
        assert!((m.predict(&[0.3, -0.2]).unwrap() - mean(d.responses())).abs() < 1e-6);
    }

    #[test]
    fn ll_intercept_only_is_lc() {
        let d = data(2, 80, |a, b| a * b);
        let terms = vec![t(&[0, 0])];
        let lc = KernelModel::new(d.clone(), terms.clone(), vec![], KernelMode::Lc, KernelSpec::default()).unwrap();
        let ll = KernelModel::new(d, terms, vec![], KernelMode::Ll, KernelSpec::default()).unwrap();
        assert!((lc.predict(&[0.1, 0.1]).unwrap() - ll.predict(&[0.1, 0.1]).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ll_reproduces_linear_and_wide_ols() {
        let x = Array2::from_shape_fn((30, 1), |(i, _)| -1.0 + i as f64 / 15.0);
        let y = x.column(0).mapv(|v| 2.0 + 3.0 * v);
        let d = Arc::new(FittingSet::new(x, y).unwrap());
        let m = KernelModel::new(d, vec![t(&[0]), t(&[1])], vec![0.2], KernelMode::Ll, KernelSpec::default()).unwrap();
        assert!((m.predict(&[0.37]).unwrap() - (2.0 + 3.0 * 0.37)).abs() < 1e-8);

        let d = data(3, 120, |a, b| a * a + b);
        let m = KernelModel::new(d.clone(), lin(), vec![1e7, 1e7], KernelMode::Ll, KernelSpec::default()).unwrap();
        let o = fit_ols(&d, &lin()).unwrap();
        assert!((m.predict(&[0.2, 0.5]).unwrap() - o.predict(&[0.2, 0.5])).abs() < 1e-6);
    }

    #[test]
    fn empty_neighborhood() {
        let d = data(4, 20, |a, _| a);
        let spec = KernelSpec::new(Shape::Epanechnikov, 2).unwrap();
        let m = KernelModel::new(d, lin(), vec![0.1, 0.1], KernelMode::Lc, spec).unwrap();
        assert!(matches!(m.predict(&[3.0, 3.0]), Err(Error::EmptyNeighborhood)));
    }

    #[test]
    fn single_point_lc() {
        let d = Arc::new(FittingSet::new(array![[0.0]], array![4.0]).unwrap());
        let m = KernelModel::new(d, vec![t(&[0]), t(&[1])], vec![1.0], KernelMode::Lc, KernelSpec::default()).unwrap();
        assert_eq!(m.predict(&[0.7]).unwrap(), 4.0);
        let h = hat_trace(&m).unwrap();
        assert!((h.trace_h - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hat_trace_limits() {
        let d = data(5, 50, |a, b| a - b);
        let wide = KernelModel::new(d.clone(), lin(), vec![1e9, 1e9], KernelMode::Lc, KernelSpec::default()).unwrap();
        assert!((hat_trace(&wide).unwrap().trace_h - 1.0).abs() < 1e-6);
        let narrow = KernelModel::new(d, lin(), vec![1e-4, 1e-4], KernelMode::Lc, KernelSpec::default()).unwrap();
        assert!((hat_trace(&narrow).unwrap().trace_h - 50.0).abs() < 1e-6);
    }

    #[test]
    fn hurvich_values() {
        let d = HatDiagnostics { trace_h: 1.0, sigma2: 1.0 };
        assert!((aic_hurvich(&d, 100).unwrap() - 1.04124).abs() < 1e-4);
        let e = HatDiagnostics { sigma2: std::f64::consts::E, ..d };
        assert!((aic_hurvich(&e, 100).unwrap() - aic_hurvich(&d, 100).unwrap() - 1.0).abs() < 1e-12);
        assert!(aic_hurvich(&HatDiagnostics { trace_h: 98.0, sigma2: 1.0 }, 100).is_err());
    }

    #[test]
    fn loocv_values() {
        let d = Arc::new(FittingSet::new(array![[0.0], [0.5]], array![0.0, 1.0]).unwrap());
        let spec = KernelSpec::new(Shape::Uniform, 2).unwrap();
        let m = KernelModel::new(d, vec![t(&[0]), t(&[1])], vec![1.0], KernelMode::Lc, spec).unwrap();
        assert_eq!(loocv(&m).unwrap(), 1.0);

        let c = Arc::new(FittingSet::new(array![[0.0], [0.5], [0.9]], array![2.0, 2.0, 2.0]).unwrap());
        let m = KernelModel::new(c, vec![t(&[0]), t(&[1])], vec![1.0], KernelMode::Lc, KernelSpec::default()).unwrap();
        assert_eq!(loocv(&m).unwrap(), 0.0);

        let base = data(6, 30, |a, b| a + b);
        let x2 = ndarray::concatenate![ndarray::Axis(0), base.scenarios(), base.scenarios()];
        let y2 = ndarray::concatenate![ndarray::Axis(0), base.responses(), base.responses()];
        let dup = Arc::new(FittingSet::new(x2, y2).unwrap());
        let one = KernelModel::new(base, lin(), vec![0.3, 0.3], KernelMode::Lc, KernelSpec::default()).unwrap();
        let two = KernelModel::new(dup, lin(), vec![0.3, 0.3], KernelMode::Lc, KernelSpec::default()).unwrap();
        assert!(loocv(&two).unwrap() < loocv(&one).unwrap());
    }

    #[test]
    fn intercept_factor_cancels() {
        let d = data(7, 40, |a, b| a * b + a);
        let m = KernelModel::new(d, lin(), vec![0.4, 0.4], KernelMode::Lc, KernelSpec::default()).unwrap();
        let z0 = basis_row(&lin(), &[0.1, -0.3]);
        let w = m.weights(&z0);
        let c = KernelSpec::default().eval(0.0 / 0.7);
        let y = m.data().responses();
        let scaled: f64 = w.iter().zip(y).map(|(a, b)| c * a * b).sum::<f64>() / w.iter().map(|a| c * a).sum::<f64>();
        assert!((scaled - m.predict(&[0.1, -0.3]).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn order4_ll_uses_normal_equations() {
        let d = data(8, 100, |a, b| a * a - b);
        let spec = KernelSpec::new(Shape::Gaussian, 4).unwrap();
        let m = KernelModel::new(d, lin(), vec![0.8, 0.8], KernelMode::Ll, spec).unwrap();
        assert!(m.predict(&[0.0, 0.0]).unwrap().is_finite());
        assert!(hat_trace(&m).unwrap().trace_h.is_finite());
    }

    #[test]
    fn bandwidth_selection_interior() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_fn((300, 1), |_| rng.random_range(-1.0f64..1.0));
        let y = Array1::from_shape_fn(300, |i| 1.0 + x[[i, 0]] + 0.2 * rng.sample::<f64, _>(StandardNormal));
        let set = FittingSet::new(x, y).unwrap();
        let terms = vec![t(&[0]), t(&[1])];
        let bw = select_bandwidths(&set, &terms, KernelMode::Lc, KernelSpec::default(), BandwidthCriterion::Aic, 1.0).unwrap();
        assert!(bw[0] > 0.02 * 2.0 * 1.01 && bw[0] < 100.0 * 1.9, "{bw:?}");
        assert!(select_bandwidths(&set, &terms, KernelMode::Lc, KernelSpec::default(), BandwidthCriterion::Aic, 0.05).is_err());
        assert_eq!(stride_subsample(300, 1.0).len(), 300);
    }
}
