//! The adaptive calibration loop: start from the intercept, score every
//! marginality candidate with the bound regression and criterion, accept the
//! best strictly improving candidate(s), and stop when nothing improves or
//! `k_max` terms are reached.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::basis::{admissible_universe, marginality_candidates, BasisTerm, Restrictions};
use crate::data::{fmt_real, FittingSet};
use crate::error::{Error, Result};
use crate::fgls::{aic_fgls, fit_fgls_from, select_variance_model_type1, FglsOptions, VarianceModel};
use crate::gam::{select_lambda_fit, GamCriterion, GamSettings};
use crate::glm::{aic_glm, check_pairing, fit_glm_from, Family, IrlsOptions, Link};
use crate::kernel::{select_bandwidths, BandwidthCriterion, KernelMode, KernelModel, KernelSpec};
use crate::mars::{fit_mars, MarsSettings};
use crate::model::ProxyModel;
use crate::ols::{aic_ols, fit_ols};

/// How many improving candidates are accepted per iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectionMode {
    Stepwise,
    /// Up to `L` best improving candidates at once.
    Stagewise(usize),
    /// `L = ⌈proportion · |C|⌉` recomputed every iteration.
    Dynamic(f64),
}

impl SelectionMode {
    fn stage_length(&self, candidates: usize) -> usize {
        match *self {
            SelectionMode::Stepwise => 1,
            SelectionMode::Stagewise(l) => l,
            SelectionMode::Dynamic(p) => ((p * candidates as f64).ceil() as usize).max(1),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            SelectionMode::Stagewise(0) => Err(Error::pre("stage length must be at least 1")),
            SelectionMode::Dynamic(p) if !(p > 0.0 && p <= 1.0) => {
                Err(Error::pre(format!("dynamic proportion must lie in (0, 1], got {p}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FglsVariant {
    /// Adaptive OLS proxy, then greedy variance-model selection.
    Type1,
    /// Type I variance model held fixed during an FGLS-driven selection.
    Type2,
}

impl FromStr for FglsVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "type1" => Ok(FglsVariant::Type1),
            "type2" => Ok(FglsVariant::Type2),
            other => Err(Error::pre(format!("unknown FGLS variant `{other}`"))),
        }
    }
}

/// Where the kernel regression basis comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelBasis {
    /// Adaptive OLS run capped at `K_max` terms.
    Adaptive(usize),
    /// Intercept plus one linear term per risk factor.
    Linear,
    /// Union of the adaptive OLS terms (capped at the restriction `K_max`)
    /// and all linear terms.
    Combined,
}

impl FromStr for KernelBasis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "linear" => Ok(KernelBasis::Linear),
            "combined" => Ok(KernelBasis::Combined),
            _ => {
                let k = s
                    .strip_prefix("adaptive:")
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| Error::pre(format!("kernel basis `{s}` is not adaptive:<Kmax>, linear or combined")))?;
                Ok(KernelBasis::Adaptive(k))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSettings {
    pub basis: KernelBasis,
    pub mode: KernelMode,
    pub spec: KernelSpec,
    pub selector: BandwidthCriterion,
    pub bw_fraction: f64,
}

/// The regression family and criterion the engine is bound to.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Ols,
    Glm {
        family: Family,
        link: Link,
        irls: IrlsOptions,
    },
    Gam {
        settings: GamSettings,
        grid: Vec<f64>,
        criterion: GamCriterion,
    },
    /// FGLS with the variance regressors held fixed.
    FglsFixed {
        variance_terms: Vec<BasisTerm>,
        options: FglsOptions,
    },
    Fgls {
        variant: FglsVariant,
        m_max: usize,
        options: FglsOptions,
    },
    Mars(MarsSettings),
    Kernel(KernelSettings),
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Ols => "ols",
            Method::Glm { .. } => "glm",
            Method::Gam { .. } => "gam",
            Method::FglsFixed { .. } | Method::Fgls { .. } => "fgls",
            Method::Mars(_) => "mars",
            Method::Kernel(_) => "kernel",
        }
    }

    fn criterion_name(&self) -> &'static str {
        match self {
            Method::Gam { criterion: GamCriterion::Gcv, .. } => "gcv",
            Method::Mars(_) => "deviance",
            _ => "aic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub restrictions: Restrictions,
    pub method: Method,
    pub mode: SelectionMode,
}

impl EngineConfig {
    pub fn new(restrictions: Restrictions, method: Method) -> Self {
        Self { restrictions, method, mode: SelectionMode::Stepwise }
    }

    pub fn with_mode(mut self, mode: SelectionMode) -> Self {
        self.mode = mode;
        self
    }
}

/// One accepted iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Labels of the terms accepted in this iteration.
    pub accepted: Vec<String>,
    /// Number of terms after acceptance, intercept included.
    pub terms: usize,
    pub candidates: usize,
    pub criterion_before: f64,
    pub criterion_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTrace {
    pub criterion: &'static str,
    /// Criterion of the intercept-only start.
    pub initial: f64,
    pub records: Vec<TraceRecord>,
}

impl SelectionTrace {
    fn new(criterion: &'static str, initial: f64) -> Self {
        Self { criterion, initial, records: Vec::new() }
    }

    /// Criterion values along the path, starting with the intercept-only fit.
    pub fn path(&self) -> Vec<f64> {
        std::iter::once(self.initial).chain(self.records.iter().map(|r| r.criterion_after)).collect()
    }

    pub fn is_strictly_decreasing(&self) -> bool {
        self.path().windows(2).all(|w| w[1] < w[0])
    }

    /// CSV with header `iteration,k,candidates,<criterion>,accepted`; row 0
    /// is the intercept-only start.
    pub fn to_csv(&self) -> String {
        let mut out = Vec::new();
        self.write_csv_to(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("csv is utf-8")
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file).map_err(|e| Error::io(path, e))
    }

    fn write_csv_to<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["iteration", "k", "candidates", self.criterion, "accepted"])?;
        wr.write_record(["0", "1", "", &fmt_real(self.initial), "1"])?;
        for r in &self.records {
            wr.write_record([
                r.iteration.to_string(),
                r.terms.to_string(),
                r.candidates.to_string(),
                fmt_real(r.criterion_after),
                r.accepted.join(" "),
            ])?;
        }
        wr.flush()
    }
}

struct Scored {
    score: f64,
    model: ProxyModel,
}

/// Per-iteration warm start shared by all candidate fits.
enum Warm {
    None,
    Mu(Vec<f64>),
    Alpha(Vec<f64>),
}

fn fitted_values(model: &ProxyModel, set: &FittingSet) -> Option<Vec<f64>> {
    (0..set.len()).map(|i| model.predict(&set.scenario(i)).ok()).collect()
}

fn fit_terms(method: &Method, set: &FittingSet, terms: &[BasisTerm], warm: &Warm) -> Result<Scored> {
    match method {
        Method::Ols => {
            let f = fit_ols(set, terms)?;
            Ok(Scored { score: aic_ols(&f), model: ProxyModel::Ols(f) })
        }
        Method::Glm { family, link, irls } => {
            let mu = match warm {
                Warm::Mu(m) => Some(m.as_slice()),
                _ => None,
            };
            let f = fit_glm_from(set, terms, *family, *link, *irls, mu)?;
            Ok(Scored { score: aic_glm(&f), model: ProxyModel::Glm(f) })
        }
        Method::Gam { settings, grid, criterion } => {
            let smooths: Vec<BasisTerm> = terms.iter().filter(|t| !t.is_intercept()).cloned().collect();
            let (_, f) = select_lambda_fit(set, &smooths, settings, grid, *criterion)?;
            Ok(Scored { score: f.criterion(*criterion)?, model: ProxyModel::Gam(f) })
        }
        Method::FglsFixed { variance_terms, options } => {
            let start = match warm {
                Warm::Alpha(a) => Some(a.as_slice()),
                _ => None,
            };
            let f = fit_fgls_from(set, terms, variance_terms, *options, start)?;
            Ok(Scored { score: aic_fgls(&f, set), model: ProxyModel::Fgls(f) })
        }
        _ => unreachable!("only monomial-basis methods reach the candidate loop"),
    }
}

fn warm_start(method: &Method, model: &ProxyModel, set: &FittingSet) -> Warm {
    match (method, model) {
        (Method::Glm { .. }, m) => fitted_values(m, set).map(Warm::Mu).unwrap_or(Warm::None),
        (Method::FglsFixed { .. }, ProxyModel::Fgls(f)) => Warm::Alpha(f.variance_model.alpha.clone()),
        _ => Warm::None,
    }
}

fn check_config(set: &FittingSet, config: &EngineConfig) -> Result<()> {
    config.mode.validate()?;
    if let Method::Glm { family, link, .. } = &config.method {
        check_pairing(*family, *link)?;
    }
    if set.is_empty() {
        return Err(Error::NoFittingPoints);
    }
    Ok(())
}

/// Runs the adaptive selection for any method. MARS uses its own
/// forward/backward mechanics; kernel and FGLS type I/II wrap adaptive OLS.
pub fn calibrate(set: &FittingSet, config: &EngineConfig) -> Result<(ProxyModel, SelectionTrace)> {
    check_config(set, config)?;
    match &config.method {
        Method::Mars(settings) => calibrate_mars(set, settings),
        Method::Kernel(settings) => calibrate_kernel(set, config, settings),
        Method::Fgls { variant, m_max, options } => {
            let ols = EngineConfig { method: Method::Ols, ..config.clone() };
            let (ols_model, ols_trace) = adaptive(set, &ols)?;
            let ProxyModel::Ols(ols_fit) = ols_model else { unreachable!() };
            let (vm, fit) = select_variance_model_type1(set, &ols_fit, *m_max, *options)?;
            match variant {
                FglsVariant::Type1 => Ok((ProxyModel::Fgls(fit), ols_trace)),
                FglsVariant::Type2 => run_type2(set, &vm, config.restrictions, config.mode, *options),
            }
        }
        _ => adaptive(set, config),
    }
}

/// Adaptive FGLS selection with the variance model held fixed.
pub fn run_type2(
    set: &FittingSet,
    variance_model: &VarianceModel,
    restrictions: Restrictions,
    mode: SelectionMode,
    options: FglsOptions,
) -> Result<(ProxyModel, SelectionTrace)> {
    let config = EngineConfig {
        restrictions,
        method: Method::FglsFixed { variance_terms: variance_model.terms.clone(), options },
        mode,
    };
    check_config(set, &config)?;
    adaptive(set, &config)
}

fn adaptive(set: &FittingSet, config: &EngineConfig) -> Result<(ProxyModel, SelectionTrace)> {
    let method = &config.method;
    let r = &config.restrictions;
    let dim = set.dim();
    let mut terms = vec![BasisTerm::intercept(dim)];
    let mut current = fit_terms(method, set, &terms, &Warm::None)?;
    let mut trace = SelectionTrace::new(method.criterion_name(), current.score);
    if !current.score.is_finite() {
        return Err(Error::NonFiniteIterate("criterion of the intercept-only fit".into()));
    }
    let mut iteration = 0;
    while terms.len() < r.k_max {
        let members: BTreeSet<BasisTerm> = terms.iter().cloned().collect();
        let cands = marginality_candidates(&members, r, dim);
        if cands.is_empty() {
            break;
        }
        let warm = warm_start(method, &current.model, set);
        let scored: Vec<Option<Scored>> = cands
            .par_iter()
            .map(|c| {
                let mut t = terms.clone();
                t.push(c.clone());
                match fit_terms(method, set, &t, &warm) {
                    Ok(s) if s.score.is_finite() => Some(s),
                    Ok(_) => {
                        log::debug!("candidate {c} skipped: non-finite criterion");
                        None
                    }
                    Err(e) => {
                        log::debug!("candidate {c} skipped: {e}");
                        None
                    }
                }
            })
            .collect();
        // improving candidates by score, ties to the lexicographically smaller term
        let mut improving: Vec<(usize, Scored)> = scored
            .into_iter()
            .enumerate()
            .filter_map(|(i, s)| s.filter(|s| s.score < current.score).map(|s| (i, s)))
            .collect();
        if improving.is_empty() {
            break;
        }
        improving.sort_by(|a, b| a.1.score.total_cmp(&b.1.score).then(a.0.cmp(&b.0)));
        let room = r.k_max - terms.len();
        let take = config.mode.stage_length(cands.len()).min(room).min(improving.len());
        let before = current.score;
        let mut accepted: Vec<BasisTerm> = improving[..take].iter().map(|(i, _)| cands[*i].clone()).collect();
        if take == 1 {
            terms.push(accepted[0].clone());
            current = improving.swap_remove(0).1;
        } else {
            let mut joint_terms = terms.clone();
            joint_terms.extend(accepted.iter().cloned());
            match fit_terms(method, set, &joint_terms, &warm) {
                Ok(joint) if joint.score < before => {
                    terms = joint_terms;
                    current = joint;
                }
                other => {
                    if let Err(e) = other {
                        log::debug!("joint refit failed: {e}");
                    }
                    log::debug!("joint refit did not improve; accepting the best candidate alone");
                    accepted.truncate(1);
                    terms.push(accepted[0].clone());
                    current = improving.swap_remove(0).1;
                }
            }
        }
        iteration += 1;
        log::info!(
            "iteration {iteration}: {} terms, {} {:.6}",
            terms.len(),
            trace.criterion,
            current.score
        );
        trace.records.push(TraceRecord {
            iteration,
            accepted: accepted.iter().map(ToString::to_string).collect(),
            terms: terms.len(),
            candidates: cands.len(),
            criterion_before: before,
            criterion_after: current.score,
        });
    }
    Ok((current.model, trace))
}

fn calibrate_mars(set: &FittingSet, settings: &MarsSettings) -> Result<(ProxyModel, SelectionTrace)> {
    let (model, forward) = fit_mars(set, settings)?;
    let mut trace = SelectionTrace::new("deviance", forward.path[0]);
    for (s, w) in forward.path.windows(2).enumerate() {
        let added = &forward.model.terms[1 + 2 * s..3 + 2 * s];
        trace.records.push(TraceRecord {
            iteration: s + 1,
            accepted: added.iter().map(ToString::to_string).collect(),
            terms: 3 + 2 * s,
            candidates: forward.pool_sizes[s],
            criterion_before: w[0],
            criterion_after: w[1],
        });
    }
    Ok((ProxyModel::Mars(model), trace))
}

fn calibrate_kernel(
    set: &FittingSet,
    config: &EngineConfig,
    settings: &KernelSettings,
) -> Result<(ProxyModel, SelectionTrace)> {
    let dim = set.dim();
    let linear: Vec<BasisTerm> = std::iter::once(BasisTerm::intercept(dim))
        .chain((0..dim).map(|d| BasisTerm::linear(dim, d)))
        .collect();
    let ols_run = |k_max: usize| -> Result<(Vec<BasisTerm>, SelectionTrace)> {
        let r = Restrictions { k_max, ..config.restrictions };
        let cfg = EngineConfig { restrictions: r, method: Method::Ols, mode: config.mode };
        let (m, t) = adaptive(set, &cfg)?;
        let ProxyModel::Ols(f) = m else { unreachable!() };
        Ok((f.terms, t))
    };
    let (mut terms, trace) = match settings.basis {
        KernelBasis::Linear => {
            let f = fit_ols(set, &linear[..1])?;
            (linear, SelectionTrace::new("aic", aic_ols(&f)))
        }
        KernelBasis::Adaptive(k) => ols_run(k)?,
        KernelBasis::Combined => {
            let (mut t, trace) = ols_run(config.restrictions.k_max)?;
            for l in linear {
                if !t.contains(&l) {
                    t.push(l);
                }
            }
            (t, trace)
        }
    };
    // intercept first, the rest in lexicographic order
    terms.sort();
    let bw = select_bandwidths(set, &terms, settings.mode, settings.spec, settings.selector, settings.bw_fraction)?;
    let model = KernelModel::new(Arc::new(set.clone()), terms, bw, settings.mode, settings.spec)?;
    Ok((ProxyModel::Kernel(model), trace))
}

/// Largest admissible universe the brute-force reference accepts.
pub const EXHAUSTIVE_LIMIT: usize = 15;

/// Brute-force search over every downward-closed subset of the admissible
/// universe with at most `k_max` terms; returns the criterion minimizer and
/// its score. Only monomial-basis methods are supported.
pub fn exhaustive_reference(set: &FittingSet, config: &EngineConfig) -> Result<(ProxyModel, f64)> {
    check_config(set, config)?;
    if matches!(config.method, Method::Mars(_) | Method::Kernel(_) | Method::Fgls { .. }) {
        return Err(Error::pre(format!("no exhaustive reference for method {}", config.method.tag())));
    }
    let universe = admissible_universe(&config.restrictions, set.dim());
    if universe.len() > EXHAUSTIVE_LIMIT {
        return Err(Error::pre(format!(
            "admissible universe has {} terms, the exhaustive reference allows at most {EXHAUSTIVE_LIMIT}",
            universe.len()
        )));
    }
    let rest: Vec<BasisTerm> = universe.into_iter().filter(|t| !t.is_intercept()).collect();
    let subsets: Vec<Vec<BasisTerm>> = (0u32..1 << rest.len())
        .filter_map(|mask| {
            let mut t = vec![BasisTerm::intercept(set.dim())];
            t.extend((0..rest.len()).filter(|i| mask >> i & 1 == 1).map(|i| rest[i].clone()));
            (t.len() <= config.restrictions.k_max && crate::basis::is_downward_closed(&t)).then_some(t)
        })
        .collect();
    let scored: Vec<Option<Scored>> = subsets
        .par_iter()
        .map(|t| fit_terms(&config.method, set, t, &Warm::None).ok().filter(|s| s.score.is_finite()))
        .collect();
    let mut best: Option<Scored> = None;
    for s in scored.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| s.score < b.score) {
            best = Some(s);
        }
    }
    let best = best.ok_or_else(|| Error::NoCandidate("no subset could be fitted".into()))?;
    Ok((best.model, best.score))
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionMode::Stepwise => f.write_str("stepwise"),
            SelectionMode::Stagewise(l) => write!(f, "stagewise({l})"),
            SelectionMode::Dynamic(p) => write!(f, "dynamic({p})"),
        }
    }
}
