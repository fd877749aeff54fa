//! Fitted proxy models of every family and their text file format.
//!
//! A model file starts with `method=<tag>` and `D=<dim>`, followed by
//! `key=value` header lines and method-specific body lines:
//!
//! ```text
//! method=ols
//! D=2
//! term 0 0 2.0000000000000000e0
//! term 1 0 3.0000000000000000e0
//! ```
//!
//! Reals are written with 17 significant digits so stored values survive a
//! round trip bit-exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::basis::BasisTerm;
use crate::data::{fmt_real, FittingSet};
use crate::error::{Error, Result};
use crate::fgls::{FglsFit, VarianceModel};
use crate::gam::{FittedSmooth, GamFit, SmoothSpec};
use crate::glm::{Family, GlmFit, Link};
use crate::kernel::{KernelModel, KernelSpec};
use crate::mars::{Hinge, HingeTerm, MarsModel, Sign};
use crate::ols::OlsFit;

#[derive(Debug, Clone, PartialEq)]
pub enum ProxyModel {
    Ols(OlsFit),
    Glm(GlmFit),
    Gam(GamFit),
    Fgls(FglsFit),
    Mars(MarsModel),
    Kernel(KernelModel),
}

impl ProxyModel {
    pub fn method(&self) -> &'static str {
        match self {
            ProxyModel::Ols(_) => "ols",
            ProxyModel::Glm(_) => "glm",
            ProxyModel::Gam(_) => "gam",
            ProxyModel::Fgls(_) => "fgls",
            ProxyModel::Mars(_) => "mars",
            ProxyModel::Kernel(_) => "kernel",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ProxyModel::Ols(f) => f.terms[0].dim(),
            ProxyModel::Glm(f) => f.terms[0].dim(),
            ProxyModel::Gam(f) => f.dim,
            ProxyModel::Fgls(f) => f.terms[0].dim(),
            ProxyModel::Mars(m) => m.dim,
            ProxyModel::Kernel(k) => k.dim(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        match self {
            ProxyModel::Ols(f) => Ok(f.predict(x)),
            ProxyModel::Glm(f) => f.predict(x),
            ProxyModel::Gam(f) => f.predict(x),
            ProxyModel::Fgls(f) => Ok(f.predict(x)),
            ProxyModel::Mars(m) => m.predict(x),
            ProxyModel::Kernel(k) => k.predict(x),
        }
    }

    /// Number of basis terms, intercept included.
    pub fn term_count(&self) -> usize {
        match self {
            ProxyModel::Ols(f) => f.terms.len(),
            ProxyModel::Glm(f) => f.terms.len(),
            ProxyModel::Gam(f) => f.smooths.len() + 1,
            ProxyModel::Fgls(f) => f.terms.len(),
            ProxyModel::Mars(m) => m.terms.len(),
            ProxyModel::Kernel(k) => k.terms().len(),
        }
    }
}

fn exps(t: &BasisTerm) -> String {
    t.exponents().iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| fmt_real(*x)).collect::<Vec<_>>().join(",")
}

/// Serializes a model to the line-oriented text format.
pub fn model_to_string(model: &ProxyModel) -> Result<String> {
    let mut s = String::new();
    let w = &mut s;
    writeln!(w, "method={}", model.method()).unwrap();
    writeln!(w, "D={}", model.dim()).unwrap();
    match model {
        ProxyModel::Ols(f) => {
            writeln!(w, "N={}", f.n).unwrap();
            writeln!(w, "sigma2={}", fmt_real(f.sigma2_ml)).unwrap();
            writeln!(w, "sample_variance={}", fmt_real(f.sample_variance)).unwrap();
            for (t, c) in f.terms.iter().zip(&f.coefficients) {
                writeln!(w, "term {} {}", exps(t), fmt_real(*c)).unwrap();
            }
        }
        ProxyModel::Glm(f) => {
            writeln!(w, "N={}", f.n).unwrap();
            writeln!(w, "family={}", f.family).unwrap();
            writeln!(w, "link={}", f.link).unwrap();
            writeln!(w, "dispersion={}", fmt_real(f.dispersion)).unwrap();
            writeln!(w, "deviance={}", fmt_real(f.deviance)).unwrap();
            writeln!(w, "loglik={}", fmt_real(f.log_likelihood)).unwrap();
            writeln!(w, "iterations={}", f.iterations).unwrap();
            writeln!(w, "converged={}", f.converged).unwrap();
            for (t, c) in f.terms.iter().zip(&f.coefficients) {
                writeln!(w, "term {} {}", exps(t), fmt_real(*c)).unwrap();
            }
        }
        ProxyModel::Fgls(f) => {
            writeln!(w, "N={}", f.n).unwrap();
            writeln!(w, "loglik={}", fmt_real(f.log_likelihood)).unwrap();
            writeln!(w, "iterations={}", f.iterations).unwrap();
            writeln!(w, "converged={}", f.converged).unwrap();
            for (t, c) in f.terms.iter().zip(&f.coefficients) {
                writeln!(w, "term {} {}", exps(t), fmt_real(*c)).unwrap();
            }
            let vm = &f.variance_model;
            for (t, a) in vm.terms.iter().zip(&vm.alpha) {
                writeln!(w, "variance {} {}", exps(t), fmt_real(*a)).unwrap();
            }
        }
        ProxyModel::Gam(f) => {
            writeln!(w, "N={}", f.n).unwrap();
            writeln!(w, "family={}", f.family).unwrap();
            writeln!(w, "link={}", f.link).unwrap();
            writeln!(w, "dispersion={}", fmt_real(f.dispersion)).unwrap();
            writeln!(w, "df={}", fmt_real(f.effective_df)).unwrap();
            writeln!(w, "deviance={}", fmt_real(f.deviance)).unwrap();
            writeln!(w, "loglik={}", fmt_real(f.log_likelihood)).unwrap();
            writeln!(w, "iterations={}", f.iterations).unwrap();
            writeln!(w, "converged={}", f.converged).unwrap();
            writeln!(w, "intercept {}", fmt_real(f.intercept)).unwrap();
            for sm in &f.smooths {
                let sp = &sm.spec;
                writeln!(
                    w,
                    "smooth {} J={} lambda={} range={},{} means={} coeffs={}",
                    exps(&sp.term),
                    sp.splines,
                    fmt_real(sp.lambda),
                    fmt_real(sp.range.0),
                    fmt_real(sp.range.1),
                    list(&sm.means),
                    list(&sm.coefficients)
                )
                .unwrap();
            }
        }
        ProxyModel::Mars(m) => write_mars(w, m),
        ProxyModel::Kernel(k) => {
            let path = k
                .fitting_path
                .as_ref()
                .ok_or_else(|| Error::ModelFormat("kernel model has no fitting data path".into()))?;
            writeln!(w, "mode={}", k.mode()).unwrap();
            writeln!(w, "shape={}", k.spec().shape).unwrap();
            writeln!(w, "order={}", k.spec().order).unwrap();
            writeln!(w, "fitting={}", path.display()).unwrap();
            let mut bws = std::iter::once(None).chain(k.bandwidths().iter().map(Some));
            for t in k.terms() {
                match bws.next().flatten() {
                    Some(b) => writeln!(w, "term {} {}", exps(t), fmt_real(*b)).unwrap(),
                    None => writeln!(w, "term {} -", exps(t)).unwrap(),
                }
            }
        }
    }
    Ok(s)
}

fn write_mars(w: &mut String, m: &MarsModel) {
    writeln!(w, "N={}", m.n).unwrap();
    writeln!(w, "family={}", m.family).unwrap();
    writeln!(w, "link={}", m.link).unwrap();
    writeln!(w, "deviance={}", fmt_real(m.deviance)).unwrap();
    // line index 0 is the intercept; parents removed by pruning are written
    // with coefficient 0 so every product can name its parent line
    let mut lines: Vec<(HingeTerm, f64)> = Vec::new();
    let mut intercept = 0.0;
    for (t, c) in m.terms.iter().zip(&m.coefficients) {
        if t.is_intercept() {
            intercept += c;
        }
    }
    writeln!(w, "intercept {}", fmt_real(intercept)).unwrap();
    fn ensure(lines: &mut Vec<(HingeTerm, f64)>, t: &HingeTerm) -> usize {
        if let Some(i) = lines.iter().position(|(u, _)| u == t) {
            return i + 1;
        }
        if let Some(p) = t.parent().filter(|p| !p.is_intercept()) {
            ensure(lines, &p);
        }
        lines.push((t.clone(), 0.0));
        lines.len()
    }
    for (t, c) in m.terms.iter().zip(&m.coefficients) {
        if !t.is_intercept() {
            let i = ensure(&mut lines, t);
            lines[i - 1].1 = *c;
        }
    }
    for (t, c) in &lines {
        let h = t.factors().last().expect("non-intercept term");
        let sign = if h.sign == Sign::Plus { "+" } else { "-" };
        let parent = t
            .parent()
            .filter(|p| !p.is_intercept())
            .map(|p| format!(" * {}", lines.iter().position(|(u, _)| *u == p).unwrap() + 1))
            .unwrap_or_default();
        writeln!(w, "hinge {} {} {}{} {}", h.dim + 1, fmt_real(h.knot), sign, parent, fmt_real(*c)).unwrap();
    }
}

pub fn write_model(model: &ProxyModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_string(model)?).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<ProxyModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text, path.parent())
}

struct Parsed<'a> {
    header: BTreeMap<&'a str, &'a str>,
    body: Vec<(usize, &'a str)>,
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::ModelFormat(format!("line {line}: {msg}"))
}

fn real(s: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| bad(line, format!("`{s}` is not a number")))
}

impl<'a> Parsed<'a> {
    fn get(&self, key: &str) -> Result<&'a str> {
        self.header
            .get(key)
            .copied()
            .ok_or_else(|| Error::ModelFormat(format!("missing `{key}=` line")))
    }

    fn real_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.header.get(key) {
            Some(v) => real(v, 0),
            None => Ok(default),
        }
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.header.get(key) {
            Some(v) => v.trim().parse().map_err(|_| Error::ModelFormat(format!("bad `{key}` value `{v}`"))),
            None => Ok(default),
        }
    }

    fn bool_or(&self, key: &str, default: bool) -> bool {
        self.header.get(key).map(|v| v.trim() == "true").unwrap_or(default)
    }
}

fn term_line(rest: &[&str], dim: usize, line: usize) -> Result<(BasisTerm, &'static str)> {
    if rest.len() < dim {
        return Err(bad(line, format!("expected {dim} exponents")));
    }
    let e: Vec<u32> = rest[..dim]
        .iter()
        .map(|s| s.parse::<u32>().map_err(|_| bad(line, format!("bad exponent `{s}`"))))
        .collect::<Result<_>>()?;
    Ok((BasisTerm::new(e), ""))
}

/// Parses model text; relative kernel data paths resolve against `base`.
pub fn parse_model(text: &str, base: Option<&Path>) -> Result<ProxyModel> {
    let mut p = Parsed { header: BTreeMap::new(), body: Vec::new() };
    for (i, raw) in text.lines().enumerate() {
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let first = l.split_whitespace().next().unwrap_or("");
        if !first.contains('=') || l.split_whitespace().count() > 1 && !l.starts_with("fitting=") {
            if first.contains('=') {
                return Err(bad(i + 1, format!("unexpected `{l}`")));
            }
            p.body.push((i + 1, l));
        } else {
            let (k, v) = l.split_once('=').unwrap();
            p.header.insert(k.trim(), v.trim());
        }
    }
    let method = p.get("method")?;
    let dim: usize = p
        .get("D")?
        .parse()
        .map_err(|_| Error::ModelFormat("`D=` must be a positive integer".into()))?;
    if dim == 0 {
        return Err(Error::ModelFormat("`D=` must be a positive integer".into()));
    }
    let n = p.usize_or("N", 0)?;
    let family = || -> Result<Family> { p.header.get("family").copied().unwrap_or("gaussian").parse() };
    let link = || -> Result<Link> { p.header.get("link").copied().unwrap_or("identity").parse() };

    let mut terms = Vec::new();
    let mut coefs = Vec::new();
    let mut vterms = Vec::new();
    let mut alpha = Vec::new();
    let collect_terms = |kind: &str, terms: &mut Vec<BasisTerm>, vals: &mut Vec<f64>| -> Result<()> {
        for (line, l) in &p.body {
            let parts: Vec<&str> = l.split_whitespace().collect();
            if parts[0] != kind {
                continue;
            }
            let (t, _) = term_line(&parts[1..], dim, *line)?;
            if parts.len() != dim + 2 {
                return Err(bad(*line, "expected exponents followed by one value"));
            }
            terms.push(t);
            vals.push(real(parts[dim + 1], *line)?);
        }
        Ok(())
    };
    let model = match method {
        "ols" => {
            collect_terms("term", &mut terms, &mut coefs)?;
            let k = terms.len();
            ProxyModel::Ols(OlsFit {
                terms,
                coefficients: coefs,
                sigma2_ml: p.real_or("sigma2", f64::NAN)?,
                sample_variance: p.real_or("sample_variance", f64::NAN)?,
                n,
                k,
            })
        }
        "glm" => {
            collect_terms("term", &mut terms, &mut coefs)?;
            ProxyModel::Glm(GlmFit {
                terms,
                coefficients: coefs,
                family: family()?,
                link: link()?,
                dispersion: p.real_or("dispersion", f64::NAN)?,
                deviance: p.real_or("deviance", f64::NAN)?,
                log_likelihood: p.real_or("loglik", f64::NAN)?,
                iterations: p.usize_or("iterations", 0)?,
                converged: p.bool_or("converged", true),
                n,
            })
        }
        "fgls" => {
            collect_terms("term", &mut terms, &mut coefs)?;
            collect_terms("variance", &mut vterms, &mut alpha)?;
            ProxyModel::Fgls(FglsFit {
                terms,
                coefficients: coefs,
                variance_model: VarianceModel { terms: vterms, alpha },
                iterations: p.usize_or("iterations", 0)?,
                converged: p.bool_or("converged", true),
                log_likelihood: p.real_or("loglik", f64::NAN)?,
                n,
            })
        }
        "gam" => parse_gam(&p, dim, n, family()?, link()?)?,
        "mars" => parse_mars(&p, dim, n, family()?, link()?)?,
        "kernel" => parse_kernel(&p, dim, base)?,
        other => return Err(Error::UnknownMethod(other.to_string())),
    };
    if let ProxyModel::Ols(OlsFit { terms, .. }) | ProxyModel::Glm(GlmFit { terms, .. }) | ProxyModel::Fgls(FglsFit { terms, .. }) = &model {
        if terms.is_empty() {
            return Err(Error::ModelFormat("model has no `term` lines".into()));
        }
    }
    Ok(model)
}

fn parse_gam(p: &Parsed, dim: usize, n: usize, family: Family, link: Link) -> Result<ProxyModel> {
    let mut intercept = None;
    let mut smooths = Vec::new();
    for (line, l) in &p.body {
        let parts: Vec<&str> = l.split_whitespace().collect();
        match parts[0] {
            "intercept" if parts.len() == 2 => intercept = Some(real(parts[1], *line)?),
            "smooth" => {
                let (term, _) = term_line(&parts[1..], dim, *line)?;
                let mut kv = BTreeMap::new();
                for item in &parts[1 + dim..] {
                    let (k, v) = item.split_once('=').ok_or_else(|| bad(*line, format!("expected key=value, got `{item}`")))?;
                    kv.insert(k, v);
                }
                let field = |k: &str| kv.get(k).copied().ok_or_else(|| bad(*line, format!("smooth lacks `{k}=`")));
                let reals = |k: &str| -> Result<Vec<f64>> { field(k)?.split(',').map(|v| real(v, *line)).collect() };
                let splines: usize = field("J")?.parse().map_err(|_| bad(*line, "bad J"))?;
                let range = reals("range")?;
                let means = reals("means")?;
                let coefficients = reals("coeffs")?;
                if range.len() != 2 || means.len() != splines || coefficients.len() != splines || splines < 4 {
                    return Err(bad(*line, "smooth lists do not match J"));
                }
                smooths.push(FittedSmooth {
                    spec: SmoothSpec {
                        term,
                        splines,
                        range: (range[0], range[1]),
                        lambda: real(field("lambda")?, *line)?,
                    },
                    coefficients,
                    means,
                });
            }
            _ => return Err(bad(*line, format!("unexpected `{l}` in a GAM model"))),
        }
    }
    Ok(ProxyModel::Gam(GamFit {
        intercept: intercept.ok_or_else(|| Error::ModelFormat("GAM model lacks an `intercept` line".into()))?,
        smooths,
        family,
        link,
        dispersion: p.real_or("dispersion", f64::NAN)?,
        effective_df: p.real_or("df", f64::NAN)?,
        deviance: p.real_or("deviance", f64::NAN)?,
        log_likelihood: p.real_or("loglik", f64::NAN)?,
        iterations: p.usize_or("iterations", 0)?,
        converged: p.bool_or("converged", true),
        n,
        dim,
    }))
}

fn parse_mars(p: &Parsed, dim: usize, n: usize, family: Family, link: Link) -> Result<ProxyModel> {
    let mut terms = vec![HingeTerm::intercept()];
    let mut coefficients = vec![0.0];
    let mut seen_intercept = false;
    for (line, l) in &p.body {
        let parts: Vec<&str> = l.split_whitespace().collect();
        match parts[0] {
            "intercept" if parts.len() == 2 => {
                coefficients[0] = real(parts[1], *line)?;
                seen_intercept = true;
            }
            "hinge" if parts.len() == 5 || parts.len() == 7 => {
                let d: usize = parts[1].parse().map_err(|_| bad(*line, "bad hinge dimension"))?;
                if d == 0 || d > dim {
                    return Err(bad(*line, format!("hinge dimension {d} outside 1..={dim}")));
                }
                let knot = real(parts[2], *line)?;
                let sign = match parts[3] {
                    "+" => Sign::Plus,
                    "-" => Sign::Minus,
                    s => return Err(bad(*line, format!("bad hinge sign `{s}`"))),
                };
                let h = Hinge { dim: d - 1, knot, sign };
                let term = if parts.len() == 7 {
                    if parts[4] != "*" {
                        return Err(bad(*line, "expected `* <parent>`"));
                    }
                    let pi: usize = parts[5].parse().map_err(|_| bad(*line, "bad parent index"))?;
                    if pi == 0 || pi >= terms.len() {
                        return Err(bad(*line, format!("parent {pi} is not an earlier hinge line")));
                    }
                    terms[pi].times(h).map_err(|e| bad(*line, e))?
                } else {
                    HingeTerm::new(vec![h])?
                };
                terms.push(term);
                coefficients.push(real(parts[parts.len() - 1], *line)?);
            }
            _ => return Err(bad(*line, format!("unexpected `{l}` in a MARS model"))),
        }
    }
    if !seen_intercept {
        return Err(Error::ModelFormat("MARS model lacks an `intercept` line".into()));
    }
    Ok(ProxyModel::Mars(MarsModel {
        terms,
        coefficients,
        family,
        link,
        deviance: p.real_or("deviance", f64::NAN)?,
        n,
        dim,
    }))
}

fn parse_kernel(p: &Parsed, dim: usize, base: Option<&Path>) -> Result<ProxyModel> {
    let mode = p.get("mode")?.parse()?;
    let shape = p.get("shape")?.parse()?;
    let order: u8 = p.get("order")?.parse().map_err(|_| Error::ModelFormat("bad kernel order".into()))?;
    let spec = KernelSpec::new(shape, order)?;
    let raw = PathBuf::from(p.get("fitting")?);
    let resolved = match base {
        Some(b) if raw.is_relative() && !raw.exists() => b.join(&raw),
        _ => raw.clone(),
    };
    let data = FittingSet::read_csv(&resolved)?;
    if data.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: data.dim() });
    }
    let mut terms = Vec::new();
    let mut bws = Vec::new();
    for (line, l) in &p.body {
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts[0] != "term" || parts.len() != dim + 2 {
            return Err(bad(*line, format!("unexpected `{l}` in a kernel model")));
        }
        let (t, _) = term_line(&parts[1..], dim, *line)?;
        match parts[dim + 1] {
            "-" => {}
            v => bws.push(real(v, *line)?),
        }
        terms.push(t);
    }
    let mut model = KernelModel::new(Arc::new(data), terms, bws, mode, spec)?;
    model.fitting_path = Some(raw);
    Ok(ProxyModel::Kernel(model))
}
