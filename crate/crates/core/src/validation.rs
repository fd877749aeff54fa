//! Out-of-sample validation figures and the tabular report built from them.

use std::io::Write;
use std::path::Path;

use crate::data::ValidationSet;
use crate::error::{Error, Result};
use crate::model::ProxyModel;

/// Raw validation figures; MAEs are ratios, residuals in response units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationFigures {
    /// MAE normalized by `Σ|y|`.
    pub mae_rel: f64,
    /// MAE normalized by `Σ|a|`, when asset values are present.
    pub mae_asset: Option<f64>,
    /// Mean residual `y − f̂`.
    pub res: f64,
    /// MAE of the differences to the base point.
    pub mae0: Option<f64>,
    pub res0: Option<f64>,
    /// `y⁰ − f̂(x⁰)`, evaluated as `res − res0`.
    pub res_base: Option<f64>,
}

pub fn compute_figures(model: &ProxyModel, vset: &ValidationSet) -> Result<ValidationFigures> {
    if model.dim() != vset.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: vset.dim() });
    }
    let pts = vset.points();
    if pts.is_empty() {
        return Err(Error::pre("validation set has no points besides the base"));
    }
    let l = pts.len() as f64;
    let fhat: Vec<f64> = pts.iter().map(|p| model.predict(&p.scenario)).collect::<Result<_>>()?;
    let abs_err: f64 = pts.iter().zip(&fhat).map(|(p, f)| (p.y - f).abs()).sum();
    let normalized = |denom: f64| {
        if denom > 0.0 {
            Ok(abs_err / denom)
        } else {
            Err(Error::DegenerateNormalization)
        }
    };
    let mae_rel = normalized(pts.iter().map(|p| p.y.abs()).sum())?;
    let mae_asset = if vset.has_assets() {
        Some(normalized(pts.iter().map(|p| p.asset.unwrap_or(0.0).abs()).sum())?)
    } else {
        None
    };
    let res = pts.iter().zip(&fhat).map(|(p, f)| p.y - f).sum::<f64>() / l;
    let (mut mae0, mut res0, mut res_base) = (None, None, None);
    if let Some(b) = vset.base() {
        let f0 = model.predict(&b.scenario)?;
        let diffs: Vec<f64> = pts.iter().zip(&fhat).map(|(p, f)| (p.y - b.y) - (f - f0)).collect();
        let denom: f64 = pts.iter().map(|p| (p.y - b.y).abs()).sum();
        if !(denom > 0.0) {
            return Err(Error::DegenerateNormalization);
        }
        mae0 = Some(diffs.iter().map(|d| d.abs()).sum::<f64>() / denom);
        let r0 = diffs.iter().sum::<f64>() / l;
        res0 = Some(r0);
        res_base = Some(res - r0);
    }
    Ok(ValidationFigures { mae_rel, mae_asset, res, mae0, res0, res_base })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub set: String,
    pub figures: ValidationFigures,
}

/// One row per (model, set) pair, models outermost, input order preserved.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

pub fn report(models: &[(String, ProxyModel)], vsets: &[(String, ValidationSet)]) -> Result<Report> {
    let mut rows = Vec::with_capacity(models.len() * vsets.len());
    for (mname, m) in models {
        for (sname, s) in vsets {
            rows.push(ReportRow { model: mname.clone(), set: sname.clone(), figures: compute_figures(m, s)? });
        }
    }
    Ok(Report { rows })
}

fn pct(v: Option<f64>) -> String {
    v.map(|v| format!("{:.3}", 100.0 * v)).unwrap_or_default()
}

fn units(v: Option<f64>) -> String {
    // avoid printing "-0"
    v.map(|v| format!("{:.0}", v.round() + 0.0)).unwrap_or_default()
}

impl Report {
    /// MAEs in percent with three decimals, residuals rounded to units.
    pub fn to_csv(&self) -> String {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("csv is utf-8")
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(file).map_err(|e| Error::io(path, e))
    }

    fn write_to<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["model", "set", "mae", "mae_a", "res", "mae0", "res0", "res_base"])?;
        for r in &self.rows {
            let f = &r.figures;
            wr.write_record([
                r.model.clone(),
                r.set.clone(),
                pct(Some(f.mae_rel)),
                pct(f.mae_asset),
                units(Some(f.res)),
                pct(f.mae0),
                units(f.res0),
                units(f.res_base),
            ])?;
        }
        wr.flush()
    }
}
