//! `proxima generate|calibrate|validate --config <path> [--set k=v]... [--threads n]`

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use config::RunConfig;
use proxima::engine::{FglsVariant, KernelBasis, KernelSettings};
use proxima::fgls::FglsOptions;
use proxima::gam::{default_lambda_grid, GamCriterion, GamSettings};
use proxima::glm::{Family, IrlsOptions, Link};
use proxima::kernel::{BandwidthCriterion, KernelMode, KernelSpec, Shape};
use proxima::mars::{MarsSettings, Prune};
use proxima::sobol::SobolGenerator;
use proxima::synthetic::{make_fitting_set, make_validation_set, SyntheticSpec};
use proxima::{calibrate, read_model, report, EngineConfig, FittingSet, Method, ProxyModel, SelectionMode, ValidationSet};

#[derive(Parser)]
#[command(name = "proxima", version, about = "Least-squares Monte Carlo proxy calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration file (`section.key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set method=glm`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads for candidate evaluation.
    #[arg(long, env = "PROXIMA_THREADS", global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic fitting and validation sets.
    Generate,
    /// Run the adaptive calibration and write the model and its trace.
    Calibrate,
    /// Evaluate models on validation sets and write the report.
    Validate,
}

/// Errors in how the tool was invoked rather than in the computation.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

const KNOWN_KEYS: &[&str] = &[
    "method",
    "restriction",
    "seed",
    "selection.mode",
    "selection.stage_length",
    "selection.proportion",
    "paths.fitting",
    "paths.model",
    "paths.trace",
    "paths.report",
    "sets.*",
    "models.*",
    "glm.family",
    "glm.link",
    "glm.tol",
    "glm.max_iter",
    "gam.splines_per_smooth",
    "gam.lambda_grid",
    "gam.criterion",
    "gam.family",
    "gam.link",
    "fgls.m_max",
    "fgls.variant",
    "fgls.tol",
    "fgls.max_iter",
    "mars.k_max",
    "mars.t_min",
    "mars.degree",
    "mars.prune",
    "mars.knot_cap",
    "mars.penalty",
    "mars.family",
    "mars.link",
    "kernel.shape",
    "kernel.order",
    "kernel.mode",
    "kernel.selector",
    "kernel.bw_fraction",
    "kernel.basis",
    "synthetic.dim",
    "synthetic.points",
    "synthetic.inner",
    "synthetic.validation_points",
    "synthetic.validation_inner",
    "synthetic.base",
    "synthetic.asymmetry",
    "synthetic.kink",
    "synthetic.gamma",
    "synthetic.antithetic",
    "synthetic.antithetic_scale",
    "synthetic.asset_level",
    "synthetic.asset_tilt",
    "synthetic.scale.*",
];

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("proxima: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Usage("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    cfg.check_known(KNOWN_KEYS).map_err(|e| Usage(e.to_string()))?;
    match cli.command {
        Command::Generate => generate(&cfg),
        Command::Calibrate => calibrate_cmd(&cfg),
        Command::Validate => validate(&cfg),
    }
}

fn synthetic_spec(cfg: &RunConfig, dim: usize, seed: u64) -> Result<SyntheticSpec> {
    let mut spec = SyntheticSpec::example(dim, seed)?;
    if let Some(a) = cfg.parse("synthetic.asymmetry")? {
        spec.asymmetry = a;
    }
    if let Some(k) = cfg.list("synthetic.kink")? {
        spec.kink = k;
    }
    if let Some(g) = cfg.list("synthetic.gamma")? {
        spec.gamma = g;
    }
    spec.antithetic = cfg.parse_or("synthetic.antithetic", spec.antithetic)?;
    spec.antithetic_scale = cfg.parse_or("synthetic.antithetic_scale", spec.antithetic_scale)?;
    spec.asset_level = cfg.parse_or("synthetic.asset_level", spec.asset_level)?;
    spec.asset_tilt = cfg.parse_or("synthetic.asset_tilt", spec.asset_tilt)?;
    spec.check()?;
    Ok(spec)
}

fn generate(cfg: &RunConfig) -> Result<()> {
    let dim: usize = cfg.parse_or("synthetic.dim", 5)?;
    let seed: u64 = cfg.parse_or("seed", 1)?;
    let n: usize = cfg.parse_or("synthetic.points", 2000)?;
    let inner: usize = cfg.parse_or("synthetic.inner", 2)?;
    let l: usize = cfg.parse_or("synthetic.validation_points", 200)?;
    let v_inner: usize = cfg.parse_or("synthetic.validation_inner", 1000)?;
    let with_base: bool = cfg.parse_or("synthetic.base", true)?;
    let mut sobol = SobolGenerator::new(dim)?;
    let mut draw = |count: usize, scale: f64| -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| sobol.next_point().into_iter().map(|u| scale * (2.0 * u - 1.0)).collect())
            .collect()
    };
    let fitting_path = cfg.require_path("paths.fitting")?;
    let spec = synthetic_spec(cfg, dim, seed)?;
    let fit = make_fitting_set(&spec, &draw(n, 1.0), inner)?;
    fit.write_csv(&fitting_path)?;
    println!("wrote {} fitting points to {}", fit.len(), fitting_path.display());
    for (j, (label, path)) in cfg.section("sets").into_iter().enumerate() {
        let scale: f64 = cfg.parse_or(&format!("synthetic.scale.{label}"), 1.0)?;
        let vspec = SyntheticSpec { seed: seed.wrapping_add(1 + j as u64), ..spec.clone() };
        let set = make_validation_set(&vspec, &draw(l, scale), v_inner, with_base)?;
        let path = cfg.path(&path);
        set.write_csv(&path)?;
        println!("wrote {} validation points ({label}) to {}", set.points().len(), path.display());
    }
    Ok(())
}

fn parse_enum<T: std::str::FromStr<Err = proxima::Error>>(cfg: &RunConfig, key: &str, default: T) -> Result<T> {
    match cfg.get(key) {
        Some(v) => v.parse().map_err(|e: proxima::Error| anyhow!("invalid {key}: {e}")),
        None => Ok(default),
    }
}

fn irls_options(cfg: &RunConfig) -> Result<IrlsOptions> {
    let d = IrlsOptions::default();
    Ok(IrlsOptions { tol: cfg.parse_or("glm.tol", d.tol)?, max_iter: cfg.parse_or("glm.max_iter", d.max_iter)? })
}

fn fgls_options(cfg: &RunConfig) -> Result<FglsOptions> {
    let d = FglsOptions::default();
    Ok(FglsOptions { tol: cfg.parse_or("fgls.tol", d.tol)?, max_iter: cfg.parse_or("fgls.max_iter", d.max_iter)? })
}

fn build_method(cfg: &RunConfig) -> Result<Method> {
    let tag = cfg.get("method").ok_or_else(|| Usage("method required".into()))?;
    Ok(match tag {
        "ols" => Method::Ols,
        "glm" => Method::Glm {
            family: parse_enum(cfg, "glm.family", Family::Gaussian)?,
            link: parse_enum(cfg, "glm.link", Link::Identity)?,
            irls: irls_options(cfg)?,
        },
        "gam" => Method::Gam {
            settings: GamSettings {
                splines_per_smooth: cfg.parse_or("gam.splines_per_smooth", GamSettings::default().splines_per_smooth)?,
                family: parse_enum(cfg, "gam.family", Family::Gaussian)?,
                link: parse_enum(cfg, "gam.link", Link::Identity)?,
                irls: irls_options(cfg)?,
            },
            grid: cfg.list("gam.lambda_grid")?.unwrap_or_else(default_lambda_grid),
            criterion: parse_enum(cfg, "gam.criterion", GamCriterion::Gcv)?,
        },
        "fgls" => Method::Fgls {
            variant: parse_enum(cfg, "fgls.variant", FglsVariant::Type2)?,
            m_max: cfg.parse_or("fgls.m_max", 2)?,
            options: fgls_options(cfg)?,
        },
        "mars" => {
            let d = MarsSettings::default();
            Method::Mars(MarsSettings {
                k_max: cfg.parse_or("mars.k_max", d.k_max)?,
                t_min: cfg.parse_or("mars.t_min", d.t_min)?,
                degree: cfg.parse_or("mars.degree", d.degree)?,
                prune: parse_enum(cfg, "mars.prune", Prune::Backward)?,
                knot_cap: cfg.parse_or("mars.knot_cap", d.knot_cap)?,
                penalty: cfg.parse_or("mars.penalty", d.penalty)?,
                family: parse_enum(cfg, "mars.family", Family::Gaussian)?,
                link: parse_enum(cfg, "mars.link", Link::Identity)?,
            })
        }
        "kernel" => {
            let basis: KernelBasis = cfg.require("kernel.basis")?.parse()?;
            let shape: Shape = parse_enum(cfg, "kernel.shape", Shape::Gaussian)?;
            Method::Kernel(KernelSettings {
                basis,
                mode: parse_enum(cfg, "kernel.mode", KernelMode::Ll)?,
                spec: KernelSpec::new(shape, cfg.parse_or("kernel.order", 2)?)?,
                selector: parse_enum(cfg, "kernel.selector", BandwidthCriterion::Aic)?,
                bw_fraction: cfg.parse_or("kernel.bw_fraction", 1.0)?,
            })
        }
        other => {
            return Err(Usage(format!("unknown method `{other}` (expected ols, glm, gam, fgls, mars or kernel)")).into())
        }
    })
}

fn selection_mode(cfg: &RunConfig, method: &Method) -> Result<SelectionMode> {
    let default = if matches!(method, Method::Gam { .. }) { "dynamic" } else { "stepwise" };
    Ok(match cfg.get("selection.mode").unwrap_or(default) {
        "stepwise" => SelectionMode::Stepwise,
        "stagewise" => SelectionMode::Stagewise(cfg.parse_or("selection.stage_length", 5)?),
        "dynamic" => SelectionMode::Dynamic(cfg.parse_or("selection.proportion", 0.25)?),
        other => bail!("invalid selection.mode `{other}` (expected stepwise, stagewise or dynamic)"),
    })
}

fn trace_path(cfg: &RunConfig, model: &Path) -> PathBuf {
    match cfg.get("paths.trace") {
        Some(p) => cfg.path(p),
        None => {
            let mut s = model.as_os_str().to_owned();
            s.push(".trace.csv");
            PathBuf::from(s)
        }
    }
}

fn calibrate_cmd(cfg: &RunConfig) -> Result<()> {
    let method = build_method(cfg)?;
    let restrictions = cfg.require("restriction")?.parse()?;
    let mode = selection_mode(cfg, &method)?;
    let fitting = cfg.require_path("paths.fitting")?;
    let model_path = cfg.require_path("paths.model")?;
    let set = FittingSet::read_csv(&fitting)?;
    let config = EngineConfig { restrictions, method, mode };
    let (mut model, trace) = calibrate(&set, &config)?;
    if let ProxyModel::Kernel(k) = &mut model {
        let abs = fitting.canonicalize().with_context(|| format!("resolving {}", fitting.display()))?;
        k.fitting_path = Some(abs);
    }
    proxima::write_model(&model, &model_path)?;
    let tp = trace_path(cfg, &model_path);
    trace.write_csv(&tp)?;
    println!(
        "{} model with {} terms after {} iterations written to {} (trace {})",
        model.method(),
        model.term_count(),
        trace.records.len(),
        model_path.display(),
        tp.display()
    );
    Ok(())
}

fn validate(cfg: &RunConfig) -> Result<()> {
    let mut models = Vec::new();
    let listed = cfg.section("models");
    if listed.is_empty() {
        let p = cfg.require_path("paths.model")?;
        let label = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
        models.push((label, p));
    } else {
        models.extend(listed.into_iter().map(|(l, p)| (l, cfg.path(&p))));
    }
    let models: Vec<(String, ProxyModel)> = models
        .into_iter()
        .map(|(l, p)| read_model(&p).map(|m| (l, m)).with_context(|| format!("loading model {}", p.display())))
        .collect::<Result<_>>()?;
    let sets: Vec<(String, ValidationSet)> = cfg
        .section("sets")
        .into_iter()
        .map(|(l, p)| ValidationSet::read_csv(cfg.path(&p)).map(|s| (l, s)).map_err(anyhow::Error::from))
        .collect::<Result<_>>()?;
    if sets.is_empty() {
        bail!("at least one validation set (sets.<label> = <csv>) required");
    }
    let rep = report(&models, &sets)?;
    match cfg.get("paths.report") {
        Some(p) => {
            let p = cfg.path(p);
            rep.write_csv(&p)?;
            println!("wrote {} report rows to {}", rep.rows.len(), p.display());
        }
        None => print!("{}", rep.to_csv()),
    }
    Ok(())
}
