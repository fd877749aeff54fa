//! Least-squares Monte Carlo proxy calibration.
//!
//! Proxy functions map risk-factor stresses to an economic variable. They are
//! calibrated on many noisy fitting points by an adaptive loop that grows a
//! monomial basis under the principle of marginality, with one of six
//! regression families: OLS, GLM, GAM, FGLS, MARS and kernel regression.
//! Fitted proxies are judged by out-of-sample validation figures.
//!
//! ```
//! use proxima::{calibrate, EngineConfig, Method, Restrictions};
//! use proxima::synthetic::{make_fitting_set, SyntheticSpec};
//! use proxima::sobol::sobol_points;
//!
//! let spec = SyntheticSpec::example(2, 1).unwrap();
//! let fit = make_fitting_set(&spec, &sobol_points(2, 500).unwrap(), 2).unwrap();
//! let config = EngineConfig::new("20-443".parse().unwrap(), Method::Ols);
//! let (proxy, trace) = calibrate(&fit, &config).unwrap();
//! assert!(trace.is_strictly_decreasing());
//! assert!(proxy.predict(&[0.0, 0.0]).unwrap().is_finite());
//! # let _: Restrictions = config.restrictions;
//! ```

pub mod basis;
pub mod data;
pub mod engine;
pub mod error;
pub mod fgls;
pub mod gam;
pub mod glm;
pub mod kernel;
pub mod linalg;
pub mod mars;
pub mod model;
pub mod ols;
pub mod sobol;
pub mod synthetic;
pub mod validation;

pub use basis::{BasisTerm, Restrictions};
pub use data::{FittingSet, ValidationSet};
pub use engine::{calibrate, EngineConfig, Method, SelectionMode, SelectionTrace};
pub use error::{Error, Result};
pub use model::{read_model, write_model, ProxyModel};
pub use validation::{compute_figures, report, ValidationFigures};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/data.md")]
    struct Data;
    #[doc = include_str!("../../../book/src/basis.md")]
    struct Basis;
    #[doc = include_str!("../../../book/src/regression.md")]
    struct Regression;
    #[doc = include_str!("../../../book/src/engine.md")]
    struct Engine;
    #[doc = include_str!("../../../book/src/validation.md")]
    struct Validation;
    #[doc = include_str!("../../../book/src/synthetic.md")]
    struct Synthetic;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
