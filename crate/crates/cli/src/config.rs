//! Run configuration: TOML parsing and conversion into typed models.

use std::fs;
use std::path::{Path, PathBuf};

use basket_wing::copula::{
    clayton_copula, comonotone_copula, gaussian_copula_2d, gumbel_copula, independence_copula, CopulaFn, CopulaSpec,
    MarginalTailSpec, ReferenceTail,
};
use basket_wing::timechange::{TcBasketSpec, TimeChangeFamily, TimeChangeSpec};
use basket_wing::{BasketSpec, Side, WingError};
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::CliError;

pub const DEFAULT_NODES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Bs,
    Timechange,
    Copula,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Bs => "bs",
            ModelKind::Timechange => "timechange",
            ModelKind::Copula => "copula",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OracleConfig {
    #[default]
    None,
    Quad {
        #[serde(default = "default_nodes")]
        nodes: usize,
    },
    Mc {
        paths: usize,
        seed: u64,
        #[serde(default = "yes")]
        tilt: bool,
    },
}

impl OracleConfig {
    pub fn name(&self) -> &'static str {
        match self {
            OracleConfig::None => "none",
            OracleConfig::Quad { .. } => "quad",
            OracleConfig::Mc { .. } => "mc",
        }
    }
}

fn default_nodes() -> usize {
    DEFAULT_NODES
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasketConfig {
    pub weights: Vec<f64>,
    pub maturity: f64,
    #[serde(default)]
    pub cov: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub vols: Option<Vec<f64>>,
    #[serde(default)]
    pub correlation: Option<Vec<Vec<f64>>>,
    /// Per-asset drift `μ` of the time-changed model.
    #[serde(default)]
    pub drift: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DependenceConfig {
    Gaussian { correlation: Vec<Vec<f64>> },
    Archimedean { lambda: f64 },
    Gumbel { theta: f64 },
    Clayton { theta: f64 },
    StrongDependence { lambda_l: f64 },
    Independence,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CopulaConfig {
    pub maturity: f64,
    pub eta: Vec<f64>,
    pub reference: ReferenceTail,
    pub dependence: DependenceConfig,
    /// Right-tail slopes `−ln Ḡ_i(k)/k`; needed by `rightwing` only.
    #[serde(default)]
    pub right_slopes: Option<Vec<f64>>,
    #[serde(default = "yes")]
    pub moment_condition: bool,
    #[serde(default = "yes")]
    pub regular_variation: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelTables {
    #[serde(default)]
    basket: Option<BasketConfig>,
    #[serde(default)]
    timechange: Option<TimeChangeFamily>,
    #[serde(default)]
    copula: Option<CopulaConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub k_grid: Vec<f64>,
    #[serde(default)]
    pub oracle: OracleConfig,
    /// Stem of the output files; defaults to the config file name.
    #[serde(default)]
    pub output: Option<String>,
    /// Separate file holding the model tables, relative to the config.
    #[serde(default)]
    pub spec: Option<PathBuf>,
    #[serde(default)]
    basket: Option<BasketConfig>,
    #[serde(default)]
    timechange: Option<TimeChangeFamily>,
    #[serde(default)]
    copula: Option<CopulaConfig>,
}

/// Copula model: marginal tails plus dependence, with an evaluator when one is known.
#[derive(Clone)]
pub struct CopulaModel {
    pub maturity: f64,
    pub marginals: MarginalTailSpec,
    pub copula: CopulaSpec,
    pub dependence: DependenceConfig,
    pub evaluator: Option<CopulaFn>,
    pub right_slopes: Option<Vec<f64>>,
}

pub enum Model {
    Bs(BasketSpec),
    Timechange(TcBasketSpec),
    Copula(Box<CopulaModel>),
}

pub struct LoadedConfig {
    pub run: RunConfig,
    pub stem: String,
    pub model: Model,
}

fn config_err(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {msg}", path.display()))
}

/// Invalid model parameters are configuration errors, except for a violated
/// moment condition, which is a numeric failure of the model.
fn model_err(path: &Path, e: WingError) -> CliError {
    match e {
        WingError::Moment(m) => CliError::Numeric(format!("martingale condition θ > μ_i + b_ii/2 fails: {m}")),
        other => config_err(path, other),
    }
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, String> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(format!("{what} must be a nonempty square matrix"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl BasketConfig {
    fn covariance(&self) -> Result<DMatrix<f64>, String> {
        match (&self.cov, &self.vols, &self.correlation) {
            (Some(cov), None, None) => matrix(cov, "cov"),
            (None, Some(vols), corr) => {
                let n = vols.len();
                let r = match corr {
                    Some(c) => matrix(c, "correlation")?,
                    None => DMatrix::identity(n, n),
                };
                if r.nrows() != n {
                    return Err(format!("{n} vols for a {}x{} correlation", r.nrows(), r.nrows()));
                }
                Ok(DMatrix::from_fn(n, n, |i, j| vols[i] * vols[j] * r[(i, j)]))
            }
            _ => Err("basket needs either `cov` or `vols` (with optional `correlation`)".into()),
        }
    }
}

impl DependenceConfig {
    fn build(&self, dim: usize) -> Result<(CopulaSpec, Option<CopulaFn>), WingError> {
        let bivariate = dim == 2;
        Ok(match self {
            DependenceConfig::Gaussian { correlation } => {
                let r = matrix(correlation, "correlation").map_err(WingError::Domain)?;
                let eval = if bivariate { Some(gaussian_copula_2d(r[(0, 1)])?) } else { None };
                (CopulaSpec::gaussian(r)?, eval)
            }
            DependenceConfig::Archimedean { lambda } => (CopulaSpec::archimedean(*lambda)?, None),
            DependenceConfig::Gumbel { theta } => {
                let eval = gumbel_copula(*theta)?;
                (CopulaSpec::archimedean(1.0 / theta)?, Some(eval))
            }
            DependenceConfig::Clayton { theta } => {
                let eval = clayton_copula(*theta)?;
                (CopulaSpec::strong_dependence(2f64.powf(-1.0 / theta))?, Some(eval))
            }
            DependenceConfig::StrongDependence { lambda_l } => {
                (CopulaSpec::strong_dependence(*lambda_l)?, if bivariate { Some(comonotone_copula()) } else { None })
            }
            DependenceConfig::Independence => {
                (CopulaSpec::numeric(dim, independence_copula())?, Some(independence_copula()))
            }
        })
    }
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| config_err(path, e))?;
    toml::from_str(&text).map_err(|e| config_err(path, e))
}

pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let run: RunConfig = read_toml(path)?;
    check_grid(&run.k_grid).map_err(|m| config_err(path, m))?;

    let mut tables =
        ModelTables { basket: run.basket.clone(), timechange: run.timechange.clone(), copula: run.copula.clone() };
    if let Some(spec) = &run.spec {
        let spec_path = path.parent().unwrap_or(Path::new(".")).join(spec);
        let file: ModelTables = read_toml(&spec_path)?;
        tables.basket = tables.basket.or(file.basket);
        tables.timechange = tables.timechange.or(file.timechange);
        tables.copula = tables.copula.or(file.copula);
    }

    let need = |what: &str| config_err(path, format!("model `{}` needs a [{what}] table", run.model.name()));
    let model = match run.model {
        ModelKind::Bs => {
            let b = tables.basket.ok_or_else(|| need("basket"))?;
            if b.drift.is_some() {
                return Err(config_err(path, "`drift` applies to the time-changed model only"));
            }
            let cov = b.covariance().map_err(|m| config_err(path, m))?;
            Model::Bs(BasketSpec::new(b.weights, cov, b.maturity).map_err(|e| config_err(path, e))?)
        }
        ModelKind::Timechange => {
            let b = tables.basket.ok_or_else(|| need("basket"))?;
            let family = tables.timechange.ok_or_else(|| need("timechange"))?;
            let cov = b.covariance().map_err(|m| config_err(path, m))?;
            let drift = b.drift.unwrap_or_else(|| vec![0.0; cov.nrows()]);
            let tc = TimeChangeSpec::new(family, b.maturity).map_err(|e| config_err(path, e))?;
            Model::Timechange(TcBasketSpec::new(b.weights, cov, drift, tc).map_err(|e| model_err(path, e))?)
        }
        ModelKind::Copula => {
            let c = tables.copula.ok_or_else(|| need("copula"))?;
            let mut marginals =
                MarginalTailSpec::new(c.eta.clone(), c.reference, Side::Left).map_err(|e| config_err(path, e))?;
            marginals.moment_condition = c.moment_condition;
            marginals.regular_variation = c.regular_variation;
            let (copula, evaluator) = c.dependence.build(c.eta.len()).map_err(|e| config_err(path, e))?;
            Model::Copula(Box::new(CopulaModel {
                maturity: c.maturity,
                marginals,
                copula,
                dependence: c.dependence,
                evaluator,
                right_slopes: c.right_slopes,
            }))
        }
    };

    check_oracle(&run, &model).map_err(|m| config_err(path, m))?;
    let stem = match &run.output {
        Some(s) => s.clone(),
        None => path.file_stem().map_or("wing".into(), |s| s.to_string_lossy().into_owned()),
    };
    if stem.is_empty() || stem.contains(['/', '\\']) {
        return Err(config_err(path, format!("output stem `{stem}` must be a plain file name")));
    }
    Ok(LoadedConfig { run, stem, model })
}

fn check_grid(grid: &[f64]) -> Result<(), String> {
    if grid.is_empty() {
        return Err("k_grid must not be empty".into());
    }
    if grid.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
        return Err("k_grid entries must be positive and finite".into());
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err("k_grid must be strictly increasing".into());
    }
    Ok(())
}

fn check_oracle(run: &RunConfig, model: &Model) -> Result<(), String> {
    match (&run.oracle, model) {
        (OracleConfig::Quad { nodes }, Model::Bs(b)) => {
            if b.dim() > 2 {
                return Err(format!("quadrature oracle handles at most two assets, basket has {}", b.dim()));
            }
            if !(50..=400).contains(nodes) {
                return Err(format!("quadrature nodes must lie in 50..=400, got {nodes}"));
            }
        }
        (OracleConfig::Quad { .. }, Model::Timechange(_)) => {
            return Err("the time-changed model has no quadrature oracle; use kind = \"mc\"".into());
        }
        (OracleConfig::Mc { paths, .. }, _) if *paths < 1000 => {
            return Err(format!("Monte Carlo needs at least 1000 paths, got {paths}"));
        }
        _ => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basket(extra: &str) -> BasketConfig {
        toml::from_str(&format!("weights = [0.5, 0.5]\nmaturity = 1.0\n{extra}")).unwrap()
    }

    #[test]
    fn covariance_from_vols_and_correlation() {
        let b = basket("vols = [0.3, 0.2]\ncorrelation = [[1.0, 0.5], [0.5, 1.0]]");
        let c = b.covariance().unwrap();
        assert!((c[(0, 1)] - 0.03).abs() < 1e-15 && (c[(1, 1)] - 0.04).abs() < 1e-15);
        let diag = basket("vols = [0.3, 0.2]").covariance().unwrap();
        assert_eq!(diag[(0, 1)], 0.0);
        assert!(basket("").covariance().is_err());
        assert!(basket("cov = [[0.04]]\nvols = [0.2]").covariance().is_err());
        assert!(basket("cov = [[0.04, 0.0]]").covariance().is_err());
    }

    #[test]
    fn grid_rules() {
        assert!(check_grid(&[1.0, 2.0]).is_ok());
        assert!(check_grid(&[]).is_err());
        assert!(check_grid(&[2.0, 2.0]).is_err());
        assert!(check_grid(&[-1.0, 2.0]).is_err());
        assert!(check_grid(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn oracle_table() {
        #[derive(Deserialize)]
        struct W {
            oracle: OracleConfig,
        }
        let q: W = toml::from_str("[oracle]\nkind = \"quad\"").unwrap();
        assert_eq!(q.oracle, OracleConfig::Quad { nodes: DEFAULT_NODES });
        let m: W = toml::from_str("[oracle]\nkind = \"mc\"\npaths = 5000\nseed = 3").unwrap();
        assert_eq!(m.oracle, OracleConfig::Mc { paths: 5000, seed: 3, tilt: true });
        assert!(toml::from_str::<W>("[oracle]\nkind = \"mc\"\npaths = 5000").is_err());
    }

    #[test]
    fn clayton_and_gumbel_map_to_closed_forms() {
        let (spec, eval) = DependenceConfig::Clayton { theta: 1.0 }.build(2).unwrap();
        assert!(matches!(spec, CopulaSpec::StrongDependence { lambda_l } if (lambda_l - 0.5).abs() < 1e-15));
        assert!(eval.is_some());
        let (spec, _) = DependenceConfig::Gumbel { theta: 2.0 }.build(2).unwrap();
        assert!(matches!(spec, CopulaSpec::Archimedean { lambda } if lambda == 0.5));
        let identity = (0..3).map(|i| (0..3).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        let (_, eval) = DependenceConfig::Gaussian { correlation: identity }.build(3).unwrap();
        assert!(eval.is_none());
    }

    #[test]
    fn moment_errors_are_numeric() {
        let e = model_err(Path::new("x.toml"), WingError::Moment("θ too small".into()));
        assert_eq!(e.exit_code(), 3);
        assert_eq!(model_err(Path::new("x.toml"), WingError::Domain("bad".into())).exit_code(), 2);
    }
}
