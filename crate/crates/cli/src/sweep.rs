//! Asymptotic and oracle implied-volatility sweeps over the configured grid.

use basket_wing::oracle::mc::Tilt;
use basket_wing::timechange::{tc_leftwing_leading, tc_right_exponents, tc_rightwing_leading};
use basket_wing::{
    empirical_iv_curve, leftwing_iv_expansion, rightwing_iv_limit, tailwing_left, tailwing_right, two_asset_classify,
    two_asset_exceptional, BasketSpec, IvCurvePoint, PointStatus, Pricer, Regime, Side, TwoAssetRegime,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{LoadedConfig, Model, OracleConfig};
use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub k: f64,
    pub strike: f64,
    pub iv_asymptotic: Option<f64>,
    pub iv_oracle: Option<f64>,
    pub abs_error: Option<f64>,
    pub source: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointDiagnostic {
    pub k: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub asymptotic_error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<IvCurvePoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extra: Option<Value>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub command: String,
    pub model: String,
    pub side: Side,
    pub regime: String,
    pub formula: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_star: Option<f64>,
    pub coefficients: Value,
    pub oracle: String,
    pub notes: Vec<String>,
    pub failures: Vec<String>,
    pub points: Vec<PointDiagnostic>,
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub rows: Vec<Row>,
    pub summary: Summary,
}

impl Sweep {
    pub fn failed(&self) -> bool {
        !self.summary.failures.is_empty()
    }

    /// `(k, |asymptotic − oracle|)` over the points where both exist.
    pub fn errors(&self) -> Vec<(f64, f64)> {
        self.rows.iter().filter_map(|r| r.abs_error.map(|e| (r.k, e))).collect()
    }
}

/// Asymptotic implied volatility at `k`, with optional per-point extras.
type WingFn = Box<dyn Fn(f64) -> basket_wing::Result<(f64, Option<Value>)>>;

/// The asymptotic formula selected for a model and side.
struct Formula {
    name: &'static str,
    regime: String,
    c0: Option<f64>,
    c_star: Option<f64>,
    coefficients: Value,
    eval: WingFn,
}

fn constant(v: f64) -> WingFn {
    Box::new(move |_| Ok((v, None)))
}

/// `(σ₁, σ₂, ρ, weights)` ordered so that `σ₁ ≥ σ₂`.
fn ordered_pair(b: &BasketSpec) -> (f64, f64, f64, [f64; 2]) {
    let (s0, s1) = (b.cov[(0, 0)].sqrt(), b.cov[(1, 1)].sqrt());
    let rho = (b.cov[(0, 1)] / (s0 * s1)).clamp(-1.0, 1.0);
    if s0 >= s1 {
        (s0, s1, rho, [b.weights[0], b.weights[1]])
    } else {
        (s1, s0, rho, [b.weights[1], b.weights[0]])
    }
}

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::Below => "below",
        Regime::Exceptional => "exceptional",
        Regime::Above => "above",
    }
}

fn bs_left(b: &BasketSpec, grid: &[f64]) -> Result<Formula, CliError> {
    let two: Option<TwoAssetRegime> = if b.dim() == 2 {
        let (s1, s2, rho, _) = ordered_pair(b);
        Some(two_asset_classify(s1, s2, rho)?)
    } else {
        None
    };
    if let Some(r) = two.filter(|r| r.regime == Regime::Exceptional) {
        let (.., w) = ordered_pair(b);
        let t = b.maturity;
        let sigma2 = r.sigma2;
        return Ok(Formula {
            name: "exceptional",
            regime: "exceptional".into(),
            c0: Some(sigma2),
            c_star: None,
            coefficients: json!({ "sigma1": r.sigma1, "sigma2": sigma2, "rho": r.rho, "v2": r.v2 }),
            eval: Box::new(move |k| {
                // the envelope is only defined for K < e^-3
                let extra = if k > 3.0 {
                    let wing = two_asset_exceptional(&r, w, t, (-k).exp())?;
                    Some(json!({ "log_envelope": wing.log_envelope }))
                } else {
                    None
                };
                Ok((sigma2, extra))
            }),
        });
    }
    if let Some(k) = grid.iter().find(|k| **k <= 1.0) {
        return Err(CliError::Config(format!("left-wing expansion needs k > 1 (K < 1/e), grid has {k}")));
    }
    let exp = leftwing_iv_expansion(b)?;
    let sol = b.simplex()?;
    let regime = match two {
        Some(r) => regime_name(r.regime).to_string(),
        None => "general".into(),
    };
    Ok(Formula {
        name: "leftwing",
        regime,
        c0: Some(exp.c0),
        c_star: None,
        coefficients: json!({
            "c0": exp.c0,
            "c1": exp.c1,
            "c_loglog": exp.c_loglog,
            "w_bar": sol.w_bar.as_slice(),
            "support": sol.support,
        }),
        eval: Box::new(move |k| Ok((exp.evaluate((-k).exp())?, None))),
    })
}

fn formula(model: &Model, side: Side, grid: &[f64], notes: &mut Vec<String>) -> Result<Formula, CliError> {
    Ok(match (model, side) {
        (Model::Bs(b), Side::Left) => bs_left(b, grid)?,
        (Model::Bs(b), Side::Right) => {
            let lim = rightwing_iv_limit(b);
            Formula {
                name: "rightwing",
                regime: "general".into(),
                c0: Some(lim.vol),
                c_star: None,
                coefficients: json!({ "vol": lim.vol, "mu": lim.mu, "multiplicity": lim.multiplicity }),
                eval: constant(lim.vol),
            }
        }
        (Model::Timechange(spec), Side::Left) => {
            let wing = tc_leftwing_leading(spec)?;
            Formula {
                name: "timechange-left",
                regime: "timechange".into(),
                c0: None,
                c_star: Some(wing.c),
                coefficients: json!({ "coefficient": wing.coefficient, "c": wing.c, "theta": spec.timechange.theta() }),
                eval: Box::new(move |k| Ok((wing.coefficient * k.sqrt(), None))),
            }
        }
        (Model::Timechange(spec), Side::Right) => {
            let wing = tc_rightwing_leading(spec)?;
            Formula {
                name: "timechange-right",
                regime: "timechange".into(),
                c0: None,
                c_star: None,
                coefficients: json!({
                    "coefficient": wing.coefficient,
                    "c_min": wing.c,
                    "exponents": tc_right_exponents(spec),
                }),
                eval: Box::new(move |k| Ok((wing.coefficient * k.sqrt(), None))),
            }
        }
        (Model::Copula(c), Side::Left) => {
            let chi = c.copula.chi(&c.marginals.eta)?;
            let (marginals, t) = (c.marginals.clone(), c.maturity);
            Formula {
                name: "copula-left",
                regime: "copula".into(),
                c0: None,
                c_star: None,
                coefficients: json!({ "chi": chi, "eta": marginals.eta, "reference": marginals.reference }),
                eval: Box::new(move |k| Ok((tailwing_left(&marginals, chi, t, k)?, None))),
            }
        }
        (Model::Copula(c), Side::Right) => {
            let slopes = c
                .right_slopes
                .clone()
                .ok_or_else(|| CliError::Config("copula right wing needs `right_slopes`".into()))?;
            notes.push("copula ignored: the right wing depends only on the marginal slopes".into());
            let t = c.maturity;
            let s = slopes.clone();
            Formula {
                name: "copula-right",
                regime: "copula".into(),
                c0: None,
                c_star: None,
                coefficients: json!({ "right_slopes": slopes }),
                eval: Box::new(move |k| Ok((tailwing_right(&s, t, k)?, None))),
            }
        }
    })
}

fn tilt(on: bool) -> Tilt {
    if on {
        Tilt::Auto
    } else {
        Tilt::None
    }
}

fn pricer<'a>(model: &'a Model, oracle: &OracleConfig, notes: &mut Vec<String>) -> Option<Pricer<'a>> {
    match (model, *oracle) {
        (_, OracleConfig::None) => None,
        (Model::Bs(basket), OracleConfig::Quad { nodes }) => Some(Pricer::Quad { basket, nodes }),
        (Model::Bs(basket), OracleConfig::Mc { paths, seed, tilt: t }) => {
            Some(Pricer::Mc { basket, paths, seed, tilt: tilt(t) })
        }
        (Model::Timechange(spec), OracleConfig::Mc { paths, seed, tilt: t }) => {
            Some(Pricer::McTimeChanged { spec, paths, seed, tilt: tilt(t) })
        }
        (Model::Copula(_), _) => {
            notes.push("oracle ignored: the copula model has no pricer".into());
            None
        }
        // rejected when the config is loaded
        (Model::Timechange(_), OracleConfig::Quad { .. }) => None,
    }
}

pub fn run(cfg: &LoadedConfig, side: Side) -> Result<Sweep, CliError> {
    let grid = &cfg.run.k_grid;
    let mut notes = Vec::new();
    let f = formula(&cfg.model, side, grid, &mut notes)?;
    let pricer = pricer(&cfg.model, &cfg.run.oracle, &mut notes);
    let oracle: Option<Vec<IvCurvePoint>> = match &pricer {
        Some(p) => Some(empirical_iv_curve(p, grid, side)?),
        None => None,
    };

    let mut rows = Vec::with_capacity(grid.len());
    let mut points = Vec::with_capacity(grid.len());
    let mut failures = Vec::new();
    for (i, &k) in grid.iter().enumerate() {
        let (iv_asymptotic, extra, asymptotic_error) = match (f.eval)(k) {
            Ok((v, extra)) if v.is_finite() => (Some(v), extra, None),
            Ok((v, _)) => (None, None, Some(format!("asymptotic value {v} is not finite"))),
            Err(e) => (None, None, Some(e.to_string())),
        };
        if let Some(e) = &asymptotic_error {
            failures.push(format!("k = {k}: {e}"));
        }
        let point = oracle.as_ref().map(|o| o[i].clone());
        if let Some(PointStatus::InversionFailed(e)) = point.as_ref().map(|p| &p.status) {
            failures.push(format!("k = {k}: oracle inversion failed: {e}"));
        }
        let iv_oracle = point.as_ref().and_then(|p| p.iv);
        let abs_error = iv_asymptotic.zip(iv_oracle).map(|(a, o)| (a - o).abs());
        let source = match &point {
            Some(p) if iv_oracle.is_some() => p.source.to_string(),
            _ => format!("asymptotic-{}", f.name),
        };
        rows.push(Row { k, strike: side.strike(k), iv_asymptotic, iv_oracle, abs_error, source });
        points.push(PointDiagnostic { k, asymptotic_error, oracle: point, extra });
    }

    let summary = Summary {
        command: match side {
            Side::Left => "leftwing".into(),
            Side::Right => "rightwing".into(),
        },
        model: cfg.run.model.name().into(),
        side,
        regime: f.regime,
        formula: f.name.into(),
        c0: f.c0,
        c_star: f.c_star,
        coefficients: f.coefficients,
        oracle: cfg.run.oracle.name().into(),
        notes,
        failures,
        points,
    };
    Ok(Sweep { rows, summary })
}
