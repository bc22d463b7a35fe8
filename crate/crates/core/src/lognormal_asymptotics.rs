//! Small-strike asymptotics of the basket `S_T = Σ λ_i S^i_T` when the
//! assets follow a correlated multidimensional Black–Scholes model with
//! unit initial prices and zero rates.
//!
//! Covers the density and put-price expansions, the left-wing implied
//! volatility expansion, the right-wing limit, and the two-asset regimes.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{domain, ensure_finite, Result, WingError};
use crate::numerics::quad::log_integrate_half_line;
use crate::simplex_opt::{check_covariance, min_quadratic_simplex, SimplexSolution};

/// Tolerance on `|ρ − σ₂/σ₁|` for the exceptional two-asset configuration.
pub const EXCEPTIONAL_TOL: f64 = 1e-12;
/// Distance from the exceptional correlation inside which a conditioning warning is emitted.
pub const NEAR_EXCEPTIONAL_TOL: f64 = 1e-6;

/// A basket of `n` lognormal assets started at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BasketSpec {
    pub weights: Vec<f64>,
    pub cov: DMatrix<f64>,
    /// Principal square root of `cov`.
    pub sqrt_cov: DMatrix<f64>,
    pub maturity: f64,
    /// `μ_{i,T} = ln λ_i − b_ii·T/2`
    pub mu_t: Vec<f64>,
}

impl BasketSpec {
    pub fn new(weights: Vec<f64>, cov: DMatrix<f64>, maturity: f64) -> Result<Self> {
        check_covariance(&cov)?;
        let n = cov.nrows();
        if weights.len() != n {
            return domain(format!("{} weights for a {n}-asset covariance", weights.len()));
        }
        for &w in &weights {
            ensure_finite("weight", w)?;
            if w <= 0.0 {
                return domain(format!("weights must be positive, got {w}"));
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return domain(format!("weights must sum to 1, got {total}"));
        }
        ensure_finite("maturity", maturity)?;
        if maturity <= 0.0 {
            return domain(format!("maturity must be positive, got {maturity}"));
        }
        let eig = SymmetricEigen::new(cov.clone());
        let root = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
        let sqrt_cov = &eig.eigenvectors * root * eig.eigenvectors.transpose();
        let mu_t = (0..n).map(|i| weights[i].ln() - 0.5 * cov[(i, i)] * maturity).collect();
        Ok(Self { weights, cov, sqrt_cov, maturity, mu_t })
    }

    /// Two assets with volatilities `σ₁, σ₂` and correlation `ρ`.
    pub fn two_asset(sigma1: f64, sigma2: f64, rho: f64, weights: [f64; 2], maturity: f64) -> Result<Self> {
        let c = rho * sigma1 * sigma2;
        let cov = DMatrix::from_row_slice(2, 2, &[sigma1 * sigma1, c, c, sigma2 * sigma2]);
        Self::new(weights.to_vec(), cov, maturity)
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn simplex(&self) -> Result<SimplexSolution> {
        min_quadratic_simplex(&self.cov)
    }
}

/// Coefficients of the put expansion `δ₀·L^{δ₁}·e^{δ₂L}·e^{−δ₃L²}`, `L = ln(1/K)`,
/// together with the density constant `C_T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PutAsymptoticCoeffs {
    pub delta0: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub c_t: f64,
}

impl PutAsymptoticCoeffs {
    /// `ln` of the leading put expression at `strike ∈ (0, 1)`.
    pub fn log_price(&self, strike: f64) -> Result<f64> {
        let l = log_inverse_strike(strike)?;
        Ok(self.delta0.ln() + self.delta1 * l.ln() + self.delta2 * l - self.delta3 * l * l)
    }
}

fn log_inverse_strike(x: f64) -> Result<f64> {
    ensure_finite("strike", x)?;
    if !(x > 0.0 && x < 1.0) {
        return domain(format!("asymptotic formula needs a strike in (0, 1), got {x}"));
    }
    Ok(-x.ln())
}

/// Quantities of the simplex solution that enter every left-tail formula.
struct TailData {
    n_bar: usize,
    a_sum: f64,
    /// `ln(ΣĀ/Ā_k) + μ̄_{k,T}` for k in the support.
    shifts: Vec<f64>,
    a: Vec<f64>,
    b_bar: DMatrix<f64>,
}

fn tail_data(basket: &BasketSpec) -> Result<TailData> {
    let sol = basket.simplex()?;
    let a_sum = sol.a_sum();
    let shifts = sol.support.iter().zip(&sol.a_row_sums).map(|(&i, &a)| (a_sum / a).ln() + basket.mu_t[i]).collect();
    Ok(TailData { n_bar: sol.n_bar, a_sum, shifts, a: sol.a_row_sums, b_bar: sol.b_bar })
}

/// Checks the sign conditions that the left-tail expansion relies on and
/// logs a warning when they fail. Returns whether they hold.
pub fn positive_row_sums_check(basket: &BasketSpec) -> Result<bool> {
    let sol = basket.simplex()?;
    let ok = sol.n_bar >= 1 && sol.a_row_sums.iter().all(|&a| a > 0.0);
    if !ok {
        warn!("row sums of the reduced inverse covariance are not all positive; left-tail expansions may not apply");
    }
    Ok(ok)
}

fn density_constant(t: &TailData, maturity: f64) -> Result<f64> {
    let inv =
        t.b_bar.clone().try_inverse().ok_or_else(|| WingError::Matrix("reduced covariance is singular".into()))?;
    let det = t.b_bar.determinant();
    let prod: f64 = t.a.iter().product();
    if !(prod > 0.0) {
        return Err(WingError::Regime("density constant needs positive row sums".into()));
    }
    let quad =
        t.shifts.iter().enumerate().fold(0.0, |acc, (i, si)| {
            acc + t.shifts.iter().enumerate().map(|(j, sj)| inv[(i, j)] * si * sj).sum::<f64>()
        });
    let front = 1.0 / ((2.0 * std::f64::consts::PI * maturity).sqrt() * det.sqrt()) * (t.a_sum / prod).sqrt();
    Ok(front * (-quad / (2.0 * maturity)).exp())
}

/// `ln` of the leading small-`x` expression for the density of `S_T`.
pub fn log_density_asymptotic(basket: &BasketSpec, x: f64) -> Result<f64> {
    let l = log_inverse_strike(x)?;
    let t = tail_data(basket)?;
    let c_t = density_constant(&t, basket.maturity)?;
    let weighted: f64 = t.a.iter().zip(&t.shifts).map(|(a, s)| a * s).sum();
    let power = -1.0 + weighted / basket.maturity;
    Ok(c_t.ln() + 0.5 * (1.0 - t.n_bar as f64) * l.ln() - power * l - t.a_sum * l * l / (2.0 * basket.maturity))
}

/// Leading small-`x` expression for the density of `S_T`, `x ∈ (0, 1)`.
pub fn density_asymptotic(basket: &BasketSpec, x: f64) -> Result<f64> {
    log_density_asymptotic(basket, x).map(f64::exp)
}

pub fn put_coefficients(basket: &BasketSpec) -> Result<PutAsymptoticCoeffs> {
    let t = tail_data(basket)?;
    let c_t = density_constant(&t, basket.maturity)?;
    let tm = basket.maturity;
    let weighted: f64 = t.a.iter().zip(&t.shifts).map(|(a, s)| a * s).sum();
    Ok(PutAsymptoticCoeffs {
        delta0: c_t * tm * tm / (t.a_sum * t.a_sum),
        delta1: -(3.0 + t.n_bar as f64) / 2.0,
        delta2: -1.0 - weighted / tm,
        delta3: t.a_sum / (2.0 * tm),
        c_t,
    })
}

/// Leading small-strike put price and its coefficients.
///
/// The price underflows for very small strikes; use
/// [`PutAsymptoticCoeffs::log_price`] there.
pub fn put_asymptotic(basket: &BasketSpec, strike: f64) -> Result<(f64, PutAsymptoticCoeffs)> {
    let coeffs = put_coefficients(basket)?;
    Ok((coeffs.log_price(strike)?.exp(), coeffs))
}

/// `ln ∫_σ^∞ (τ − σ)·m(τ) dτ` given `ln m`.
pub fn log_fractional_integral_f2<F: Fn(f64) -> f64>(log_m: F, sigma: f64) -> Result<f64> {
    ensure_finite("sigma", sigma)?;
    if sigma <= 0.0 {
        return domain(format!("sigma must be positive, got {sigma}"));
    }
    // First panel on the scale where m changes by a factor e.
    let h = 1e-6 * sigma;
    let slope = (log_m(sigma + h) - log_m(sigma)) / h;
    let scale = if slope.is_finite() && slope < 0.0 { 1.0 / -slope } else { sigma.max(1.0) };
    log_integrate_half_line(
        |tau| {
            let d = tau - sigma;
            if d <= 0.0 {
                f64::NEG_INFINITY
            } else {
                d.ln() + log_m(tau)
            }
        },
        sigma,
        scale,
        1e-10,
    )
}

/// `∫_σ^∞ (τ − σ)·m(τ) dτ` for a positive function `m`.
pub fn fractional_integral_f2<F: Fn(f64) -> f64>(m: F, sigma: f64) -> Result<f64> {
    log_fractional_integral_f2(|tau| m(tau).ln(), sigma).map(f64::exp)
}

/// `I(K) ≈ c0 + c1/L + c_loglog·ln L/L²` with `L = ln(1/K)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IvExpansion {
    pub c0: f64,
    pub c1: f64,
    pub c_loglog: f64,
    /// Highest order kept by [`IvExpansion::evaluate`]: 0 for `c0` only, 1 adds `c1`, 2 adds `c_loglog`.
    pub order: u8,
}

impl IvExpansion {
    pub fn evaluate(&self, strike: f64) -> Result<f64> {
        self.evaluate_order(strike, self.order)
    }

    pub fn evaluate_order(&self, strike: f64, order: u8) -> Result<f64> {
        ensure_finite("strike", strike)?;
        if !(strike > 0.0 && strike < (-1.0f64).exp()) {
            return domain(format!("left-wing expansion needs 0 < K < 1/e, got {strike}"));
        }
        let l = -strike.ln();
        let inv = 1.0 / l;
        Ok(match order {
            0 => self.c0,
            1 => self.c0 + self.c1 * inv,
            _ => self.c0 + inv * (self.c1 + self.c_loglog * l.ln() * inv),
        })
    }
}

/// Left-wing implied-volatility expansion of the basket.
pub fn leftwing_iv_expansion(basket: &BasketSpec) -> Result<IvExpansion> {
    let sol = basket.simplex()?;
    if !sol.degenerate_indices().is_empty() {
        return Err(WingError::Regime(
            "minimizer sits on a change of support (exceptional configuration); use two_asset_exceptional".into(),
        ));
    }
    positive_row_sums_check(basket)?;
    let t = tail_data(basket)?;
    let tm = basket.maturity;
    let weighted: f64 = t.a.iter().zip(&t.shifts).map(|(a, s)| a * s).sum();
    let denom = 2.0 * t.a_sum.powf(1.5);
    Ok(IvExpansion {
        c0: 1.0 / t.a_sum.sqrt(),
        c1: -(2.0 * weighted + tm) / denom,
        c_loglog: -tm * (t.n_bar as f64 - 1.0) / denom,
        order: 2,
    })
}

/// Large-strike limit of the implied volatility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RightWingLimit {
    /// `max_k √b_kk`
    pub vol: f64,
    /// Largest `μ_{k,T}` among the maximal-variance assets.
    pub mu: f64,
    /// Number of assets attaining both maxima.
    pub multiplicity: usize,
}

pub fn rightwing_iv_limit(basket: &BasketSpec) -> RightWingLimit {
    let n = basket.dim();
    let var_max = (0..n).map(|i| basket.cov[(i, i)]).fold(f64::NEG_INFINITY, f64::max);
    let top: Vec<usize> = (0..n).filter(|&i| basket.cov[(i, i)] == var_max).collect();
    let mu = top.iter().map(|&i| basket.mu_t[i]).fold(f64::NEG_INFINITY, f64::max);
    let multiplicity = top.iter().filter(|&&i| basket.mu_t[i] == mu).count();
    RightWingLimit { vol: var_max.sqrt(), mu, multiplicity }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `ρ < σ₂/σ₁`: both assets stay in the support.
    Below,
    /// `ρ = σ₂/σ₁`
    Exceptional,
    /// `ρ > σ₂/σ₁`: only the low-volatility asset survives.
    Above,
}

/// Classification of a two-asset basket by the position of `ρ` relative to `σ₂/σ₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoAssetRegime {
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub regime: Regime,
    /// `σ₁σ₂√(1−ρ²)/√(σ₁²+σ₂²−2ρσ₁σ₂)`, only below the critical correlation.
    pub sigma_inf: Option<f64>,
    /// Weight of the first asset in the simplex minimizer, only below the critical correlation.
    pub v_bar: Option<f64>,
    /// `ln(1/ρ² − 1)`, when `ρ ≠ 0`.
    pub v2: Option<f64>,
}

impl TwoAssetRegime {
    /// `V_{1,T} = V₂ + μ_{1,T} − μ_{2,T}`.
    pub fn v1_t(&self, weights: [f64; 2], maturity: f64) -> Option<f64> {
        let mu1 = weights[0].ln() - 0.5 * self.sigma1 * self.sigma1 * maturity;
        let mu2 = weights[1].ln() - 0.5 * self.sigma2 * self.sigma2 * maturity;
        self.v2.map(|v2| v2 + mu1 - mu2)
    }
}

pub fn two_asset_classify(sigma1: f64, sigma2: f64, rho: f64) -> Result<TwoAssetRegime> {
    for (name, v) in [("sigma1", sigma1), ("sigma2", sigma2), ("rho", rho)] {
        ensure_finite(name, v)?;
    }
    if !(sigma2 > 0.0) {
        return domain(format!("sigma2 must be positive, got {sigma2}"));
    }
    if sigma1 < sigma2 {
        return domain(format!("assets must be ordered with sigma1 >= sigma2, got {sigma1} < {sigma2}"));
    }
    if !(rho > -1.0 && rho < 1.0) {
        return domain(format!("correlation must lie in (-1, 1), got {rho}"));
    }
    let critical = sigma2 / sigma1;
    let gap = rho - critical;
    let regime = if gap.abs() < EXCEPTIONAL_TOL {
        Regime::Exceptional
    } else if gap < 0.0 {
        Regime::Below
    } else {
        Regime::Above
    };
    if regime != Regime::Exceptional && gap.abs() < NEAR_EXCEPTIONAL_TOL {
        warn!("correlation {rho} is within {gap:e} of the critical value {critical}; expansion coefficients are ill-conditioned");
    }
    let (sigma_inf, v_bar) = if regime == Regime::Below {
        let d = sigma1 * sigma1 + sigma2 * sigma2 - 2.0 * rho * sigma1 * sigma2;
        (Some(sigma1 * sigma2 * (1.0 - rho * rho).sqrt() / d.sqrt()), Some(sigma2 * (sigma2 - rho * sigma1) / d))
    } else {
        (None, None)
    };
    let v2 = (rho != 0.0).then(|| (1.0 / (rho * rho) - 1.0).ln());
    Ok(TwoAssetRegime { sigma1, sigma2, rho, regime, sigma_inf, v_bar, v2 })
}

fn check_two_weights(weights: [f64; 2], maturity: f64) -> Result<()> {
    if !(weights[0] > 0.0 && weights[1] > 0.0) || (weights[0] + weights[1] - 1.0).abs() > 1e-12 {
        return domain(format!("weights must be positive and sum to 1, got {weights:?}"));
    }
    ensure_finite("maturity", maturity)?;
    if maturity <= 0.0 {
        return domain(format!("maturity must be positive, got {maturity}"));
    }
    Ok(())
}

/// Closed-form two-asset left-wing expansion for the regular regimes.
pub fn two_asset_leftwing(regime: &TwoAssetRegime, weights: [f64; 2], maturity: f64) -> Result<IvExpansion> {
    check_two_weights(weights, maturity)?;
    let (s1, s2) = (regime.sigma1, regime.sigma2);
    match regime.regime {
        Regime::Exceptional => {
            Err(WingError::Regime("exceptional two-asset configuration; use two_asset_exceptional".into()))
        }
        Regime::Above => Ok(IvExpansion { c0: s2, c1: -s2 * weights[1].ln(), c_loglog: 0.0, order: 2 }),
        Regime::Below => {
            let si = regime.sigma_inf.expect("set below the critical correlation");
            let v = regime.v_bar.expect("set below the critical correlation");
            let first = (weights[0].ln() - 0.5 * s1 * s1 * maturity - v.ln()) * v;
            let second = (weights[1].ln() - 0.5 * s2 * s2 * maturity - (1.0 - v).ln()) * (1.0 - v);
            Ok(IvExpansion {
                c0: si,
                c1: -si * (0.5 * maturity * si * si + first + second),
                c_loglog: -0.5 * maturity * si.powi(3),
                order: 2,
            })
        }
    }
}

/// Put envelope and leading implied volatility at the critical correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalWing {
    /// `ln P̃(K)`
    pub log_envelope: f64,
    pub iv_leading: f64,
}

impl ExceptionalWing {
    pub fn envelope(&self) -> f64 {
        self.log_envelope.exp()
    }
}

/// `ln P̃(K)` for the exceptional two-asset basket, `K < e⁻³`.
pub fn two_asset_exceptional(
    regime: &TwoAssetRegime,
    weights: [f64; 2],
    maturity: f64,
    strike: f64,
) -> Result<ExceptionalWing> {
    check_two_weights(weights, maturity)?;
    if regime.regime != Regime::Exceptional {
        return Err(WingError::Regime(format!("regime is {:?}, not exceptional", regime.regime)));
    }
    ensure_finite("strike", strike)?;
    if !(strike > 0.0 && strike < (-3.0f64).exp()) {
        return domain(format!("exceptional envelope needs 0 < K < e^-3, got {strike}"));
    }
    let (s1, s2) = (regime.sigma1, regime.sigma2);
    let d = maturity * (s1 * s1 - s2 * s2);
    if !(d > 0.0) {
        return Err(WingError::Regime("exceptional envelope needs sigma1 > sigma2".into()));
    }
    let v1 = regime.v1_t(weights, maturity).expect("rho > 0 at the critical correlation");
    let mu2 = weights[1].ln() - 0.5 * s2 * s2 * maturity;
    let l = -strike.ln();
    let l2 = l.ln();
    let l3 = l2.ln();
    let log_envelope = (-1.0 - mu2 / (maturity * s2 * s2)) * l + (-v1 / d - 2.0) * l2 + (v1 / d - 0.5) * l3
        - l * l / (2.0 * maturity * s2 * s2)
        - l2 * l2 / (2.0 * d)
        - l3 * l3 / (2.0 * d)
        + l2 * l3 / d;
    Ok(ExceptionalWing { log_envelope, iv_leading: s2 })
}
