//! Zero-rate Black–Scholes pricing, implied-volatility inversion, the `ψ`
//! slope map, and the two model-free left-wing implied-volatility formulas.
//!
//! Deep-wing option prices routinely fall below `f64::MIN_POSITIVE`
//! (a put struck at `e^{-20}` on a 20% vol asset is worth about `e^{-5000}`),
//! so every pricing routine has a log-price twin and the inversion works on
//! log-prices throughout.

use serde::{Deserialize, Serialize};

use crate::error::{domain, ensure_finite, Result, WingError};
use crate::numerics::special::{log_norm_pdf, mills_ratio, norm_cdf};

/// Lower end of the implied-volatility search bracket.
pub const VOL_MIN: f64 = 1e-9;
/// Upper end of the implied-volatility search bracket.
pub const VOL_MAX: f64 = 10.0;
/// Absolute price tolerance of the inversion.
pub const PRICE_TOL: f64 = 1e-12;
/// Volatility tolerance of the inversion.
pub const VOL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

/// Wing of the smile: small strikes `K = e^{−k}` (puts) or large strikes `K = e^{k}` (calls).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Out-of-the-money option type on this side.
    pub fn option_kind(self) -> OptionKind {
        match self {
            Side::Left => OptionKind::Put,
            Side::Right => OptionKind::Call,
        }
    }

    /// Strike at distance `k ≥ 0` in log-moneyness.
    pub fn strike(self, k: f64) -> f64 {
        match self {
            Side::Left => (-k).exp(),
            Side::Right => k.exp(),
        }
    }
}

/// A single vanilla option quote at zero interest rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote {
    pub spot: f64,
    pub strike: f64,
    pub maturity: f64,
    pub price: f64,
    pub kind: OptionKind,
}

impl OptionQuote {
    pub fn new(spot: f64, strike: f64, maturity: f64, price: f64, kind: OptionKind) -> Result<Self> {
        for (name, v) in [("spot", spot), ("strike", strike), ("maturity", maturity), ("price", price)] {
            ensure_finite(name, v)?;
        }
        if spot <= 0.0 || strike <= 0.0 || maturity <= 0.0 {
            return domain("spot, strike and maturity must be positive");
        }
        let quote = Self { spot, strike, maturity, price, kind };
        let (lower, upper) = quote.bounds();
        if price < lower || price > upper {
            return Err(WingError::Arbitrage { price, lower, upper });
        }
        Ok(quote)
    }

    /// Static no-arbitrage bounds `(intrinsic, sup)` for the quote.
    pub fn bounds(&self) -> (f64, f64) {
        match self.kind {
            OptionKind::Put => ((self.strike - self.spot).max(0.0), self.strike),
            OptionKind::Call => ((self.spot - self.strike).max(0.0), self.spot),
        }
    }
}

/// `ln(price/spot)` for unit spot, strike ratio `x = K/S` and total standard deviation `s = σ√T`.
fn log_price_unit(x: f64, s: f64, kind: OptionKind) -> f64 {
    log_price_normalized(x.ln(), s, kind)
}

/// `ln(price/F)` of an option on a lognormal variable with mean `F`, given
/// `lx = ln(K/F)` and log standard deviation `s`.
pub(crate) fn log_price_normalized(lx: f64, s: f64, kind: OptionKind) -> f64 {
    if s == 0.0 {
        let x = lx.exp();
        let intrinsic = match kind {
            OptionKind::Put => (x - 1.0).max(0.0),
            OptionKind::Call => (1.0 - x).max(0.0),
        };
        return intrinsic.ln();
    }
    let d1 = (-lx + 0.5 * s * s) / s;
    let d2 = d1 - s;
    match kind {
        // P = xΦ(-d2) - Φ(-d1) = xφ(d2)·(M(d2) - M(d1)) with M the Mills ratio.
        OptionKind::Put if d2 > 0.0 => lx + log_norm_pdf(d2) + (mills_ratio(d2) - mills_ratio(d1)).ln(),
        // here lx >= -s²/2, so e^{-lx} is bounded while x itself may overflow
        OptionKind::Put => lx + (norm_cdf(-d2) - (-lx).exp() * norm_cdf(-d1)).ln(),
        // C = Φ(d1) - xΦ(d2) = φ(d1)·(M(-d1) - M(-d2)).
        OptionKind::Call if d1 < 0.0 => log_norm_pdf(d1) + (mills_ratio(-d1) - mills_ratio(-d2)).ln(),
        OptionKind::Call => (norm_cdf(d1) - lx.exp() * norm_cdf(d2)).ln(),
    }
}

/// `ln(vega/spot)` per unit of volatility.
fn log_vega_unit(x: f64, vol: f64, maturity: f64) -> f64 {
    let s = vol * maturity.sqrt();
    let d1 = (-x.ln() + 0.5 * s * s) / s;
    log_norm_pdf(d1) + 0.5 * maturity.ln()
}

fn check_pricing_inputs(spot: f64, strike: f64, vol: f64, maturity: f64) -> Result<()> {
    for (name, v) in [("spot", spot), ("strike", strike), ("vol", vol), ("maturity", maturity)] {
        ensure_finite(name, v)?;
    }
    if spot <= 0.0 || strike < 0.0 || maturity <= 0.0 || vol < 0.0 {
        return domain(format!(
            "need spot > 0, strike >= 0, maturity > 0, vol >= 0 (got {spot}, {strike}, {maturity}, {vol})"
        ));
    }
    Ok(())
}

/// Black–Scholes price at zero interest rate.
///
/// `vol = 0` gives the intrinsic value; `strike = 0` is the degenerate limit
/// (call worth `spot`, put worth nothing).
pub fn bs_price(spot: f64, strike: f64, vol: f64, maturity: f64, kind: OptionKind) -> Result<f64> {
    check_pricing_inputs(spot, strike, vol, maturity)?;
    if strike == 0.0 {
        return Ok(match kind {
            OptionKind::Call => spot,
            OptionKind::Put => 0.0,
        });
    }
    Ok(spot * log_price_unit(strike / spot, vol * maturity.sqrt(), kind).exp())
}

/// Natural logarithm of [`bs_price`]; finite even when the price underflows.
pub fn log_bs_price(spot: f64, strike: f64, vol: f64, maturity: f64, kind: OptionKind) -> Result<f64> {
    check_pricing_inputs(spot, strike, vol, maturity)?;
    if strike == 0.0 {
        return Ok(match kind {
            OptionKind::Call => spot.ln(),
            OptionKind::Put => f64::NEG_INFINITY,
        });
    }
    Ok(spot.ln() + log_price_unit(strike / spot, vol * maturity.sqrt(), kind))
}

pub fn bs_vega(spot: f64, strike: f64, vol: f64, maturity: f64) -> Result<f64> {
    check_pricing_inputs(spot, strike, vol, maturity)?;
    if strike == 0.0 || vol == 0.0 {
        return Ok(0.0);
    }
    Ok(spot * log_vega_unit(strike / spot, vol, maturity).exp())
}

/// Solves `ln price(σ) = target` for unit spot. Bisection-safeguarded Newton in σ.
fn invert_log_price(target: f64, x: f64, maturity: f64, kind: OptionKind) -> Result<f64> {
    let objective = |vol: f64| log_price_unit(x, vol * maturity.sqrt(), kind) - target;
    let (mut lo, mut hi) = (VOL_MIN, VOL_MAX);
    let f_hi = objective(hi);
    if f_hi < 0.0 {
        return Err(WingError::Boundary {
            price: target.exp(),
            reason: format!("implied volatility exceeds {VOL_MAX}"),
        });
    }
    if objective(lo) > 0.0 {
        return Err(WingError::Boundary { price: target.exp(), reason: format!("implied volatility below {VOL_MIN}") });
    }
    let mut vol = 0.5 * (lo + hi);
    // Start from the Brenner–Subrahmanyam-like guess when it is inside the bracket.
    let guess = (2.0 * x.ln().abs() / maturity).sqrt().max(0.1);
    if guess > lo && guess < hi {
        vol = guess;
    }
    for _ in 0..200 {
        let f = objective(vol);
        if f == 0.0 {
            return Ok(vol);
        }
        if f > 0.0 {
            hi = vol;
        } else {
            lo = vol;
        }
        let log_price = f + target;
        let log_slope = log_vega_unit(x, vol, maturity) - log_price;
        let slope = log_slope.exp();
        let newton = vol - f / slope;
        let next =
            if slope.is_finite() && slope > 1e-12 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        let step = (next - vol).abs();
        vol = next;
        if step <= 1e-15 * vol.max(1e-3) || hi - lo <= 1e-15 * hi {
            return Ok(vol);
        }
    }
    Err(WingError::Optimization("implied volatility iteration did not converge".into()))
}

/// Implied volatility of a quote.
///
/// The quote is first mapped to the out-of-the-money side by put–call
/// parity, then the log-price equation is solved.
pub fn implied_vol(quote: &OptionQuote) -> Result<f64> {
    let q = OptionQuote::new(quote.spot, quote.strike, quote.maturity, quote.price, quote.kind)?;
    let (lower, upper) = q.bounds();
    if q.price <= lower {
        return Err(WingError::Boundary {
            price: q.price,
            reason: "price at intrinsic value (zero volatility)".into(),
        });
    }
    if q.price >= upper {
        return Err(WingError::Boundary {
            price: q.price,
            reason: "price at upper bound (infinite volatility)".into(),
        });
    }
    let x = q.strike / q.spot;
    let (otm_price, otm_kind) = match q.kind {
        OptionKind::Put if x <= 1.0 => (q.price, OptionKind::Put),
        OptionKind::Put => (q.price - (q.strike - q.spot), OptionKind::Call),
        OptionKind::Call if x >= 1.0 => (q.price, OptionKind::Call),
        OptionKind::Call => (q.price - (q.spot - q.strike), OptionKind::Put),
    };
    if otm_price <= 0.0 {
        return Err(WingError::Boundary { price: q.price, reason: "time value lost to rounding".into() });
    }
    invert_log_price((otm_price / q.spot).ln(), x, q.maturity, otm_kind)
}

/// Implied volatility from the natural log of an option price.
///
/// Use this in the deep wings, where the price itself is not representable.
pub fn implied_vol_from_log_price(
    log_price: f64,
    spot: f64,
    strike: f64,
    maturity: f64,
    kind: OptionKind,
) -> Result<f64> {
    for (name, v) in [("log_price", log_price), ("spot", spot), ("strike", strike), ("maturity", maturity)] {
        ensure_finite(name, v)?;
    }
    if spot <= 0.0 || strike <= 0.0 || maturity <= 0.0 {
        return domain("spot, strike and maturity must be positive");
    }
    let x = strike / spot;
    let log_upper = match kind {
        OptionKind::Put => strike.ln(),
        OptionKind::Call => spot.ln(),
    };
    if log_price >= log_upper {
        let price = log_price.exp();
        let upper = log_upper.exp();
        return if log_price == log_upper {
            Err(WingError::Boundary { price, reason: "price at upper bound (infinite volatility)".into() })
        } else {
            Err(WingError::Arbitrage { price, lower: 0.0, upper })
        };
    }
    let in_the_money = match kind {
        OptionKind::Put => x > 1.0,
        OptionKind::Call => x < 1.0,
    };
    if in_the_money {
        let q = OptionQuote::new(spot, strike, maturity, log_price.exp(), kind)?;
        return implied_vol(&q);
    }
    invert_log_price(log_price - spot.ln(), x, maturity, kind)
}

/// The slope map `ψ(u) = 2 − 4(√(u²+u) − u)` together with its argument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiValue {
    pub u: f64,
    pub value: f64,
}

/// Evaluates `ψ(u)`.
///
/// For `u > 1` the equivalent form `2/(√(u+1)+√u)²` is used; the original
/// difference of square roots cancels catastrophically there.
pub fn psi(u: f64) -> Result<PsiValue> {
    ensure_finite("u", u)?;
    if u < 0.0 {
        return domain(format!("psi requires u >= 0, got {u}"));
    }
    let value = if u <= 1.0 {
        2.0 - 4.0 * ((u * u + u).sqrt() - u)
    } else {
        let r = (u + 1.0).sqrt() + u.sqrt();
        2.0 / (r * r)
    };
    Ok(PsiValue { u, value })
}

struct WingLogs {
    /// ln(1/P)
    l1: f64,
    /// ln(K/P)
    l2: f64,
}

fn wing_logs<F: Fn(f64) -> f64>(log_put: F, strike: f64, maturity: f64) -> Result<WingLogs> {
    ensure_finite("strike", strike)?;
    ensure_finite("maturity", maturity)?;
    if strike <= 0.0 || maturity <= 0.0 {
        return domain("strike and maturity must be positive");
    }
    let lp = log_put(strike);
    if lp.is_nan() || lp == f64::INFINITY {
        return domain(format!("put function returned {lp}"));
    }
    let lk = strike.ln();
    if lp >= lk {
        return domain(format!("put value e^{lp} must lie below the strike {strike}"));
    }
    let l2 = lk - lp;
    if l2 <= 1.0 {
        return domain(format!("log(K/P) = {l2} must exceed 1"));
    }
    Ok(WingLogs { l1: -lp, l2 })
}

fn two_root_formula(logs: &WingLogs, shift: f64, strike: f64, maturity: f64) -> Result<f64> {
    let half_loglog = 0.5 * logs.l2.ln();
    let a = logs.l1 - half_loglog + shift;
    let b = logs.l2 - half_loglog + shift;
    if a < 0.0 || b < 0.0 {
        return domain(format!("square-root arguments negative ({a}, {b})"));
    }
    // √a − √b = (a − b)/(√a + √b) with a − b = ln(1/K) exactly.
    let numerator = -strike.ln();
    Ok((2.0 / maturity).sqrt() * numerator / (a.sqrt() + b.sqrt()))
}

/// Zero-order left-wing formula: implied volatility from a put envelope `P̃ ≈ P`.
///
/// `log_put` returns `ln P̃(K)`; the formula is evaluated without its error term.
pub fn iv_zero_order<F: Fn(f64) -> f64>(log_put: F, strike: f64, maturity: f64) -> Result<f64> {
    let logs = wing_logs(log_put, strike, maturity)?;
    two_root_formula(&logs, 0.0, strike, maturity)
}

/// `ln B(K)` with `B = (√ln(1/P) − √ln(K/P)) / (2√π·√ln(1/P))`.
pub fn log_b_correction(log_put_value: f64, strike: f64) -> Result<f64> {
    let l1 = -log_put_value;
    let l2 = strike.ln() - log_put_value;
    if !(l1 > 0.0 && l2 > 0.0 && l1 > l2) {
        return domain(format!("B(K) undefined for ln(1/P) = {l1}, ln(K/P) = {l2}"));
    }
    let root_diff = (l1 - l2) / (l1.sqrt() + l2.sqrt());
    Ok(root_diff.ln() - (2.0 * std::f64::consts::PI.sqrt() * l1.sqrt()).ln())
}

/// First-order left-wing formula: the zero-order formula with `ln B(K)` added under both roots.
pub fn iv_first_order<F: Fn(f64) -> f64>(log_put: F, strike: f64, maturity: f64) -> Result<f64> {
    let logs = wing_logs(log_put, strike, maturity)?;
    let log_b = log_b_correction(-logs.l1, strike)?;
    two_root_formula(&logs, log_b, strike, maturity)
}
