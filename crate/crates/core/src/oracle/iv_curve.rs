//! Implied-volatility curves extracted from the numerical pricers.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::black_scholes::{implied_vol_from_log_price, Side};
use crate::error::{domain, ensure_finite, Result};
use crate::lognormal_asymptotics::BasketSpec;
use crate::oracle::mc::{mc_basket, mc_timechanged, McEstimate, Payoff, Tilt};
use crate::oracle::quad::TwoAssetLaw;
use crate::timechange::TcBasketSpec;

/// Relative noise above which a price is not inverted (price below ten times its noise floor).
pub const NOISE_FLOOR_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IvSource {
    Mc,
    Quad,
    Asymptotic(String),
}

impl fmt::Display for IvSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IvSource::Mc => f.write_str("mc"),
            IvSource::Quad => f.write_str("quad"),
            IvSource::Asymptotic(name) => write!(f, "asymptotic-{name}"),
        }
    }
}

impl Serialize for IvSource {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum PointStatus {
    Ok,
    BelowNoiseFloor,
    InversionFailed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IvCurvePoint {
    pub k: f64,
    pub strike: f64,
    /// May underflow to zero deep in the wing; `log_price` does not.
    pub price: f64,
    pub log_price: f64,
    pub iv: Option<f64>,
    pub source: IvSource,
    pub status: PointStatus,
}

/// A numerical pricer for out-of-the-money options on a basket started at 1.
#[derive(Debug, Clone, Copy)]
pub enum Pricer<'a> {
    /// Conditional Gauss–Hermite quadrature; one or two assets.
    Quad {
        basket: &'a BasketSpec,
        nodes: usize,
    },
    Mc {
        basket: &'a BasketSpec,
        paths: usize,
        seed: u64,
        tilt: Tilt,
    },
    McTimeChanged {
        spec: &'a TcBasketSpec,
        paths: usize,
        seed: u64,
        tilt: Tilt,
    },
}

impl Pricer<'_> {
    pub fn source(&self) -> IvSource {
        match self {
            Pricer::Quad { .. } => IvSource::Quad,
            _ => IvSource::Mc,
        }
    }

    pub fn maturity(&self) -> f64 {
        match self {
            Pricer::Quad { basket, .. } | Pricer::Mc { basket, .. } => basket.maturity,
            Pricer::McTimeChanged { spec, .. } => spec.timechange.maturity,
        }
    }

    /// `(ln price, relative noise)` of the out-of-the-money option at `strike`.
    pub fn log_price(&self, strike: f64, side: Side) -> Result<(f64, f64)> {
        let payoff = match side {
            Side::Left => Payoff::Put(strike),
            Side::Right => Payoff::Call(strike),
        };
        let mc = |e: McEstimate| (e.log_value, e.rel_std_error);
        match *self {
            Pricer::Quad { basket, nodes } => {
                let law = TwoAssetLaw::from_basket(basket)?;
                let q = match side {
                    Side::Left => law.log_put(strike, nodes)?,
                    Side::Right => law.log_call(strike)?,
                };
                Ok((q.log_value, q.rel_discrepancy))
            }
            Pricer::Mc { basket, paths, seed, tilt } => Ok(mc(mc_basket(basket, payoff, tilt, paths, seed)?)),
            Pricer::McTimeChanged { spec, paths, seed, tilt } => {
                Ok(mc(mc_timechanged(spec, payoff, tilt, paths, seed)?))
            }
        }
    }
}

/// Prices `K = e^{∓k}` for each `k` and inverts to implied volatility.
///
/// Points whose price is within a factor [`NOISE_FLOOR_FACTOR`] of the
/// pricer's noise are reported unusable; inversion failures are recorded per
/// point.
pub fn empirical_iv_curve(pricer: &Pricer<'_>, k_grid: &[f64], side: Side) -> Result<Vec<IvCurvePoint>> {
    let t = pricer.maturity();
    let mut out = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        ensure_finite("k", k)?;
        if k <= 0.0 {
            return domain(format!("wing grid needs positive k, got {k}"));
        }
        let strike = side.strike(k);
        let (log_price, noise) = pricer.log_price(strike, side)?;
        let usable = log_price.is_finite() && noise.is_finite() && noise * NOISE_FLOOR_FACTOR < 1.0;
        let (iv, status) = if !usable {
            (None, PointStatus::BelowNoiseFloor)
        } else {
            match implied_vol_from_log_price(log_price, 1.0, strike, t, side.option_kind()) {
                Ok(v) => (Some(v), PointStatus::Ok),
                Err(e) => (None, PointStatus::InversionFailed(e.to_string())),
            }
        };
        out.push(IvCurvePoint { k, strike, price: log_price.exp(), log_price, iv, source: pricer.source(), status });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn single_asset_curve_is_flat() {
        let b = BasketSpec::new(vec![1.0], DMatrix::from_element(1, 1, 0.04), 1.0).unwrap();
        let grid: Vec<f64> = (2..=20).map(f64::from).collect();
        for side in [Side::Left, Side::Right] {
            let curve = empirical_iv_curve(&Pricer::Quad { basket: &b, nodes: 100 }, &grid, side).unwrap();
            for p in &curve {
                assert!((p.iv.unwrap() - 0.2).abs() < 1e-6, "{side:?} {p:?}");
            }
        }
    }

    #[test]
    fn mc_curve_marks_noise_instead_of_failing() {
        let b = BasketSpec::two_asset(0.3, 0.2, 0.0, [0.5, 0.5], 1.0).unwrap();
        let pricer = Pricer::Mc { basket: &b, paths: 2000, seed: 1, tilt: Tilt::None };
        let curve = empirical_iv_curve(&pricer, &[0.1, 1.0, 3.0], Side::Left).unwrap();
        assert_eq!(curve[0].status, PointStatus::Ok);
        assert_eq!(curve[2].status, PointStatus::BelowNoiseFloor);
        assert!(curve.iter().all(|p| p.iv.map_or(true, f64::is_finite)));
    }

    #[test]
    fn source_labels() {
        assert_eq!(IvSource::Asymptotic("left".into()).to_string(), "asymptotic-left");
        assert_eq!(IvSource::Quad.to_string(), "quad");
    }
}
