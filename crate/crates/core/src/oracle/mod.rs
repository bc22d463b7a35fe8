//! Numerical pricing oracles used to validate the asymptotic formulas.

pub mod iv_curve;
pub mod mc;
pub mod quad;

pub use iv_curve::{empirical_iv_curve, IvCurvePoint, IvSource, PointStatus, Pricer};
pub use mc::{
    mc_basket, mc_basket_call, mc_basket_forward, mc_basket_put, mc_timechanged, mc_timechanged_put, McEstimate,
    Payoff, Tilt, BLOCK_SIZE,
};
pub use quad::{quad_call_2d, quad_cdf_2d, quad_density_2d, quad_put_2d, QuadEstimate, TwoAssetLaw};
