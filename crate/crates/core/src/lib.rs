//! Extreme-strike implied volatility of basket options under lognormal,
//! time-changed and copula-coupled models, with quadrature and Monte Carlo
//! oracles to check the formulas against.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod black_scholes;
pub mod copula;
pub mod error;
pub mod lognormal_asymptotics;
pub mod numerics;
pub mod oracle;
pub mod simplex_opt;
pub mod timechange;

pub use black_scholes::{
    bs_price, bs_vega, implied_vol, implied_vol_from_log_price, iv_first_order, iv_zero_order, log_bs_price, psi,
    OptionKind, OptionQuote, PsiValue, Side,
};
pub use copula::{
    chi_numeric, nig_slope, tailwing_left, tailwing_right, ChiEstimate, CopulaFn, CopulaSpec, MarginalTailSpec,
    ReferenceTail,
};
pub use error::{Result, WingError};
pub use lognormal_asymptotics::{
    density_asymptotic, fractional_integral_f2, leftwing_iv_expansion, put_asymptotic, rightwing_iv_limit,
    two_asset_classify, two_asset_exceptional, two_asset_leftwing, BasketSpec, IvExpansion, PutAsymptoticCoeffs,
    Regime, RightWingLimit, TwoAssetRegime,
};
pub use oracle::{
    empirical_iv_curve, mc_basket_put, mc_timechanged_put, quad_put_2d, IvCurvePoint, IvSource, McEstimate,
    PointStatus, Pricer, QuadEstimate,
};
pub use simplex_opt::{inner_max_weights, min_quadratic_simplex, saddle_cstar, SaddlePoint, SimplexSolution};
pub use timechange::{
    martingale_drift, tail_sandwich_check, tc_leftwing_leading, tc_right_exponents, tc_rightwing_leading,
    SandwichReport, TcBasketSpec, TcWing, TimeChangeFamily, TimeChangeSpec,
};
