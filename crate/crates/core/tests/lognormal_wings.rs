mod common;

use basket_wing::lognormal_asymptotics::{log_density_asymptotic, log_fractional_integral_f2, put_coefficients};
use basket_wing::numerics::special::log_norm_pdf;
use basket_wing::oracle::{
    empirical_iv_curve, mc_basket, quad_call_2d, quad_density_2d, quad_put_2d, Payoff, Pricer, Tilt, TwoAssetLaw,
};
use basket_wing::*;
use nalgebra::DMatrix;

fn reference() -> BasketSpec {
    BasketSpec::two_asset(0.3, 0.2, 0.0, [0.5, 0.5], 1.0).unwrap()
}

fn single(sigma: f64) -> BasketSpec {
    BasketSpec::new(vec![1.0], DMatrix::from_element(1, 1, sigma * sigma), 1.0).unwrap()
}

#[test]
fn single_asset_density_matches_lognormal() {
    let x: f64 = 1e-8;
    let s: f64 = 0.2;
    let exact = -x.ln() - s.ln() + log_norm_pdf((x.ln() + 0.5 * s * s) / s);
    let ratio = (log_density_asymptotic(&single(s), x).unwrap() - exact).exp();
    assert!((ratio - 1.0).abs() < 0.02, "{ratio}");
}

#[test]
fn two_asset_density_against_quadrature() {
    let b = reference();
    let q = quad_density_2d(&b, 1e-6, 200).unwrap();
    let ratio = (log_density_asymptotic(&b, 1e-6).unwrap() - q.log_value).exp();
    assert!((0.5..=2.0).contains(&ratio), "{ratio}");
}

#[test]
fn density_maturity_scaling() {
    let b = reference();
    let b4 = BasketSpec::new(b.weights.clone(), b.cov.clone(), 4.0).unwrap();
    // the simplex data does not see the maturity
    assert_eq!(b.simplex().unwrap().a_row_sums, b4.simplex().unwrap().a_row_sums);
    let x: f64 = 1e-5;
    let s: f64 = 0.2;
    let one4 = BasketSpec::new(vec![1.0], DMatrix::from_element(1, 1, s * s), 4.0).unwrap();
    let v = 2.0 * s;
    let exact = -x.ln() - v.ln() + log_norm_pdf((x.ln() + 0.5 * v * v) / v);
    assert!((log_density_asymptotic(&one4, x).unwrap() - exact).abs() < 1e-12 * exact.abs());
    assert!(density_asymptotic(&b, 1.0).is_err());
}

#[test]
fn put_sandwich_on_the_reference_basket() {
    let b = reference();
    let c = put_coefficients(&b).unwrap();
    let mut prev = f64::INFINITY;
    for k in [10.0f64, 11.0, 12.0, 13.0, 14.0] {
        let strike = (-k).exp();
        let q = quad_put_2d(&b, strike, 200).unwrap();
        let ratio = (q.log_value - c.log_price(strike).unwrap()).exp();
        assert!((0.8..=1.25).contains(&ratio), "k={k}: {ratio}");
        // trends toward 1
        assert!((ratio - 1.0).abs() < (prev - 1.0).abs(), "k={k}: {ratio} after {prev}");
        prev = ratio;
    }
}

#[test]
fn single_asset_put_asymptotics() {
    let b = single(0.2);
    let c = put_coefficients(&b).unwrap();
    assert!((c.delta3 - 1.0 / (2.0 * 0.04)).abs() < 1e-12);
    assert_eq!(c.delta1, -2.0);
    let strike = (-12.0f64).exp();
    let q = quad_put_2d(&b, strike, 200).unwrap();
    let ratio = (q.log_value - c.log_price(strike).unwrap()).exp();
    assert!((ratio - 1.0).abs() < 0.05, "{ratio}");
}

#[test]
fn delta1_depends_only_on_support_size() {
    let mut r = common::rng(21);
    for n in 1..=5 {
        let cov = common::random_spd(&mut r, n);
        let b = BasketSpec::new(common::random_weights(&mut r, n), cov, 1.0).unwrap();
        let sol = b.simplex().unwrap();
        let c = put_coefficients(&b).unwrap();
        assert_eq!(c.delta1, -(3.0 + sol.n_bar as f64) / 2.0);
        let e = leftwing_iv_expansion(&b).unwrap();
        assert!((c.delta3 - 1.0 / (2.0 * b.maturity * e.c0 * e.c0)).abs() <= 1e-10 * c.delta3);
    }
}

#[test]
fn fractional_integral_of_a_lognormal_tail() {
    // m(τ) = τ⁻³ p(1/τ) with p lognormal; F₂m·b′²/m → 1 with b′(σ) = ln σ/(Tv²σ)
    for (t, v) in [(1.0f64, 0.2f64), (2.0, 0.5)] {
        let log_m = |tau: f64| {
            -2.0 * tau.ln() - (v * (2.0 * std::f64::consts::PI * t).sqrt()).ln() - tau.ln().powi(2) / (2.0 * t * v * v)
        };
        let sigma = 20f64.exp();
        let f = log_fractional_integral_f2(log_m, sigma).unwrap();
        let b_prime = 20.0 / (t * v * v * sigma);
        let ratio = (f + 2.0 * b_prime.ln() - log_m(sigma)).exp();
        assert!((ratio - 1.0).abs() < 0.05, "T={t} v={v}: {ratio}");
    }
}

#[test]
fn left_wing_curve_rises_toward_c0() {
    let b = reference();
    let c0 = leftwing_iv_expansion(&b).unwrap().c0;
    let grid: Vec<f64> = (5..=30).map(f64::from).collect();
    let curve = empirical_iv_curve(&Pricer::Quad { basket: &b, nodes: 200 }, &grid, Side::Left).unwrap();
    let ivs: Vec<f64> = curve.iter().map(|p| p.iv.unwrap()).collect();
    // the curve approaches c0 from above, monotonically
    for w in ivs.windows(2) {
        assert!(w[1] < w[0]);
    }
    assert!(ivs.iter().all(|&v| v > c0));
    assert!(ivs.last().unwrap() - c0 < (ivs[0] - c0) / 5.0);
}

#[test]
fn regime_continuity_at_the_critical_correlation() {
    let r = two_asset_classify(0.3, 0.2, 0.2 / 0.3 - 1e-6).unwrap();
    assert_eq!(r.regime, Regime::Below);
    assert!((r.sigma_inf.unwrap() - 0.2).abs() < 1e-4);
    assert!(r.v_bar.unwrap().abs() < 1e-4);
}

#[test]
fn below_regime_agrees_with_general_expansion() {
    for rho in [-0.5, 0.0, 0.3, 0.6] {
        let r = two_asset_classify(0.3, 0.2, rho).unwrap();
        let closed = two_asset_leftwing(&r, [0.4, 0.6], 1.5).unwrap();
        let general = leftwing_iv_expansion(&BasketSpec::two_asset(0.3, 0.2, rho, [0.4, 0.6], 1.5).unwrap()).unwrap();
        assert!((closed.c0 - general.c0).abs() < 1e-10);
        assert!((closed.c1 - general.c1).abs() < 1e-10);
        assert!((closed.c_loglog - general.c_loglog).abs() < 1e-10);
    }
}

#[test]
fn exceptional_envelope_drives_the_wing_to_sigma2() {
    let r = two_asset_classify(0.3, 0.2, 0.2 / 0.3).unwrap();
    assert_eq!(r.regime, Regime::Exceptional);
    assert!((r.v2.unwrap() - 1.25f64.ln()).abs() < 1e-12);
    let law = TwoAssetLaw::new([0.5, 0.5], [0.3, 0.2], 0.2 / 0.3, 1.0).unwrap();
    let mut prev_gap = f64::INFINITY;
    for k in [20.0f64, 40.0, 80.0] {
        let strike = (-k).exp();
        let w = two_asset_exceptional(&r, [0.5, 0.5], 1.0, strike).unwrap();
        assert!(w.log_envelope.is_finite());
        assert_eq!(w.iv_leading, 0.2);
        let le = w.log_envelope;
        let iv = iv_zero_order(|_| le, strike, 1.0).unwrap();
        let gap = iv - 0.2;
        assert!(gap > 0.0 && gap < prev_gap, "k={k}: {gap}");
        prev_gap = gap;
        let q = law.log_put(strike, 200).unwrap();
        let iv_quad = implied_vol_from_log_price(q.log_value, 1.0, strike, 1.0, OptionKind::Put).unwrap();
        assert!((iv - iv_quad).abs() < 2.0 * (iv_quad - 0.2), "k={k}: {iv} vs {iv_quad}");
    }
}

#[test]
fn exceptional_envelope_overshoots_by_a_power_of_the_log_strike() {
    // ln(P̃/P) − ln L/(T(σ₁²−σ₂²)) stays bounded while ln(P̃/P) itself grows.
    let r = two_asset_classify(0.3, 0.2, 0.2 / 0.3).unwrap();
    let law = TwoAssetLaw::new([0.5, 0.5], [0.3, 0.2], 0.2 / 0.3, 1.0).unwrap();
    let power = 1.0 / (0.09 - 0.04);
    let mut residuals = Vec::new();
    for k in [20.0f64, 40.0, 80.0, 160.0] {
        let strike = (-k).exp();
        let env = two_asset_exceptional(&r, [0.5, 0.5], 1.0, strike).unwrap().log_envelope;
        let q = law.log_put(strike, 200).unwrap().log_value;
        residuals.push(env - q - power * k.ln());
    }
    let spread = residuals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - residuals.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 2.0, "{residuals:?}");
}

#[test]
fn right_wing_limit_and_oracle() {
    let b = reference();
    let lim = rightwing_iv_limit(&b);
    assert_eq!(lim.vol, 0.3);
    assert_eq!(lim.multiplicity, 1);
    let mut prev_gap = f64::INFINITY;
    for k in [4.0f64, 8.0, 16.0] {
        let strike = k.exp();
        let q = quad_call_2d(&b, strike).unwrap();
        let iv = implied_vol_from_log_price(q.log_value, 1.0, strike, 1.0, OptionKind::Call).unwrap();
        if k == 8.0 {
            let mc = mc_basket(&b, Payoff::Call(strike), Tilt::Auto, 2_000_000, 8).unwrap();
            let z = (mc.value - q.value()) / mc.std_error;
            assert!(z.abs() < 3.0, "mc {} vs quad {}: {z}", mc.value, q.value());
        }
        let gap = lim.vol - iv;
        // the approach to σ_max is slow: about 0.024 at K = e^8
        assert!(gap > 0.0 && gap < prev_gap, "k={k}: {gap}");
        prev_gap = gap;
    }
    assert!(prev_gap < 0.02);
}
