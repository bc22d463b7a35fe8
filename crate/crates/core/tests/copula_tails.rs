use basket_wing::copula::*;
use basket_wing::numerics::special::log_norm_cdf;
use basket_wing::oracle::TwoAssetLaw;
use basket_wing::*;
use nalgebra::DMatrix;

#[test]
fn sum_tail_against_marginal_tails() {
    // lognormal margins with reference ln G(x) = −ln²x/2 give α_i = 1/σ_i²
    for (s1, s2, rho) in [(0.3f64, 0.2f64, 0.0f64), (0.3, 0.3, 0.0), (0.25, 0.2, 0.4)] {
        let law = TwoAssetLaw::new([0.5, 0.5], [s1, s2], rho, 1.0).unwrap();
        let corr = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let chi = CopulaSpec::gaussian(corr).unwrap().chi(&[1.0 / (s1 * s1), 1.0 / (s2 * s2)]).unwrap();
        let mut prev = f64::INFINITY;
        for x in [1e-2f64, 1e-3, 1e-4, 1e-6] {
            let joint = law.log_cdf(x / 2.0, 200).unwrap().log_value;
            let marginal = |s: f64| log_norm_cdf((x.ln() + 0.5 * s * s) / s);
            let rel = (joint / marginal(s1).min(marginal(s2)) * chi - 1.0).abs();
            assert!(rel < prev, "x={x}: {rel}");
            prev = rel;
        }
        assert!(prev < 0.15, "{prev}");
    }
}

#[test]
fn chi_bounds_for_closed_forms() {
    let alphas: [&[f64]; 4] = [&[1.0, 1.0], &[2.0, 1.0], &[0.3, 1.7, 0.9], &[5.0, 0.01]];
    for a in alphas {
        let n = a.len();
        let lam = chi_archimedean(0.6, a).unwrap();
        assert!(lam > 0.0 && lam <= 1.0);
        let r = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.3 });
        let g = chi_gaussian(&r, a).unwrap();
        assert!(g > 0.0 && g <= 1.0 + 1e-15);
    }
    assert_eq!(chi_strong_dependence(), 1.0);
}

#[test]
fn strong_dependence_numeric_estimate() {
    let est = chi_numeric(comonotone_copula().as_ref(), &[1.0, 2.0], &[1e-2, 1e-4, 1e-6, 1e-8, 1e-10]).unwrap();
    assert!((est.estimate - 1.0).abs() < 0.01);
}

#[test]
fn strong_dependence_wing_is_the_fattest_margin() {
    let m = MarginalTailSpec::new(vec![0.7, 0.7], ReferenceTail::exponential(2.0), Side::Left).unwrap();
    let single = MarginalTailSpec::new(vec![0.7], ReferenceTail::exponential(2.0), Side::Left).unwrap();
    for k in [3.0, 10.0] {
        let a = tailwing_left(&m, chi_strong_dependence(), 1.0, k).unwrap();
        let b = tailwing_left(&single, 1.0, 1.0, k).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn nig_identity_correlation() {
    let c = 1.5;
    let slope = nig_slope(&DMatrix::identity(2, 2), &[2.0, 2.5], &[0.5, 1.0]).unwrap();
    assert!((slope - psi(2.0 * c).unwrap().value).abs() < 1e-14);
    assert!(nig_slope(&DMatrix::identity(2, 2), &[1.0, 1.0], &[1.5, 0.5]).is_err());
}

#[test]
fn right_wing_picks_the_smallest_slope() {
    for k in [1.0, 7.0] {
        assert_eq!(tailwing_right(&[3.0, 5.0], 1.0, k).unwrap(), tailwing_right(&[3.0], 1.0, k).unwrap());
    }
    assert!(tailwing_right(&[3.0, 0.0], 1.0, 1.0).is_err());
}
