//! Fixtures shared by the benchmarks.

use basket_wing::timechange::{TcBasketSpec, TimeChangeSpec};
use basket_wing::BasketSpec;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two assets, `σ = (0.3, 0.2)`, `ρ = 0.3`, equal weights, `T = 1`.
pub fn reference_basket() -> BasketSpec {
    BasketSpec::two_asset(0.3, 0.2, 0.3, [0.5, 0.5], 1.0).expect("valid basket")
}

/// Random covariance with volatilities in `[0.1, 0.6]`.
pub fn random_cov(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l: DMatrix<f64> = DMatrix::from_fn(n, n, |i, j| if j <= i { rng.random_range(-1.0..1.0) } else { 0.0 });
    let mut c = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
    let d: Vec<f64> = (0..n).map(|i| c[(i, i)].sqrt()).collect();
    let vols: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..0.6)).collect();
    for i in 0..n {
        for j in 0..n {
            c[(i, j)] *= vols[i] * vols[j] / (d[i] * d[j]);
        }
    }
    c
}

pub fn equal_weights(n: usize) -> Vec<f64> {
    let mut w = vec![1.0 / n as f64; n];
    w[n - 1] = 1.0 - w[..n - 1].iter().sum::<f64>();
    w
}

/// Two drifting assets on a gamma clock with unit rate.
pub fn gamma_basket() -> TcBasketSpec {
    let cov = DMatrix::from_row_slice(2, 2, &[0.64, 0.192, 0.192, 0.36]);
    let tc = TimeChangeSpec::gamma(2.0, 1.0, 1.0).expect("valid clock");
    TcBasketSpec::new(vec![0.6, 0.4], cov, vec![-0.1, 0.05], tc).expect("valid basket")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_valid() {
        for n in [1, 3, 16] {
            let cov = random_cov(n, 5);
            assert!(cov.clone().cholesky().is_some());
            assert!((0..n).all(|i| (0.01 - 1e-12..=0.36 + 1e-12).contains(&cov[(i, i)])));
            assert!(BasketSpec::new(equal_weights(n), cov, 1.0).is_ok());
        }
        assert_eq!(gamma_basket().dim(), 2);
    }
}
