//! Seeded Monte Carlo for lognormal and time-changed baskets.
//!
//! Paths are generated in fixed blocks of [`BLOCK_SIZE`], each block with its
//! own ChaCha stream derived from the master seed, and merged in block order;
//! results are bitwise reproducible for a given `(paths, seed)` whatever the
//! thread count. Gaussian draws come in antithetic pairs and the standard
//! error is computed over pair averages.
//!
//! With [`Tilt::Auto`] the sampling law is exponentially tilted toward the
//! tail that the payoff probes, and each path carries its likelihood ratio.
//! Sums are accumulated relative to a reference log-scale so that estimates
//! far below the smallest positive double keep their logarithm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, ensure_finite, Result};
use crate::lognormal_asymptotics::BasketSpec;
use crate::numerics::minimize::bisect;
use crate::simplex_opt::saddle_cstar;
use crate::timechange::{tc_right_exponents, TcBasketSpec};

/// Paths per block; each block draws from its own stream.
pub const BLOCK_SIZE: usize = 1 << 16;
pub const MIN_PATHS: usize = 1000;

/// A Monte Carlo estimate.
///
/// `value` and `std_error` may underflow for deep-tail payoffs; `log_value`
/// and `rel_std_error` stay accurate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub log_value: f64,
    pub rel_std_error: f64,
    pub paths: usize,
    pub seed: u64,
}

/// Quantity whose expectation is estimated; strikes are in units of the initial basket value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Payoff {
    Put(f64),
    Call(f64),
    /// `1{S_T ≤ K}`
    Digital(f64),
    /// The basket itself.
    Forward,
    /// Asset `i` alone, without its basket weight.
    Asset(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Tilt {
    #[default]
    None,
    /// Tilt toward the lower tail for puts and digitals, the upper tail for calls.
    Auto,
}

impl Payoff {
    fn validate(&self, n: usize) -> Result<()> {
        match *self {
            Payoff::Put(k) | Payoff::Call(k) | Payoff::Digital(k) => {
                ensure_finite("strike", k)?;
                if k <= 0.0 {
                    return domain(format!("strike must be positive, got {k}"));
                }
            }
            Payoff::Asset(i) if i >= n => return domain(format!("asset index {i} out of range for {n} assets")),
            _ => {}
        }
        Ok(())
    }

    /// `ln` of the payoff given unweighted asset log-levels; `−∞` when it is zero.
    fn log_value(&self, weights: &[f64], a: &[f64]) -> f64 {
        let basket = || weights.iter().zip(a).map(|(w, x)| w * x.exp()).sum::<f64>();
        match *self {
            Payoff::Put(k) => {
                let s = basket();
                if s < k {
                    (k - s).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Payoff::Call(k) => {
                let s = basket();
                if s > k {
                    (s - k).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Payoff::Digital(k) => {
                if basket() <= k {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Payoff::Forward => basket().ln(),
            Payoff::Asset(i) => a[i],
        }
    }

    /// Typical size of a nonzero payoff, used as the accumulation scale.
    fn log_scale(&self) -> f64 {
        match *self {
            Payoff::Put(k) | Payoff::Call(k) => k.ln(),
            _ => 0.0,
        }
    }
}

/// Streaming mean and centred second moment.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, y: f64) {
        self.n += 1;
        let d = y - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (y - self.mean);
    }

    fn merge(self, other: Self) -> Self {
        if other.n == 0 {
            return self;
        }
        if self.n == 0 {
            return other;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let mean = self.mean + d * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        Self { n, mean, m2 }
    }
}

/// Runs `pair` once per antithetic pair over deterministic blocks and merges the results in order.
fn simulate<F>(paths: usize, seed: u64, pair: F) -> Moments
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let total = paths.div_ceil(2);
    let per_block = BLOCK_SIZE / 2;
    let blocks = total.div_ceil(per_block);
    let parts: Vec<Moments> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let mut m = Moments::default();
            for _ in 0..per_block.min(total - b * per_block) {
                m.push(pair(&mut rng));
            }
            m
        })
        .collect();
    parts.into_iter().fold(Moments::default(), Moments::merge)
}

fn finish(m: Moments, log_ref: f64, seed: u64) -> McEstimate {
    let se = if m.n > 1 { (m.m2 / (m.n - 1) as f64 / m.n as f64).sqrt() } else { f64::INFINITY };
    let log_value = m.mean.ln() + log_ref;
    let rel_std_error = if m.mean > 0.0 { se / m.mean } else { f64::INFINITY };
    McEstimate {
        value: m.mean * log_ref.exp(),
        std_error: se * log_ref.exp(),
        log_value,
        rel_std_error,
        paths: 2 * m.n,
        seed,
    }
}

fn check_paths(paths: usize) -> Result<()> {
    if paths < MIN_PATHS {
        return domain(format!("need at least {MIN_PATHS} paths, got {paths}"));
    }
    Ok(())
}

fn normals(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for z in out.iter_mut() {
        *z = rng.sample(StandardNormal);
    }
}

/// `w̄ᵀ` lower bound target: on `{S ≤ K}`, `Σ w̄_i a_i ≤ ln K − Σ w̄_i ln(λ_i/w̄_i)`.
fn left_target(weights: &[f64], w_bar: &[f64], strike: f64) -> f64 {
    let entropy: f64 = w_bar.iter().zip(weights).filter(|(w, _)| **w > 0.0).map(|(w, l)| w * (l / w).ln()).sum();
    strike.ln() - entropy
}

/// Estimate of `E[payoff]` for a lognormal basket.
pub fn mc_basket(basket: &BasketSpec, payoff: Payoff, tilt: Tilt, paths: usize, seed: u64) -> Result<McEstimate> {
    check_paths(paths)?;
    let n = basket.dim();
    payoff.validate(n)?;
    let t = basket.maturity;
    let st = t.sqrt();
    let base: Vec<f64> = (0..n).map(|i| -0.5 * basket.cov[(i, i)] * t).collect();

    // Gaussian shift θ in the space of the standard draws
    let mut theta = vec![0.0; n];
    if tilt == Tilt::Auto {
        match payoff {
            Payoff::Put(k) | Payoff::Digital(k) => {
                let w_bar = basket.simplex()?.w_bar;
                let v: f64 =
                    (0..n).map(|i| (0..n).map(|j| w_bar[i] * basket.cov[(i, j)] * w_bar[j]).sum::<f64>()).sum();
                let mean: f64 = w_bar.iter().zip(&base).map(|(w, b)| w * b).sum();
                let gamma = (mean - left_target(&basket.weights, &w_bar, k)) / (t * v);
                if gamma > 0.0 {
                    for (i, th) in theta.iter_mut().enumerate() {
                        *th = -gamma * st * (0..n).map(|j| basket.sqrt_cov[(i, j)] * w_bar[j]).sum::<f64>();
                    }
                }
            }
            Payoff::Call(k) => {
                let i = (0..n).max_by(|&a, &b| basket.cov[(a, a)].total_cmp(&basket.cov[(b, b)])).unwrap_or(0);
                let delta = k.ln() - basket.weights[i].ln() - base[i];
                if delta > 0.0 {
                    let scale = delta / (st * basket.cov[(i, i)]);
                    for (j, th) in theta.iter_mut().enumerate() {
                        *th = scale * basket.sqrt_cov[(j, i)];
                    }
                }
            }
            _ => {}
        }
    }
    let theta_sq: f64 = theta.iter().map(|x| x * x).sum();
    let log_ref = payoff.log_scale() - 0.5 * theta_sq;

    let m = simulate(paths, seed, |rng| {
        let mut z = vec![0.0; n];
        let mut a = vec![0.0; n];
        normals(rng, &mut z);
        let mut acc = 0.0;
        for sign in [1.0, -1.0] {
            for i in 0..n {
                let x: f64 = (0..n).map(|j| basket.sqrt_cov[(i, j)] * (sign * z[j] + theta[j])).sum();
                a[i] = base[i] + st * x;
            }
            let lp = payoff.log_value(&basket.weights, &a);
            if lp > f64::NEG_INFINITY {
                let lr: f64 = -sign * theta.iter().zip(&z).map(|(t, z)| t * z).sum::<f64>() - 0.5 * theta_sq;
                acc += (lp + lr - log_ref).exp();
            }
        }
        0.5 * acc
    });
    Ok(finish(m, log_ref, seed))
}

/// Plain estimate of `E[(K − S_T)⁺]`.
pub fn mc_basket_put(basket: &BasketSpec, strike: f64, paths: usize, seed: u64) -> Result<McEstimate> {
    mc_basket(basket, Payoff::Put(strike), Tilt::None, paths, seed)
}

pub fn mc_basket_call(basket: &BasketSpec, strike: f64, paths: usize, seed: u64) -> Result<McEstimate> {
    mc_basket(basket, Payoff::Call(strike), Tilt::None, paths, seed)
}

/// Sample mean of `S_T` on the same paths a put or call run with this seed uses.
pub fn mc_basket_forward(basket: &BasketSpec, paths: usize, seed: u64) -> Result<McEstimate> {
    mc_basket(basket, Payoff::Forward, Tilt::None, paths, seed)
}

/// Exponential tilt `e^{γU}` of the time-changed law, `U = dᵀ(ln S − μ̃)`.
struct TcTilt {
    direction: Vec<f64>,
    gamma: f64,
    s: f64,
    log_ref: f64,
}

fn tc_tilt(spec: &TcBasketSpec, payoff: Payoff, tilt: Tilt) -> Result<TcTilt> {
    let n = spec.dim();
    let plain = TcTilt { direction: vec![0.0; n], gamma: 0.0, s: 0.0, log_ref: payoff.log_scale() };
    if tilt == Tilt::None {
        return Ok(plain);
    }
    let b = &spec.basket.cov;
    let (direction, target) = match payoff {
        Payoff::Put(k) | Payoff::Digital(k) => {
            let w_bar = saddle_cstar(b, &spec.mu, spec.timechange.theta())?.w_bar;
            let anchor: f64 = w_bar.iter().zip(&spec.mu_tilde).map(|(w, m)| w * m).sum();
            let target = anchor - left_target(&spec.basket.weights, &w_bar, k);
            (w_bar.iter().map(|w| -w).collect::<Vec<_>>(), target)
        }
        Payoff::Call(k) => {
            let c = tc_right_exponents(spec);
            let i = (0..n).min_by(|&a, &b| c[a].total_cmp(&c[b])).unwrap_or(0);
            let mut d = vec![0.0; n];
            d[i] = 1.0;
            (d, k.ln() - spec.basket.weights[i].ln() - spec.mu_tilde[i])
        }
        _ => return Ok(plain),
    };
    let m: f64 = direction.iter().zip(&spec.mu).map(|(d, mu)| d * mu).sum();
    let v: f64 = (0..n).map(|i| (0..n).map(|j| direction[i] * b[(i, j)] * direction[j]).sum::<f64>()).sum();
    let theta = spec.timechange.theta();
    let s_of = |g: f64| -(g * m + 0.5 * g * g * v);
    let tilted_mean = |g: f64| -> f64 {
        match spec.timechange.tilted_mean(s_of(g)) {
            Ok(tau) => tau * (m + g * v) - target,
            Err(_) => f64::INFINITY,
        }
    };
    if tilted_mean(0.0) >= 0.0 {
        return Ok(plain);
    }
    let g_max = (-m + (m * m + 2.0 * theta * v).sqrt()) / v * (1.0 - 1e-9);
    let gamma = if tilted_mean(g_max) <= 0.0 { g_max } else { bisect(tilted_mean, 0.0, g_max, 1e-12 * g_max, 200) };
    let s = s_of(gamma);
    let log_ref = payoff.log_scale() + spec.timechange.log_laplace_transform(s)? - gamma * target;
    Ok(TcTilt { direction, gamma, s, log_ref })
}

/// Estimate of `E[payoff]` for a time-changed basket.
pub fn mc_timechanged(spec: &TcBasketSpec, payoff: Payoff, tilt: Tilt, paths: usize, seed: u64) -> Result<McEstimate> {
    check_paths(paths)?;
    let n = spec.dim();
    payoff.validate(n)?;
    let tl = tc_tilt(spec, payoff, tilt)?;
    let clock = spec.timechange.sampler(tl.s)?;
    let root = &spec.basket.sqrt_cov;
    // βd, so that the Gaussian shift is γ√τ·βd
    let bd: Vec<f64> = (0..n).map(|i| (0..n).map(|j| root[(i, j)] * tl.direction[j]).sum()).collect();
    let bd_sq: f64 = bd.iter().map(|x| x * x).sum();

    let m = simulate(paths, seed, |rng| {
        let tau = clock.sample(rng);
        let sq = tau.sqrt();
        let mut z = vec![0.0; n];
        let mut a = vec![0.0; n];
        normals(rng, &mut z);
        let shift = tl.gamma * sq;
        let log_clock = clock.log_ratio(tau);
        let mut acc = 0.0;
        for sign in [1.0, -1.0] {
            for i in 0..n {
                let x: f64 = (0..n).map(|j| root[(i, j)] * (sign * z[j] + shift * bd[j])).sum();
                a[i] = spec.mu_tilde[i] + spec.mu[i] * tau + sq * x;
            }
            let lp = payoff.log_value(&spec.basket.weights, &a);
            if lp > f64::NEG_INFINITY {
                let dot: f64 = bd.iter().zip(&z).map(|(b, z)| b * z).sum();
                let lr = log_clock - sign * shift * dot - 0.5 * shift * shift * bd_sq;
                acc += (lp + lr - tl.log_ref).exp();
            }
        }
        0.5 * acc
    });
    Ok(finish(m, tl.log_ref, seed))
}

/// Plain estimate of `E[(K − S_T)⁺]` under the time-changed model.
pub fn mc_timechanged_put(spec: &TcBasketSpec, strike: f64, paths: usize, seed: u64) -> Result<McEstimate> {
    mc_timechanged(spec, Payoff::Put(strike), Tilt::None, paths, seed)
}
