#![allow(dead_code)]

use basket_wing::timechange::{TimeChangeFamily, TimeChangeSpec};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cov2(s1: f64, s2: f64, rho: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[s1 * s1, rho * s1 * s2, rho * s1 * s2, s2 * s2])
}

/// Covariance with vols in `[0.1, 0.6]` and a random correlation `LLᵀ` (rows of `L` normalized).
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let vols: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..0.6)).collect();
    let mut l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    for i in 0..n {
        l[(i, i)] += 0.5;
        let norm = l.row(i).norm();
        for j in 0..n {
            l[(i, j)] /= norm;
        }
    }
    let corr = &l * l.transpose();
    DMatrix::from_fn(n, n, |i, j| vols[i] * vols[j] * corr[(i, j)])
}

pub fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / s).collect();
    // force an exact unit sum
    let rest: f64 = w[1..].iter().sum();
    w[0] = 1.0 - rest;
    w
}

pub fn gamma_table(c: f64, rate: f64) -> TimeChangeFamily {
    let law = TimeChangeSpec::gamma(c, rate, 1.0).unwrap();
    let grid: Vec<f64> = (0..=40_000).map(|j| j as f64 * 0.002).collect();
    let density: Vec<f64> = grid.iter().map(|&s| law.density(s)).collect();
    let tail_c = rate.powf(c) / libm::tgamma(c);
    TimeChangeFamily::Tabulated { grid, density, theta: rate, alpha: c - 1.0, tail_c }
}

/// Double-double arithmetic, enough for a reference evaluation of `ψ`.
#[derive(Debug, Clone, Copy)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd { hi: s, lo: (a - (s - bb)) + (b - bb) }
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

impl Dd {
    pub fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.hi, o.hi);
        let t = two_sum(self.lo, o.lo);
        let r = quick_two_sum(s.hi, s.lo + t.hi);
        quick_two_sum(r.hi, r.lo + t.lo)
    }

    pub fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        quick_two_sum(p, e + (self.hi * o.lo + self.lo * o.hi))
    }

    pub fn scale(self, k: f64) -> Dd {
        self.mul(Dd::from(k))
    }

    /// One Newton step from the f64 root.
    pub fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::from(0.0);
        }
        let x = self.hi.sqrt();
        let xx = Dd::from(x).mul(Dd::from(x));
        let r = self.sub(xx);
        Dd::from(x).add(Dd::from(r.hi / (2.0 * x)))
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// `2 − 4(√(u²+u) − u)` evaluated in double-double.
pub fn psi_dd(u: f64) -> f64 {
    let u = Dd::from(u);
    let root = u.mul(u).add(u).sqrt();
    Dd::from(2.0).sub(root.sub(u).scale(4.0)).to_f64()
}

/// `F(t, w) = θt + ((1 + tμᵀw)⁺)² / (2t·wᵀBw)` for two assets with `w = (v, 1−v)`.
pub fn saddle_objective_2d(cov: &DMatrix<f64>, mu: &[f64], theta: f64, t: f64, v: f64) -> f64 {
    let q = v * v * cov[(0, 0)] + 2.0 * v * (1.0 - v) * cov[(0, 1)] + (1.0 - v) * (1.0 - v) * cov[(1, 1)];
    let a = (1.0 + t * (mu[0] * v + mu[1] * (1.0 - v))).max(0.0);
    theta * t + a * a / (2.0 * t * q)
}

fn golden<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, maximize: bool) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let sign = if maximize { -1.0 } else { 1.0 };
    let h = |x: f64| sign * f(x);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (h(c), h(d));
    for _ in 0..120 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = h(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = h(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// `max_v F(t, ·)` by a grid of step `1e−3` refined by golden section around the best node.
pub fn brute_inner_2d(cov: &DMatrix<f64>, mu: &[f64], theta: f64, t: f64) -> f64 {
    let mut best = (0.0, f64::NEG_INFINITY);
    for j in 0..=1000 {
        let v = j as f64 * 1e-3;
        let f = saddle_objective_2d(cov, mu, theta, t, v);
        if f > best.1 {
            best = (v, f);
        }
    }
    let lo = (best.0 - 1e-3).max(0.0);
    let hi = (best.0 + 1e-3).min(1.0);
    let (_, refined) = golden(|v| saddle_objective_2d(cov, mu, theta, t, v), lo, hi, true);
    refined.max(best.1)
}

/// `min_t max_v F` over `(t, v) ∈ [0.01, 10] × [0, 1]`: grid of step `1e−3` in both, then refinement in `t`.
/// Returns `(c*, t̄)`.
pub fn brute_saddle_2d(cov: &DMatrix<f64>, mu: &[f64], theta: f64) -> (f64, f64) {
    let mut best = (0.0, f64::INFINITY);
    let steps = ((10.0 - 0.01) / 1e-3f64).round() as usize;
    for i in 0..=steps {
        let t = 0.01 + i as f64 * 1e-3;
        let mut m = f64::NEG_INFINITY;
        for j in 0..=1000 {
            m = m.max(saddle_objective_2d(cov, mu, theta, t, j as f64 * 1e-3));
        }
        if m < best.1 {
            best = (t, m);
        }
    }
    let lo = (best.0 - 1e-3).max(0.01);
    let hi = (best.0 + 1e-3).min(10.0);
    let (t, v) = golden(|t| brute_inner_2d(cov, mu, theta, t), lo, hi, false);
    (v, t)
}
