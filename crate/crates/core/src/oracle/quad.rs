//! Deterministic prices, densities and distribution functions of one- and
//! two-asset lognormal baskets.
//!
//! The first Gaussian driver is conditioned on; given it, the second asset
//! is lognormal, so the inner expectation is a Black–Scholes formula. The
//! outer integral runs over a variable in which the integrand is smooth and
//! unimodal, using a Gauss–Hermite rule recentred and rescaled at the
//! maximum of the log-integrand. Everything is carried in logs so that
//! prices far below `f64::MIN_POSITIVE` stay meaningful.

use log::warn;

use crate::black_scholes::{log_price_normalized, OptionKind};
use crate::error::{domain, ensure_finite, Result};
use crate::lognormal_asymptotics::BasketSpec;
use crate::numerics::hermite::{GaussHermite, MAX_NODES};
use crate::numerics::minimize::golden_section;
use crate::numerics::quad::log_integrate_scaled;
use crate::numerics::special::{log_add_exp, log_norm_cdf, log_norm_pdf, log_sum_exp};

/// Node-doubling discrepancy above which a result is flagged imprecise.
pub const PRECISION_WARNING: f64 = 1e-6;
const SCAN_POINTS: usize = 4000;

/// Quadrature result in log form with its self-convergence diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadEstimate {
    pub log_value: f64,
    /// `|I_m/I_n − 1|` against a rule of order `m = 2n` (or `n/2` when `2n` is unavailable).
    pub rel_discrepancy: f64,
    pub nodes: usize,
}

impl QuadEstimate {
    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }

    pub fn is_precise(&self) -> bool {
        self.rel_discrepancy <= PRECISION_WARNING
    }
}

/// Joint law of `(λ₁e^{Y₁}, λ₂e^{Y₂})` with `Y_i = −s_i²/2 + s_i·Z_i`, `corr(Z₁, Z₂) = ρ`.
///
/// `λ₂ = 0` is allowed and reduces everything to the first asset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoAssetLaw {
    log_w1: f64,
    log_w2: f64,
    s1: f64,
    s2: f64,
    rho: f64,
}

impl TwoAssetLaw {
    /// Law at maturity `T` for volatilities `σ_i`; `s_i = σ_i√T`.
    pub fn new(weights: [f64; 2], sigmas: [f64; 2], rho: f64, maturity: f64) -> Result<Self> {
        for v in [weights[0], weights[1], sigmas[0], sigmas[1], rho, maturity] {
            ensure_finite("two-asset law parameter", v)?;
        }
        if !(weights[0] > 0.0) || weights[1] < 0.0 {
            return domain(format!("need λ₁ > 0 and λ₂ ≥ 0, got {weights:?}"));
        }
        if !(sigmas[0] > 0.0) || sigmas[1] < 0.0 || !(maturity > 0.0) {
            return domain("need σ₁ > 0, σ₂ ≥ 0 and T > 0");
        }
        if !(rho > -1.0 && rho < 1.0) {
            return domain(format!("correlation must lie in (-1, 1), got {rho}"));
        }
        let st = maturity.sqrt();
        Ok(Self { log_w1: weights[0].ln(), log_w2: weights[1].ln(), s1: sigmas[0] * st, s2: sigmas[1] * st, rho })
    }

    /// The law of a one- or two-asset [`BasketSpec`].
    pub fn from_basket(basket: &BasketSpec) -> Result<Self> {
        let t = basket.maturity;
        match basket.dim() {
            1 => Self::new([1.0, 0.0], [basket.cov[(0, 0)].sqrt(), 0.0], 0.0, t),
            2 => {
                let s1 = basket.cov[(0, 0)].sqrt();
                let s2 = basket.cov[(1, 1)].sqrt();
                let rho = basket.cov[(0, 1)] / (s1 * s2);
                Self::new([basket.weights[0], basket.weights[1]], [s1, s2], rho, t)
            }
            n => domain(format!("quadrature oracle supports one or two assets, got {n}")),
        }
    }

    fn single(&self) -> bool {
        self.log_w2 == f64::NEG_INFINITY
    }

    /// `ln E[λ₂e^{Y₂} | Z₁ = z]`
    fn log_f2(&self, z: f64) -> f64 {
        let a = self.s2 * self.rho;
        self.log_w2 + a * z - 0.5 * a * a
    }

    /// Conditional log standard deviation of `Y₂` given `Z₁`.
    fn v(&self) -> f64 {
        self.s2 * (1.0 - self.rho * self.rho).sqrt()
    }

    /// Value of `z` at which `λ₁e^{Y₁} = x`.
    fn cutoff(&self, log_x: f64) -> f64 {
        (log_x - self.log_w1 + 0.5 * self.s1 * self.s1) / self.s1
    }

    /// Integral over `z < z_x` of `φ(z)·exp(inner(z, ln(x − x₁(z))))`, substituting `z = z_x − e^u`.
    fn below_cutoff<F: Fn(f64, f64) -> f64>(&self, log_x: f64, nodes: usize, inner: F) -> Result<QuadEstimate> {
        let zx = self.cutoff(log_x);
        let z_lo = zx.min(0.0) - 60.0;
        let h = |u: f64| {
            let e = u.exp();
            let z = zx - e;
            // x − x₁ = x·(1 − e^{−s₁e^u})
            let log_gap = log_x + (-(-self.s1 * e).exp_m1()).ln();
            log_norm_pdf(z) + inner(z, log_gap) + u
        };
        laplace_hermite(h, -50.0, (zx - z_lo).ln(), nodes)
    }

    /// `ln E[(K − S)⁺]`
    pub fn log_put(&self, strike: f64, nodes: usize) -> Result<QuadEstimate> {
        let lk = log_strike(strike)?;
        let v = self.v();
        self.below_cutoff(lk, nodes, |z, log_gap| {
            if self.single() {
                log_gap
            } else {
                let lf = self.log_f2(z);
                lf + log_price_normalized(log_gap - lf, v, OptionKind::Put)
            }
        })
    }

    /// `ln E[(S − K)⁺]`.
    ///
    /// Above the cutoff the conditional call is the forward minus the strike,
    /// which integrates in closed form; below it the conditional Black–Scholes
    /// call is integrated adaptively. All pieces are positive.
    pub fn log_call(&self, strike: f64) -> Result<QuadEstimate> {
        let lk = log_strike(strike)?;
        let zk = self.cutoff(lk);
        let mut log_value = self.log_w1 + log_price_normalized(lk - self.log_w1, self.s1, OptionKind::Call);
        if self.single() {
            return Ok(QuadEstimate { log_value, rel_discrepancy: 0.0, nodes: 0 });
        }
        log_value = log_add_exp(log_value, self.log_w2 + log_norm_cdf(self.s2 * self.rho - zk));
        let v = self.v();
        // z = zk − eᵘ: the integrand is a spike of width ~1/K just below zk in z,
        // a smooth bump in u
        let h = |u: f64| {
            let d = u.exp();
            let z = zk - d;
            let lf = self.log_f2(z);
            let log_gap = lk + (-(-self.s1 * d).exp_m1()).ln();
            u + log_norm_pdf(z) + lf + log_price_normalized(log_gap - lf, v, OptionKind::Call)
        };
        let u_hi = (zk - (zk.min(0.0) - 40.0)).ln();
        let (log_below, rel_err) = log_integrate_scaled(h, MIN_LOG_OFFSET, u_hi, 1e-13)?;
        let below = QuadEstimate { log_value: log_below, rel_discrepancy: rel_err, nodes: 0 };
        Ok(combine(QuadEstimate { log_value, rel_discrepancy: 0.0, nodes: 0 }, below))
    }

    /// `ln P[S ≤ x]`
    pub fn log_cdf(&self, x: f64, nodes: usize) -> Result<QuadEstimate> {
        let lx = log_strike(x)?;
        let v = self.v();
        self.below_cutoff(lx, nodes, |z, log_gap| {
            if self.single() {
                0.0
            } else {
                let lf = self.log_f2(z);
                log_norm_cdf((log_gap - lf + 0.5 * v * v) / v)
            }
        })
    }

    /// `ln p_S(x)`; needs `λ₂ > 0`.
    pub fn log_density(&self, x: f64, nodes: usize) -> Result<QuadEstimate> {
        let lx = log_strike(x)?;
        if self.single() || self.v() == 0.0 {
            return domain("density oracle needs a nondegenerate second asset");
        }
        let v = self.v();
        self.below_cutoff(lx, nodes, |z, log_gap| {
            let lf = self.log_f2(z);
            -log_gap - v.ln() + log_norm_pdf((log_gap - lf + 0.5 * v * v) / v)
        })
    }
}

/// Node range accepted by the public entry points.
pub const NODE_RANGE: (usize, usize) = (50, 400);

fn check_public_nodes(nodes: usize) -> Result<()> {
    if !(NODE_RANGE.0..=NODE_RANGE.1).contains(&nodes) {
        return domain(format!("nodes must lie in {}..={}, got {nodes}", NODE_RANGE.0, NODE_RANGE.1));
    }
    Ok(())
}

/// Lower end of `ln(zk − z)` in the call integral; below it the integrand is under `e^{-600}` of its scale.
const MIN_LOG_OFFSET: f64 = -600.0;

fn combine(a: QuadEstimate, b: QuadEstimate) -> QuadEstimate {
    let log_value = log_add_exp(a.log_value, b.log_value);
    let share = |q: &QuadEstimate| (q.log_value - log_value).exp();
    let rel_discrepancy = share(&a) * a.rel_discrepancy + share(&b) * b.rel_discrepancy;
    QuadEstimate { log_value, rel_discrepancy, nodes: a.nodes }
}

fn log_strike(x: f64) -> Result<f64> {
    ensure_finite("strike", x)?;
    if x <= 0.0 {
        return domain(format!("strike must be positive, got {x}"));
    }
    Ok(x.ln())
}

fn check_nodes(nodes: usize) -> Result<()> {
    if !(2..=MAX_NODES).contains(&nodes) {
        return domain(format!("node count must be in 2..={MAX_NODES}, got {nodes}"));
    }
    Ok(())
}

fn hermite_sum<F: Fn(f64) -> f64>(h: &F, center: f64, scale: f64, nodes: usize) -> Result<f64> {
    let rule = GaussHermite::cached(nodes)?;
    let step = std::f64::consts::SQRT_2 * scale;
    let terms: Vec<f64> = rule
        .nodes
        .iter()
        .zip(&rule.ln_scaled_weights)
        .map(|(t, lw)| {
            let v = h(center + step * t);
            // overflow far out in the tail shows up as NaN or +inf
            if v.is_nan() || v == f64::INFINITY {
                f64::NEG_INFINITY
            } else {
                lw + v
            }
        })
        .collect();
    Ok(step.ln() + log_sum_exp(&terms))
}

/// `ln ∫ e^{h(u)} du` for a unimodal log-integrand whose mass lies in `[lo, hi]`.
fn laplace_hermite<F: Fn(f64) -> f64>(h: F, lo: f64, hi: f64, nodes: usize) -> Result<QuadEstimate> {
    check_nodes(nodes)?;
    let dz = (hi - lo) / SCAN_POINTS as f64;
    let mut best = (lo, f64::NEG_INFINITY);
    for j in 0..=SCAN_POINTS {
        let u = lo + dz * j as f64;
        let v = h(u);
        if v > best.1 {
            best = (u, v);
        }
    }
    if best.1 == f64::NEG_INFINITY {
        return Ok(QuadEstimate { log_value: f64::NEG_INFINITY, rel_discrepancy: 0.0, nodes });
    }
    let neg = |u: f64| {
        let v = h(u);
        if v.is_nan() {
            f64::INFINITY
        } else {
            -v
        }
    };
    let (a, b) = golden_section(neg, best.0 - dz, best.0 + dz, 1e-10 * dz.max(1.0));
    let center = 0.5 * (a + b);
    let d = 1e-3 * dz.max(1e-3);
    let curvature = (h(center + d) - 2.0 * h(center) + h(center - d)) / (d * d);
    let scale = if curvature.is_finite() && curvature < 0.0 {
        (1.0 / (-curvature).sqrt()).clamp(1e-8, hi - lo)
    } else {
        10.0 * dz
    };

    let log_value = hermite_sum(&h, center, scale, nodes)?;
    let other = if 2 * nodes <= MAX_NODES { 2 * nodes } else { nodes / 2 };
    let log_other = hermite_sum(&h, center, scale, other)?;
    let rel_discrepancy = (log_other - log_value).exp_m1().abs();
    if rel_discrepancy > PRECISION_WARNING {
        warn!("quadrature with {nodes} nodes disagrees with {other} nodes by {rel_discrepancy:e}");
    }
    Ok(QuadEstimate { log_value, rel_discrepancy, nodes })
}

/// Put price of a one- or two-asset basket by conditional Gauss–Hermite quadrature.
///
/// `nodes` must lie in `50..=400`; a single-asset basket is priced as the degenerate case.
pub fn quad_put_2d(basket: &BasketSpec, strike: f64, nodes: usize) -> Result<QuadEstimate> {
    check_public_nodes(nodes)?;
    TwoAssetLaw::from_basket(basket)?.log_put(strike, nodes)
}

pub fn quad_call_2d(basket: &BasketSpec, strike: f64) -> Result<QuadEstimate> {
    TwoAssetLaw::from_basket(basket)?.log_call(strike)
}

pub fn quad_density_2d(basket: &BasketSpec, x: f64, nodes: usize) -> Result<QuadEstimate> {
    check_public_nodes(nodes)?;
    TwoAssetLaw::from_basket(basket)?.log_density(x, nodes)
}

pub fn quad_cdf_2d(basket: &BasketSpec, x: f64, nodes: usize) -> Result<QuadEstimate> {
    check_public_nodes(nodes)?;
    TwoAssetLaw::from_basket(basket)?.log_cdf(x, nodes)
}
