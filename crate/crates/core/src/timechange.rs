//! Multidimensional Black–Scholes run on a random clock.
//!
//! `ln S^i_T = μ̃_i + μ_i·τ_T + (B^{1/2} W_{τ_T})_i` with `τ_T` independent of
//! `W`. The compensators `μ̃_i` make every asset a unit-mean variable. Wing
//! coefficients follow from the exponential tail `sᵅe^{−θs}` of the law of
//! `τ_T`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, InverseGaussian};
use serde::{Deserialize, Serialize};

use crate::black_scholes::psi;
use crate::error::{domain, ensure_finite, Result, WingError};
use crate::lognormal_asymptotics::BasketSpec;
use crate::numerics::quad::integrate;
use crate::oracle::mc::{mc_timechanged, McEstimate, Payoff, Tilt};
use crate::simplex_opt::saddle_cstar;

/// Tabulated densities must integrate to one within this tolerance.
pub const NORMALIZATION_TOL: f64 = 1e-6;
/// Allowed ratio between a tabulated density and its declared tail `c·sᵅe^{−θs}`.
pub const TAIL_BAND: f64 = 10.0;
/// Range of `s` on which a tabulated tail is checked.
pub const TAIL_CHECK_RANGE: (f64, f64) = (1.0, 50.0);
const TAIL_CHECK_POINTS: usize = 99;
/// Integrand cutoff, relative to its maximum, for Laplace transforms of tabulated laws.
const TRUNCATION: f64 = 1e-16;

/// Law of the clock `τ_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TimeChangeFamily {
    /// Gamma process: `τ_T ~ Γ(shape cT, rate λ)`.
    Gamma { c: f64, rate: f64 },
    /// Inverse Gaussian process with density `cT·s^{−3/2}·exp(2cT√(πλ) − λs − πc²T²/s)`.
    InverseGaussian { c: f64, rate: f64 },
    /// Piecewise-linear density on `grid`, zero outside, with declared tail `tail_c·sᵅe^{−θs}`.
    Tabulated { grid: Vec<f64>, density: Vec<f64>, theta: f64, alpha: f64, tail_c: f64 },
}

/// A validated clock law at maturity `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeChangeSpec {
    pub family: TimeChangeFamily,
    pub maturity: f64,
    table: Option<Table>,
}

/// Piecewise-linear density with cumulative masses at the nodes.
#[derive(Debug, Clone, PartialEq)]
struct Table {
    s: Vec<f64>,
    rho: Vec<f64>,
    cum: Vec<f64>,
}

impl Table {
    fn new(s: Vec<f64>, rho: Vec<f64>) -> Self {
        let mut cum = Vec::with_capacity(s.len());
        cum.push(0.0);
        for j in 1..s.len() {
            let prev = cum[j - 1];
            cum.push(prev + 0.5 * (rho[j - 1] + rho[j]) * (s[j] - s[j - 1]));
        }
        Self { s, rho, cum }
    }

    fn mass(&self) -> f64 {
        *self.cum.last().unwrap_or(&0.0)
    }

    fn density(&self, x: f64) -> f64 {
        let n = self.s.len();
        if !(x >= self.s[0] && x <= self.s[n - 1]) {
            return 0.0;
        }
        let j = self.s.partition_point(|&v| v <= x).clamp(1, n - 1);
        let f = (x - self.s[j - 1]) / (self.s[j] - self.s[j - 1]);
        self.rho[j - 1] + f * (self.rho[j] - self.rho[j - 1])
    }

    /// Inverse distribution function at `u ∈ [0, 1)`.
    fn quantile(&self, u: f64) -> f64 {
        let target = u * self.mass();
        let n = self.s.len();
        let j = self.cum.partition_point(|&c| c <= target).clamp(1, n - 1);
        let h = self.s[j] - self.s[j - 1];
        let r = target - self.cum[j - 1];
        let a = 0.5 * (self.rho[j] - self.rho[j - 1]) / h;
        let b = self.rho[j - 1];
        let disc = (b * b + 4.0 * a * r).max(0.0);
        let x = if b + disc.sqrt() > 0.0 { 2.0 * r / (b + disc.sqrt()) } else { 0.0 };
        self.s[j - 1] + x.clamp(0.0, h)
    }
}

impl TimeChangeSpec {
    pub fn new(family: TimeChangeFamily, maturity: f64) -> Result<Self> {
        ensure_finite("maturity", maturity)?;
        if maturity <= 0.0 {
            return domain(format!("maturity must be positive, got {maturity}"));
        }
        let table = match &family {
            TimeChangeFamily::Gamma { c, rate } | TimeChangeFamily::InverseGaussian { c, rate } => {
                ensure_finite("c", *c)?;
                ensure_finite("rate", *rate)?;
                if *c <= 0.0 || *rate <= 0.0 {
                    return domain(format!("clock parameters must be positive, got c={c}, rate={rate}"));
                }
                None
            }
            TimeChangeFamily::Tabulated { grid, density, theta, alpha, tail_c } => {
                Some(validate_table(grid, density, *theta, *alpha, *tail_c)?)
            }
        };
        Ok(Self { family, maturity, table })
    }

    pub fn gamma(c: f64, rate: f64, maturity: f64) -> Result<Self> {
        Self::new(TimeChangeFamily::Gamma { c, rate }, maturity)
    }

    pub fn inverse_gaussian(c: f64, rate: f64, maturity: f64) -> Result<Self> {
        Self::new(TimeChangeFamily::InverseGaussian { c, rate }, maturity)
    }

    /// Exponential decay rate `θ` of the density tail.
    pub fn theta(&self) -> f64 {
        match &self.family {
            TimeChangeFamily::Gamma { rate, .. } | TimeChangeFamily::InverseGaussian { rate, .. } => *rate,
            TimeChangeFamily::Tabulated { theta, .. } => *theta,
        }
    }

    /// Polynomial exponent `α` of the density tail.
    pub fn alpha(&self) -> f64 {
        match &self.family {
            TimeChangeFamily::Gamma { c, .. } => c * self.maturity - 1.0,
            TimeChangeFamily::InverseGaussian { .. } => -1.5,
            TimeChangeFamily::Tabulated { alpha, .. } => *alpha,
        }
    }

    /// Density of `τ_T` at `s`.
    pub fn density(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let t = self.maturity;
        match &self.family {
            TimeChangeFamily::Gamma { c, rate } => {
                let shape = c * t;
                (shape * rate.ln() - libm::lgamma(shape) + (shape - 1.0) * s.ln() - rate * s).exp()
            }
            TimeChangeFamily::InverseGaussian { c, rate } => {
                let ct = c * t;
                let pi = std::f64::consts::PI;
                (ct.ln() - 1.5 * s.ln() + 2.0 * ct * (pi * rate).sqrt() - rate * s - pi * ct * ct / s).exp()
            }
            TimeChangeFamily::Tabulated { .. } => self.table.as_ref().map_or(0.0, |tb| tb.density(s)),
        }
    }

    /// `ln E[e^{−s·τ_T}]`.
    pub fn log_laplace_transform(&self, s: f64) -> Result<f64> {
        ensure_finite("Laplace argument", s)?;
        let t = self.maturity;
        match &self.family {
            TimeChangeFamily::Gamma { c, rate } => {
                check_abscissa(s, *rate)?;
                Ok(c * t * (rate.ln() - (rate + s).ln()))
            }
            TimeChangeFamily::InverseGaussian { c, rate } => {
                check_abscissa(s, *rate)?;
                let pi = std::f64::consts::PI;
                Ok(2.0 * c * t * ((pi * rate).sqrt() - (pi * (rate + s)).sqrt()))
            }
            TimeChangeFamily::Tabulated { theta, .. } => {
                check_abscissa(s, *theta)?;
                let table = self.table.as_ref().expect("tabulated spec carries its table");
                let (log_mass, _) = tabulated_moments(table, s)?;
                Ok(log_mass)
            }
        }
    }

    /// `E[e^{−s·τ_T}]`; `s` must lie to the right of `−θ`.
    pub fn laplace_transform(&self, s: f64) -> Result<f64> {
        Ok(self.log_laplace_transform(s)?.exp())
    }

    /// Mean of `τ_T` under the law tilted by `e^{−sτ}`.
    pub fn tilted_mean(&self, s: f64) -> Result<f64> {
        let t = self.maturity;
        match &self.family {
            TimeChangeFamily::Gamma { c, rate } => {
                check_abscissa(s, *rate)?;
                Ok(c * t / (rate + s))
            }
            TimeChangeFamily::InverseGaussian { c, rate } => {
                check_abscissa(s, *rate)?;
                Ok(c * t * (std::f64::consts::PI / (rate + s)).sqrt())
            }
            TimeChangeFamily::Tabulated { theta, .. } => {
                check_abscissa(s, *theta)?;
                let table = self.table.as_ref().expect("tabulated spec carries its table");
                Ok(tabulated_moments(table, s)?.1)
            }
        }
    }

    /// Sampler for `τ_T` under the law tilted by `e^{−sτ}` (`s = 0`: the law itself).
    pub(crate) fn sampler(&self, s: f64) -> Result<ClockSampler> {
        let t = self.maturity;
        let log_lt = self.log_laplace_transform(s)?;
        let kind = match &self.family {
            TimeChangeFamily::Gamma { c, rate } => SamplerKind::Gamma(
                Gamma::new(c * t, 1.0 / (rate + s)).map_err(|e| WingError::Domain(format!("gamma clock: {e}")))?,
            ),
            TimeChangeFamily::InverseGaussian { c, rate } => {
                let pi = std::f64::consts::PI;
                let mean = c * t * (pi / (rate + s)).sqrt();
                let shape = 2.0 * pi * c * c * t * t;
                SamplerKind::InverseGaussian(
                    InverseGaussian::new(mean, shape)
                        .map_err(|e| WingError::Domain(format!("inverse Gaussian clock: {e}")))?,
                )
            }
            TimeChangeFamily::Tabulated { .. } => {
                let base = self.table.as_ref().expect("tabulated spec carries its table");
                if s == 0.0 {
                    SamplerKind::Table { q: base.clone(), base: None }
                } else {
                    let rho: Vec<f64> = base.s.iter().zip(&base.rho).map(|(x, r)| r * (-s * x).exp()).collect();
                    let mut q = Table::new(base.s.clone(), rho);
                    let mass = q.mass();
                    q.rho.iter_mut().for_each(|r| *r /= mass);
                    q.cum.iter_mut().for_each(|c| *c /= mass);
                    SamplerKind::Table { q, base: Some(base.clone()) }
                }
            }
        };
        Ok(ClockSampler { kind, s, log_lt })
    }
}

fn check_abscissa(s: f64, theta: f64) -> Result<()> {
    if s <= -theta {
        return domain(format!("Laplace transform diverges at s={s} (abscissa −{theta})"));
    }
    Ok(())
}

fn validate_table(grid: &[f64], density: &[f64], theta: f64, alpha: f64, tail_c: f64) -> Result<Table> {
    if grid.len() < 2 || grid.len() != density.len() {
        return domain(format!(
            "tabulated clock needs matching grid and density, got {} and {}",
            grid.len(),
            density.len()
        ));
    }
    for (&s, &r) in grid.iter().zip(density) {
        ensure_finite("tabulated grid", s)?;
        ensure_finite("tabulated density", r)?;
        if r < 0.0 {
            return domain(format!("tabulated density is negative at s={s}"));
        }
    }
    if grid[0] < 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return domain("tabulated grid must be nonnegative and strictly increasing");
    }
    for v in [theta, alpha, tail_c] {
        ensure_finite("tabulated tail parameter", v)?;
    }
    if theta <= 0.0 || tail_c <= 0.0 {
        return domain(format!("tail parameters need θ > 0 and c > 0, got θ={theta}, c={tail_c}"));
    }
    let table = Table::new(grid.to_vec(), density.to_vec());
    if (table.mass() - 1.0).abs() > NORMALIZATION_TOL {
        return domain(format!("tabulated density integrates to {}", table.mass()));
    }
    let (lo, hi) = TAIL_CHECK_RANGE;
    for j in 0..=TAIL_CHECK_POINTS {
        let s = lo + (hi - lo) * j as f64 / TAIL_CHECK_POINTS as f64;
        let ratio = table.density(s) / (tail_c * s.powf(alpha) * (-theta * s).exp());
        if !(1.0 / TAIL_BAND..=TAIL_BAND).contains(&ratio) {
            return domain(format!(
                "tabulated density leaves the declared tail band at s={s} (ratio {ratio:e}); the clock needs an exponential tail"
            ));
        }
    }
    Ok(table)
}

/// `(ln ∫e^{−sτ}ρ, ∫τe^{−sτ}ρ / ∫e^{−sτ}ρ)` for a tabulated density.
fn tabulated_moments(table: &Table, s: f64) -> Result<(f64, f64)> {
    // factor out the largest integrand value over the nodes so e^{−sτ} cannot overflow
    let logs: Vec<f64> = table.s.iter().zip(&table.rho).map(|(x, r)| r.ln() - s * x).collect();
    let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cutoff = peak + TRUNCATION.ln();
    let last = logs.iter().rposition(|&v| v >= cutoff).unwrap_or(0);
    let end = (last + 1).min(table.s.len() - 1);
    let mut mass = 0.0;
    let mut first = 0.0;
    for j in 1..=end {
        let (a, b) = (table.s[j - 1], table.s[j]);
        let f = |x: f64| table.density(x) * (-s * x - peak).exp();
        mass += integrate(f, a, b, 1e-12, 0.0)?.0;
        first += integrate(|x| x * f(x), a, b, 1e-12, 0.0)?.0;
    }
    if !(mass > 0.0) {
        return Err(WingError::Integration("tabulated clock has no mass".into()));
    }
    Ok((peak + mass.ln(), first / mass))
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Gamma(Gamma<f64>),
    InverseGaussian(InverseGaussian<f64>),
    /// `q` is sampled; `base` is the untilted table when they differ.
    Table {
        q: Table,
        base: Option<Table>,
    },
}

/// Draws `τ_T` under a possibly tilted law and reports `ln(dP/dQ)(τ)`.
#[derive(Debug, Clone)]
pub(crate) struct ClockSampler {
    kind: SamplerKind,
    s: f64,
    log_lt: f64,
}

impl ClockSampler {
    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            SamplerKind::Gamma(g) => g.sample(rng),
            SamplerKind::InverseGaussian(ig) => ig.sample(rng),
            SamplerKind::Table { q, .. } => q.quantile(rng.random::<f64>()),
        }
    }

    pub(crate) fn log_ratio(&self, tau: f64) -> f64 {
        match &self.kind {
            SamplerKind::Table { q, base: Some(base) } => (base.density(tau) / q.density(tau)).ln(),
            SamplerKind::Table { base: None, .. } => 0.0,
            _ => self.log_lt + self.s * tau,
        }
    }
}

/// `μ̃ = −ln E[exp((μ + b/2)·τ_T)]`, the compensator that gives the asset unit mean.
pub fn martingale_drift(tc: &TimeChangeSpec, mu: f64, var: f64) -> Result<f64> {
    ensure_finite("drift", mu)?;
    ensure_finite("variance", var)?;
    if var <= 0.0 {
        return domain(format!("variance must be positive, got {var}"));
    }
    let a = mu + 0.5 * var;
    if !(tc.theta() > a) {
        return Err(WingError::Moment(format!(
            "θ = {} must exceed μ + b/2 = {a} for the asset to have a finite mean",
            tc.theta()
        )));
    }
    Ok(-tc.log_laplace_transform(-a)?)
}

/// A basket of time-changed assets started at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TcBasketSpec {
    /// Weights, covariance `B` and maturity; its lognormal drift is unused.
    pub basket: BasketSpec,
    pub mu: Vec<f64>,
    pub mu_tilde: Vec<f64>,
    pub timechange: TimeChangeSpec,
}

impl TcBasketSpec {
    pub fn new(weights: Vec<f64>, cov: DMatrix<f64>, mu: Vec<f64>, timechange: TimeChangeSpec) -> Result<Self> {
        let basket = BasketSpec::new(weights, cov, timechange.maturity)?;
        if mu.len() != basket.dim() {
            return domain(format!("{} drifts for {} assets", mu.len(), basket.dim()));
        }
        let mu_tilde = mu
            .iter()
            .enumerate()
            .map(|(i, &m)| martingale_drift(&timechange, m, basket.cov[(i, i)]))
            .collect::<Result<Vec<_>>>()?;
        let spec = Self { basket, mu, mu_tilde, timechange };
        let err = spec.martingale_error()?;
        if err > 1e-8 {
            return Err(WingError::Moment(format!("compensated assets miss unit mean by {err:e}")));
        }
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.basket.dim()
    }

    /// `max_i |E[S^i_T] − 1|` from the Laplace transform.
    pub fn martingale_error(&self) -> Result<f64> {
        let mut worst = 0.0f64;
        for i in 0..self.dim() {
            let a = self.mu[i] + 0.5 * self.basket.cov[(i, i)];
            let mean = (self.mu_tilde[i] + self.timechange.log_laplace_transform(-a)?).exp();
            worst = worst.max((mean - 1.0).abs());
        }
        Ok(worst)
    }
}

/// Leading wing coefficient `√(ψ(c)/T)` and the tail exponent `c` behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TcWing {
    pub coefficient: f64,
    pub c: f64,
}

/// Left wing: `I(K) ≈ coefficient·√ln(1/K)` with `c = c*` from the saddle problem.
pub fn tc_leftwing_leading(spec: &TcBasketSpec) -> Result<TcWing> {
    let saddle = saddle_cstar(&spec.basket.cov, &spec.mu, spec.timechange.theta())?;
    let c = saddle.c_star;
    Ok(TcWing { coefficient: (psi(c)?.value / spec.timechange.maturity).sqrt(), c })
}

/// `c_i = (√(2θb_ii + μ_i²) − μ_i)/b_ii` for each asset.
pub fn tc_right_exponents(spec: &TcBasketSpec) -> Vec<f64> {
    let theta = spec.timechange.theta();
    (0..spec.dim())
        .map(|i| {
            let b = spec.basket.cov[(i, i)];
            let m = spec.mu[i];
            // (√(2θb + μ²) − μ)/b written without cancellation for μ > 0
            2.0 * theta / ((2.0 * theta * b + m * m).sqrt() + m)
        })
        .collect()
}

/// Right wing: `I(K) ≈ coefficient·√ln K` with `c = min_i c_i`.
pub fn tc_rightwing_leading(spec: &TcBasketSpec) -> Result<TcWing> {
    let c = tc_right_exponents(spec).into_iter().fold(f64::INFINITY, f64::min);
    Ok(TcWing { coefficient: (psi(c)?.value / spec.timechange.maturity).sqrt(), c })
}

/// One rung of the tail check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailEntry {
    pub k: f64,
    /// `ln P[S_T ≤ e^{−k}]`
    pub log_prob: f64,
    pub rel_std_error: f64,
    pub usable: bool,
}

/// Empirical left-tail slope and log-correction against the theoretical band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    pub entries: Vec<TailEntry>,
    pub c_star: f64,
    /// Least-squares slope of `−ln P` against `k`.
    pub fitted_slope: Option<f64>,
    pub slope_rel_error: Option<f64>,
    /// Fitted `β` in `ln P + c*k ≈ β·ln k + const`, with its standard error.
    pub log_correction: Option<(f64, f64)>,
    /// `[α − n, α]`
    pub band: (f64, f64),
    /// Whether `β ± 3·se` meets the band.
    pub band_holds: Option<bool>,
}

/// Importance-sampled tail probabilities on `k_grid` compared with `c*` and the `[α − n, α]` band.
pub fn tail_sandwich_check(spec: &TcBasketSpec, k_grid: &[f64], mc_paths: usize, seed: u64) -> Result<SandwichReport> {
    if k_grid.is_empty() {
        return domain("tail check needs at least one k");
    }
    let wing = tc_leftwing_leading(spec)?;
    let mut entries = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        ensure_finite("k", k)?;
        if k <= 0.0 {
            return domain(format!("tail check needs positive k, got {k}"));
        }
        let est: McEstimate = mc_timechanged(spec, Payoff::Digital((-k).exp()), Tilt::Auto, mc_paths, seed)?;
        let usable = est.log_value.is_finite() && est.rel_std_error < 0.1;
        if !usable {
            log::warn!("no reliable tail estimate at k={k}; more paths are needed");
        }
        entries.push(TailEntry { k, log_prob: est.log_value, rel_std_error: est.rel_std_error, usable });
    }
    let alpha = spec.timechange.alpha();
    let band = (alpha - spec.dim() as f64, alpha);
    let good: Vec<&TailEntry> = entries.iter().filter(|e| e.usable).collect();
    let mut report = SandwichReport {
        entries: entries.clone(),
        c_star: wing.c,
        fitted_slope: None,
        slope_rel_error: None,
        log_correction: None,
        band,
        band_holds: None,
    };
    if good.len() >= 2 {
        let xs: Vec<f64> = good.iter().map(|e| e.k).collect();
        let ys: Vec<f64> = good.iter().map(|e| -e.log_prob).collect();
        let (slope, _) = least_squares(&xs, &ys, &vec![1.0; xs.len()]);
        report.fitted_slope = Some(slope);
        report.slope_rel_error = Some((slope - wing.c).abs() / wing.c);

        let lx: Vec<f64> = good.iter().map(|e| e.k.ln()).collect();
        let resid: Vec<f64> = good.iter().map(|e| e.log_prob + wing.c * e.k).collect();
        let var: Vec<f64> = good.iter().map(|e| e.rel_std_error.powi(2).max(1e-12)).collect();
        let (beta, se) = least_squares(&lx, &resid, &var);
        report.log_correction = Some((beta, se));
        report.band_holds = Some(beta + 3.0 * se >= band.0 && beta - 3.0 * se <= band.1);
    }
    Ok(report)
}

/// Weighted least-squares slope of `y` on `x` and its standard error, given per-point variances.
fn least_squares(x: &[f64], y: &[f64], var: &[f64]) -> (f64, f64) {
    let w: Vec<f64> = var.iter().map(|v| 1.0 / v).collect();
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(&w).map(|(a, b)| b * (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).zip(&w).map(|((a, c), b)| b * (a - mx) * (c - my)).sum();
    (sxy / sxx, (1.0 / sxx).sqrt())
}
