//! Baskets whose log-returns are coupled by a copula.
//!
//! The left wing is driven by the weak lower tail dependence function
//! `χ(α) = lim_{u→0} min_i ln u^{α_i} / ln C(u^{α_1}, …, u^{α_n})`, which is
//! available in closed form for Gaussian, Archimedean and strongly
//! dependent copulas and can be estimated numerically for any evaluator.
//! The right wing depends only on the fattest marginal tail.

use std::fmt;
use std::sync::Arc;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::black_scholes::{psi, Side};
use crate::error::{domain, ensure_finite, Result, WingError};
use crate::numerics::quad::log_integrate_scaled;
use crate::numerics::special::{log_norm_cdf, log_norm_pdf, norm_inv};
use crate::simplex_opt::min_quadratic_simplex;

/// Successive rungs moving by more than this multiple of the remaining
/// extrapolated distance are flagged as not converged.
pub const CONVERGENCE_FACTOR: f64 = 10.0;
const BOUNDARY_TOL: f64 = 1e-9;

/// A copula evaluator `[0,1]ⁿ → [0,1]`.
pub type CopulaFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum CopulaSpec {
    Gaussian {
        correlation: DMatrix<f64>,
    },
    /// Archimedean copula whose generator inverse has `ln φ⁻¹` regularly varying with index `λ`.
    Archimedean {
        lambda: f64,
    },
    /// Positive lower tail dependence coefficient `λ_L`.
    StrongDependence {
        lambda_l: f64,
    },
    Numeric {
        dim: usize,
        evaluator: CopulaFn,
    },
}

impl fmt::Debug for CopulaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CopulaSpec::Gaussian { correlation } => {
                f.debug_struct("Gaussian").field("correlation", correlation).finish()
            }
            CopulaSpec::Archimedean { lambda } => f.debug_struct("Archimedean").field("lambda", lambda).finish(),
            CopulaSpec::StrongDependence { lambda_l } => {
                f.debug_struct("StrongDependence").field("lambda_l", lambda_l).finish()
            }
            CopulaSpec::Numeric { dim, .. } => f.debug_struct("Numeric").field("dim", dim).finish_non_exhaustive(),
        }
    }
}

impl CopulaSpec {
    pub fn gaussian(correlation: DMatrix<f64>) -> Result<Self> {
        check_correlation(&correlation)?;
        Ok(Self::Gaussian { correlation })
    }

    pub fn archimedean(lambda: f64) -> Result<Self> {
        ensure_finite("lambda", lambda)?;
        if lambda <= 0.0 {
            return domain(format!("regular-variation index must be positive, got {lambda}"));
        }
        Ok(Self::Archimedean { lambda })
    }

    pub fn strong_dependence(lambda_l: f64) -> Result<Self> {
        ensure_finite("lambda_l", lambda_l)?;
        if !(lambda_l > 0.0 && lambda_l <= 1.0) {
            return domain(format!("lower tail dependence must lie in (0, 1], got {lambda_l}"));
        }
        Ok(Self::StrongDependence { lambda_l })
    }

    /// Wraps an evaluator after spot-checking the copula boundary conditions.
    pub fn numeric(dim: usize, evaluator: CopulaFn) -> Result<Self> {
        if dim == 0 {
            return domain("copula dimension must be positive");
        }
        for k in 0..dim {
            for &u in &[0.1, 0.5, 0.9] {
                let mut point = vec![1.0; dim];
                point[k] = u;
                let margin = evaluator(&point);
                if (margin - u).abs() > BOUNDARY_TOL {
                    return domain(format!("copula margin {k} at {u} evaluates to {margin}"));
                }
                let mut point = vec![u; dim];
                point[k] = 0.0;
                let grounded = evaluator(&point);
                if grounded.abs() > BOUNDARY_TOL {
                    return domain(format!("copula is {grounded} with coordinate {k} at zero"));
                }
            }
        }
        Ok(Self::Numeric { dim, evaluator })
    }

    /// `χ(α)` from the closed form, or a numeric estimate on the default ladder.
    pub fn chi(&self, alpha: &[f64]) -> Result<f64> {
        match self {
            CopulaSpec::Gaussian { correlation } => chi_gaussian(correlation, alpha),
            CopulaSpec::Archimedean { lambda } => chi_archimedean(*lambda, alpha),
            CopulaSpec::StrongDependence { .. } => {
                check_alpha(alpha)?;
                Ok(chi_strong_dependence())
            }
            CopulaSpec::Numeric { dim, evaluator } => {
                if alpha.len() != *dim {
                    return domain(format!("{} exponents for a {dim}-dimensional copula", alpha.len()));
                }
                Ok(chi_numeric(evaluator.as_ref(), alpha, &default_ladder())?.estimate)
            }
        }
    }
}

fn check_correlation(r: &DMatrix<f64>) -> Result<()> {
    let n = r.nrows();
    if n == 0 || r.ncols() != n {
        return Err(WingError::Matrix("correlation matrix must be square and nonempty".into()));
    }
    for i in 0..n {
        if (r[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(WingError::Matrix(format!("correlation diagonal entry {i} is {}", r[(i, i)])));
        }
        for j in 0..n {
            ensure_finite("correlation", r[(i, j)])?;
            if (r[(i, j)] - r[(j, i)]).abs() > 1e-12 {
                return Err(WingError::Matrix("correlation matrix is not symmetric".into()));
            }
        }
    }
    if r.clone().cholesky().is_none() {
        return Err(WingError::Matrix("correlation matrix is singular or indefinite".into()));
    }
    Ok(())
}

fn check_alpha(alpha: &[f64]) -> Result<()> {
    if alpha.is_empty() {
        return domain("need at least one exponent");
    }
    for &a in alpha {
        ensure_finite("alpha", a)?;
        if a <= 0.0 {
            return domain(format!("exponents must be positive, got {a}"));
        }
    }
    Ok(())
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Gaussian copula: `χ = max_i α_i · min_{w∈Δ} wᵀΣw` with `Σ_ij = R_ij/√(α_iα_j)`.
pub fn chi_gaussian(correlation: &DMatrix<f64>, alpha: &[f64]) -> Result<f64> {
    check_correlation(correlation)?;
    check_alpha(alpha)?;
    let n = alpha.len();
    if correlation.nrows() != n {
        return domain(format!("{n} exponents for a {}-dimensional correlation", correlation.nrows()));
    }
    // scale-free: normalise the largest exponent to 1
    let top = max_of(alpha);
    let a: Vec<f64> = alpha.iter().map(|x| x / top).collect();
    let sigma = DMatrix::from_fn(n, n, |i, j| correlation[(i, j)] / (a[i] * a[j]).sqrt());
    Ok(min_quadratic_simplex(&sigma)?.value)
}

/// Archimedean copula: `χ = max α / (Σ α_i^{1/λ})^λ`.
pub fn chi_archimedean(lambda: f64, alpha: &[f64]) -> Result<f64> {
    ensure_finite("lambda", lambda)?;
    if lambda <= 0.0 {
        return domain(format!("regular-variation index must be positive, got {lambda}"));
    }
    check_alpha(alpha)?;
    let top = max_of(alpha);
    let sum: f64 = alpha.iter().map(|a| (a / top).powf(1.0 / lambda)).sum();
    Ok(sum.powf(-lambda))
}

/// Copulas with positive lower tail dependence have `χ ≡ 1`.
pub fn chi_strong_dependence() -> f64 {
    1.0
}

/// Ratio at one point of the ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiRung {
    pub u: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiEstimate {
    /// Extrapolated `χ`; the last ratio when fewer than three rungs are usable.
    pub estimate: f64,
    pub rungs: Vec<ChiRung>,
    pub converged: bool,
    /// Whether the evaluator underflowed and the ladder was cut short.
    pub truncated: bool,
}

/// `u = 10⁻², 10⁻³, …, 10⁻¹²`.
pub fn default_ladder() -> Vec<f64> {
    (2..=12).map(|e| 10f64.powi(-e)).collect()
}

/// Numeric `χ(α)` from a copula evaluator.
///
/// The reciprocal ratio is fitted as `a + b/ln(1/u)` on the last three usable
/// rungs and `1/a` is reported.
pub fn chi_numeric(
    copula: &(dyn Fn(&[f64]) -> f64 + Send + Sync),
    alpha: &[f64],
    ladder: &[f64],
) -> Result<ChiEstimate> {
    check_alpha(alpha)?;
    if ladder.is_empty() {
        return domain("ladder must not be empty");
    }
    for w in ladder.windows(2) {
        if w[1] >= w[0] {
            return domain("ladder must be strictly decreasing");
        }
    }
    if !(ladder[0] <= 0.1 && ladder[ladder.len() - 1] > 0.0) {
        return domain("ladder must lie in (0, 0.1]");
    }
    let top = max_of(alpha);
    let mut rungs = Vec::with_capacity(ladder.len());
    let mut truncated = false;
    for &u in ladder {
        let point: Vec<f64> = alpha.iter().map(|a| u.powf(*a)).collect();
        let c = copula(&point);
        if !(c > 0.0) || !c.is_finite() {
            warn!("copula evaluator returned {c} at u={u:e}; ladder truncated");
            truncated = true;
            break;
        }
        // min_i α_i ln u = max α · ln u since ln u < 0
        rungs.push(ChiRung { u, ratio: top * u.ln() / c.ln() });
    }
    if rungs.is_empty() {
        return Err(WingError::Integration("copula evaluator underflowed on the whole ladder".into()));
    }
    let m = rungs.len();
    if m < 3 {
        return Ok(ChiEstimate { estimate: rungs[m - 1].ratio, rungs, converged: false, truncated });
    }
    let tail = &rungs[m - 3..];
    let x: Vec<f64> = tail.iter().map(|r| 1.0 / (-r.u.ln())).collect();
    let y: Vec<f64> = tail.iter().map(|r| 1.0 / r.ratio).collect();
    let mx = x.iter().sum::<f64>() / 3.0;
    let my = y.iter().sum::<f64>() / 3.0;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let intercept = my - sxy / sxx * mx;
    let estimate = 1.0 / intercept;
    let last = rungs[m - 1].ratio;
    let step = (last - rungs[m - 2].ratio).abs();
    let converged =
        estimate.is_finite() && step <= CONVERGENCE_FACTOR * (estimate - last).abs().max(f64::EPSILON * last);
    if !converged {
        warn!("numeric χ did not settle: last step {step:e}, extrapolated {estimate}");
    }
    Ok(ChiEstimate { estimate, rungs, converged, truncated })
}

/// `ln Φ₂(x, y; ρ)`, accurate in relative terms deep in the lower tail.
pub fn log_bivariate_normal_cdf(x: f64, y: f64, rho: f64) -> Result<f64> {
    ensure_finite("rho", rho)?;
    if !(rho > -1.0 && rho < 1.0) {
        return domain(format!("correlation must lie in (-1, 1), got {rho}"));
    }
    if x == f64::NEG_INFINITY || y == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if x == f64::INFINITY {
        return Ok(log_norm_cdf(y));
    }
    if y == f64::INFINITY {
        return Ok(log_norm_cdf(x));
    }
    let s = (1.0 - rho * rho).sqrt();
    let h = |z: f64| log_norm_pdf(z) + log_norm_cdf((y - rho * z) / s);
    Ok(log_integrate_scaled(h, x.min(0.0) - 40.0, x, 1e-12)?.0)
}

/// Bivariate Gaussian copula evaluator.
pub fn gaussian_copula_2d(rho: f64) -> Result<CopulaFn> {
    if !(rho > -1.0 && rho < 1.0) {
        return domain(format!("correlation must lie in (-1, 1), got {rho}"));
    }
    Ok(Arc::new(move |u: &[f64]| {
        if u.iter().any(|&v| v <= 0.0) {
            return 0.0;
        }
        let x = if u[0] >= 1.0 { f64::INFINITY } else { norm_inv(u[0]) };
        let y = if u[1] >= 1.0 { f64::INFINITY } else { norm_inv(u[1]) };
        log_bivariate_normal_cdf(x, y, rho).map_or(f64::NAN, f64::exp)
    }))
}

/// Gumbel copula `exp(−(Σ(−ln u_i)^θ)^{1/θ})`; its lower tail has index `λ = 1/θ`.
pub fn gumbel_copula(theta: f64) -> Result<CopulaFn> {
    if !(theta >= 1.0) {
        return domain(format!("Gumbel parameter must be at least 1, got {theta}"));
    }
    Ok(Arc::new(move |u: &[f64]| {
        if u.iter().any(|&v| v <= 0.0) {
            return 0.0;
        }
        let s: f64 = u.iter().map(|v| (-v.ln()).powf(theta)).sum();
        (-s.powf(1.0 / theta)).exp()
    }))
}

/// Clayton copula `(Σu_i^{−θ} − n + 1)^{−1/θ}`, lower tail dependent for `θ > 0`.
pub fn clayton_copula(theta: f64) -> Result<CopulaFn> {
    if !(theta > 0.0) {
        return domain(format!("Clayton parameter must be positive, got {theta}"));
    }
    Ok(Arc::new(move |u: &[f64]| {
        if u.iter().any(|&v| v <= 0.0) {
            return 0.0;
        }
        let s: f64 = u.iter().map(|v| v.powf(-theta) - 1.0).sum();
        (1.0 + s).powf(-1.0 / theta)
    }))
}

pub fn independence_copula() -> CopulaFn {
    Arc::new(|u: &[f64]| u.iter().product())
}

pub fn comonotone_copula() -> CopulaFn {
    Arc::new(|u: &[f64]| u.iter().copied().fold(1.0, f64::min))
}

/// Reference tail `ln G(−k) = −scale·k^index` (`index = 1`: exponential tail).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTail {
    pub scale: f64,
    pub index: f64,
}

impl ReferenceTail {
    pub fn exponential(slope: f64) -> Self {
        Self { scale: slope, index: 1.0 }
    }

    /// `−ln G(−k)/k`
    pub fn slope_at(&self, k: f64) -> f64 {
        self.scale * k.powf(self.index - 1.0)
    }
}

/// Marginal tails `ln G_i(∓k) ≈ η_i·ln G(∓k)` and the caller's assertions about them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalTailSpec {
    pub eta: Vec<f64>,
    pub reference: ReferenceTail,
    pub side: Side,
    /// Caller asserts the exponential moment condition on this side.
    #[serde(default = "yes")]
    pub moment_condition: bool,
    /// Caller asserts regular variation of every `−ln G_i`.
    #[serde(default = "yes")]
    pub regular_variation: bool,
}

fn yes() -> bool {
    true
}

impl MarginalTailSpec {
    pub fn new(eta: Vec<f64>, reference: ReferenceTail, side: Side) -> Result<Self> {
        check_alpha(&eta)?;
        ensure_finite("tail scale", reference.scale)?;
        ensure_finite("tail index", reference.index)?;
        if reference.scale <= 0.0 || reference.index <= 0.0 {
            return domain("reference tail needs positive scale and index");
        }
        Ok(Self { eta, reference, side, moment_condition: true, regular_variation: true })
    }

    fn warn_unasserted(&self) {
        if !self.moment_condition || !self.regular_variation {
            warn!("tail-wing formula used without its moment or regular-variation hypotheses");
        }
    }
}

/// Left wing: `I(−k)²T/k ≈ ψ(−ln G(−k)/k · max η / χ(η))`.
pub fn tailwing_left(marginals: &MarginalTailSpec, chi: f64, maturity: f64, k: f64) -> Result<f64> {
    ensure_finite("chi", chi)?;
    ensure_finite("maturity", maturity)?;
    ensure_finite("k", k)?;
    if !(chi > 0.0) || maturity <= 0.0 || k <= 0.0 {
        return domain("tail wing needs χ > 0, T > 0 and k > 0");
    }
    if marginals.side != Side::Left {
        return domain("left tail wing needs left-tail marginals");
    }
    marginals.warn_unasserted();
    let arg = marginals.reference.slope_at(k) * max_of(&marginals.eta) / chi;
    if !(arg >= 0.0) {
        return domain(format!("tail slope {arg} is negative"));
    }
    Ok((k / maturity * psi(arg)?.value).sqrt())
}

/// Right wing: `I(k)²T/k ≈ ψ(min_i s_i)` for marginal slopes `s_i = −ln Ḡ_i(k)/k`; no copula enters.
pub fn tailwing_right(marginal_slopes: &[f64], maturity: f64, k: f64) -> Result<f64> {
    if marginal_slopes.is_empty() {
        return domain("need at least one marginal slope");
    }
    for &s in marginal_slopes {
        ensure_finite("slope", s)?;
        if s <= 0.0 {
            return domain(format!("marginal slopes must be positive, got {s}"));
        }
    }
    ensure_finite("maturity", maturity)?;
    ensure_finite("k", k)?;
    if maturity <= 0.0 || k <= 0.0 {
        return domain("tail wing needs T > 0 and k > 0");
    }
    let slope = marginal_slopes.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((k / maturity * psi(slope)?.value).sqrt())
}

/// Implied-variance slope `I(−k)²T/k` for NIG margins under a Gaussian copula.
pub fn nig_slope(correlation: &DMatrix<f64>, alpha: &[f64], beta: &[f64]) -> Result<f64> {
    check_correlation(correlation)?;
    let n = alpha.len();
    if beta.len() != n || correlation.nrows() != n {
        return domain("NIG parameters and correlation must have matching dimensions");
    }
    for (&a, &b) in alpha.iter().zip(beta) {
        ensure_finite("NIG alpha", a)?;
        ensure_finite("NIG beta", b)?;
        if !(a > b.abs() && b.abs() > 0.0) {
            return domain(format!("NIG parameters need α > |β| > 0, got α={a}, β={b}"));
        }
    }
    let eta: Vec<f64> = alpha.iter().zip(beta).map(|(a, b)| a - b).collect();
    let sigma = DMatrix::from_fn(n, n, |i, j| correlation[(i, j)] / (eta[i] * eta[j]).sqrt());
    let v = min_quadratic_simplex(&sigma)?.value;
    Ok(psi(1.0 / v)?.value)
}
