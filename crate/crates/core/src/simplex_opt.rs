//! Quadratic minimization over the probability simplex and the min–max
//! saddle constant of the time-changed model.
//!
//! Both problems are small dense QPs with nonnegativity constraints and are
//! solved exactly by primal active-set iterations on the support.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{domain, ensure_finite, Result, WingError};
use crate::numerics::minimize::golden_section;

/// Largest accepted spectral condition number of a covariance matrix.
pub const MAX_CONDITION: f64 = 1e12;
/// Weights below this are treated as exactly zero.
pub const ZERO_WEIGHT: f64 = 1e-14;
/// Relative tolerance on KKT multipliers.
const KKT_TOL: f64 = 1e-12;
/// Relative multiplier size below which an inactive constraint counts as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

/// Minimizer of `wᵀBw` over the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexSolution {
    pub w_bar: Vec<f64>,
    /// `w̄ᵀBw̄`
    pub value: f64,
    /// Indices with `w̄_i > 0`, ascending.
    pub support: Vec<usize>,
    pub n_bar: usize,
    /// `B` restricted to the support.
    pub b_bar: DMatrix<f64>,
    /// Row sums of `b_bar⁻¹`; they add up to `1/value`.
    pub a_row_sums: Vec<f64>,
    /// `(Bw̄)_i − value` for every index; zero on the support, nonnegative off it.
    pub multipliers: Vec<f64>,
}

impl SimplexSolution {
    /// `Σ_k Ā_k`
    pub fn a_sum(&self) -> f64 {
        self.a_row_sums.iter().sum()
    }

    /// Indices outside the support whose constraint multiplier vanishes.
    ///
    /// A nonempty result means the minimizer sits exactly on a change of
    /// support (for two assets: `ρ = σ₂/σ₁`).
    pub fn degenerate_indices(&self) -> Vec<usize> {
        let scale = self.value.abs().max(f64::MIN_POSITIVE);
        (0..self.w_bar.len())
            .filter(|i| !self.support.contains(i) && self.multipliers[*i].abs() <= DEGENERACY_TOL * scale)
            .collect()
    }
}

/// Checks that `cov` is square, symmetric and positive definite with
/// condition number at most [`MAX_CONDITION`].
pub fn check_covariance(cov: &DMatrix<f64>) -> Result<()> {
    let n = cov.nrows();
    if n == 0 || cov.ncols() != n {
        return Err(WingError::Matrix(format!("covariance must be square and nonempty, got {}x{}", n, cov.ncols())));
    }
    if cov.iter().any(|x| !x.is_finite()) {
        return Err(WingError::Matrix("covariance has non-finite entries".into()));
    }
    let scale = cov.amax();
    for i in 0..n {
        for j in 0..i {
            if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale.max(1.0) {
                return Err(WingError::Matrix(format!("covariance is not symmetric at ({i}, {j})")));
            }
        }
    }
    let eig = SymmetricEigen::new(cov.clone());
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    if lo <= 0.0 {
        return Err(WingError::Matrix(format!("covariance is not positive definite (smallest eigenvalue {lo:e})")));
    }
    if hi / lo > MAX_CONDITION {
        return Err(WingError::Matrix(format!("covariance condition number {:e} exceeds {MAX_CONDITION:e}", hi / lo)));
    }
    Ok(())
}

fn submatrix(cov: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| cov[(idx[a], idx[b])])
}

fn cholesky_sub(cov: &DMatrix<f64>, idx: &[usize]) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(submatrix(cov, idx))
        .ok_or_else(|| WingError::Matrix(format!("principal submatrix on {idx:?} is not positive definite")))
}

/// Minimizer of `wᵀBw` over `{w_F ≥ 0 free, w_i = 0 off F, Σw = 1}` ignoring the sign constraints.
fn equality_solution(cov: &DMatrix<f64>, free: &[usize]) -> Result<DVector<f64>> {
    let n = cov.nrows();
    let chol = cholesky_sub(cov, free)?;
    let y = chol.solve(&DVector::from_element(free.len(), 1.0));
    let s = y.sum();
    let mut w = DVector::zeros(n);
    for (a, &i) in free.iter().enumerate() {
        w[i] = y[a] / s;
    }
    Ok(w)
}

/// Solves `min_{w ∈ Δ_n} wᵀBw` for symmetric positive definite `B`.
pub fn min_quadratic_simplex(cov: &DMatrix<f64>) -> Result<SimplexSolution> {
    check_covariance(cov)?;
    let n = cov.nrows();
    let all: Vec<usize> = (0..n).collect();

    // Feasible start: the unconstrained minimizer if it is nonnegative,
    // otherwise the vertex with the smallest variance.
    let unconstrained = equality_solution(cov, &all)?;
    let (mut w, mut free) = if unconstrained.iter().all(|&x| x >= 0.0) {
        (unconstrained, all)
    } else {
        let mut best = 0;
        for i in 1..n {
            if cov[(i, i)] < cov[(best, best)] {
                best = i;
            }
        }
        let mut w = DVector::zeros(n);
        w[best] = 1.0;
        (w, vec![best])
    };

    for _ in 0..(50 * n + 50) {
        let target = equality_solution(cov, &free)?;
        if free.iter().all(|&i| target[i] >= 0.0) {
            w = target;
            let g = cov * &w;
            let value = w.dot(&g);
            let mut entering = None;
            let mut most_negative = -KKT_TOL * value;
            for i in 0..n {
                if !free.contains(&i) && g[i] - value < most_negative {
                    most_negative = g[i] - value;
                    entering = Some(i);
                }
            }
            match entering {
                Some(i) => {
                    free.push(i);
                    free.sort_unstable();
                }
                None => return finish_simplex(cov, w, free),
            }
        } else {
            // Move toward the target until the first free weight hits zero.
            let mut step = 1.0;
            let mut blocking = Vec::new();
            for &i in &free {
                if target[i] < w[i] {
                    let ratio = w[i] / (w[i] - target[i]);
                    if ratio < step - 1e-15 {
                        step = ratio;
                        blocking.clear();
                        blocking.push(i);
                    } else if (ratio - step).abs() <= 1e-15 {
                        blocking.push(i);
                    }
                }
            }
            w = &w + (&target - &w) * step;
            for &i in &blocking {
                w[i] = 0.0;
            }
            free.retain(|i| !blocking.contains(i));
            if free.is_empty() {
                return Err(WingError::Optimization("active set emptied during simplex QP".into()));
            }
        }
    }
    Err(WingError::Optimization("simplex QP active-set iteration limit reached".into()))
}

fn finish_simplex(cov: &DMatrix<f64>, w: DVector<f64>, mut free: Vec<usize>) -> Result<SimplexSolution> {
    free.retain(|&i| w[i] > ZERO_WEIGHT);
    let w = equality_solution(cov, &free)?;
    let chol = cholesky_sub(cov, &free)?;
    let a = chol.solve(&DVector::from_element(free.len(), 1.0));
    let g = cov * &w;
    let value = w.dot(&g);
    let mut multipliers: Vec<f64> = g.iter().map(|gi| gi - value).collect();
    for &i in &free {
        multipliers[i] = 0.0;
    }
    Ok(SimplexSolution {
        w_bar: w.iter().copied().collect(),
        value,
        n_bar: free.len(),
        b_bar: submatrix(cov, &free),
        a_row_sums: a.iter().copied().collect(),
        support: free,
        multipliers,
    })
}

/// Minimizer of the min–max problem defining the decay constant `c*`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddlePoint {
    pub c_star: f64,
    pub t_bar: f64,
    pub w_bar: Vec<f64>,
    pub u_bar: Vec<f64>,
}

/// Solution of the inner problem `max_{u ≥ 0} uᵀ(1+μt) − t·uᵀBu/2` at one `t`.
struct Inner {
    /// `f̄(t) = θt + inner maximum`
    value: f64,
    /// `f̄′(t)`
    slope: f64,
    /// `f̄″(t)` on the current support
    curvature: f64,
    u: DVector<f64>,
}

fn check_saddle_inputs(cov: &DMatrix<f64>, drift: &[f64], theta: f64) -> Result<()> {
    check_covariance(cov)?;
    if drift.len() != cov.nrows() {
        return domain(format!("drift has length {}, covariance is {}x{}", drift.len(), cov.nrows(), cov.nrows()));
    }
    for &m in drift {
        ensure_finite("drift", m)?;
    }
    ensure_finite("theta", theta)?;
    if theta <= 0.0 {
        return domain(format!("theta must be positive, got {theta}"));
    }
    Ok(())
}

fn solve_inner(cov: &DMatrix<f64>, drift: &[f64], theta: f64, t: f64) -> Result<Inner> {
    let n = cov.nrows();
    let b = DVector::from_fn(n, |i, _| 1.0 + drift[i] * t);
    let mut u = DVector::zeros(n);
    let mut free: Vec<usize> = Vec::new();
    let scale = b.amax().max(1.0);

    for _ in 0..(50 * n + 50) {
        let target = if free.is_empty() {
            DVector::zeros(n)
        } else {
            let chol = cholesky_sub(cov, &free)?;
            let rhs = DVector::from_iterator(free.len(), free.iter().map(|&i| b[i] / t));
            let y = chol.solve(&rhs);
            let mut full = DVector::zeros(n);
            for (a, &i) in free.iter().enumerate() {
                full[i] = y[a];
            }
            full
        };
        if free.iter().all(|&i| target[i] >= 0.0) {
            u = target;
            // gradient of the minimization form t·Bu − b
            let g = (cov * &u) * t - &b;
            let mut entering = None;
            let mut most_negative = -KKT_TOL * scale;
            for i in 0..n {
                if !free.contains(&i) && g[i] < most_negative {
                    most_negative = g[i];
                    entering = Some(i);
                }
            }
            match entering {
                Some(i) => {
                    free.push(i);
                    free.sort_unstable();
                }
                None => {
                    let one_minus = DVector::from_fn(n, |i, _| 1.0 - drift[i] * t);
                    let value = theta * t + 0.5 * u.dot(&b);
                    let slope = theta - u.dot(&one_minus) / (2.0 * t);
                    let curvature = if free.is_empty() {
                        0.0
                    } else {
                        let chol = cholesky_sub(cov, &free)?;
                        chol.solve(&DVector::from_element(free.len(), 1.0)).sum() / t.powi(3)
                    };
                    return Ok(Inner { value, slope, curvature, u });
                }
            }
        } else {
            let mut step = 1.0;
            let mut blocking = Vec::new();
            for &i in &free {
                if target[i] < u[i] {
                    let ratio = u[i] / (u[i] - target[i]);
                    if ratio < step - 1e-15 {
                        step = ratio;
                        blocking.clear();
                        blocking.push(i);
                    } else if (ratio - step).abs() <= 1e-15 {
                        blocking.push(i);
                    }
                }
            }
            u = &u + (&target - &u) * step;
            for &i in &blocking {
                u[i] = 0.0;
            }
            free.retain(|i| !blocking.contains(i));
        }
    }
    Err(WingError::Optimization(format!("inner dual problem did not converge at t = {t}")))
}

fn weights_from_dual(u: &DVector<f64>, drift: &[f64], t: f64) -> Vec<f64> {
    let s = u.sum();
    if s > 0.0 {
        return u.iter().map(|x| x / s).collect();
    }
    // Every direction gives (1 + tμᵀw)⁺ = 0; report the vertex with the most negative drift.
    let mut best = 0;
    for i in 1..drift.len() {
        if 1.0 + drift[i] * t < 1.0 + drift[best] * t {
            best = i;
        }
    }
    let mut w = vec![0.0; drift.len()];
    w[best] = 1.0;
    w
}

/// `max_{w ∈ Δ_n} F(t, w)` with `F(t,w) = θt + ((1 + tμᵀw)⁺)² / (2t·wᵀBw)` and its maximizer.
pub fn inner_max_weights(cov: &DMatrix<f64>, drift: &[f64], theta: f64, t: f64) -> Result<(f64, Vec<f64>)> {
    check_saddle_inputs(cov, drift, theta)?;
    ensure_finite("t", t)?;
    if t <= 0.0 {
        return domain(format!("t must be positive, got {t}"));
    }
    let inner = solve_inner(cov, drift, theta, t)?;
    Ok((inner.value, weights_from_dual(&inner.u, drift, t)))
}

/// `c* = min_{t>0} max_{w ∈ Δ_n} F(t, w)`.
pub fn saddle_cstar(cov: &DMatrix<f64>, drift: &[f64], theta: f64) -> Result<SaddlePoint> {
    check_saddle_inputs(cov, drift, theta)?;
    let eval = |t: f64| solve_inner(cov, drift, theta, t);

    // Bracket the sign change of f̄′ by doubling or halving from t = 1.
    let mut t = 1.0;
    let first = eval(t)?.slope;
    let (lo, hi) = if first > 0.0 {
        let mut hi = t;
        loop {
            t *= 0.5;
            if t < 1e-300 {
                return Err(WingError::Optimization("could not bracket the saddle from below".into()));
            }
            if eval(t)?.slope <= 0.0 {
                break (t, hi);
            }
            hi = t;
        }
    } else {
        let mut lo = t;
        loop {
            t *= 2.0;
            if t > 1e300 {
                return Err(WingError::Optimization("could not bracket the saddle from above".into()));
            }
            if eval(t)?.slope >= 0.0 {
                break (lo, t);
            }
            lo = t;
        }
    };

    let value_at = |t: f64| eval(t).map(|s| s.value).unwrap_or(f64::INFINITY);
    let (a, b) = golden_section(value_at, lo, hi, 1e-8 * hi.min(1.0));
    let mut t_bar = 0.5 * (a + b);
    let mut best = eval(t_bar)?;
    for _ in 0..5 {
        if best.curvature <= 0.0 || best.slope == 0.0 {
            break;
        }
        let next = t_bar - best.slope / best.curvature;
        if !(next > lo && next < hi) {
            break;
        }
        let cand = eval(next)?;
        if cand.slope.abs() >= best.slope.abs() {
            break;
        }
        t_bar = next;
        best = cand;
    }

    let w_bar = weights_from_dual(&best.u, drift, t_bar);
    let drift_w: f64 = drift.iter().zip(&w_bar).map(|(m, w)| m * w).sum();
    if 1.0 + t_bar * drift_w <= 0.0 {
        return Err(WingError::Optimization(format!("saddle sign condition 1 + tμᵀw > 0 fails at t = {t_bar}")));
    }
    Ok(SaddlePoint { c_star: best.value, t_bar, w_bar, u_bar: best.u.iter().copied().collect() })
}
