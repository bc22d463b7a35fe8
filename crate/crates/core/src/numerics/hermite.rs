//! Gauss–Hermite rules for the weight `exp(-z²)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{domain, Result};

/// Largest rule whose Hermite recurrence stays inside f64 range.
pub const MAX_NODES: usize = 600;

/// Nodes and weights of an `n`-point Gauss–Hermite rule.
///
/// `ln_scaled_weights[j] = ln(w_j) + z_j²`, so that for a log-integrand
/// `h`, `∫ exp(h(z)) dz ≈ Σ exp(ln_scaled_weights[j] + h(z_j))`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub ln_scaled_weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_NODES {
            return domain(format!("Gauss-Hermite order must be in 1..={MAX_NODES}, got {n}"));
        }
        // Golub–Welsch: nodes are eigenvalues of the Jacobi matrix, polished by
        // Newton on the orthonormal recurrence, which also yields ln w directly.
        let jacobi =
            DMatrix::from_fn(n, n, |i, j| if i + 1 == j || j + 1 == i { (0.5 * i.max(j) as f64).sqrt() } else { 0.0 });
        let mut roots: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
        roots.sort_by(|a, b| b.total_cmp(a));
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let mut ln_sw = vec![0.0; n];
        for (i, &root) in roots.iter().enumerate().take(n.div_ceil(2)) {
            let mut z = if n % 2 == 1 && i == n / 2 { 0.0 } else { root };
            let (mut ln_pp, mut step) = recurrence(n, z);
            for _ in 0..8 {
                z -= step;
                (ln_pp, step) = recurrence(n, z);
                if step.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            let ln_w = std::f64::consts::LN_2 - 2.0 * ln_pp;
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = ln_w.exp();
            weights[n - 1 - i] = weights[i];
            ln_sw[i] = ln_w + z * z;
            ln_sw[n - 1 - i] = ln_sw[i];
        }
        Ok(Self { nodes, weights, ln_scaled_weights: ln_sw })
    }

    /// Shared rule of order `n`, built once per process.
    pub fn cached(n: usize) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(rule) = cache.lock().expect("hermite cache poisoned").get(&n) {
            return Ok(Arc::clone(rule));
        }
        let rule = Arc::new(Self::new(n)?);
        cache.lock().expect("hermite cache poisoned").insert(n, Arc::clone(&rule));
        Ok(rule)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Orthonormal Hermite recurrence at `z`: returns `(ln |p_n'(z)|, p_n(z)/p_n'(z))`.
fn recurrence(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = std::f64::consts::PI.powf(-0.25);
    let mut p2 = 0.0;
    let mut log_scale = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
        if p1.abs() > 1e150 {
            p1 *= 1e-150;
            p2 *= 1e-150;
            log_scale += 150.0 * std::f64::consts::LN_10;
        }
    }
    let pp = (2.0 * n as f64).sqrt() * p2;
    (pp.abs().ln() + log_scale, p1 / pp)
}
