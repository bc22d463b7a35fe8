//! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals and half-lines.

use crate::error::{Result, WingError};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for XGK[1], XGK[3], XGK[5] and the centre.
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

const MAX_INTERVALS: usize = 4000;

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Globally adaptive integration of `f` over `[a, b]`.
///
/// Returns `(value, error_estimate)`. Fails if the requested accuracy is not
/// reached after `MAX_INTERVALS` bisections or the integrand produces NaN.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<(f64, f64)> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    let mut pieces = vec![(a, b, kronrod15(&f, a, b))];
    loop {
        let total: f64 = pieces.iter().map(|p| p.2 .0).sum();
        let err: f64 = pieces.iter().map(|p| p.2 .1).sum();
        if total.is_nan() || err.is_nan() {
            return Err(WingError::Integration("integrand returned NaN".into()));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok((total, err));
        }
        if pieces.len() >= MAX_INTERVALS {
            return Err(WingError::Integration(format!(
                "no convergence after {MAX_INTERVALS} subintervals (estimate {total:e}, error {err:e})"
            )));
        }
        let (idx, _) = pieces.iter().enumerate().max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1)).expect("non-empty");
        let (lo, hi, _) = pieces.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // interval cannot be split further in floating point
            return Ok((total, err));
        }
        pieces.push((lo, mid, kronrod15(&f, lo, mid)));
        pieces.push((mid, hi, kronrod15(&f, mid, hi)));
    }
}

const MAX_PANELS: usize = 600;
// A panel this far out that still matters signals a tail decaying no faster than 1/x.
const STALL_PANELS: usize = 60;
const STALL_FRACTION: f64 = 1e-6;

/// `ln ∫_a^∞ exp(log_f(x)) dx` for integrands that may under- or overflow.
///
/// The half-line is cut into panels `[a + h(2^j - 1), a + h(2^{j+1} - 1)]`,
/// where `h` is a first-panel width (`scale`). Panels are added until the
/// latest two contribute less than `1e-14` of the running total. A panel that
/// still carries more than `1e-6` of the total after 60 doublings is reported
/// as divergence.
pub fn log_integrate_half_line<F: Fn(f64) -> f64>(log_f: F, a: f64, scale: f64, rel_tol: f64) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(WingError::Integration(format!("panel scale must be positive, got {scale}")));
    }
    // Reference level so that exp(log_f - reference) stays representable.
    let mut reference = f64::NEG_INFINITY;
    let mut x = a;
    let mut h = scale;
    for _ in 0..64 {
        reference = reference.max(log_f(x + 0.5 * h));
        x += h;
        h *= 2.0;
    }
    if !reference.is_finite() {
        return Err(WingError::Integration("integrand vanishes or is infinite on probe points".into()));
    }

    let g = |t: f64| {
        let v = log_f(t);
        if v == f64::NEG_INFINITY {
            0.0
        } else {
            (v - reference).exp()
        }
    };
    let mut total = 0.0;
    let mut lo = a;
    let mut width = scale;
    let mut small_in_a_row = 0;
    for panel in 0..MAX_PANELS {
        let hi = lo + width;
        let (v, _) = integrate(g, lo, hi, rel_tol, 0.0)?;
        if !v.is_finite() {
            return Err(WingError::Integration(format!("panel [{lo:e}, {hi:e}] is not finite")));
        }
        total += v;
        if panel >= 3 && total > 0.0 && v <= 1e-14 * total {
            small_in_a_row += 1;
            if small_in_a_row >= 2 {
                return Ok(reference + total.ln());
            }
        } else {
            small_in_a_row = 0;
        }
        if panel >= STALL_PANELS && v > STALL_FRACTION * total {
            return Err(WingError::Integration(format!(
                "tail panels still carry {:e} of the total after {STALL_PANELS} doublings; integral appears divergent",
                v / total
            )));
        }
        lo = hi;
        width *= 2.0;
        if !lo.is_finite() {
            break;
        }
    }
    Err(WingError::Integration(format!(
        "tail panels did not shrink after {MAX_PANELS} doublings; integral appears divergent"
    )))
}

const SCAN_POINTS: usize = 4000;

/// `ln ∫ₐᵇ e^{h}` for a log-integrand whose exponential may under- or overflow.
///
/// The maximum of `h` on a scan grid is factored out before adaptive
/// integration. Returns the log-value and the relative error estimate.
pub fn log_integrate_scaled<F: Fn(f64) -> f64>(h: F, a: f64, b: f64, rel_tol: f64) -> Result<(f64, f64)> {
    let dz = (b - a) / SCAN_POINTS as f64;
    let (z_peak, peak) = (0..=SCAN_POINTS)
        .map(|j| {
            let z = a + dz * j as f64;
            (z, h(z))
        })
        .filter(|(_, v)| !v.is_nan())
        .fold((a, f64::NEG_INFINITY), |best, p| if p.1 > best.1 { p } else { best });
    if peak == f64::NEG_INFINITY {
        return Ok((peak, 0.0));
    }
    let scaled = |z: f64| {
        let v = h(z) - peak;
        if v.is_nan() {
            0.0
        } else {
            v.exp()
        }
    };
    // e^{h − peak} carries the absolute round-off of h as relative noise
    let tol = rel_tol.max(64.0 * f64::EPSILON * peak.abs());
    // splitting at the peak keeps a narrow spike at a panel endpoint, where the rule samples it
    let mut total = 0.0;
    let mut err = 0.0;
    for (lo, hi) in [(a, z_peak), (z_peak, b)] {
        if hi > lo {
            let (v, e) = integrate(scaled, lo, hi, tol, 0.0)?;
            total += v;
            err += e;
        }
    }
    if !(total > 0.0) {
        return Err(WingError::Integration(format!("integrand peaked at {z_peak} but integrated to {total}")));
    }
    Ok((peak + total.ln(), err / total))
}
