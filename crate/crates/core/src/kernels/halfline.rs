//! Walk on `ℤ₊ = {0, 1, 2, ...}` with jump intensity ½ to each side, reflected at 0,
//! and the constants `a(h)`.

use crate::kernels::bessel::scaled_bessel_i_all;
use crate::quad::integrate_with_breaks;

/// `p_t(x, y) = q̃_t(x - y) + q̃_t(x + y + 1)` with `q̃_t(d) = e^{-t} I_|d|(t)`.
///
/// Reflection about `-½` maps the walk on `ℤ` onto the half-line walk.
pub fn halfline_kernel(t: f64, x: u64, y: u64) -> f64 {
    assert!(t >= 0.0);
    let d1 = x.abs_diff(y) as usize;
    let d2 = (x + y + 1) as usize;
    let b = scaled_bessel_i_all(t, d2);
    b[d1] + b[d2]
}

/// `a(h)` for `h = 0..K-1` with error estimates.
#[derive(Debug, Clone)]
pub struct ACoefficients {
    pub values: Vec<f64>,
    /// Quadrature error plus the uncertainty of the tail correction.
    pub errors: Vec<f64>,
    /// Analytic tail correction `∫_{t_max}^∞` that was added to each value.
    pub tails: Vec<f64>,
    pub t_max: f64,
}

/// `f(t) = p_t(K, h) - p_t(K+1, h)`.
fn a_integrand(t: f64, k: usize, h: usize) -> f64 {
    let b = scaled_bessel_i_all(t, k + h + 2);
    b[k - h] - b[k + 1 - h] + b[k + h + 1] - b[k + h + 2]
}

/// `a(h) = ∫₀^∞ (p_t(K,h) - p_t(K+1,h)) dt` for `h < K`.
///
/// Integrated to `t_max` over geometric panels, plus the tail
/// `2 c / √t_max` where `c = t_max^{3/2} f(t_max)` matches the `t^{-3/2}` decay.
/// `t_max = None` uses `10⁴ K²`.
pub fn a_coefficients(k: usize, t_max: Option<f64>, tol: f64) -> ACoefficients {
    assert!(k >= 1);
    let t_max = t_max.unwrap_or(1e4 * (k * k) as f64);
    let mut breaks = vec![0.25, 0.5];
    let mut b = 1.0;
    while b < t_max {
        breaks.push(b);
        b *= 2.0;
    }
    let mut out = ACoefficients { values: Vec::new(), errors: Vec::new(), tails: Vec::new(), t_max };
    for h in 0..k {
        let body = integrate_with_breaks(|t| a_integrand(t, k, h), 0.0, t_max, &breaks, tol * 1e-2, 0.0, 20_000);
        let c = t_max.powf(1.5) * a_integrand(t_max, k, h);
        let tail = 2.0 * c / t_max.sqrt();
        // the t^{-3/2} law has relative corrections of order (K + h)² / t
        let tail_err = tail.abs() * ((k + h + 2) * (k + h + 2)) as f64 / t_max;
        out.values.push(body.value + tail);
        out.errors.push(body.error + tail_err);
        out.tails.push(tail);
    }
    out
}
