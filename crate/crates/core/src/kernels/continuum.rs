//! Continuum kernels on `[-1, 1]`: the Gaussian `G_t`, the Neumann kernel
//! `P_t` built from images under the fold map, the boundary kernels `p, q`
//! and the free evolution `w±`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::profile::InitialProfile;
use crate::quad::{integrate_with_breaks, GL6};

/// Image truncation tolerance for continuum sums.
const TAIL_TOL: f64 = 1e-16;
/// Above this time the cosine series is used instead of images.
const SERIES_SWITCH: f64 = 0.5;

#[inline]
pub(crate) fn gauss(t: f64, d: f64) -> f64 {
    (-d * d / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

/// `G_t(r, r') = e^{-(r-r')²/2t} / √(2πt)`.
pub fn gaussian(t: f64, r: f64, r_prime: f64) -> Result<f64> {
    if t <= 0.0 || !t.is_finite() {
        return Err(Error::InvalidParams(format!("gaussian needs t > 0, got {t}")));
    }
    Ok(gauss(t, r - r_prime))
}

/// Integer range of `k` with `|offset - 4k|` inside the Gaussian window at time `t`.
#[inline]
fn image_range(t: f64, offset: f64) -> std::ops::RangeInclusive<i64> {
    let reach = (2.0 * t * (1.0 / TAIL_TOL).ln()).sqrt() + 1e-9;
    let lo = ((offset - reach) / 4.0).ceil() as i64;
    let hi = ((offset + reach) / 4.0).floor() as i64;
    lo..=hi
}

/// `Σ_k G_t(d - 4k)`.
#[inline]
pub(crate) fn periodized(t: f64, d: f64) -> f64 {
    image_range(t, d).map(|k| gauss(t, d - 4.0 * k as f64)).sum()
}

/// `P_t(r, r')` as the image sum over `ψ⁻¹(r')`.
///
/// The two preimage families `r' + 4k` and `2 - r' + 4k` coincide at
/// `r' = ±1`, which produces the doubled boundary weight.
pub fn p_continuum_images(t: f64, r: f64, r_prime: f64) -> f64 {
    periodized(t, r - r_prime) + periodized(t, r + r_prime - 2.0)
}

#[inline]
fn neumann_mode(n: usize, r: f64) -> f64 {
    (n as f64 * PI * (r + 1.0) / 2.0).cos()
}

#[inline]
fn neumann_rate(n: usize) -> f64 {
    (n * n) as f64 * PI * PI / 8.0
}

/// Number of cosine modes needed at time `t`.
fn mode_count(t: f64) -> usize {
    ((8.0 * (1.0 / TAIL_TOL).ln() / (PI * PI * t)).sqrt().ceil() as usize + 1).max(2)
}

/// `P_t(r, r')` as the Neumann eigenfunction series.
pub fn p_continuum_series(t: f64, r: f64, r_prime: f64) -> f64 {
    0.5 + (1..=mode_count(t))
        .map(|n| neumann_mode(n, r) * neumann_mode(n, r_prime) * (-neumann_rate(n) * t).exp())
        .sum::<f64>()
}

/// The reflecting heat kernel `P_t(r, r')` on `[-1, 1]` for `½∂²`.
pub fn p_continuum(t: f64, r: f64, r_prime: f64) -> f64 {
    assert!(t > 0.0, "p_continuum needs t > 0");
    if t <= SERIES_SWITCH {
        p_continuum_images(t, r, r_prime)
    } else {
        p_continuum_series(t, r, r_prime)
    }
}

/// `(p(t), q(t)) = (2Σ G_t(4k), 2Σ G_t(4k+2))`.
pub fn boundary_kernels(t: f64) -> (f64, f64) {
    assert!(t > 0.0, "boundary_kernels needs t > 0");
    let (p, q) = if t <= SERIES_SWITCH {
        (2.0 * periodized(t, 0.0), 2.0 * periodized(t, 2.0))
    } else {
        (p_continuum_series(t, 1.0, 1.0), p_continuum_series(t, 1.0, -1.0))
    };
    debug_assert!((p - p_continuum(t, 1.0, 1.0)).abs() <= 1e-12 * p.max(1.0));
    debug_assert!((q - p_continuum(t, 1.0, -1.0)).abs() <= 1e-12 * p.max(1.0));
    (p, q)
}

/// `P_s(r, +1)` if `plus`, else `P_s(r, -1)`.
#[inline]
pub fn kernel_to_boundary(s: f64, r: f64, plus: bool) -> f64 {
    if s <= SERIES_SWITCH {
        2.0 * periodized(s, if plus { r - 1.0 } else { r + 1.0 })
    } else {
        p_continuum_series(s, r, if plus { 1.0 } else { -1.0 })
    }
}

/// `∫₀^s G_σ(d) dσ`.
fn abel_m0(s: f64, d: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let a = d.abs();
    (2.0 * s / PI).sqrt() * (-d * d / (2.0 * s)).exp() - a * libm::erfc(a / (2.0 * s).sqrt())
}

/// `∫₀^s σ G_σ(d) dσ`.
fn abel_m1(s: f64, d: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let a = d * d / 2.0;
    (2.0 / 3.0) * (s.powf(1.5) * (-a / s).exp() / (2.0 * PI).sqrt() - a * abel_m0(s, d))
}

/// Panels below this lag use exact Abel moments, the rest six-point Gauss–Legendre.
const EXACT_PANELS: usize = 20;

/// Per-panel hat weights `(α_m, β_m)` of `s ↦ P_s(r, ±1)` on `[mh, (m+1)h]`:
/// `∫ P_s(r,±1) g(s) ds ≈ α_m g(mh) + β_m g((m+1)h)` for linear `g`.
pub fn boundary_panel_weights(r: f64, plus: bool, h: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
    let centre = if plus { r - 1.0 } else { r + 1.0 };
    (0..panels)
        .map(|m| {
            let s0 = m as f64 * h;
            let s1 = s0 + h;
            if m < EXACT_PANELS && s1 <= SERIES_SWITCH {
                let mut d_m0 = 0.0;
                let mut d_m1 = 0.0;
                for k in image_range(s1, centre) {
                    let d = centre - 4.0 * k as f64;
                    d_m0 += abel_m0(s1, d) - abel_m0(s0, d);
                    d_m1 += abel_m1(s1, d) - abel_m1(s0, d);
                }
                d_m0 *= 2.0;
                d_m1 *= 2.0;
                ((s1 * d_m0 - d_m1) / h, (d_m1 - s0 * d_m0) / h)
            } else {
                let mut a = 0.0;
                let mut b = 0.0;
                for (x, wt) in GL6 {
                    let s = s0 + 0.5 * h * (x + 1.0);
                    let k = kernel_to_boundary(s, r, plus) * wt * 0.5 * h;
                    a += k * (s1 - s) / h;
                    b += k * (s - s0) / h;
                }
                (a, b)
            }
        })
        .unzip()
}

/// Product-integration weights of `s ↦ P_s(r, ±1)` against hat functions.
///
/// Entry `i` multiplies the value of a piecewise-linear function at lag
/// `s_i = i·h`, so `∫₀^{nh} P_s(r,±1) g(s) ds ≈ Σ_{i≤n} w_i g(s_i)` with
/// `w` truncated after `n` panels.
pub fn boundary_lag_weights(r: f64, plus: bool, h: f64, panels: usize) -> Vec<f64> {
    let (alpha, beta) = boundary_panel_weights(r, plus, h, panels);
    let mut w = vec![0.0; panels + 1];
    for m in 0..panels {
        w[m] += alpha[m];
        w[m + 1] += beta[m];
    }
    w
}

/// The free evolution `(P_t u₀)(r) = ∫ P_t(r, r') u₀(r') dr'`.
#[derive(Debug, Clone)]
pub struct FreeEvolution {
    profile: InitialProfile,
    /// `c_n = ∫ u₀ cos(nπ(r+1)/2) dr`.
    cosine: Vec<f64>,
}

impl FreeEvolution {
    pub fn new(profile: &InitialProfile) -> Self {
        let breaks = profile.breakpoints();
        let modes = mode_count(SERIES_SWITCH);
        let cosine = (0..=modes)
            .map(|n| {
                let mut inner = breaks.clone();
                // one panel per half-period of the mode
                inner.extend((1..n.max(1)).map(|i| -1.0 + 2.0 * i as f64 / n as f64));
                integrate_with_breaks(|r| profile.eval(r) * neumann_mode(n, r), -1.0, 1.0, &inner, 1e-15, 1e-14, 400)
                    .value
            })
            .collect();
        Self { profile: profile.clone(), cosine }
    }

    pub fn profile(&self) -> &InitialProfile {
        &self.profile
    }

    /// `(P_t u₀)(r)`; for `t = 0` the profile itself.
    pub fn eval(&self, t: f64, r: f64) -> f64 {
        if let InitialProfile::Constant(c) = self.profile {
            return c;
        }
        if t == 0.0 {
            return self.profile.eval(r);
        }
        if t > SERIES_SWITCH {
            let modes = mode_count(t).min(self.cosine.len() - 1);
            return 0.5 * self.cosine[0]
                + (1..=modes)
                    .map(|n| self.cosine[n] * neumann_mode(n, r) * (-neumann_rate(n) * t).exp())
                    .sum::<f64>();
        }
        let sd = t.sqrt();
        let mut breaks = self.profile.breakpoints();
        for c in [-8.0, -3.0, -1.0, 0.0, 1.0, 3.0, 8.0] {
            for anchor in [r, 2.0 - r, -2.0 - r] {
                breaks.push(anchor + c * sd);
            }
        }
        integrate_with_breaks(
            |rp| p_continuum_images(t, r, rp) * self.profile.eval(rp),
            -1.0,
            1.0,
            &breaks,
            1e-14,
            1e-13,
            2000,
        )
        .value
        .clamp(0.0, 1.0)
    }

    /// `(w₊(t), w₋(t)) = ((P_t u₀)(1), (P_t u₀)(-1))`, with the one-sided limits at `t = 0`.
    pub fn w_terms(&self, t: f64) -> (f64, f64) {
        if t == 0.0 {
            return (self.profile.limit_at_plus_one(), self.profile.limit_at_minus_one());
        }
        (self.eval(t, 1.0), self.eval(t, -1.0))
    }
}

/// `(w₊, w₋)` at time `t > 0` for the initial profile `u0`.
pub fn w_terms(t: f64, u0: &InitialProfile) -> Result<(f64, f64)> {
    if t <= 0.0 {
        return Err(Error::InvalidParams(format!("w_terms needs t > 0, got {t}")));
    }
    u0.validate()?;
    Ok(FreeEvolution::new(u0).w_terms(t))
}

/// `w₊` as the image series `Σ_k ∫ u₀(r') 2G_t(1 - r' + 4k) dr'`, one quadrature per image.
pub fn w_plus_image_series(t: f64, u0: &InitialProfile) -> f64 {
    let reach = (2.0 * t * (1.0 / TAIL_TOL).ln()).sqrt() + 2.0;
    let k_max = (reach / 4.0).ceil() as i64 + 1;
    let mut breaks = u0.breakpoints();
    breaks.extend([1.0 - 3.0 * t.sqrt(), 1.0 - t.sqrt()]);
    (-k_max..=k_max)
        .map(|k| {
            let shift = 4.0 * k as f64;
            integrate_with_breaks(|rp| u0.eval(rp) * 2.0 * gauss(t, 1.0 - rp + shift), -1.0, 1.0, &breaks, 1e-16, 1e-14, 400)
                .value
        })
        .sum()
}
