//! Exponentially scaled modified Bessel functions `e^{-x} I_n(x)`.
//!
//! `e^{-x} I_n(x)` is the probability that a continuous-time walk on ℤ with
//! total jump rate 1 (rate 1/2 to each neighbour) is displaced by `n` at time `x`.

/// Returns `e^{-x} I_n(x)` for `n = 0..=n_max`.
///
/// Power series for `x < 1`; otherwise Miller backward recurrence normalised by
/// `I_0 + 2 Σ_{n≥1} I_n = e^x`.
pub fn scaled_bessel_i_all(x: f64, n_max: usize) -> Vec<f64> {
    assert!(x >= 0.0 && x.is_finite(), "bessel argument must be finite and >= 0");
    let mut out = vec![0.0; n_max + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    if x < 1.0 {
        series(x, &mut out);
        return out;
    }
    let start = n_max + 20 + (10.0 * x.sqrt()).ceil() as usize;
    let mut vals = vec![0.0; start + 2];
    vals[start] = 1.0;
    let two_over_x = 2.0 / x;
    for n in (1..=start).rev() {
        let next = vals[n + 1] + (n as f64 * two_over_x) * vals[n];
        vals[n - 1] = next;
        if next > 1e250 {
            for v in &mut vals[n - 1..] {
                *v *= 1e-250;
            }
        }
    }
    let sum = vals[0] + 2.0 * vals[1..].iter().sum::<f64>();
    for (o, v) in out.iter_mut().zip(&vals) {
        *o = v / sum;
    }
    out
}

fn series(x: f64, out: &mut [f64]) {
    let half = 0.5 * x;
    let q = half * half;
    let scale = (-x).exp();
    // lead = (x/2)^n / n!
    let mut lead = 1.0;
    for (n, slot) in out.iter_mut().enumerate() {
        if n > 0 {
            lead *= half / n as f64;
        }
        if lead == 0.0 {
            break;
        }
        let mut term = lead;
        let mut sum = lead;
        let mut k = 1.0;
        loop {
            term *= q / (k * (k + n as f64));
            sum += term;
            if term <= 1e-18 * sum {
                break;
            }
            k += 1.0;
        }
        *slot = scale * sum;
    }
}

/// `e^{-x} I_n(x)` for a single order.
pub fn scaled_bessel_i(x: f64, n: usize) -> f64 {
    scaled_bessel_i_all(x, n)[n]
}
