//! Poisson weights for uniformization of continuous-time Markov chains.

/// Truncated Poisson(`mean`) probabilities.
#[derive(Debug, Clone)]
pub struct PoissonWindow {
    /// Index of the first retained term.
    pub first: usize,
    /// Probabilities of `first, first+1, ...`, renormalised to sum to 1.
    pub weights: Vec<f64>,
    /// Upper bound on the discarded probability mass.
    pub tail: f64,
}

/// Poisson weights covering all but `tail_tol` of the mass.
///
/// Terms are generated outward from the mode by the ratio recursion, so no
/// factorials or `e^{-mean}` underflow appear even for large means.
pub fn poisson_window(mean: f64, tail_tol: f64) -> PoissonWindow {
    assert!(mean >= 0.0 && mean.is_finite());
    if mean == 0.0 {
        return PoissonWindow { first: 0, weights: vec![1.0], tail: 0.0 };
    }
    let mode = mean.floor() as usize;
    // relative cutoff against the mode term; the mode carries ~1/sqrt(2π mean) of the mass
    let cutoff = tail_tol * 1e-3 / (1.0 + (2.0 * std::f64::consts::PI * mean).sqrt());
    let mut upper = vec![1.0];
    let mut w = 1.0;
    let mut k = mode;
    loop {
        k += 1;
        w *= mean / k as f64;
        upper.push(w);
        if w < cutoff && (k as f64) > mean {
            break;
        }
    }
    let mut lower = Vec::new();
    let mut w = 1.0;
    let mut k = mode;
    while k > 0 {
        w *= k as f64 / mean;
        k -= 1;
        if w < cutoff {
            break;
        }
        lower.push(w);
    }
    let first = mode - lower.len();
    let mut weights: Vec<f64> = lower.into_iter().rev().chain(upper).collect();
    let total: f64 = weights.iter().sum();
    for v in &mut weights {
        *v /= total;
    }
    PoissonWindow { first, weights, tail: tail_tol }
}
