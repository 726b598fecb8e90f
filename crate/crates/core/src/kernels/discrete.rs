//! Random-walk kernels on ℤ and on `Λ_N`.
//!
//! The walk jumps with rate `ε⁻²/2` to each neighbour (total rate `λ = ε⁻²`).
//! On `Λ_N` jumps out of the interval are suppressed, which gives the
//! semigroup `P_t^(ε) = exp(½ Δ_ε t)` with `Δ_ε = ε⁻² Δ` reflecting.

use crate::kernels::bessel::scaled_bessel_i_all;
use crate::model::{psi_n, ModelParams};
use crate::uniformize::poisson_window;

/// Default truncation tolerance for image sums.
pub const IMAGE_TOL: f64 = 1e-12;

/// `Q_t^(ε)(x, y)` for `x - y = dx`: `e^{-λt} I_{|dx|}(λt)` with `λ = ε⁻²`.
pub fn q_kernel(t: f64, dx: i64, epsilon: f64) -> f64 {
    assert!(t >= 0.0);
    let lt = t / (epsilon * epsilon);
    scaled_bessel_i_all(lt, dx.unsigned_abs() as usize)[dx.unsigned_abs() as usize]
}

/// Image-sum evaluator of the reflected kernel at a fixed time.
///
/// Caches the full-line kernel `Q_t` for every displacement inside the
/// truncation window `√(2λt ln(1/tol)) + 4N`.
#[derive(Debug, Clone)]
pub struct ImageKernel {
    n: i64,
    window: i64,
    q: Vec<f64>,
    /// Largest number of images that entered one entry.
    pub max_images: usize,
}

impl ImageKernel {
    pub fn new(params: &ModelParams, t: f64, tol: f64) -> Self {
        assert!(t >= 0.0);
        let eps = params.epsilon();
        let lt = t / (eps * eps);
        let n = params.n_i64();
        let window = ((2.0 * lt * (1.0 / tol).ln()).sqrt()).ceil() as i64 + 4 * n;
        let q = scaled_bessel_i_all(lt, window as usize);
        Self { n, window, q, max_images: 0 }
    }

    #[inline]
    fn q_at(&self, d: i64) -> f64 {
        let d = d.unsigned_abs() as usize;
        self.q.get(d).copied().unwrap_or(0.0)
    }

    /// `P_t^(ε)(x, z) = Σ_{y: ψ_N(y) = z} Q_t(x, y)`.
    pub fn eval(&mut self, x: i64, z: i64) -> f64 {
        let n = self.n;
        let period = 4 * n + 2;
        let mut total = 0.0;
        let mut count = 0;
        // the two residue classes of preimages of z
        for base in [z, 2 * n + 1 - z] {
            let lo = x - self.window;
            let hi = x + self.window;
            let m_lo = (lo - base).div_euclid(period);
            let m_hi = (hi - base).div_euclid(period) + 1;
            for m in m_lo..=m_hi {
                let y = base + m * period;
                if (y - x).abs() <= self.window {
                    debug_assert_eq!(psi_n(n as usize, y), z);
                    total += self.q_at(y - x);
                    count += 1;
                }
            }
        }
        self.max_images = self.max_images.max(count);
        total
    }

    /// Dense row-major `(2N+1) × (2N+1)` matrix of `P_t^(ε)`.
    pub fn matrix(&mut self) -> Vec<f64> {
        let n = self.n;
        let size = (2 * n + 1) as usize;
        let mut out = vec![0.0; size * size];
        for x in -n..=n {
            for z in -n..=n {
                out[(x + n) as usize * size + (z + n) as usize] = self.eval(x, z);
            }
        }
        out
    }
}

/// `P_t^(ε)(x, y)` by the image sum over preimages of `y` under `ψ_N`.
pub fn p_eps_kernel_images(t: f64, x: i64, y: i64, params: &ModelParams) -> f64 {
    assert!(params.contains(x) && params.contains(y));
    ImageKernel::new(params, t, IMAGE_TOL).eval(x, y)
}

/// Dense `P_t^(ε)` by uniformization of the generator `½ Δ_ε` on `Λ_N`.
///
/// Independent of the image construction: it only uses the reflecting
/// Laplacian and Poisson weights.
pub fn p_eps_matrix_uniformized(params: &ModelParams, t: f64, tail_tol: f64) -> Vec<f64> {
    let size = params.num_sites();
    let eps = params.epsilon();
    let rate = 1.0 / (eps * eps); // max exit rate of ½Δ_ε
    let window = poisson_window(rate * t, tail_tol);
    let mut out = vec![0.0; size * size];
    let mut cur = vec![0.0; size];
    let mut next = vec![0.0; size];
    for col in 0..size {
        cur.iter_mut().for_each(|v| *v = 0.0);
        cur[col] = 1.0;
        let last = window.first + window.weights.len();
        for k in 0..last {
            if k >= window.first {
                let w = window.weights[k - window.first];
                for row in 0..size {
                    out[row * size + col] += w * cur[row];
                }
            }
            // M = I + ½Δ/1 (uniformized one-step matrix, symmetric)
            for i in 0..size {
                let left = if i > 0 { cur[i - 1] } else { cur[i] };
                let right = if i + 1 < size { cur[i + 1] } else { cur[i] };
                next[i] = 0.5 * (left + right);
            }
            std::mem::swap(&mut cur, &mut next);
        }
    }
    out
}

/// Eigen-decomposition of `½ Δ_ε` on `Λ_N`.
///
/// Eigenvectors are the orthonormal cosines
/// `v_k(i) = c_k cos(π k (i + ½) / n)`, `n = 2N+1`, with decay rates
/// `μ_k = 2 ε⁻² sin²(π k / 2n)`.
#[derive(Debug, Clone)]
pub struct ReflectedSpectrum {
    size: usize,
    /// Decay rates `μ_k >= 0`.
    pub rates: Vec<f64>,
    /// Row-major `basis[k * size + i] = v_k(i)`.
    pub basis: Vec<f64>,
}

impl ReflectedSpectrum {
    pub fn new(params: &ModelParams) -> Self {
        let size = params.num_sites();
        let eps = params.epsilon();
        let nf = size as f64;
        let mut rates = Vec::with_capacity(size);
        let mut basis = vec![0.0; size * size];
        for k in 0..size {
            let s = (std::f64::consts::PI * k as f64 / (2.0 * nf)).sin();
            rates.push(2.0 * s * s / (eps * eps));
            let norm = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            for i in 0..size {
                basis[k * size + i] =
                    norm * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / nf).cos();
            }
        }
        Self { size, rates, basis }
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn vector(&self, k: usize) -> &[f64] {
        &self.basis[k * self.size..(k + 1) * self.size]
    }

    /// Modal coordinates of a site vector.
    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        (0..self.size)
            .map(|k| self.vector(k).iter().zip(u).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Site vector from modal coordinates.
    pub fn synthesize(&self, modes: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.size];
        for (k, &a) in modes.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(self.vector(k)) {
                *o += a * v;
            }
        }
        out
    }

    /// Site value at offset `i` from modal coordinates.
    #[inline]
    pub fn synthesize_at(&self, modes: &[f64], i: usize) -> f64 {
        modes.iter().enumerate().map(|(k, a)| a * self.basis[k * self.size + i]).sum()
    }

    /// `P_t^(ε)(x, y)` by the spectral sum.
    pub fn kernel(&self, t: f64, i: usize, j: usize) -> f64 {
        (0..self.size)
            .map(|k| (-self.rates[k] * t).exp() * self.basis[k * self.size + i] * self.basis[k * self.size + j])
            .sum()
    }

    /// `P_t^(ε) u` by the spectral sum.
    pub fn apply(&self, t: f64, u: &[f64]) -> Vec<f64> {
        let mut modes = self.project(u);
        for (a, mu) in modes.iter_mut().zip(&self.rates) {
            *a *= (-mu * t).exp();
        }
        self.synthesize(&modes)
    }
}

/// Sparse banded copy of a dense stochastic matrix, entries below `drop` removed.
#[derive(Debug, Clone)]
pub struct BandedKernel {
    rows: Vec<(usize, Vec<f64>)>,
}

impl BandedKernel {
    pub fn from_dense(dense: &[f64], size: usize, drop: f64) -> Self {
        let rows = (0..size)
            .map(|r| {
                let row = &dense[r * size..(r + 1) * size];
                let lo = row.iter().position(|&v| v > drop).unwrap_or(r);
                let hi = row.iter().rposition(|&v| v > drop).unwrap_or(r);
                (lo, row[lo..=hi].iter().map(|&v| v.max(0.0)).collect())
            })
            .collect();
        Self { rows }
    }

    /// `out = K u`, clamped to `[0, 1]` when `u` is.
    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        for (o, (lo, w)) in out.iter_mut().zip(&self.rows) {
            *o = w.iter().zip(&u[*lo..]).map(|(a, b)| a * b).sum();
        }
    }

    pub fn bandwidth(&self) -> usize {
        self.rows.iter().map(|(_, w)| w.len()).max().unwrap_or(0)
    }
}
