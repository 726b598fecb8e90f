//! Transition kernels of the lattice walks and of the continuum heat flow.

pub mod bessel;
pub mod continuum;
pub mod discrete;
pub mod halfline;

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::model::ModelParams;

pub use continuum::{
    boundary_kernels, boundary_lag_weights, boundary_panel_weights, gaussian, kernel_to_boundary, p_continuum, w_terms, FreeEvolution,
};
pub use discrete::{p_eps_kernel_images, p_eps_matrix_uniformized, q_kernel, ImageKernel, ReflectedSpectrum};
pub use halfline::{a_coefficients, halfline_kernel, ACoefficients};

/// Which kernel a [`KernelTable`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    /// `P_t^(ε)(x, y)` on `Λ_N` by images.
    Reflected,
    /// `Q_t^(ε)(0, y)` on `ℤ`.
    FullLine,
    /// `P_t(r, r')` on a continuum grid.
    Neumann,
    /// `p(t)` in column `y = 1`, `q(t)` in column `y = -1`.
    Boundary,
}

/// Rows of `(t, x, y, value)` with truncation metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelTable {
    pub kind: KernelKind,
    pub rows: Vec<(f64, f64, f64, f64)>,
    /// Largest number of images entering one entry (0 if not applicable).
    pub max_images: usize,
    /// Truncation tolerance of the image or Bessel series.
    pub series_tol: f64,
    /// Largest deviation of a discrete row sum from 1.
    pub row_sum_error: f64,
}

impl KernelTable {
    pub fn reflected(params: &ModelParams, times: &[f64], tol: f64) -> Self {
        let mut rows = Vec::new();
        let mut max_images = 0;
        let mut row_sum_error: f64 = 0.0;
        for &t in times {
            let mut k = ImageKernel::new(params, t, tol);
            for x in params.sites() {
                let mut sum = 0.0;
                for y in params.sites() {
                    let v = k.eval(x, y);
                    sum += v;
                    rows.push((t, x as f64, y as f64, v));
                }
                row_sum_error = row_sum_error.max((sum - 1.0).abs());
            }
            max_images = max_images.max(k.max_images);
        }
        Self { kind: KernelKind::Reflected, rows, max_images, series_tol: tol, row_sum_error }
    }

    pub fn full_line(epsilon: f64, times: &[f64], max_dx: i64) -> Self {
        let mut rows = Vec::new();
        for &t in times {
            let b = bessel::scaled_bessel_i_all(t / (epsilon * epsilon), max_dx.unsigned_abs() as usize);
            for y in -max_dx..=max_dx {
                rows.push((t, 0.0, y as f64, b[y.unsigned_abs() as usize]));
            }
        }
        Self { kind: KernelKind::FullLine, rows, max_images: 0, series_tol: 0.0, row_sum_error: 0.0 }
    }

    pub fn neumann(times: &[f64], grid: &[f64]) -> Self {
        let rows = times
            .iter()
            .flat_map(|&t| grid.iter().flat_map(move |&r| grid.iter().map(move |&rp| (t, r, rp, p_continuum(t, r, rp)))))
            .collect();
        Self { kind: KernelKind::Neumann, rows, max_images: 0, series_tol: 1e-16, row_sum_error: 0.0 }
    }

    pub fn boundary(times: &[f64]) -> Self {
        let rows = times
            .iter()
            .flat_map(|&t| {
                let (p, q) = boundary_kernels(t);
                [(t, 1.0, 1.0, p), (t, 1.0, -1.0, q)]
            })
            .collect();
        Self { kind: KernelKind::Boundary, rows, max_images: 0, series_tol: 1e-16, row_sum_error: 0.0 }
    }

    /// CSV with header `t,x,y,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,x,y,value")?;
        for (t, x, y, v) in &self.rows {
            writeln!(out, "{t},{x},{y},{v:e}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflected_table_is_stochastic() {
        let p = ModelParams::new(4, 1, 1.0).unwrap();
        let table = KernelTable::reflected(&p, &[0.01, 0.5], 1e-12);
        assert_eq!(table.rows.len(), 2 * 81);
        assert!(table.row_sum_error < 1e-10);
        assert!(table.rows.iter().all(|r| (0.0..=1.0).contains(&r.3)));
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,x,y,value\n"));
    }
}
