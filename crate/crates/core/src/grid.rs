//! Uniform periodic grid on [-L/2, L/2) with cached transform plans.

use crate::error::FieldError;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::{Arc, Mutex, OnceLock};

/// Discretisation of the line: `n` equispaced points on `[-L/2, L/2)`.
///
/// Wavenumbers are stored in FFT order, `k_j = 2 pi jhat / L` with
/// `jhat = j` for `j < n/2` and `jhat = j - n` otherwise.
pub struct Grid {
    n: usize,
    length: f64,
    spacing: f64,
    points: Vec<f64>,
    wavenumbers: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    // transforms of size 4n for chirp-z evaluation, built on demand
    long_plans: OnceLock<(Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>,
}

impl Grid {
    pub fn new(n: usize, length: f64) -> Result<Arc<Self>, FieldError> {
        if n < 64 || !n.is_power_of_two() {
            return Err(FieldError::BadGridSize(n));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(FieldError::BadGridLength(length));
        }
        let spacing = length / n as f64;
        let points = (0..n).map(|j| -0.5 * length + j as f64 * spacing).collect();
        let wavenumbers = (0..n)
            .map(|j| {
                let jhat = if j < n / 2 { j as i64 } else { j as i64 - n as i64 };
                2.0 * std::f64::consts::PI * jhat as f64 / length
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        Ok(Arc::new(Grid {
            n,
            length,
            spacing,
            points,
            wavenumbers,
            fwd,
            inv,
        long_plans: OnceLock::new(),
        }))
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Largest wavenumber magnitude on the grid (the Nyquist mode).
    pub fn k_max(&self) -> f64 {
        std::f64::consts::PI * self.n as f64 / self.length
    }

    /// Index of the mirrored point `-y_j` (periodically, `j = 0` is its own mirror).
    pub fn mirror_index(&self, j: usize) -> usize {
        if j == 0 {
            0
        } else {
            self.n - j
        }
    }

    pub(crate) fn fft_forward(&self, buf: &mut [Complex64]) {
        self.fwd.process(buf);
    }

    pub(crate) fn fft_inverse(&self, buf: &mut [Complex64]) {
        self.inv.process(buf);
    }

    pub(crate) fn fft_long(&self) -> &(Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
        self.long_plans.get_or_init(|| {
            static PLANNER: Mutex<()> = Mutex::new(());
            let _guard = PLANNER.lock().unwrap();
            let mut planner = FftPlanner::new();
            (
                planner.plan_fft_forward(4 * self.n),
                planner.plan_fft_inverse(4 * self.n),
            )
        })
    }

    pub fn same_grid(&self, other: &Grid) -> bool {
        self.n == other.n && self.length == other.length
    }
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.n)
            .field("length", &self.length)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sizes() {
        assert!(Grid::new(48, 10.0).is_err());
        assert!(Grid::new(100, 10.0).is_err());
        assert!(Grid::new(64, -1.0).is_err());
        assert!(Grid::new(64, 10.0).is_ok());
    }

    #[test]
    fn wavenumbers_symmetric_except_nyquist() {
        let g = Grid::new(128, 40.0).unwrap();
        let k = g.wavenumbers();
        for j in 1..64 {
            assert_eq!(k[j], -k[128 - j]);
        }
        // single Nyquist mode carries the negative sign
        assert!(k[64] < 0.0);
        assert_eq!(k[64].abs(), g.k_max());
    }

    #[test]
    fn mirror_index_reflects_points() {
        let g = Grid::new(64, 16.0).unwrap();
        for j in 1..64 {
            let m = g.mirror_index(j);
            assert!((g.points()[j] + g.points()[m]).abs() < 1e-12);
        }
    }
}
