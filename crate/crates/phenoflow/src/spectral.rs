//! Periodic spectral operators: the screened-Poisson resolvent behind the
//! velocity potential, derivatives, and Gaussian mollification.
//!
//! All operators act diagonally in Fourier space. Real fields stay real
//! because every multiplier preserves Hermitian symmetry; the gradient
//! multiplier zeroes the Nyquist mode, which has no signed direction.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{Field, SpatialGrid};

#[derive(Clone)]
pub struct SpectralPlan {
    grid: SpatialGrid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Signed wavenumber 2 pi m / L per axis index, Nyquist kept positive.
    xi: Vec<f64>,
    /// Same, but with the Nyquist entry zeroed; used for first derivatives.
    xi_grad: Vec<f64>,
}

impl SpectralPlan {
    pub fn new(grid: SpatialGrid) -> Self {
        let n = grid.points_per_axis();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let base = 2.0 * std::f64::consts::PI / grid.box_length();
        let mut xi = vec![0.0; n];
        let mut xi_grad = vec![0.0; n];
        for (j, (x, xg)) in xi.iter_mut().zip(xi_grad.iter_mut()).enumerate() {
            let m = if j <= n / 2 { j as isize } else { j as isize - n as isize };
            *x = base * m as f64;
            *xg = if j == n / 2 { 0.0 } else { *x };
        }
        Self {
            grid,
            forward,
            inverse,
            xi,
            xi_grad,
        }
    }

    pub fn grid(&self) -> SpatialGrid {
        self.grid
    }

    fn check(&self, field: &Field) -> Result<()> {
        if field.grid() != self.grid {
            return Err(Error::InvalidInput(
                "field grid differs from the plan grid".into(),
            ));
        }
        Ok(())
    }

    fn to_spectral(&self, values: &[f64]) -> Vec<Complex<f64>> {
        let mut buf: Vec<Complex<f64>> =
            values.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        if self.grid.dim() == 2 {
            transpose_square(&mut buf, self.grid.points_per_axis());
            self.forward.process(&mut buf);
            transpose_square(&mut buf, self.grid.points_per_axis());
        }
        buf
    }

    fn from_spectral(&self, mut buf: Vec<Complex<f64>>) -> Vec<f64> {
        self.inverse.process(&mut buf);
        if self.grid.dim() == 2 {
            transpose_square(&mut buf, self.grid.points_per_axis());
            self.inverse.process(&mut buf);
            transpose_square(&mut buf, self.grid.points_per_axis());
        }
        let scale = 1.0 / self.grid.cells() as f64;
        buf.into_iter().map(|c| c.re * scale).collect()
    }

    /// |xi|^2 for the mode at flat index `c`.
    fn xi_sq(&self, c: usize) -> f64 {
        if self.grid.dim() == 1 {
            self.xi[c] * self.xi[c]
        } else {
            let n = self.grid.points_per_axis();
            let (i, j) = (c / n, c % n);
            self.xi[i] * self.xi[i] + self.xi[j] * self.xi[j]
        }
    }

    /// Apply a real multiplier that depends only on |xi|^2.
    fn apply_isotropic(&self, field: &Field, mul: impl Fn(f64) -> f64) -> Field {
        let mut buf = self.to_spectral(field.values());
        for (c, v) in buf.iter_mut().enumerate() {
            *v *= mul(self.xi_sq(c));
        }
        Field::from_values_unchecked(self.grid, self.from_spectral(buf))
    }

    /// W solving W - nu Lap W = p. At nu = 0 this is W = p, returned as a
    /// bitwise copy so the Darcy branch never picks up transform noise.
    pub fn solve_w(&self, p: &Field, viscosity: f64) -> Result<Field> {
        self.check(p)?;
        if !viscosity.is_finite() || viscosity < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "viscosity must be nonnegative, got {viscosity}"
            )));
        }
        if viscosity == 0.0 {
            return Ok(p.clone());
        }
        Ok(self.apply_isotropic(p, |xi_sq| 1.0 / (1.0 + viscosity * xi_sq)))
    }

    /// Componentwise spectral gradient; one field per axis.
    pub fn gradient(&self, field: &Field) -> Result<Vec<Field>> {
        self.check(field)?;
        let spec = self.to_spectral(field.values());
        let n = self.grid.points_per_axis();
        let mut out = Vec::with_capacity(self.grid.dim());
        for axis in 0..self.grid.dim() {
            let mut buf = spec.clone();
            for (c, v) in buf.iter_mut().enumerate() {
                let xig = if self.grid.dim() == 1 {
                    self.xi_grad[c]
                } else if axis == 0 {
                    self.xi_grad[c / n]
                } else {
                    self.xi_grad[c % n]
                };
                *v *= Complex::new(0.0, xig);
            }
            out.push(Field::from_values_unchecked(
                self.grid,
                self.from_spectral(buf),
            ));
        }
        Ok(out)
    }

    pub fn laplacian(&self, field: &Field) -> Result<Field> {
        self.check(field)?;
        Ok(self.apply_isotropic(field, |xi_sq| -xi_sq))
    }

    /// Gaussian mollification with standard deviation `sigma`; sigma = 0 is
    /// a spectral round trip.
    pub fn smooth(&self, field: &Field, sigma: f64) -> Result<Field> {
        self.check(field)?;
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "smoothing width must be nonnegative, got {sigma}"
            )));
        }
        let half_var = 0.5 * sigma * sigma;
        Ok(self.apply_isotropic(field, |xi_sq| (-half_var * xi_sq).exp()))
    }
}

/// In-place transpose of a row-major n x n buffer.
fn transpose_square(buf: &mut [Complex<f64>], n: usize) {
    debug_assert_eq!(buf.len(), n * n);
    for i in 0..n {
        for j in 0..i {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid1(n: usize, l: f64) -> SpatialGrid {
        SpatialGrid::new(1, n, l).unwrap()
    }

    fn wave(grid: SpatialGrid, m: f64, phase: f64) -> Field {
        let l = grid.box_length();
        Field::from_fn(grid, |x| (2.0 * PI * m * x[0] / l + phase).cos()).unwrap()
    }

    #[test]
    fn resolvent_divides_each_mode() {
        let g = grid1(64, 4.0);
        let plan = SpectralPlan::new(g);
        let nu = 0.3;
        let xi = 2.0 * PI * 3.0 / 4.0;
        let p = wave(g, 3.0, 0.7);
        let w = plan.solve_w(&p, nu).unwrap();
        for (wv, pv) in w.values().iter().zip(p.values()) {
            assert!((wv - pv / (1.0 + nu * xi * xi)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_viscosity_is_a_bitwise_copy() {
        let g = grid1(32, 2.0);
        let plan = SpectralPlan::new(g);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = Field::new(g, (0..32).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let w = plan.solve_w(&p, 0.0).unwrap();
        for (a, b) in w.values().iter().zip(p.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn resolvent_residual_vanishes() {
        // W - nu Lap W reproduces p down to round-off for smooth data.
        let g = grid1(128, 6.0);
        let plan = SpectralPlan::new(g);
        let p = Field::from_fn(g, |x| {
            (2.0 * PI * x[0] / 6.0).sin() + 0.4 * (2.0 * PI * 5.0 * x[0] / 6.0).cos() + 1.1
        })
        .unwrap();
        for nu in [1e-3, 1e-1, 2.0] {
            let w = plan.solve_w(&p, nu).unwrap();
            let lap = plan.laplacian(&w).unwrap();
            let scale = p.max_abs();
            for c in 0..g.cells() {
                let res = w.values()[c] - nu * lap.values()[c] - p.values()[c];
                assert!(res.abs() < 1e-10 * scale, "nu={nu} cell {c}: {res}");
            }
        }
    }

    #[test]
    fn gradient_of_sine_is_scaled_cosine() {
        let g = grid1(64, 4.0);
        let plan = SpectralPlan::new(g);
        let xi = 2.0 * PI * 2.0 / 4.0;
        let f = Field::from_fn(g, |x| (xi * x[0]).sin()).unwrap();
        let grad = plan.gradient(&f).unwrap();
        assert_eq!(grad.len(), 1);
        for (c, gv) in grad[0].values().iter().enumerate() {
            let x = g.coordinate(c);
            assert!((gv - xi * (xi * x).cos()).abs() < 1e-11);
        }
    }

    #[test]
    fn laplacian_of_cosine() {
        let g = grid1(64, 4.0);
        let plan = SpectralPlan::new(g);
        let xi = 2.0 * PI * 3.0 / 4.0;
        let f = wave(g, 3.0, 0.0);
        let lap = plan.laplacian(&f).unwrap();
        for c in 0..g.cells() {
            assert!((lap.values()[c] + xi * xi * f.values()[c]).abs() < 1e-10);
        }
    }

    #[test]
    fn nyquist_gradient_is_zero() {
        let g = grid1(16, 2.0);
        let plan = SpectralPlan::new(g);
        // Alternating signs sample the Nyquist mode exactly.
        let f = Field::new(g, (0..16).map(|c| if c % 2 == 0 { 1.0 } else { -1.0 }).collect())
            .unwrap();
        let grad = plan.gradient(&f).unwrap();
        assert!(grad[0].max_abs() < 1e-12);
    }

    #[test]
    fn two_dimensional_resolvent_and_gradient() {
        let g = SpatialGrid::new(2, 32, 4.0).unwrap();
        let plan = SpectralPlan::new(g);
        let (m0, m1) = (2.0, 3.0);
        let (xi0, xi1) = (2.0 * PI * m0 / 4.0, 2.0 * PI * m1 / 4.0);
        let p = Field::from_fn(g, |x| (xi0 * x[0]).cos() * (xi1 * x[1]).sin()).unwrap();
        let nu = 0.05;
        let w = plan.solve_w(&p, nu).unwrap();
        let denom = 1.0 + nu * (xi0 * xi0 + xi1 * xi1);
        for c in 0..g.cells() {
            assert!((w.values()[c] - p.values()[c] / denom).abs() < 1e-12);
        }
        let grad = plan.gradient(&p).unwrap();
        assert_eq!(grad.len(), 2);
        for c in 0..g.cells() {
            let x = g.cell_center(c);
            let g0 = -xi0 * (xi0 * x[0]).sin() * (xi1 * x[1]).sin();
            let g1 = xi1 * (xi0 * x[0]).cos() * (xi1 * x[1]).cos();
            assert!((grad[0].values()[c] - g0).abs() < 1e-11);
            assert!((grad[1].values()[c] - g1).abs() < 1e-11);
        }
    }

    #[test]
    fn smoothing_preserves_mean_and_contracts_peaks() {
        let g = grid1(128, 8.0);
        let plan = SpectralPlan::new(g);
        let f = Field::from_fn(g, |x| (-(x[0] * x[0]) / 0.02).exp()).unwrap();
        let s = plan.smooth(&f, 2.0 * g.spacing()).unwrap();
        assert!((s.mass() - f.mass()).abs() < 1e-12 * f.mass());
        assert!(s.max() < f.max());
        let round_trip = plan.smooth(&f, 0.0).unwrap();
        for c in 0..g.cells() {
            assert!((round_trip.values()[c] - f.values()[c]).abs() < 1e-13);
        }
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let plan = SpectralPlan::new(grid1(32, 4.0));
        let other = Field::zeros(grid1(64, 4.0));
        assert!(plan.solve_w(&other, 0.1).is_err());
        assert!(plan.gradient(&other).is_err());
        assert!(plan.solve_w(&Field::zeros(grid1(32, 4.0)), -1.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// The resolvent kernel is positive, so band-limited nonnegative
        /// data (a square of a low-frequency field, alias-free) must map to
        /// nonnegative output up to round-off; the mean is untouched.
        #[test]
        fn resolvent_preserves_positivity_and_mean(
            seed in 0u64..1000,
            nu in 1e-4f64..1.0,
        ) {
            let g = grid1(64, 4.0);
            let plan = SpectralPlan::new(g);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut base = vec![0.0; g.cells()];
            for m in 0..8usize {
                let amp = rng.gen_range(-1.0..1.0);
                let phase = rng.gen_range(0.0..2.0 * PI);
                for (c, b) in base.iter_mut().enumerate() {
                    let x = g.coordinate(c);
                    *b += amp * (2.0 * PI * m as f64 * x / 4.0 + phase).cos();
                }
            }
            let p = Field::new(g, base.iter().map(|b| b * b).collect()).unwrap();
            let w = plan.solve_w(&p, nu).unwrap();
            prop_assert!(w.min() >= -1e-8 * p.max().max(1.0));
            prop_assert!((w.mass() - p.mass()).abs() <= 1e-10 * p.mass().max(1.0));
        }
    }
}
