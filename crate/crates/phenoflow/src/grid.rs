//! Periodic spatial grids and scalar fields.
//!
//! The domain is the box [-L/2, L/2)^d with d in {1, 2}. Each axis carries a
//! power-of-two number of cells; cell centers sit at x = -L/2 + (i + 1/2) h
//! with h = L / points. Fields store one value per cell in row-major order
//! (axis 0 slowest).

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialGrid {
    dim: usize,
    points_per_axis: usize,
    box_length: f64,
}

impl SpatialGrid {
    pub fn new(dim: usize, points_per_axis: usize, box_length: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dim must be 1 or 2, got {dim}")));
        }
        if points_per_axis < 8 || !points_per_axis.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points_per_axis must be a power of two >= 8, got {points_per_axis}"
            )));
        }
        if !box_length.is_finite() || box_length <= 0.0 {
            return Err(Error::InvalidGrid(format!(
                "box_length must be positive and finite, got {box_length}"
            )));
        }
        Ok(Self {
            dim,
            points_per_axis,
            box_length,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn spacing(&self) -> f64 {
        self.box_length / self.points_per_axis as f64
    }

    pub fn cells(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn cell_measure(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Center coordinate of index `i` along one axis.
    pub fn coordinate(&self, i: usize) -> f64 {
        -0.5 * self.box_length + (i as f64 + 0.5) * self.spacing()
    }

    /// Center coordinates of a flat cell index; the second slot is 0 in 1D.
    pub fn cell_center(&self, cell: usize) -> [f64; 2] {
        match self.dim {
            1 => [self.coordinate(cell), 0.0],
            _ => {
                let n = self.points_per_axis;
                [self.coordinate(cell / n), self.coordinate(cell % n)]
            }
        }
    }

    /// Signed displacement from `b` to `a` along one axis, wrapped to
    /// [-L/2, L/2).
    pub fn wrap(&self, a: f64, b: f64) -> f64 {
        let l = self.box_length;
        let mut d = a - b;
        while d < -0.5 * l {
            d += l;
        }
        while d >= 0.5 * l {
            d -= l;
        }
        d
    }
}

/// Scalar function sampled at cell centers.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: SpatialGrid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: SpatialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(Error::InvalidField(format!(
                "expected {} values, got {}",
                grid.cells(),
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidField("nonfinite value".into()));
        }
        Ok(Self { grid, values })
    }

    /// Skips the finiteness scan; for internal hot loops whose inputs are
    /// already validated fields.
    pub(crate) fn from_values_unchecked(grid: SpatialGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.cells());
        Self { grid, values }
    }

    pub fn zeros(grid: SpatialGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.cells()],
        }
    }

    pub fn constant(grid: SpatialGrid, c: f64) -> Result<Self> {
        Self::new(grid, vec![c; grid.cells()])
    }

    /// Builds a field by evaluating `f` at every cell center.
    pub fn from_fn(grid: SpatialGrid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.cells())
            .map(|c| {
                let x = grid.cell_center(c);
                f(&x[..grid.dim()])
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> SpatialGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Flat index of (i, j) on a 2D grid.
    pub fn index2(&self, i: usize, j: usize) -> usize {
        i * self.grid.points_per_axis() + j
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Plain sum of cell values.
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Integral over the box: cell sum times cell measure.
    pub fn mass(&self) -> f64 {
        self.sum() * self.grid.cell_measure()
    }

    pub fn norm_l1(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.grid.cell_measure()
    }

    pub fn norm_l2(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_measure()).sqrt()
    }

    pub fn norm_linf(&self) -> f64 {
        self.max_abs()
    }

    /// First moment with the Euclidean distance to the box center,
    /// integral of |x| f(x) dx.
    pub fn first_moment(&self) -> f64 {
        let d = self.grid.dim();
        let mut acc = 0.0;
        for (c, v) in self.values.iter().enumerate() {
            let x = self.grid.cell_center(c);
            let r = match d {
                1 => x[0].abs(),
                _ => (x[0] * x[0] + x[1] * x[1]).sqrt(),
            };
            acc += r * v;
        }
        acc * self.grid.cell_measure()
    }

    /// Fraction of |mass| carried by cells within `margin` cells of the box
    /// edge. Returns 0 for the zero field.
    pub fn edge_mass_fraction(&self, margin: usize) -> f64 {
        let n = self.grid.points_per_axis();
        let near = |i: usize| i < margin || i >= n - margin;
        let mut edge = 0.0;
        let mut total = 0.0;
        match self.grid.dim() {
            1 => {
                for (i, v) in self.values.iter().enumerate() {
                    total += v.abs();
                    if near(i) {
                        edge += v.abs();
                    }
                }
            }
            _ => {
                for (c, v) in self.values.iter().enumerate() {
                    total += v.abs();
                    if near(c / n) || near(c % n) {
                        edge += v.abs();
                    }
                }
            }
        }
        if total == 0.0 {
            0.0
        } else {
            edge / total
        }
    }

    /// Mass centroid, one coordinate per axis; the box center for the zero
    /// field.
    pub fn centroid(&self) -> Vec<f64> {
        let d = self.grid.dim();
        let total = self.sum();
        if total == 0.0 {
            return vec![0.0; d];
        }
        let mut acc = vec![0.0; d];
        for (c, v) in self.values.iter().enumerate() {
            let x = self.grid.cell_center(c);
            for (a, xa) in acc.iter_mut().zip(&x[..d]) {
                *a += xa * v;
            }
        }
        acc.iter().map(|a| a / total).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1() -> SpatialGrid {
        SpatialGrid::new(1, 16, 8.0).unwrap()
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(SpatialGrid::new(3, 16, 1.0).is_err());
        assert!(SpatialGrid::new(0, 16, 1.0).is_err());
    }

    #[test]
    fn rejects_non_power_of_two_or_small_axes() {
        assert!(SpatialGrid::new(1, 12, 1.0).is_err());
        assert!(SpatialGrid::new(1, 4, 1.0).is_err());
        assert!(SpatialGrid::new(1, 8, 1.0).is_ok());
    }

    #[test]
    fn rejects_bad_box_length() {
        assert!(SpatialGrid::new(1, 16, 0.0).is_err());
        assert!(SpatialGrid::new(1, 16, -2.0).is_err());
        assert!(SpatialGrid::new(1, 16, f64::NAN).is_err());
    }

    #[test]
    fn coordinates_are_cell_centers() {
        let g = grid1();
        assert_eq!(g.spacing(), 0.5);
        assert_eq!(g.coordinate(0), -4.0 + 0.25);
        assert_eq!(g.coordinate(15), 4.0 - 0.25);
    }

    #[test]
    fn cell_count_matches_dim() {
        let g2 = SpatialGrid::new(2, 16, 8.0).unwrap();
        assert_eq!(g2.cells(), 256);
        assert_eq!(g2.cell_measure(), 0.25);
        assert_eq!(grid1().cells(), 16);
    }

    #[test]
    fn field_rejects_wrong_length_and_nonfinite() {
        let g = grid1();
        assert!(Field::new(g, vec![0.0; 15]).is_err());
        let mut v = vec![0.0; 16];
        v[3] = f64::NAN;
        assert!(Field::new(g, v).is_err());
    }

    #[test]
    fn mass_and_norms() {
        let g = grid1();
        let f = Field::constant(g, 2.0).unwrap();
        assert!((f.mass() - 16.0).abs() < 1e-12);
        assert!((f.norm_l1() - 16.0).abs() < 1e-12);
        assert!((f.norm_l2() - (4.0 * 8.0f64).sqrt()).abs() < 1e-12);
        assert_eq!(f.norm_linf(), 2.0);
    }

    #[test]
    fn edge_fraction_detects_boundary_mass() {
        let g = grid1();
        let mut v = vec![0.0; 16];
        v[0] = 1.0;
        v[8] = 3.0;
        let f = Field::new(g, v).unwrap();
        assert!((f.edge_mass_fraction(2) - 0.25).abs() < 1e-15);
        assert_eq!(Field::zeros(g).edge_mass_fraction(2), 0.0);
    }

    #[test]
    fn centroid_of_point_mass() {
        let g = grid1();
        let mut v = vec![0.0; 16];
        v[4] = 2.0;
        let f = Field::new(g, v).unwrap();
        assert!((f.centroid()[0] - g.coordinate(4)).abs() < 1e-15);
    }

    #[test]
    fn wrap_is_minimal_image() {
        let g = grid1();
        assert!((g.wrap(3.9, -3.9) - (-0.2)).abs() < 1e-12);
        assert_eq!(g.wrap(1.0, 0.5), 0.5);
    }
}
