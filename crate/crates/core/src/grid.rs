//! Rectangular periodic grids over a configuration space of dimension 1 to 3.
//!
//! Storage order is row-major: the last axis varies fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIMS: usize = 3;

/// Largest number of grid points accepted by [`build_grid`].
pub const DEFAULT_POINT_CAP: usize = 1 << 22;

const MIN_POINTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    extents: Vec<[f64; 2]>,
    points: Vec<usize>,
}

/// Builds a periodic grid with the default point cap.
pub fn build_grid(extents: &[[f64; 2]], points: &[usize]) -> Result<Grid> {
    Grid::with_cap(extents, points, DEFAULT_POINT_CAP)
}

impl Grid {
    pub fn with_cap(extents: &[[f64; 2]], points: &[usize], cap: usize) -> Result<Self> {
        if extents.len() != points.len() {
            return Err(Error::InvalidGrid(format!(
                "{} extents but {} point counts",
                extents.len(),
                points.len()
            )));
        }
        let d = points.len();
        if !(1..=MAX_DIMS).contains(&d) {
            return Err(Error::InvalidGrid(format!(
                "dimension count {d} outside 1..={MAX_DIMS}"
            )));
        }
        for (k, (&[lo, hi], &n)) in extents.iter().zip(points).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::InvalidGrid(format!(
                    "axis {k}: extent [{lo}, {hi}) is empty or non-finite"
                )));
            }
            if n < MIN_POINTS || !n.is_power_of_two() {
                return Err(Error::InvalidGrid(format!(
                    "axis {k}: {n} points is not a power of two >= {MIN_POINTS}"
                )));
            }
        }
        let total = points
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .unwrap_or(usize::MAX);
        if total > cap {
            return Err(Error::MemoryCap { points: total, cap });
        }
        Ok(Self {
            extents: extents.to_vec(),
            points: points.to_vec(),
        })
    }

    pub fn dims(&self) -> usize {
        self.points.len()
    }

    pub fn extents(&self) -> &[[f64; 2]] {
        &self.extents
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lo(&self, axis: usize) -> f64 {
        self.extents[axis][0]
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.extents[axis][1] - self.extents[axis][0]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.length(axis) / self.points[axis] as f64
    }

    pub fn spacings(&self) -> Vec<f64> {
        (0..self.dims()).map(|k| self.spacing(k)).collect()
    }

    /// Volume element of one grid cell, the product of the spacings.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dims()).map(|k| self.spacing(k)).product()
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.lo(axis) + i as f64 * self.spacing(axis)
    }

    /// Stride of each axis in the flat row-major layout.
    pub fn strides(&self) -> [usize; MAX_DIMS] {
        let mut strides = [0; MAX_DIMS];
        let mut s = 1;
        for k in (0..self.dims()).rev() {
            strides[k] = s;
            s *= self.points[k];
        }
        strides
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.points)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn unravel(&self, mut flat: usize) -> [usize; MAX_DIMS] {
        let mut idx = [0; MAX_DIMS];
        for k in (0..self.dims()).rev() {
            idx[k] = flat % self.points[k];
            flat /= self.points[k];
        }
        idx
    }

    /// Coordinates of a flat grid index.
    pub fn position(&self, flat: usize) -> [f64; MAX_DIMS] {
        let idx = self.unravel(flat);
        let mut x = [0.0; MAX_DIMS];
        for k in 0..self.dims() {
            x[k] = self.coord(k, idx[k]);
        }
        x
    }

    /// Maps a coordinate into `[lo, hi)` on one axis; reports whether it wrapped.
    pub fn wrap_coord(&self, axis: usize, x: f64) -> (f64, bool) {
        let [lo, hi] = self.extents[axis];
        if x >= lo && x < hi {
            return (x, false);
        }
        let len = hi - lo;
        let mut w = lo + (x - lo).rem_euclid(len);
        if w >= hi {
            w = lo;
        }
        (w, true)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.extents)
            .all(|(&v, &[lo, hi])| v >= lo && v < hi)
    }

    /// Index of the grid point nearest to `x` along each axis (periodic).
    pub fn nearest(&self, x: &[f64]) -> [usize; MAX_DIMS] {
        let mut idx = [0; MAX_DIMS];
        for k in 0..self.dims() {
            let n = self.points[k] as i64;
            let s = ((x[k] - self.lo(k)) / self.spacing(k)).round() as i64;
            idx[k] = s.rem_euclid(n) as usize;
        }
        idx
    }

    /// Whether a flat index lies on the first or last layer of some axis.
    pub fn on_boundary(&self, flat: usize) -> bool {
        let idx = self.unravel(flat);
        (0..self.dims()).any(|k| idx[k] == 0 || idx[k] + 1 == self.points[k])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_1d() {
        let g = build_grid(&[[-10.0, 10.0]], &[256]).unwrap();
        assert_eq!(g.spacing(0), 0.078125);
        assert_eq!(g.len(), 256);
    }

    #[test]
    fn spacing_2d() {
        let g = build_grid(&[[-10.0, 10.0], [-5.0, 5.0]], &[128, 64]).unwrap();
        assert_eq!(g.spacings(), vec![0.15625, 0.15625]);
        assert_eq!(g.strides()[..2], [64, 1]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(
            build_grid(&[[-10.0, 10.0]], &[100]),
            Err(Error::InvalidGrid(_))
        ));
        assert!(build_grid(&[[-1.0, 1.0]], &[4]).is_err());
        assert!(build_grid(&[[1.0, 1.0]], &[16]).is_err());
        assert!(build_grid(&[[0.0, 1.0]; 4], &[8; 4]).is_err());
        assert!(build_grid(&[], &[]).is_err());
        assert!(build_grid(&[[0.0, 1.0]], &[8, 8]).is_err());
        assert!(matches!(
            Grid::with_cap(&[[0.0, 1.0]; 3], &[64; 3], 1000),
            Err(Error::MemoryCap { .. })
        ));
    }

    #[test]
    fn index_roundtrip_and_wrap() {
        let g = build_grid(&[[0.0, 1.0], [0.0, 2.0], [0.0, 4.0]], &[8, 16, 32]).unwrap();
        for flat in [0, 1, 77, g.len() - 1] {
            let idx = g.unravel(flat);
            assert_eq!(g.flat_index(&idx[..3]), flat);
        }
        assert_eq!(g.wrap_coord(0, 1.25), (0.25, true));
        assert_eq!(g.wrap_coord(0, -0.25), (0.75, true));
        assert_eq!(g.wrap_coord(0, 0.5), (0.5, false));
        assert_eq!(g.nearest(&[0.99, 0.0, 0.0])[0], 0);
    }
}
