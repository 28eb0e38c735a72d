//! Tensor-product four-point Lagrange interpolation on periodic grids.

use crate::grid::{Grid, MAX_DIMS};

/// Flat offsets and weights of the `4^d` stencil around a point.
#[derive(Debug, Clone)]
pub(crate) struct Stencil {
    pub offsets: [usize; 64],
    pub weights: [f64; 64],
    pub len: usize,
}

fn lagrange_weights(u: f64) -> [f64; 4] {
    // Nodes at -1, 0, 1, 2.
    let (a, b, c, d) = (u + 1.0, u, u - 1.0, u - 2.0);
    [
        -b * c * d / 6.0,
        a * c * d / 2.0,
        -a * b * d / 2.0,
        a * b * c / 6.0,
    ]
}

impl Stencil {
    pub fn new(grid: &Grid, x: &[f64]) -> Self {
        let d = grid.dims();
        let n = grid.points();
        let strides = grid.strides();
        let mut idx = [[0usize; 4]; MAX_DIMS];
        let mut w = [[0.0; 4]; MAX_DIMS];
        for k in 0..d {
            let s = (x[k] - grid.lo(k)) / grid.spacing(k);
            let fl = s.floor();
            let base = fl as i64;
            w[k] = lagrange_weights(s - fl);
            for (j, slot) in idx[k].iter_mut().enumerate() {
                *slot = (base - 1 + j as i64).rem_euclid(n[k] as i64) as usize * strides[k];
            }
        }
        let mut st = Stencil {
            offsets: [0; 64],
            weights: [0.0; 64],
            len: 1 << (2 * d),
        };
        for c in 0..st.len {
            let mut off = 0;
            let mut wt = 1.0;
            for k in 0..d {
                let j = (c >> (2 * k)) & 3;
                off += idx[k][j];
                wt *= w[k][j];
            }
            st.offsets[c] = off;
            st.weights[c] = wt;
        }
        st
    }

    #[inline]
    pub fn apply<T>(&self, data: &[T]) -> T
    where
        T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        let mut acc = T::default();
        for c in 0..self.len {
            acc = acc + data[self.offsets[c]] * self.weights[c];
        }
        acc
    }
}
