//! Multidimensional FFTs on a [`Grid`], built from one-dimensional transforms
//! applied along each axis in turn.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::grid::{Grid, MAX_DIMS};

const LINES_PER_TASK: usize = 64;

pub struct Spectral {
    grid: Grid,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    wavenumbers: Vec<Vec<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral")
            .field("grid", &self.grid)
            .finish()
    }
}

impl Spectral {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        let mut forward = Vec::new();
        let mut inverse = Vec::new();
        let mut wavenumbers = Vec::new();
        for k in 0..grid.dims() {
            let n = grid.points()[k];
            forward.push(planner.plan_fft_forward(n));
            inverse.push(planner.plan_fft_inverse(n));
            let dk = 2.0 * PI / grid.length(k);
            wavenumbers.push(
                (0..n)
                    .map(|j| {
                        let m = if j < n / 2 {
                            j as f64
                        } else {
                            j as f64 - n as f64
                        };
                        m * dk
                    })
                    .collect(),
            );
        }
        Self {
            grid: grid.clone(),
            forward,
            inverse,
            wavenumbers,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Angular wavenumbers of one axis in FFT order; index `n/2` is the Nyquist mode.
    pub fn wavenumbers(&self, axis: usize) -> &[f64] {
        &self.wavenumbers[axis]
    }

    /// Wavenumber vector of every flat index, axis by axis.
    pub fn wavenumber_of(&self, flat: usize) -> [f64; MAX_DIMS] {
        let idx = self.grid.unravel(flat);
        let mut k = [0.0; MAX_DIMS];
        for a in 0..self.grid.dims() {
            k[a] = self.wavenumbers[a][idx[a]];
        }
        k
    }

    /// Unnormalized forward transform along every axis.
    pub fn forward(&self, data: &mut [Complex64]) {
        for axis in 0..self.grid.dims() {
            self.transform_axis(data, axis, true);
        }
    }

    /// Inverse transform along every axis, normalized so that
    /// `inverse(forward(x)) == x` up to rounding.
    pub fn inverse(&self, data: &mut [Complex64]) {
        for axis in 0..self.grid.dims() {
            self.transform_axis(data, axis, false);
        }
        let scale = 1.0 / self.grid.len() as f64;
        data.par_iter_mut().for_each(|v| *v *= scale);
    }

    /// Inverse transform along one axis, normalized by that axis' length.
    pub fn inverse_axis(&self, data: &mut [Complex64], axis: usize) {
        self.transform_axis(data, axis, false);
        let scale = 1.0 / self.grid.points()[axis] as f64;
        data.par_iter_mut().for_each(|v| *v *= scale);
    }

    pub fn forward_axis(&self, data: &mut [Complex64], axis: usize) {
        self.transform_axis(data, axis, true);
    }

    fn transform_axis(&self, data: &mut [Complex64], axis: usize, forward: bool) {
        assert_eq!(data.len(), self.grid.len());
        let plan = if forward {
            &self.forward[axis]
        } else {
            &self.inverse[axis]
        };
        let n = self.grid.points()[axis];
        let stride = self.grid.strides()[axis];
        let run = |lines: &mut [Complex64]| {
            let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
            plan.process_with_scratch(lines, &mut scratch);
        };
        if stride == 1 {
            data.par_chunks_mut(n * LINES_PER_TASK).for_each(run);
            return;
        }
        // Lines along this axis are strided; gather them into contiguous rows.
        let mut buf = vec![Complex64::default(); data.len()];
        {
            let src: &[Complex64] = data;
            buf.par_chunks_mut(n).enumerate().for_each(|(line, row)| {
                let (block, j) = (line / stride, line % stride);
                let base = block * n * stride + j;
                for (i, v) in row.iter_mut().enumerate() {
                    *v = src[base + i * stride];
                }
            });
        }
        buf.par_chunks_mut(n * LINES_PER_TASK).for_each(run);
        data.par_chunks_mut(stride)
            .enumerate()
            .for_each(|(r, row)| {
                let (block, i) = (r / n, r % n);
                for (j, v) in row.iter_mut().enumerate() {
                    *v = buf[(block * stride + j) * n + i];
                }
            });
    }

    /// Spectral gradient of `psi` on every axis. The Nyquist mode is dropped
    /// since its derivative has no real-valued representation.
    pub fn gradient(&self, psi: &[Complex64]) -> Vec<Vec<Complex64>> {
        let real_input = psi.iter().all(|v| v.im == 0.0);
        let mut hat = psi.to_vec();
        self.forward(&mut hat);
        (0..self.grid.dims())
            .map(|axis| {
                let n = self.grid.points()[axis];
                let stride = self.grid.strides()[axis];
                let ks = &self.wavenumbers[axis];
                let mut d: Vec<Complex64> = hat
                    .par_iter()
                    .enumerate()
                    .map(|(flat, &v)| {
                        let j = (flat / stride) % n;
                        if j == n / 2 {
                            Complex64::default()
                        } else {
                            v * Complex64::new(0.0, ks[j])
                        }
                    })
                    .collect();
                self.inverse(&mut d);
                if real_input {
                    // The derivative of a real field is real; drop rounding residue.
                    d.iter_mut().for_each(|v| v.im = 0.0);
                }
                d
            })
            .collect()
    }

    /// Spectral divergence of a real vector field given per axis.
    pub fn divergence(&self, components: &[Vec<f64>]) -> Vec<f64> {
        let mut total = vec![0.0; self.grid.len()];
        for (axis, comp) in components.iter().enumerate() {
            let n = self.grid.points()[axis];
            let stride = self.grid.strides()[axis];
            let ks = &self.wavenumbers[axis];
            let mut hat: Vec<Complex64> = comp.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            self.forward(&mut hat);
            hat.par_iter_mut().enumerate().for_each(|(flat, v)| {
                let j = (flat / stride) % n;
                *v = if j == n / 2 {
                    Complex64::default()
                } else {
                    *v * Complex64::new(0.0, ks[j])
                };
            });
            self.inverse(&mut hat);
            for (t, h) in total.iter_mut().zip(&hat) {
                *t += h.re;
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn roundtrip_3d() {
        let g = build_grid(&[[0.0, 1.0], [0.0, 2.0], [-1.0, 1.0]], &[8, 16, 32]).unwrap();
        let sp = Spectral::new(&g);
        let orig: Vec<Complex64> = (0..g.len())
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let mut data = orig.clone();
        sp.forward(&mut data);
        sp.inverse(&mut data);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn gradient_of_plane_wave_2d() {
        let g = build_grid(&[[0.0, 2.0 * PI], [0.0, 2.0 * PI]], &[16, 32]).unwrap();
        let sp = Spectral::new(&g);
        let psi: Vec<Complex64> = (0..g.len())
            .map(|f| {
                let x = g.position(f);
                Complex64::new(0.0, 2.0 * x[0] - 3.0 * x[1]).exp()
            })
            .collect();
        let grad = sp.gradient(&psi);
        for f in 0..g.len() {
            let expect0 = psi[f] * Complex64::new(0.0, 2.0);
            let expect1 = psi[f] * Complex64::new(0.0, -3.0);
            assert!((grad[0][f] - expect0).norm() < 1e-11);
            assert!((grad[1][f] - expect1).norm() < 1e-11);
        }
    }
}
