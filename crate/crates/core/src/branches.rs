//! Decomposition of a wave field into branches: connected components of the
//! region where the density exceeds a fraction of its maximum.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{density_of, DensityField, WaveField};
use crate::grid::MAX_DIMS;

/// Default component threshold, relative to the maximum density.
pub const DEFAULT_BRANCH_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    /// Component label, starting at 1 in grid scan order.
    pub label: u32,
    pub points: usize,
    /// Integrated density over the component.
    pub weight: f64,
    /// Density-weighted mean position.
    pub centroid: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BranchDecomposition {
    field: WaveField,
    /// Component label per grid point; 0 marks sub-threshold points.
    labels: Vec<u32>,
    branches: Vec<Branch>,
    threshold: f64,
}

/// Labels the face-connected components of `{rho >= threshold * max rho}`
/// with periodic adjacency. With `expected` set, a different component count
/// is an error.
pub fn branch_decompose(
    field: &WaveField,
    threshold: f64,
    expected: Option<usize>,
) -> Result<BranchDecomposition> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "branch threshold {threshold} outside (0, 1)"
        )));
    }
    let rho = density_of(field)?;
    let grid = field.grid();
    let d = grid.dims();
    let n = grid.points();
    let strides = grid.strides();
    let cut = threshold * rho.max();
    let above: Vec<bool> = rho.rho().iter().map(|&r| r >= cut && r > 0.0).collect();

    let mut labels = vec![0u32; rho.rho().len()];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for seed in 0..labels.len() {
        if !above[seed] || labels[seed] != 0 {
            continue;
        }
        next += 1;
        labels[seed] = next;
        stack.push(seed);
        while let Some(p) = stack.pop() {
            let idx = grid.unravel(p);
            for k in 0..d {
                for step in [1, n[k] - 1] {
                    let moved = (idx[k] + step) % n[k];
                    let q = p - idx[k] * strides[k] + moved * strides[k];
                    if above[q] && labels[q] == 0 {
                        labels[q] = next;
                        stack.push(q);
                    }
                }
            }
        }
    }

    let vol = grid.cell_volume();
    let mut branches: Vec<Branch> = (1..=next)
        .map(|label| Branch {
            label,
            points: 0,
            weight: 0.0,
            centroid: vec![0.0; d],
        })
        .collect();
    let mut moments = vec![[0.0; MAX_DIMS]; next as usize];
    for (p, &l) in labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let b = &mut branches[l as usize - 1];
        let r = rho.rho()[p];
        b.points += 1;
        b.weight += r * vol;
        let x = grid.position(p);
        for k in 0..d {
            moments[l as usize - 1][k] += x[k] * r * vol;
        }
    }
    for (b, m) in branches.iter_mut().zip(&moments) {
        for k in 0..d {
            b.centroid[k] = m[k] / b.weight;
        }
    }
    if let Some(e) = expected {
        if e != branches.len() {
            return Err(Error::BranchCount {
                expected: e,
                found: branches.len(),
            });
        }
    }
    Ok(BranchDecomposition {
        field: field.clone(),
        labels,
        branches,
        threshold,
    })
}

impl BranchDecomposition {
    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn count(&self) -> usize {
        self.branches.len()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn time(&self) -> f64 {
        self.field.time()
    }

    /// Squared norm of the decomposed field.
    pub fn field_norm(&self) -> f64 {
        self.field.norm_sqr()
    }

    /// Total weight of all branches.
    pub fn total_weight(&self) -> f64 {
        self.branches.iter().map(|b| b.weight).sum()
    }

    /// Density mass outside every component.
    pub fn leakage(&self) -> f64 {
        (self.field.norm_sqr() - self.total_weight()).max(0.0)
    }

    /// Label of the component containing the grid point nearest to `x`.
    pub fn label_at(&self, x: &[f64]) -> Option<u32> {
        let grid = self.field.grid();
        let idx = grid.nearest(x);
        let l = self.labels[grid.flat_index(&idx[..grid.dims()])];
        (l != 0).then_some(l)
    }

    /// The field restricted to one component (zero elsewhere).
    pub fn branch_field(&self, label: u32) -> Result<WaveField> {
        if label == 0 || label as usize > self.branches.len() {
            return Err(Error::InvalidArgument(format!(
                "no branch labelled {label}"
            )));
        }
        let psi = self
            .field
            .psi()
            .iter()
            .zip(&self.labels)
            .map(|(&v, &l)| if l == label { v } else { Complex64::default() })
            .collect();
        WaveField::new(self.field.grid().clone(), psi, self.field.time())
    }

    /// Normalized density of one component.
    pub fn branch_density(&self, label: u32) -> Result<DensityField> {
        density_of(&self.branch_field(label)?)?.normalized()
    }

    /// Smallest and largest grid coordinate of a component along `axis`.
    pub fn axis_extent(&self, label: u32, axis: usize) -> Option<(f64, f64)> {
        let grid = self.field.grid();
        let mut range: Option<(f64, f64)> = None;
        for (p, &l) in self.labels.iter().enumerate() {
            if l == label {
                let x = grid.position(p)[axis];
                range = Some(match range {
                    None => (x, x),
                    Some((lo, hi)) => (lo.min(x), hi.max(x)),
                });
            }
        }
        range
    }

    /// Label of the branch whose centroid is largest along `axis`.
    pub fn label_with_max_centroid(&self, axis: usize) -> Option<u32> {
        self.branches
            .iter()
            .max_by(|a, b| a.centroid[axis].total_cmp(&b.centroid[axis]))
            .map(|b| b.label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{gaussian_packet, PacketSpec};
    use crate::grid::build_grid;

    #[test]
    fn single_gaussian_is_one_branch() {
        let g = build_grid(&[[-10.0, 10.0]], &[256]).unwrap();
        let f = gaussian_packet(&g, &[0.0], 1.0, &[0.0]).unwrap();
        let dec = branch_decompose(&f, DEFAULT_BRANCH_THRESHOLD, Some(1)).unwrap();
        assert_eq!(dec.count(), 1);
        assert!((dec.branches()[0].weight - 1.0).abs() < 1e-7);
        assert!(matches!(
            branch_decompose(&f, DEFAULT_BRANCH_THRESHOLD, Some(2)),
            Err(Error::BranchCount {
                expected: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn diagonal_packets_in_2d() {
        let g = build_grid(&[[-16.0, 16.0], [-8.0, 8.0]], &[128, 64]).unwrap();
        let a = PacketSpec::isotropic(&[6.0, 4.0], 0.5, &[0.0, 0.0]);
        let b = PacketSpec::isotropic(&[-6.0, -4.0], 0.5, &[0.0, 0.0]);
        let f = WaveField::from_fn(&g, 0.0, |x| a.amplitude(x) * 0.6 + b.amplitude(x) * 0.8)
            .normalized()
            .unwrap();
        let dec = branch_decompose(&f, DEFAULT_BRANCH_THRESHOLD, Some(2)).unwrap();
        let upper = dec.label_with_max_centroid(1).unwrap();
        let w_upper = dec.branches()[upper as usize - 1].weight;
        assert!((w_upper - 0.36).abs() < 1e-6);
        assert!((dec.total_weight() - 1.0).abs() < 1e-6);
        assert_eq!(dec.label_at(&[6.0, 4.0]), Some(upper));
        assert_eq!(dec.label_at(&[0.0, 0.0]), None);

        let f1 = dec.branch_field(1).unwrap();
        let f2 = dec.branch_field(2).unwrap();
        for i in 0..g.len() {
            if dec.labels()[i] != 0 {
                assert!((f1.psi()[i] + f2.psi()[i] - f.psi()[i]).norm() < 1e-10);
            }
        }
        assert!((dec.branch_density(upper).unwrap().integral() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn periodic_adjacency_joins_wrapped_component() {
        let g = build_grid(&[[0.0, 16.0]], &[64]).unwrap();
        // One packet straddling the periodic seam.
        let f = WaveField::from_fn(&g, 0.0, |x| {
            let d = (x[0] - 0.5).min(16.5 - x[0]).abs();
            Complex64::new((-d * d).exp(), 0.0)
        });
        let dec = branch_decompose(&f, 1e-3, None).unwrap();
        assert_eq!(dec.count(), 1);
    }
}
