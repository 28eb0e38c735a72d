//! Wave fields, densities, and the polar (amplitude/phase) decomposition.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, MAX_DIMS};

/// Densities on the outermost grid layers must stay below this value.
pub const BOUNDARY_DENSITY_LIMIT: f64 = 1e-8;

/// Complex amplitude sampled on a grid at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    grid: Grid,
    psi: Vec<Complex64>,
    time: f64,
}

impl WaveField {
    pub fn new(grid: Grid, psi: Vec<Complex64>, time: f64) -> Result<Self> {
        if psi.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "{} amplitudes for a grid of {} points",
                psi.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, psi, time })
    }

    /// Samples `f` at every grid point.
    pub fn from_fn<F>(grid: &Grid, time: f64, f: F) -> Self
    where
        F: Fn(&[f64]) -> Complex64 + Sync,
    {
        let d = grid.dims();
        let psi = (0..grid.len())
            .into_par_iter()
            .map(|flat| f(&grid.position(flat)[..d]))
            .collect();
        Self {
            grid: grid.clone(),
            psi,
            time,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn psi(&self) -> &[Complex64] {
        &self.psi
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn into_parts(self) -> (Grid, Vec<Complex64>, f64) {
        (self.grid, self.psi, self.time)
    }

    pub(crate) fn psi_mut(&mut self) -> &mut Vec<Complex64> {
        &mut self.psi
    }

    pub(crate) fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    /// Squared L2 norm, `sum |psi|^2 * dV`.
    pub fn norm_sqr(&self) -> f64 {
        self.psi.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm_sqr();
        if !n.is_finite() {
            return Err(Error::NonFinite("wave field norm"));
        }
        if n <= 0.0 {
            return Err(Error::InvalidArgument(
                "cannot normalize a zero field".into(),
            ));
        }
        let s = 1.0 / n.sqrt();
        self.psi.iter_mut().for_each(|v| *v *= s);
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.psi
            .iter()
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// `sum_i c_i * field_i`; all fields must share a grid.
    pub fn linear_combination(terms: &[(Complex64, &WaveField)]) -> Result<Self> {
        let (_, first) = terms
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty linear combination".into()))?;
        let mut psi = vec![Complex64::default(); first.psi.len()];
        for (c, f) in terms {
            if f.grid != first.grid {
                return Err(Error::InvalidArgument(
                    "fields live on different grids".into(),
                ));
            }
            for (acc, v) in psi.iter_mut().zip(&f.psi) {
                *acc += c * v;
            }
        }
        Ok(Self {
            grid: first.grid.clone(),
            psi,
            time: first.time,
        })
    }

    pub fn max_density(&self) -> f64 {
        self.psi.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max)
    }

    /// Largest density on the outermost layer of any axis.
    pub fn boundary_density(&self) -> f64 {
        (0..self.psi.len())
            .filter(|&f| self.grid.on_boundary(f))
            .map(|f| self.psi[f].norm_sqr())
            .fold(0.0, f64::max)
    }

    pub fn check_boundary(&self) -> Result<()> {
        let density = self.boundary_density();
        if density > BOUNDARY_DENSITY_LIMIT {
            return Err(Error::BoundaryViolation {
                density,
                limit: BOUNDARY_DENSITY_LIMIT,
                time: self.time,
            });
        }
        Ok(())
    }

    /// L2 distance to another field on the same grid.
    pub fn l2_distance(&self, other: &WaveField) -> f64 {
        self.psi
            .iter()
            .zip(&other.psi)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
            * self.grid.cell_volume().sqrt()
    }
}

/// Parameters of a Gaussian packet `exp(-(x-c)^2/(4 sigma^2) + i k x)` per axis.
/// `sigma` is the standard deviation of the resulting density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct PacketSpec {
    pub center: Vec<f64>,
    pub sigma: Vec<f64>,
    #[serde(default)]
    pub wavevector: Vec<f64>,
}

impl PacketSpec {
    pub fn isotropic(center: &[f64], sigma: f64, wavevector: &[f64]) -> Self {
        Self {
            center: center.to_vec(),
            sigma: vec![sigma; center.len()],
            wavevector: wavevector.to_vec(),
        }
    }

    fn validate(&self, dims: usize) -> Result<()> {
        if self.center.len() != dims || self.sigma.len() != dims {
            return Err(Error::InvalidArgument(format!(
                "packet needs {dims} center and width components"
            )));
        }
        if !self.wavevector.is_empty() && self.wavevector.len() != dims {
            return Err(Error::InvalidArgument(format!(
                "packet wavevector needs {dims} components"
            )));
        }
        if self.sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidArgument("packet width must be > 0".into()));
        }
        Ok(())
    }

    /// Unnormalized amplitude at `x`.
    pub fn amplitude(&self, x: &[f64]) -> Complex64 {
        let mut exponent = Complex64::default();
        for k in 0..x.len() {
            let dx = x[k] - self.center[k];
            let kk = self.wavevector.get(k).copied().unwrap_or(0.0);
            exponent += Complex64::new(-dx * dx / (4.0 * self.sigma[k] * self.sigma[k]), kk * x[k]);
        }
        exponent.exp()
    }
}

/// Normalized Gaussian packet with isotropic width `sigma`.
pub fn gaussian_packet(
    grid: &Grid,
    center: &[f64],
    sigma: f64,
    wavevector: &[f64],
) -> Result<WaveField> {
    let k = if wavevector.is_empty() {
        vec![0.0; center.len()]
    } else {
        wavevector.to_vec()
    };
    packet(grid, &PacketSpec::isotropic(center, sigma, &k))
}

/// Normalized Gaussian packet; fails if the tails reach the periodic boundary.
pub fn packet(grid: &Grid, spec: &PacketSpec) -> Result<WaveField> {
    spec.validate(grid.dims())?;
    if !grid.contains(&spec.center) {
        return Err(Error::InvalidArgument(format!(
            "packet center {:?} outside the grid",
            spec.center
        )));
    }
    let field = WaveField::from_fn(grid, 0.0, |x| spec.amplitude(x)).normalized()?;
    let density = field.boundary_density();
    if density >= BOUNDARY_DENSITY_LIMIT {
        return Err(Error::TailTruncation {
            density,
            limit: BOUNDARY_DENSITY_LIMIT,
        });
    }
    Ok(field)
}

/// Real nonnegative density on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid: Grid,
    rho: Vec<f64>,
    time: f64,
}

pub fn density_of(field: &WaveField) -> Result<DensityField> {
    if !field.is_finite() {
        return Err(Error::NonFinite("wave field amplitude"));
    }
    Ok(DensityField {
        grid: field.grid.clone(),
        rho: field.psi.iter().map(|v| v.norm_sqr()).collect(),
        time: field.time,
    })
}

impl DensityField {
    pub fn new(grid: Grid, rho: Vec<f64>, time: f64) -> Result<Self> {
        if rho.len() != grid.len() {
            return Err(Error::InvalidArgument(
                "density length does not match grid".into(),
            ));
        }
        if rho.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidArgument(
                "density must be finite and >= 0".into(),
            ));
        }
        Ok(Self { grid, rho, time })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn integral(&self) -> f64 {
        self.rho.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max(&self) -> f64 {
        self.rho.iter().copied().fold(0.0, f64::max)
    }

    /// Density divided by its integral.
    pub fn normalized(mut self) -> Result<Self> {
        let total = self.integral();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidArgument("density has no mass".into()));
        }
        self.rho.iter_mut().for_each(|r| *r /= total);
        Ok(self)
    }

    /// Probability mass of every cell under the multilinear interpolant of
    /// the grid values. Cell `i` spans grid points `i` to `i + 1` (periodic).
    pub fn cell_masses(&self) -> Vec<f64> {
        let d = self.grid.dims();
        let n = self.grid.points();
        let strides = self.grid.strides();
        let vol = self.grid.cell_volume();
        let corners = 1usize << d;
        (0..self.rho.len())
            .map(|flat| {
                let idx = self.grid.unravel(flat);
                let mut sum = 0.0;
                for c in 0..corners {
                    let mut f = 0;
                    for k in 0..d {
                        let i = (idx[k] + ((c >> k) & 1)) % n[k];
                        f += i * strides[k];
                    }
                    sum += self.rho[f];
                }
                sum / corners as f64 * vol
            })
            .collect()
    }

    /// Largest corner value of every cell, the envelope used by the sampler.
    pub(crate) fn cell_maxima(&self) -> Vec<f64> {
        let d = self.grid.dims();
        let n = self.grid.points();
        let strides = self.grid.strides();
        (0..self.rho.len())
            .map(|flat| {
                let idx = self.grid.unravel(flat);
                let mut m: f64 = 0.0;
                for c in 0..(1usize << d) {
                    let mut f = 0;
                    for k in 0..d {
                        f += ((idx[k] + ((c >> k) & 1)) % n[k]) * strides[k];
                    }
                    m = m.max(self.rho[f]);
                }
                m
            })
            .collect()
    }

    /// Multilinear interpolation at a point inside the grid.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let d = self.grid.dims();
        let n = self.grid.points();
        let strides = self.grid.strides();
        let mut base = [0usize; MAX_DIMS];
        let mut frac = [0.0; MAX_DIMS];
        for k in 0..d {
            let s = (x[k] - self.grid.lo(k)) / self.grid.spacing(k);
            let i = s.floor();
            base[k] = (i as i64).rem_euclid(n[k] as i64) as usize;
            frac[k] = s - i;
        }
        let mut acc = 0.0;
        for c in 0..(1usize << d) {
            let mut w = 1.0;
            let mut f = 0;
            for k in 0..d {
                let bit = (c >> k) & 1;
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
                f += ((base[k] + bit) % n[k]) * strides[k];
            }
            acc += w * self.rho[f];
        }
        acc
    }
}

/// Logarithmic amplitude `R`, phase `S`, and validity mask of a field.
#[derive(Debug, Clone)]
pub struct PolarFields {
    /// `ln |psi|` where the mask is set, NaN elsewhere.
    pub r: Vec<f64>,
    /// Principal-value phase in `(-pi, pi]` where the mask is set, NaN elsewhere.
    pub s: Vec<f64>,
    pub mask: Vec<bool>,
}

/// Pointwise `psi = exp(R + iS)`; points with `|psi|^2 < threshold` are masked out.
pub fn polar_decompose(field: &WaveField, threshold: f64) -> Result<PolarFields> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument("polar threshold must be > 0".into()));
    }
    let n = field.psi.len();
    let mut out = PolarFields {
        r: vec![f64::NAN; n],
        s: vec![f64::NAN; n],
        mask: vec![false; n],
    };
    for (i, v) in field.psi.iter().enumerate() {
        if v.norm_sqr() >= threshold {
            out.r[i] = v.norm().ln();
            out.s[i] = v.arg();
            out.mask[i] = true;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use std::f64::consts::PI;

    fn grid1() -> Grid {
        build_grid(&[[-10.0, 10.0]], &[256]).unwrap()
    }

    #[test]
    fn gaussian_peak_density() {
        let g = grid1();
        let f = gaussian_packet(&g, &[0.0], 1.0, &[0.0]).unwrap();
        assert!((f.norm_sqr() - 1.0).abs() < 1e-10);
        let i0 = g.flat_index(&[128]);
        assert!((f.psi()[i0].norm_sqr() - (2.0 * PI).powf(-0.5)).abs() < 1e-6);
    }

    #[test]
    fn gaussian_tail_truncation() {
        let g = grid1();
        assert!(matches!(
            gaussian_packet(&g, &[9.9], 1.0, &[0.0]),
            Err(Error::TailTruncation { .. })
        ));
        assert!(gaussian_packet(&g, &[0.0], 0.0, &[0.0]).is_err());
        assert!(gaussian_packet(&g, &[12.0], 1.0, &[0.0]).is_err());
    }

    #[test]
    fn phase_of_moving_packet() {
        let g = grid1();
        let f = gaussian_packet(&g, &[0.0], 1.0, &[2.0]).unwrap();
        let polar = polar_decompose(&f, 1e-6).unwrap();
        let i0 = 128;
        for i in 0..g.len() {
            if !polar.mask[i] {
                continue;
            }
            let x = g.coord(0, i);
            let diff = (polar.s[i] - polar.s[i0] - 2.0 * x).rem_euclid(2.0 * PI);
            let diff = diff.min(2.0 * PI - diff);
            assert!(diff < 1e-9, "x = {x}, diff = {diff}");
        }
    }

    #[test]
    fn real_gaussian_has_zero_phase_and_consistent_r() {
        let g = grid1();
        let f = gaussian_packet(&g, &[0.5], 1.3, &[0.0]).unwrap();
        let polar = polar_decompose(&f, 1e-12).unwrap();
        for i in 0..g.len() {
            if polar.mask[i] {
                assert_eq!(polar.s[i], 0.0);
                assert!(((2.0 * polar.r[i]).exp() - f.psi()[i].norm_sqr()).abs() < 1e-12);
            } else {
                assert!(polar.r[i].is_nan());
            }
        }
        assert!(polar_decompose(&f, 0.0).is_err());
    }

    #[test]
    fn node_of_first_excited_state_is_masked() {
        let g = grid1();
        // x exp(-x^2/2), zero exactly at x = 0.
        let f = WaveField::from_fn(&g, 0.0, |x| {
            Complex64::new(x[0] * (-x[0] * x[0] / 2.0).exp(), 0.0)
        })
        .normalized()
        .unwrap();
        let polar = polar_decompose(&f, 1e-10).unwrap();
        assert!(!polar.mask[128]);
        assert!(polar.mask[140]);
    }

    #[test]
    fn density_of_normalized_and_k_independent() {
        let g = grid1();
        let a = gaussian_packet(&g, &[1.0], 0.8, &[0.0]).unwrap();
        let b = gaussian_packet(&g, &[1.0], 0.8, &[3.0]).unwrap();
        let ra = density_of(&a).unwrap();
        let rb = density_of(&b).unwrap();
        assert!((ra.integral() - 1.0).abs() < 1e-8);
        let analytic =
            |x: f64| (-(x - 1.0f64).powi(2) / (2.0 * 0.64)).exp() / (0.8 * (2.0 * PI).sqrt());
        for i in 0..g.len() {
            let x = g.coord(0, i);
            assert!((ra.rho()[i] - rb.rho()[i]).abs() < 1e-12);
            assert!((rb.rho()[i] - analytic(x)).abs() < 1e-9);
        }
    }

    #[test]
    fn disjoint_superposition_is_additive() {
        let g = grid1();
        let p1 = gaussian_packet(&g, &[-5.0], 0.5, &[0.0]).unwrap();
        let p2 = gaussian_packet(&g, &[5.0], 0.5, &[1.0]).unwrap();
        let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let sum = WaveField::linear_combination(&[(s, &p1), (s, &p2)]).unwrap();
        let r = density_of(&sum).unwrap();
        let r1 = density_of(&p1).unwrap();
        let r2 = density_of(&p2).unwrap();
        for i in 0..g.len() {
            assert!((r.rho()[i] - 0.5 * (r1.rho()[i] + r2.rho()[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn density_rejects_non_finite() {
        let g = grid1();
        let mut psi = vec![Complex64::new(0.1, 0.0); 256];
        psi[3] = Complex64::new(f64::NAN, 0.0);
        let f = WaveField::new(g, psi, 0.0).unwrap();
        assert!(matches!(density_of(&f), Err(Error::NonFinite(_))));
    }

    #[test]
    fn cell_masses_sum_to_integral() {
        let g = build_grid(&[[-8.0, 8.0], [-8.0, 8.0]], &[32, 64]).unwrap();
        let f = gaussian_packet(&g, &[0.5, -0.5], 1.0, &[0.0, 0.0]).unwrap();
        let r = density_of(&f).unwrap();
        let total: f64 = r.cell_masses().iter().sum();
        assert!((total - r.integral()).abs() < 1e-12);
        let x = [0.1234, -0.777];
        let v = r.interpolate(&x);
        let exact =
            (-(0.1234f64 - 0.5).powi(2) / 2.0 - (-0.777f64 + 0.5).powi(2) / 2.0).exp() / (2.0 * PI);
        assert!((v - exact).abs() < 5e-3);
    }
}
