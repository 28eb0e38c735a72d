//! Split-operator spectral propagation of the Schrödinger equation with a
//! kinetic term `-(hbar^2/2) sum_k Laplacian_k / m_k`, a bounded potential,
//! and optional pointer couplings `g(t) f(x) p_z`.
//!
//! One step is the symmetric (Strang) product
//! `V/2 -> C/2 -> T -> C/2 -> V/2`, where the coupling `C` is diagonal in the
//! mixed representation (position on the measured axis, momentum on the
//! pointer axis).

use std::sync::Mutex;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::WaveField;
use crate::grid::Grid;
use crate::params::PhysicalParams;
use crate::spectral::Spectral;

#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    grid: Grid,
    v: Vec<f64>,
    label: String,
}

impl Potential {
    pub fn new(grid: Grid, v: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if v.len() != grid.len() {
            return Err(Error::InvalidArgument(
                "potential length does not match grid".into(),
            ));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("potential"));
        }
        Ok(Self {
            grid,
            v,
            label: label.into(),
        })
    }

    pub fn zero(grid: &Grid) -> Self {
        Self {
            grid: grid.clone(),
            v: vec![0.0; grid.len()],
            label: "zero".into(),
        }
    }

    /// `sum_k m_k omega^2 (x_k - c_k)^2 / 2`.
    pub fn harmonic(
        grid: &Grid,
        params: &PhysicalParams,
        omega: f64,
        center: &[f64],
    ) -> Result<Self> {
        params.check_dims(grid.dims())?;
        if center.len() != grid.dims() {
            return Err(Error::InvalidArgument(
                "harmonic center has wrong dimension".into(),
            ));
        }
        let d = grid.dims();
        let v = (0..grid.len())
            .map(|f| {
                let x = grid.position(f);
                (0..d)
                    .map(|k| 0.5 * params.mass(k) * omega * omega * (x[k] - center[k]).powi(2))
                    .sum()
            })
            .collect();
        Self::new(grid.clone(), v, format!("harmonic(omega={omega})"))
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            v: self.v.iter().map(|v| v + c).collect(),
            label: format!("{}+{c}", self.label),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    fn is_zero(&self) -> bool {
        self.v.iter().all(|&v| v == 0.0)
    }
}

/// Interval of constant coupling strength, active on `[t_on, t_off)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingWindow {
    pub t_on: f64,
    pub t_off: f64,
    pub strength: f64,
}

/// Pointer coupling `g(t) f(x) p_z`. It translates the pointer coordinate by
/// `f(x) * integral of g` without touching its momentum distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTerm {
    profile: Vec<f64>,
    measured_axis: usize,
    target_axis: usize,
    windows: Vec<CouplingWindow>,
    dims: usize,
}

impl CouplingTerm {
    /// Two detectors split at `boundary` on the measured axis:
    /// `f = tanh((x - boundary) / width)`, so detector 1 (`f = +1`) sits above
    /// the boundary and detector 2 (`f = -1`) below it.
    pub fn detector_pair(
        grid: &Grid,
        measured_axis: usize,
        target_axis: usize,
        boundary: f64,
        width: f64,
        windows: Vec<CouplingWindow>,
    ) -> Result<Self> {
        let d = grid.dims();
        if measured_axis >= d || target_axis >= d || measured_axis == target_axis {
            return Err(Error::InvalidArgument(format!(
                "coupling axes ({measured_axis}, {target_axis}) invalid for {d} dimensions"
            )));
        }
        if !(width > 0.0) {
            return Err(Error::InvalidArgument(
                "detector transition width must be > 0".into(),
            ));
        }
        for w in &windows {
            if !(w.strength >= 0.0 && w.strength.is_finite()) || !(w.t_off > w.t_on) {
                return Err(Error::InvalidArgument(format!(
                    "invalid coupling window {w:?}"
                )));
            }
        }
        let profile = (0..grid.points()[measured_axis])
            .map(|i| ((grid.coord(measured_axis, i) - boundary) / width).tanh())
            .collect();
        Ok(Self {
            profile,
            measured_axis,
            target_axis,
            windows,
            dims: d,
        })
    }

    pub fn profile(&self) -> &[f64] {
        &self.profile
    }

    pub fn measured_axis(&self) -> usize {
        self.measured_axis
    }

    pub fn target_axis(&self) -> usize {
        self.target_axis
    }

    pub fn windows(&self) -> &[CouplingWindow] {
        &self.windows
    }

    /// Instantaneous strength `g(t)`.
    pub fn strength(&self, t: f64) -> f64 {
        self.windows
            .iter()
            .filter(|w| t >= w.t_on && t < w.t_off)
            .map(|w| w.strength)
            .sum()
    }

    /// `integral of g` over `[t0, t1]`, with `t1 < t0` giving the negative.
    pub fn integral(&self, t0: f64, t1: f64) -> f64 {
        let (a, b, sign) = if t1 >= t0 {
            (t0, t1, 1.0)
        } else {
            (t1, t0, -1.0)
        };
        sign * self
            .windows
            .iter()
            .map(|w| (b.min(w.t_off) - a.max(w.t_on)).max(0.0) * w.strength)
            .sum::<f64>()
    }

    /// Total pointer displacement `integral of g` over all windows.
    pub fn total_shift(&self) -> f64 {
        self.windows
            .iter()
            .map(|w| (w.t_off - w.t_on) * w.strength)
            .sum()
    }

    /// Detector profile `f` interpolated linearly at a measured-axis coordinate.
    pub fn profile_at(&self, grid: &Grid, x: f64) -> f64 {
        let a = self.measured_axis;
        let n = self.profile.len();
        let s = (x - grid.lo(a)) / grid.spacing(a);
        let i = s.floor();
        let u = s - i;
        let i0 = (i as i64).rem_euclid(n as i64) as usize;
        let i1 = (i0 + 1) % n;
        self.profile[i0] * (1.0 - u) + self.profile[i1] * u
    }

    fn apply(&self, spectral: &Spectral, psi: &mut [Complex64], shift: f64) {
        let grid = spectral.grid();
        let strides = grid.strides();
        let (ma, ta) = (self.measured_axis, self.target_axis);
        let (nm, nt) = (grid.points()[ma], grid.points()[ta]);
        let (sm, st) = (strides[ma], strides[ta]);
        let kz = spectral.wavenumbers(ta);
        spectral.forward_axis(psi, ta);
        psi.par_iter_mut().enumerate().for_each(|(flat, v)| {
            let f = self.profile[(flat / sm) % nm];
            let k = kz[(flat / st) % nt];
            *v *= Complex64::cis(-shift * f * k);
        });
        spectral.inverse_axis(psi, ta);
    }
}

/// Reusable split-operator propagator for one grid and Hamiltonian.
pub struct Propagator {
    spectral: Spectral,
    params: PhysicalParams,
    potential: Potential,
    couplings: Vec<CouplingTerm>,
    /// `hbar * |k|^2 / (2 m)` summed over axes, i.e. kinetic energy over hbar.
    kinetic_rate: Vec<f64>,
    cache: Mutex<Option<PhaseCache>>,
}

struct PhaseCache {
    dt_bits: u64,
    kinetic: Vec<Complex64>,
    half_potential: Option<Vec<Complex64>>,
}

impl std::fmt::Debug for Propagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Propagator")
            .field("grid", self.spectral.grid())
            .field("potential", &self.potential.label)
            .field("couplings", &self.couplings.len())
            .finish()
    }
}

impl Propagator {
    pub fn new(
        grid: &Grid,
        potential: Potential,
        couplings: Vec<CouplingTerm>,
        params: &PhysicalParams,
    ) -> Result<Self> {
        params.check_dims(grid.dims())?;
        if potential.grid != *grid {
            return Err(Error::InvalidArgument(
                "potential lives on a different grid".into(),
            ));
        }
        if couplings.iter().any(|c| c.dims != grid.dims()) {
            return Err(Error::InvalidArgument(
                "coupling built for a different grid".into(),
            ));
        }
        let spectral = Spectral::new(grid);
        let hbar = params.hbar();
        let kinetic_rate = (0..grid.len())
            .map(|f| {
                let k = spectral.wavenumber_of(f);
                (0..grid.dims())
                    .map(|a| hbar * k[a] * k[a] / (2.0 * params.mass(a)))
                    .sum()
            })
            .collect();
        Ok(Self {
            spectral,
            params: params.clone(),
            potential,
            couplings,
            kinetic_rate,
            cache: Mutex::new(None),
        })
    }

    pub fn grid(&self) -> &Grid {
        self.spectral.grid()
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn couplings(&self) -> &[CouplingTerm] {
        &self.couplings
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    /// Advances `field` by `dt > 0`.
    pub fn step(&self, field: &WaveField, dt: f64) -> Result<WaveField> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "time step must be > 0, got {dt}"
            )));
        }
        self.step_signed(field, dt)
    }

    /// Advances by any nonzero `dt`; negative values run the dynamics backwards.
    pub fn step_signed(&self, field: &WaveField, dt: f64) -> Result<WaveField> {
        if !(dt != 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "time step must be nonzero, got {dt}"
            )));
        }
        if field.grid() != self.grid() {
            return Err(Error::InvalidArgument(
                "field lives on a different grid".into(),
            ));
        }
        let mut out = field.clone();
        self.advance_in_place(&mut out, dt);
        if !out.is_finite() {
            return Err(Error::NonFinite("propagated wave field"));
        }
        Ok(out)
    }

    fn advance_in_place(&self, field: &mut WaveField, dt: f64) {
        let t0 = field.time();
        let mut guard = self.cache.lock().expect("phase cache poisoned");
        if guard.as_ref().map(|c| c.dt_bits) != Some(dt.to_bits()) {
            *guard = Some(self.phases(dt));
        }
        let cache = guard.as_ref().expect("phase cache filled");
        let shifts: Vec<f64> = self
            .couplings
            .iter()
            .map(|c| c.integral(t0, t0 + dt))
            .collect();
        let psi = field.psi_mut();

        if let Some(half_v) = &cache.half_potential {
            mul_pointwise(psi, half_v);
        }
        for (c, &s) in self.couplings.iter().zip(&shifts) {
            if s != 0.0 {
                c.apply(&self.spectral, psi, 0.5 * s);
            }
        }
        self.spectral.forward(psi);
        mul_pointwise(psi, &cache.kinetic);
        self.spectral.inverse(psi);
        for (c, &s) in self.couplings.iter().zip(&shifts).rev() {
            if s != 0.0 {
                c.apply(&self.spectral, psi, 0.5 * s);
            }
        }
        if let Some(half_v) = &cache.half_potential {
            mul_pointwise(psi, half_v);
        }
        field.set_time(t0 + dt);
    }

    fn phases(&self, dt: f64) -> PhaseCache {
        let kinetic = self
            .kinetic_rate
            .par_iter()
            .map(|&w| Complex64::cis(-w * dt))
            .collect();
        let hbar = self.params.hbar();
        let half_potential = (!self.potential.is_zero()).then(|| {
            self.potential
                .v
                .par_iter()
                .map(|&v| Complex64::cis(-v * dt / (2.0 * hbar)))
                .collect()
        });
        PhaseCache {
            dt_bits: dt.to_bits(),
            kinetic,
            half_potential,
        }
    }

    /// Evolves to `t_final` and returns snapshots at `sample_times` (the final
    /// state alone when none are requested). The step is shrunk so that an
    /// integer number of steps lands on `t_final`; samples snap to the nearest step.
    pub fn evolve(
        &self,
        field: &WaveField,
        t_final: f64,
        dt: f64,
        sample_times: &[f64],
    ) -> Result<Vec<WaveField>> {
        let t0 = field.time();
        if !(t_final > t0) {
            return Err(Error::InvalidArgument(format!(
                "t_final {t_final} must exceed the field time {t0}"
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "time step must be > 0, got {dt}"
            )));
        }
        if let Some(t) = sample_times.iter().find(|&&t| t < t0 || t > t_final) {
            return Err(Error::InvalidArgument(format!(
                "sample time {t} outside [{t0}, {t_final}]"
            )));
        }
        let (steps, dt) = step_plan(t_final - t0, dt);
        let mut wanted: Vec<usize> = sample_times
            .iter()
            .map(|&t| ((t - t0) / dt).round() as usize)
            .collect();
        if wanted.is_empty() {
            wanted.push(steps);
        }
        wanted.sort_unstable();
        wanted.dedup();

        let mut out = Vec::with_capacity(wanted.len());
        let mut current = field.clone();
        let mut next_wanted = wanted.iter().peekable();
        for i in 0..=steps {
            while next_wanted.peek() == Some(&&i) {
                out.push(current.clone());
                next_wanted.next();
            }
            if i < steps {
                self.advance_in_place(&mut current, dt);
                current.set_time(t0 + (i + 1) as f64 * dt);
                if !current.is_finite() {
                    return Err(Error::NonFinite("propagated wave field"));
                }
            }
        }
        Ok(out)
    }

    /// `<psi|H|psi> / <psi|psi>` without the coupling term.
    pub fn energy(&self, field: &WaveField) -> Result<f64> {
        let psi = field.psi();
        let norm: f64 = psi.iter().map(|v| v.norm_sqr()).sum();
        if !norm.is_finite() {
            return Err(Error::NonFinite("wave field"));
        }
        let mut hat = psi.to_vec();
        self.spectral.forward(&mut hat);
        // Parseval: sum |hat|^2 = N sum |psi|^2.
        let n = psi.len() as f64;
        let kinetic: f64 = hat
            .iter()
            .zip(&self.kinetic_rate)
            .map(|(h, w)| h.norm_sqr() * w)
            .sum::<f64>()
            * self.params.hbar()
            / (n * norm);
        let potential: f64 = psi
            .iter()
            .zip(&self.potential.v)
            .map(|(p, v)| p.norm_sqr() * v)
            .sum::<f64>()
            / norm;
        let e = kinetic + potential;
        if !e.is_finite() {
            return Err(Error::NonFinite("energy"));
        }
        Ok(e)
    }
}

/// Number of steps and the adjusted step size covering `span`.
pub fn step_plan(span: f64, dt: f64) -> (usize, f64) {
    let steps = ((span / dt) - 1e-9).ceil().max(1.0) as usize;
    (steps, span / steps as f64)
}

fn mul_pointwise(psi: &mut [Complex64], phase: &[Complex64]) {
    psi.par_iter_mut().zip(phase).for_each(|(v, p)| *v *= p);
}

/// One propagation step with a freshly built propagator.
pub fn step(
    field: &WaveField,
    potential: &Potential,
    couplings: &[CouplingTerm],
    params: &PhysicalParams,
    dt: f64,
) -> Result<WaveField> {
    Propagator::new(field.grid(), potential.clone(), couplings.to_vec(), params)?.step(field, dt)
}

pub fn evolve(
    field: &WaveField,
    potential: &Potential,
    couplings: &[CouplingTerm],
    params: &PhysicalParams,
    t_final: f64,
    dt: f64,
    sample_times: &[f64],
) -> Result<Vec<WaveField>> {
    Propagator::new(field.grid(), potential.clone(), couplings.to_vec(), params)?.evolve(
        field,
        t_final,
        dt,
        sample_times,
    )
}

pub fn energy_expectation(
    field: &WaveField,
    potential: &Potential,
    params: &PhysicalParams,
) -> Result<f64> {
    Propagator::new(field.grid(), potential.clone(), Vec::new(), params)?.energy(field)
}
