//! Drift fields and the guided configuration step.
//!
//! The forward drift is evaluated from `grad psi / psi` directly,
//! `b = (hbar/m) (alpha Re(grad psi / psi) + Im(grad psi / psi))`,
//! which avoids unwrapping the phase. The backward drift is
//! `b* = b - alpha hbar grad(rho) / (m rho)` and the current is
//! `j = (b + b*) rho / 2`. Where `|psi|^2` falls below a fraction of its
//! maximum all three are set to zero.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{PacketSpec, WaveField};
use crate::grid::{Grid, MAX_DIMS};
use crate::interp::Stencil;
use crate::params::PhysicalParams;
use crate::schrodinger::{CouplingTerm, Potential};
use crate::spectral::Spectral;

/// Default nodal threshold, relative to the maximum density.
pub const DEFAULT_NODE_THRESHOLD: f64 = 1e-12;

/// A point in configuration space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    x: [f64; MAX_DIMS],
    dims: u8,
    /// Diagnostic exclusion flag. The dynamics never clears it.
    pub alive: bool,
}

impl Configuration {
    pub fn new(x: &[f64]) -> Self {
        assert!(
            (1..=MAX_DIMS).contains(&x.len()),
            "configuration needs 1..=3 coordinates"
        );
        let mut arr = [0.0; MAX_DIMS];
        arr[..x.len()].copy_from_slice(x);
        Self {
            x: arr,
            dims: x.len() as u8,
            alive: true,
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.x[..self.dims as usize]
    }

    pub fn dims(&self) -> usize {
        self.dims as usize
    }
}

/// Drift, backward drift, and current at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftSample {
    pub b: [f64; MAX_DIMS],
    pub b_star: [f64; MAX_DIMS],
    pub j: [f64; MAX_DIMS],
    pub regularized: bool,
}

impl DriftSample {
    fn zero() -> Self {
        Self {
            b: [0.0; MAX_DIMS],
            b_star: [0.0; MAX_DIMS],
            j: [0.0; MAX_DIMS],
            regularized: true,
        }
    }
}

/// Drift from interpolated values of `psi` and its gradient. `extra` is an
/// additional velocity (the pointer coupling's contribution) that enters the
/// forward and backward drift alike.
pub(crate) fn drift_from_values(
    psi: Complex64,
    grad: &[Complex64; MAX_DIMS],
    dims: usize,
    params: &PhysicalParams,
    extra: &[f64; MAX_DIMS],
    floor: f64,
) -> DriftSample {
    let rho = psi.norm_sqr();
    if !(rho >= floor) || rho == 0.0 {
        return DriftSample::zero();
    }
    let (hbar, alpha) = (params.hbar(), params.alpha());
    let mut s = DriftSample {
        b: [0.0; MAX_DIMS],
        b_star: [0.0; MAX_DIMS],
        j: [0.0; MAX_DIMS],
        regularized: false,
    };
    for k in 0..dims {
        let ratio = grad[k] / psi;
        let hm = hbar / params.mass(k);
        let b = hm * (alpha * ratio.re + ratio.im) + extra[k];
        // grad(rho) / rho = 2 Re(grad psi / psi)
        let b_star = b - alpha * hm * 2.0 * ratio.re;
        s.b[k] = b;
        s.b_star[k] = b_star;
        s.j[k] = 0.5 * (b + b_star) * rho;
    }
    s
}

/// A wave field together with its spectral gradient, ready for off-grid
/// evaluation of the drift.
#[derive(Debug, Clone)]
pub struct GuidanceField {
    field: WaveField,
    grad: Vec<Vec<Complex64>>,
    max_density: f64,
}

impl GuidanceField {
    pub fn new(field: WaveField, spectral: &Spectral) -> Self {
        let grad = spectral.gradient(field.psi());
        let max_density = field.max_density();
        Self {
            field,
            grad,
            max_density,
        }
    }

    pub fn from_field(field: WaveField) -> Self {
        let spectral = Spectral::new(field.grid());
        Self::new(field, &spectral)
    }

    pub fn field(&self) -> &WaveField {
        &self.field
    }

    pub fn grid(&self) -> &Grid {
        self.field.grid()
    }

    pub fn gradient(&self) -> &[Vec<Complex64>] {
        &self.grad
    }

    pub fn max_density(&self) -> f64 {
        self.max_density
    }

    pub fn time(&self) -> f64 {
        self.field.time()
    }

    /// `psi` and `grad psi` interpolated at `x`.
    pub fn sample(&self, x: &[f64]) -> (Complex64, [Complex64; MAX_DIMS]) {
        let st = Stencil::new(self.field.grid(), x);
        let psi = st.apply(self.field.psi());
        let mut grad = [Complex64::default(); MAX_DIMS];
        for (k, g) in self.grad.iter().enumerate() {
            grad[k] = st.apply(g);
        }
        (psi, grad)
    }

    pub fn drift(&self, x: &[f64], params: &PhysicalParams, node_threshold: f64) -> DriftSample {
        let (psi, grad) = self.sample(x);
        drift_from_values(
            psi,
            &grad,
            self.grid().dims(),
            params,
            &[0.0; MAX_DIMS],
            node_threshold * self.max_density,
        )
    }
}

/// Drift at `x` for a bare wave field. Builds the gradient on every call; use
/// [`GuidanceField::drift`] in loops.
pub fn drift_at(
    field: &WaveField,
    x: &[f64],
    params: &PhysicalParams,
    node_threshold: f64,
) -> Result<DriftSample> {
    params.check_dims(field.grid().dims())?;
    if !(node_threshold > 0.0) {
        return Err(Error::InvalidArgument("nodal threshold must be > 0".into()));
    }
    if x.len() != field.grid().dims() || !field.grid().contains(x) {
        return Err(Error::InvalidArgument(format!(
            "point {x:?} outside the grid"
        )));
    }
    Ok(GuidanceField::from_field(field.clone()).drift(x, params, node_threshold))
}

/// Pointer velocity `g(t) f(x)` contributed by the couplings over `[t0, t1]`.
pub(crate) fn coupling_velocity(
    couplings: &[CouplingTerm],
    grid: &Grid,
    x: &[f64],
    t0: f64,
    t1: f64,
) -> [f64; MAX_DIMS] {
    let mut v = [0.0; MAX_DIMS];
    for c in couplings {
        let g = c.integral(t0, t1) / (t1 - t0);
        if g != 0.0 {
            v[c.target_axis()] += g * c.profile_at(grid, x[c.measured_axis()]);
        }
    }
    v
}

/// Per-step bookkeeping returned alongside the new configuration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepDiagnostics {
    pub wrapped: bool,
    pub regularized: bool,
}

/// Everything a guided step needs besides the configuration itself.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub start: &'a GuidanceField,
    pub end: &'a GuidanceField,
    pub couplings: &'a [CouplingTerm],
    pub params: &'a PhysicalParams,
    pub node_threshold: f64,
}

impl StepContext<'_> {
    /// Drift at `x` with the fields blended linearly to time `t`.
    pub fn drift(&self, x: &[f64], t: f64, t_window: (f64, f64)) -> DriftSample {
        let (ta, tb) = (self.start.time(), self.end.time());
        let w = if tb > ta {
            ((t - ta) / (tb - ta)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (pa, ga) = self.start.sample(x);
        let (pb, gb) = self.end.sample(x);
        let psi = pa * (1.0 - w) + pb * w;
        let mut grad = [Complex64::default(); MAX_DIMS];
        for k in 0..MAX_DIMS {
            grad[k] = ga[k] * (1.0 - w) + gb[k] * w;
        }
        let grid = self.start.grid();
        let extra = coupling_velocity(self.couplings, grid, x, t_window.0, t_window.1);
        let floor = self.node_threshold
            * (self.start.max_density() * (1.0 - w) + self.end.max_density() * w);
        drift_from_values(psi, &grad, grid.dims(), self.params, &extra, floor)
    }

    /// One Euler–Maruyama step of length `dt` starting at time `t`:
    /// `x' = x + b(x, t + dt/2) dt + sqrt(alpha) xi`, `xi_k ~ N(0, hbar dt / m_k)`.
    /// At `alpha = 0` the generator is left untouched.
    pub fn step<R: Rng + ?Sized>(
        &self,
        config: &Configuration,
        t: f64,
        dt: f64,
        rng: &mut R,
    ) -> (Configuration, StepDiagnostics) {
        let d = config.dims();
        let grid = self.start.grid();
        let drift = self.drift(config.coords(), t + 0.5 * dt, (t, t + dt));
        let alpha = self.params.alpha();
        let mut next = *config;
        let mut diag = StepDiagnostics {
            wrapped: false,
            regularized: drift.regularized,
        };
        for k in 0..d {
            let mut x = config.x[k] + drift.b[k] * dt;
            if alpha > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                x += (alpha * self.params.hbar() / self.params.mass(k) * dt).sqrt() * z;
            }
            let (w, wrapped) = grid.wrap_coord(k, x);
            next.x[k] = w;
            diag.wrapped |= wrapped;
        }
        (next, diag)
    }
}

/// One guided step between two consecutive field snapshots, with no coupling.
pub fn guidance_step<R: Rng + ?Sized>(
    config: &Configuration,
    field_t: &GuidanceField,
    field_next: &GuidanceField,
    params: &PhysicalParams,
    dt: f64,
    rng: &mut R,
) -> Configuration {
    let ctx = StepContext {
        start: field_t,
        end: field_next,
        couplings: &[],
        params,
        node_threshold: DEFAULT_NODE_THRESHOLD,
    };
    ctx.step(config, field_t.time(), dt, rng).0
}

/// Maximum and L2 discrepancy between the current built from the drifts and
/// the current `hbar Im(psi* grad psi) / m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentResidual {
    pub max_abs: f64,
    pub l2: f64,
    pub max_current: f64,
    pub points: usize,
}

pub fn current_consistency(
    field: &WaveField,
    params: &PhysicalParams,
    node_threshold: f64,
) -> Result<CurrentResidual> {
    params.check_dims(field.grid().dims())?;
    let gf = GuidanceField::from_field(field.clone());
    let d = field.grid().dims();
    let floor = node_threshold * gf.max_density();
    let mut out = CurrentResidual {
        max_abs: 0.0,
        l2: 0.0,
        max_current: 0.0,
        points: 0,
    };
    let mut sum_sq = 0.0;
    for (i, &psi) in field.psi().iter().enumerate() {
        if psi.norm_sqr() < floor {
            continue;
        }
        let mut grad = [Complex64::default(); MAX_DIMS];
        for k in 0..d {
            grad[k] = gf.grad[k][i];
        }
        let s = drift_from_values(psi, &grad, d, params, &[0.0; MAX_DIMS], floor);
        for k in 0..d {
            let j_phase = params.hbar() * (psi.conj() * grad[k]).im / params.mass(k);
            let diff = (s.j[k] - j_phase).abs();
            out.max_abs = out.max_abs.max(diff);
            out.max_current = out.max_current.max(j_phase.abs());
            sum_sq += diff * diff;
        }
        out.points += 1;
    }
    out.l2 = (sum_sq * field.grid().cell_volume()).sqrt();
    Ok(out)
}

/// Closed-form trajectory for a free Gaussian packet under the deterministic
/// (`alpha = 0`) guidance law: every coordinate keeps its quantile,
/// `x(t) = c + hbar k t / m + (x0 - c) sigma(t) / sigma0` with
/// `sigma(t)^2 = sigma0^2 + (hbar t / (2 m sigma0))^2`. The packet is taken at `t = 0`.
pub fn bohm_trajectory_oracle(
    packet: &PacketSpec,
    potential: &Potential,
    params: &PhysicalParams,
    x0: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    if !potential.values().iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidArgument(
            "closed-form trajectory exists only for a free packet".into(),
        ));
    }
    let d = x0.len();
    if packet.center.len() != d || packet.sigma.len() != d || params.dims() != d {
        return Err(Error::InvalidArgument(
            "dimension mismatch in oracle inputs".into(),
        ));
    }
    Ok((0..d)
        .map(|k| {
            let (c, s0, m) = (packet.center[k], packet.sigma[k], params.mass(k));
            let kk = packet.wavevector.get(k).copied().unwrap_or(0.0);
            let spread = params.hbar() * t / (2.0 * m * s0);
            let sigma_t = (s0 * s0 + spread * spread).sqrt();
            c + params.hbar() * kk * t / m + (x0[k] - c) * sigma_t / s0
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::gaussian_packet;
    use crate::grid::build_grid;
    use crate::rng::member_stream;

    fn grid1() -> Grid {
        build_grid(&[[-10.0, 10.0]], &[256]).unwrap()
    }

    fn ground(g: &Grid) -> WaveField {
        WaveField::from_fn(g, 0.0, |x| Complex64::new((-x[0] * x[0] / 2.0).exp(), 0.0))
            .normalized()
            .unwrap()
    }

    #[test]
    fn plane_wave_packet_drift() {
        let g = build_grid(&[[-40.0, 40.0]], &[1024]).unwrap();
        let f = gaussian_packet(&g, &[0.0], 5.0, &[2.0]).unwrap();
        for alpha in [0.0, 0.5, 1.0, 2.0] {
            let p = PhysicalParams::natural(1, alpha).unwrap();
            let s = drift_at(&f, &[0.0], &p, DEFAULT_NODE_THRESHOLD).unwrap();
            assert!((s.b[0] - 2.0).abs() < 1e-3);
            assert!((s.b_star[0] - s.b[0]).abs() < 1e-3);
            assert!(!s.regularized);
        }
    }

    #[test]
    fn harmonic_ground_state_drift() {
        let g = grid1();
        let f = ground(&g);
        let p1 = PhysicalParams::natural(1, 1.0).unwrap();
        let s = drift_at(&f, &[1.0], &p1, DEFAULT_NODE_THRESHOLD).unwrap();
        assert!((s.b[0] + 1.0).abs() < 1e-4, "b = {}", s.b[0]);
        assert!(s.j[0].abs() < 1e-12);
        let p0 = PhysicalParams::natural(1, 0.0).unwrap();
        let s0 = drift_at(&f, &[1.0], &p0, DEFAULT_NODE_THRESHOLD).unwrap();
        assert_eq!(s0.b[0], 0.0);
    }

    #[test]
    fn node_is_regularized() {
        let g = grid1();
        let f = WaveField::from_fn(&g, 0.0, |x| {
            Complex64::new(x[0] * (-x[0] * x[0] / 2.0).exp(), 0.0)
        })
        .normalized()
        .unwrap();
        let p = PhysicalParams::natural(1, 1.0).unwrap();
        let s = drift_at(&f, &[0.0], &p, DEFAULT_NODE_THRESHOLD).unwrap();
        assert!(s.regularized);
        assert_eq!(s.b, [0.0; 3]);
        assert_eq!(s.j, [0.0; 3]);
        assert!(drift_at(&f, &[11.0], &p, DEFAULT_NODE_THRESHOLD).is_err());
        assert!(drift_at(&f, &[0.0], &p, 0.0).is_err());
    }

    #[test]
    fn currents_agree() {
        let g = grid1();
        let p = PhysicalParams::new(0.7, vec![1.3], 0.8).unwrap();
        for k in [0.0, 1.5, -3.0] {
            let f = gaussian_packet(&g, &[0.3], 1.1, &[k]).unwrap();
            let r = current_consistency(&f, &p, DEFAULT_NODE_THRESHOLD).unwrap();
            assert!(r.max_abs <= 1e-10, "{r:?}");
            if k == 0.0 {
                assert!(r.max_current < 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_step_leaves_stationary_real_state() {
        let g = grid1();
        let gf = GuidanceField::from_field(ground(&g));
        let p = PhysicalParams::natural(1, 0.0).unwrap();
        let mut rng = member_stream(1, 0);
        let before = rng.clone();
        let c = Configuration::new(&[0.77]);
        for dt in [1e-3, 0.1, 1.0] {
            let next = guidance_step(&c, &gf, &gf, &p, dt, &mut rng);
            assert_eq!(next, c);
        }
        assert_eq!(rng.get_word_pos(), before.get_word_pos());
    }

    #[test]
    fn deterministic_step_in_plane_wave_limit() {
        let g = build_grid(&[[-64.0, 64.0]], &[2048]).unwrap();
        let f = gaussian_packet(&g, &[0.0], 8.0, &[2.0]).unwrap();
        let gf = GuidanceField::from_field(f);
        let p = PhysicalParams::natural(1, 0.0).unwrap();
        let mut rng = member_stream(1, 0);
        let dt = 1e-3;
        let next = guidance_step(&Configuration::new(&[0.0]), &gf, &gf, &p, dt, &mut rng);
        assert!((next.coords()[0] - 2.0 * dt).abs() < 1e-6);
    }

    #[test]
    fn oracle_examples() {
        let g = grid1();
        let p = PhysicalParams::natural(1, 0.0).unwrap();
        let zero = Potential::zero(&g);
        let spec = PacketSpec::isotropic(&[0.0], 1.0, &[0.0]);
        let x = bohm_trajectory_oracle(&spec, &zero, &p, &[1.0], 2.0).unwrap();
        assert!((x[0] - 2f64.sqrt()).abs() < 1e-15);
        let moving = PacketSpec::isotropic(&[0.0], 1.0, &[1.5]);
        let x = bohm_trajectory_oracle(&moving, &zero, &p, &[0.0], 2.0).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-15);
        let harm = Potential::harmonic(&g, &p, 1.0, &[0.0]).unwrap();
        assert!(bohm_trajectory_oracle(&spec, &harm, &p, &[1.0], 1.0).is_err());
    }
}
