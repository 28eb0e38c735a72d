//! Coarse position measurement with one or two pointer coordinates.
//!
//! The measured system lives on axis 0 as `c1 psi1(x) + c2 psi2(x)`, each
//! pointer on its own axis starts in a Gaussian centered at zero. A coupling
//! `g(t) f(x) p_z` drives the pointer to `+shift` on detector 1 (`psi1`) and
//! to `-shift` on detector 2.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::branches::{branch_decompose, BranchDecomposition, DEFAULT_BRANCH_THRESHOLD};
use crate::ensemble::{
    equivariance_check, sample_from_density, sampling_floor, CoEvolution, Ensemble, Provenance,
};
use crate::error::{Error, Result};
use crate::field::{PacketSpec, WaveField, BOUNDARY_DENSITY_LIMIT};
use crate::grid::{build_grid, Grid};
use crate::guidance::Configuration;
use crate::params::PhysicalParams;
use crate::schrodinger::{CouplingTerm, CouplingWindow, Potential, Propagator};

/// Outcome code for members inside the readout dead zone.
pub const UNDECIDED: u8 = 0;

/// Largest tolerated undecided fraction.
pub const MAX_UNDECIDED_FRACTION: f64 = 0.01;

/// Densities of `psi1` and `psi2` must not both exceed this fraction of their
/// maxima at any grid point.
pub const SUPPORT_THRESHOLD: f64 = 1e-10;

/// Required post-coupling separation `|z1 - z2|`, in pointer widths.
pub const MIN_GAP_WIDTHS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct PointerSpec {
    /// Width of the initial Gaussian pointer density.
    pub sigma: f64,
    /// Displacement `z1` reached on detector 1; detector 2 reaches `-z1`.
    pub shift: f64,
    pub t_on: f64,
    pub t_off: f64,
}

impl PointerSpec {
    pub fn strength(&self) -> f64 {
        self.shift / (self.t_off - self.t_on)
    }

    /// Outcome read from a pointer coordinate: `1` above `shift/2`, `2`
    /// below `-shift/2`, undecided in between.
    pub fn readout(&self, z: f64) -> u8 {
        readout(self.shift, z)
    }

    /// Density width of the free pointer packet at time `t`.
    pub fn width_at(&self, t: f64, hbar: f64, mass: f64) -> f64 {
        let s = hbar * t / (2.0 * mass * self.sigma * self.sigma);
        self.sigma * (1.0 + s * s).sqrt()
    }
}

pub fn readout(shift: f64, z: f64) -> u8 {
    if z > shift / 2.0 {
        1
    } else if z < -shift / 2.0 {
        2
    } else {
        UNDECIDED
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct MeasurementScenario {
    pub extents: Vec<[f64; 2]>,
    pub points: Vec<usize>,
    /// `(re, im)` of the coefficient of `psi1`.
    pub c1: [f64; 2],
    pub c2: [f64; 2],
    /// One-dimensional packets along the measured axis.
    pub psi1: PacketSpec,
    pub psi2: PacketSpec,
    pub detector_boundary: f64,
    pub detector_width: f64,
    pub pointer: PointerSpec,
    #[serde(default)]
    pub second_pointer: Option<PointerSpec>,
    pub dt: f64,
    #[serde(default = "one")]
    pub substeps: usize,
    pub t_final: f64,
    /// Post-measurement times at which fields and positions are kept.
    pub sample_times: Vec<f64>,
    /// Spacing of branch-label checks after the last coupling window.
    pub monitor_interval: f64,
    #[serde(default = "default_branch_threshold")]
    pub branch_threshold: f64,
}

fn one() -> usize {
    1
}

fn default_branch_threshold() -> f64 {
    DEFAULT_BRANCH_THRESHOLD
}

impl MeasurementScenario {
    /// Particle plus one pointer on a 256 x 128 grid.
    pub fn two_packet() -> Self {
        Self {
            extents: vec![[-16.0, 16.0], [-8.0, 8.0]],
            points: vec![256, 128],
            c1: [0.6, 0.0],
            c2: [0.8, 0.0],
            psi1: PacketSpec::isotropic(&[6.0], 0.7, &[0.0]),
            psi2: PacketSpec::isotropic(&[-6.0], 0.7, &[0.0]),
            detector_boundary: 0.0,
            detector_width: 0.5,
            pointer: PointerSpec {
                sigma: 0.3,
                shift: 4.0,
                t_on: 0.0,
                t_off: 0.5,
            },
            second_pointer: None,
            dt: 0.005,
            substeps: 1,
            t_final: 2.0,
            sample_times: vec![1.0, 1.5, 2.0],
            monitor_interval: 0.1,
            branch_threshold: DEFAULT_BRANCH_THRESHOLD,
        }
    }

    /// Particle plus two pointers read one after the other, 128 x 32 x 32.
    pub fn repeated() -> Self {
        let pointer = PointerSpec {
            sigma: 0.5,
            shift: 4.0,
            t_on: 0.0,
            t_off: 0.5,
        };
        Self {
            extents: vec![[-16.0, 16.0], [-8.0, 8.0], [-8.0, 8.0]],
            points: vec![128, 32, 32],
            second_pointer: Some(PointerSpec {
                t_on: 0.75,
                t_off: 1.25,
                ..pointer.clone()
            }),
            pointer,
            dt: 0.01,
            t_final: 1.5,
            sample_times: vec![1.5],
            ..Self::two_packet()
        }
    }

    /// `hbar = 1`, particle mass 1, pointer masses 20.
    pub fn default_params(&self, alpha: f64) -> Result<PhysicalParams> {
        let mut masses = vec![1.0];
        masses.resize(self.dims(), 20.0);
        PhysicalParams::new(1.0, masses, alpha)
    }

    pub fn dims(&self) -> usize {
        2 + self.second_pointer.is_some() as usize
    }

    pub fn coefficients(&self) -> (Complex64, Complex64) {
        (
            Complex64::new(self.c1[0], self.c1[1]),
            Complex64::new(self.c2[0], self.c2[1]),
        )
    }

    pub fn pointers(&self) -> Vec<&PointerSpec> {
        std::iter::once(&self.pointer)
            .chain(self.second_pointer.as_ref())
            .collect()
    }

    /// End of the last coupling window.
    pub fn separation_time(&self) -> f64 {
        self.pointers()
            .iter()
            .map(|p| p.t_off)
            .fold(f64::MIN, f64::max)
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        Sha256::digest(bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Checks every scenario constraint and returns the grid.
    pub fn validate(&self, params: &PhysicalParams) -> Result<Grid> {
        let bad = |m: String| Err(Error::Scenario(m));
        let d = self.dims();
        if self.extents.len() != d || self.points.len() != d {
            return bad(format!(
                "scenario with {} pointer(s) needs a {d}-dimensional grid",
                d - 1
            ));
        }
        let grid = build_grid(&self.extents, &self.points)?;
        params.check_dims(d)?;
        let (c1, c2) = self.coefficients();
        let total = c1.norm_sqr() + c2.norm_sqr();
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("|c1|^2 + |c2|^2 = {total}, expected 1"));
        }
        for (name, p) in [("psi1", &self.psi1), ("psi2", &self.psi2)] {
            if p.center.len() != 1 || p.sigma.len() != 1 || p.wavevector.len() > 1 {
                return bad(format!("{name} must be one-dimensional"));
            }
            if !(p.sigma[0] > 0.0) {
                return bad(format!("{name} width must be > 0"));
            }
        }
        if !(self.psi1.center[0] > self.detector_boundary
            && self.psi2.center[0] < self.detector_boundary)
        {
            return bad("psi1 must sit above the detector boundary and psi2 below it".into());
        }
        if !(self.detector_width > 0.0) {
            return bad("detector width must be > 0".into());
        }
        if c1.norm_sqr() > 0.0 && c2.norm_sqr() > 0.0 {
            let r1 = self.packet_density(&grid, &self.psi1);
            let r2 = self.packet_density(&grid, &self.psi2);
            let (m1, m2) = (max(&r1), max(&r2));
            if r1
                .iter()
                .zip(&r2)
                .any(|(a, b)| *a >= SUPPORT_THRESHOLD * m1 && *b >= SUPPORT_THRESHOLD * m2)
            {
                return bad("psi1 and psi2 supports overlap".into());
            }
        }
        if !(self.dt > 0.0) || self.substeps == 0 {
            return bad("dt must be > 0 and substeps >= 1".into());
        }
        let mut previous_off = f64::MIN;
        for (i, p) in self.pointers().into_iter().enumerate() {
            let axis = i + 1;
            if !(p.sigma > 0.0 && p.shift > 0.0 && p.t_off > p.t_on && p.t_on >= 0.0) {
                return bad(format!(
                    "pointer {axis} needs sigma > 0, shift > 0 and t_on < t_off"
                ));
            }
            if p.t_on < previous_off {
                return bad("coupling windows must follow one another".into());
            }
            previous_off = p.t_off;
            let width = p.width_at(self.t_final, params.hbar(), params.mass(axis));
            if 2.0 * p.shift < MIN_GAP_WIDTHS * width {
                return bad(format!(
                    "pointer {axis} gap {} is below {MIN_GAP_WIDTHS} widths ({width} each)",
                    2.0 * p.shift
                ));
            }
        }
        let t_sep = self.separation_time();
        if !(self.t_final >= t_sep) {
            return bad("run ends before the last coupling window closes".into());
        }
        if self
            .sample_times
            .iter()
            .any(|&t| !(t >= t_sep && t <= self.t_final))
        {
            return bad(format!(
                "sample times must lie in [{t_sep}, {}]",
                self.t_final
            ));
        }
        if !(self.monitor_interval > 0.0) {
            return bad("monitor interval must be > 0".into());
        }
        if !(self.branch_threshold > 0.0 && self.branch_threshold < 1.0) {
            return bad("branch threshold outside (0, 1)".into());
        }
        Ok(grid)
    }

    fn packet_density(&self, grid: &Grid, p: &PacketSpec) -> Vec<f64> {
        (0..grid.points()[0])
            .map(|i| p.amplitude(&[grid.coord(0, i)]).norm_sqr())
            .collect()
    }

    /// One-dimensional normalization `1 / sqrt(sum |f|^2 dx)` on `axis`.
    fn norm_on_axis<F: Fn(f64) -> Complex64>(grid: &Grid, axis: usize, f: F) -> f64 {
        let s: f64 = (0..grid.points()[axis])
            .map(|i| f(grid.coord(axis, i)).norm_sqr())
            .sum::<f64>()
            * grid.spacing(axis);
        1.0 / s.sqrt()
    }

    fn pointer_amplitude(p: &PointerSpec, z: f64) -> Complex64 {
        Complex64::new((-z * z / (4.0 * p.sigma * p.sigma)).exp(), 0.0)
    }

    /// Initial state `(c1 psi1 + c2 psi2) beta (beta')`. Every factor is
    /// normalized on the grid, so `|c_i|^2` is exactly the weight of term `i`.
    pub fn initial_field(&self, grid: &Grid) -> Result<WaveField> {
        let (a, b) = self.terms(grid);
        WaveField::linear_combination(&[
            (Complex64::new(1.0, 0.0), &a),
            (Complex64::new(1.0, 0.0), &b),
        ])
    }

    /// The two terms `c1 psi1 beta` and `c2 psi2 beta` of the initial state.
    pub fn terms(&self, grid: &Grid) -> (WaveField, WaveField) {
        let (c1, c2) = self.coefficients();
        let n1 = Self::norm_on_axis(grid, 0, |x| self.psi1.amplitude(&[x]));
        let n2 = Self::norm_on_axis(grid, 0, |x| self.psi2.amplitude(&[x]));
        let pointers = self.pointers();
        let pn: Vec<f64> = pointers
            .iter()
            .enumerate()
            .map(|(i, p)| Self::norm_on_axis(grid, i + 1, |z| Self::pointer_amplitude(p, z)))
            .collect();
        let beta = |x: &[f64]| {
            pointers
                .iter()
                .enumerate()
                .map(|(i, p)| Self::pointer_amplitude(p, x[i + 1]) * pn[i])
                .product::<Complex64>()
        };
        let a = WaveField::from_fn(grid, 0.0, |x| {
            c1 * n1 * self.psi1.amplitude(&x[..1]) * beta(x)
        });
        let b = WaveField::from_fn(grid, 0.0, |x| {
            c2 * n2 * self.psi2.amplitude(&x[..1]) * beta(x)
        });
        (a, b)
    }

    pub fn couplings(&self, grid: &Grid) -> Result<Vec<CouplingTerm>> {
        self.pointers()
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                CouplingTerm::detector_pair(
                    grid,
                    0,
                    i + 1,
                    self.detector_boundary,
                    self.detector_width,
                    vec![CouplingWindow {
                        t_on: p.t_on,
                        t_off: p.t_off,
                        strength: p.strength(),
                    }],
                )
            })
            .collect()
    }

    /// Which packet `x` belongs to initially: the larger of `|c1 psi1|^2`
    /// and `|c2 psi2|^2`.
    pub fn initial_support(&self, grid: &Grid, x: f64) -> u8 {
        let (c1, c2) = self.coefficients();
        let n1 = Self::norm_on_axis(grid, 0, |x| self.psi1.amplitude(&[x]));
        let n2 = Self::norm_on_axis(grid, 0, |x| self.psi2.amplitude(&[x]));
        let r1 = (c1 * n1 * self.psi1.amplitude(&[x])).norm_sqr();
        let r2 = (c2 * n2 * self.psi2.amplitude(&[x])).norm_sqr();
        if r1 >= r2 {
            1
        } else {
            2
        }
    }

    pub fn propagator(&self, grid: &Grid, params: &PhysicalParams) -> Result<Propagator> {
        Propagator::new(grid, Potential::zero(grid), self.couplings(grid)?, params)
    }
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

/// Per-member row of a measurement record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordRow {
    pub id: u64,
    pub x_initial: f64,
    pub x_final: f64,
    pub z_final: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z2_final: Option<f64>,
    pub o1: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub o2: Option<u8>,
    /// Packet holding `x_initial`.
    pub support: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordSummary {
    pub decided: usize,
    pub undecided: usize,
    /// Outcome-1 count over decided members.
    pub outcome1_frequency: f64,
    /// Integrated density of the detector-1 branch at the final time.
    pub branch1_weight: f64,
    /// Fraction of decided members whose outcome matches their initial packet.
    pub support_agreement: f64,
    pub crossing: CrossingReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeat: Option<AgreementReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementRecord {
    pub scenario_hash: String,
    pub alpha: f64,
    pub n: usize,
    pub seed: u64,
    /// Pointer shifts defining the readout of `z_final` and `z2_final`.
    pub shifts: Vec<f64>,
    pub rows: Vec<RecordRow>,
    pub summary: RecordSummary,
}

impl MeasurementRecord {
    /// Integrity check: every stored outcome must be the readout of the
    /// stored pointer coordinate, and the counts must add up.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        if self.shifts.is_empty()
            || self.shifts.len() > 2
            || self.shifts.iter().any(|s| !(*s > 0.0))
        {
            return bad("record needs one or two positive pointer shifts".into());
        }
        if self.rows.len() != self.n {
            return bad(format!("{} rows for n = {}", self.rows.len(), self.n));
        }
        let mut undecided = 0;
        for r in &self.rows {
            if r.o1 != readout(self.shifts[0], r.z_final) {
                return bad(format!(
                    "member {}: outcome {} disagrees with pointer {}",
                    r.id, r.o1, r.z_final
                ));
            }
            match (self.shifts.get(1), r.z2_final, r.o2) {
                (None, None, None) => {}
                (Some(&s), Some(z), Some(o)) if o == readout(s, z) => {}
                _ => {
                    return bad(format!(
                        "member {}: second pointer readout inconsistent",
                        r.id
                    ))
                }
            }
            undecided += (r.o1 == UNDECIDED) as usize;
        }
        if undecided != self.summary.undecided || self.summary.decided + undecided != self.n {
            return bad("summary counts disagree with rows".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and integrity-checks a record.
    pub fn from_json(s: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(s)?;
        r.validate()?;
        Ok(r)
    }
}

/// Outcome agreement between the two pointers of a repeated measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgreementReport {
    /// Members decided on both pointers.
    pub decided: usize,
    pub agreement: f64,
    /// `joint[o1][o2]` over outcome codes 0 (undecided), 1, 2.
    pub joint: [[usize; 3]; 3],
}

/// Branch-label changes of members between snapshots after separation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossingReport {
    pub snapshots: usize,
    pub members: usize,
    /// Members whose branch label changed at least once.
    pub crossed: usize,
    /// `crossed / members`; absent when separation failed.
    pub crossing_fraction: Option<f64>,
    /// Member observations that fell below the branch threshold.
    pub unlabeled: usize,
    pub separation_failure: Option<String>,
}

/// Folds snapshots into a [`CrossingReport`]. Branches are identified by the
/// sign of their centroid on the pointer axis: positive is detector 1.
#[derive(Debug, Clone)]
pub struct CrossingMonitor {
    pointer_axis: usize,
    expected: usize,
    last: Vec<Option<u8>>,
    crossed: Vec<bool>,
    snapshots: usize,
    unlabeled: usize,
    failure: Option<String>,
}

impl CrossingMonitor {
    pub fn new(members: usize, pointer_axis: usize, expected: usize) -> Self {
        Self {
            pointer_axis,
            expected,
            last: vec![None; members],
            crossed: vec![false; members],
            snapshots: 0,
            unlabeled: 0,
            failure: None,
        }
    }

    /// Detector side of every branch, or why the branches are not separated.
    fn sides(&self, dec: &BranchDecomposition) -> std::result::Result<Vec<u8>, String> {
        if dec.count() != self.expected {
            return Err(format!(
                "t = {}: {} components, expected {}",
                dec.time(),
                dec.count(),
                self.expected
            ));
        }
        let a = self.pointer_axis;
        let sides: Vec<u8> = dec
            .branches()
            .iter()
            .map(|b| if b.centroid[a] > 0.0 { 1 } else { 2 })
            .collect();
        if self.expected == 2 {
            if sides[0] == sides[1] {
                return Err(format!(
                    "t = {}: both branches on one detector side",
                    dec.time()
                ));
            }
            let (l0, h0) = dec.axis_extent(1, a).unwrap_or_default();
            let (l1, h1) = dec.axis_extent(2, a).unwrap_or_default();
            if l0 <= h1 && l1 <= h0 {
                return Err(format!(
                    "t = {}: branch supports overlap along the pointer axis",
                    dec.time()
                ));
            }
        }
        Ok(sides)
    }

    pub fn observe(
        &mut self,
        dec: &BranchDecomposition,
        positions: &[Configuration],
    ) -> Result<()> {
        if positions.len() != self.last.len() {
            return Err(Error::InvalidArgument(format!(
                "{} positions for {} monitored members",
                positions.len(),
                self.last.len()
            )));
        }
        if self.failure.is_some() {
            return Ok(());
        }
        let sides = match self.sides(dec) {
            Ok(s) => s,
            Err(m) => {
                self.failure = Some(m);
                return Ok(());
            }
        };
        self.snapshots += 1;
        for (i, c) in positions.iter().enumerate() {
            match dec.label_at(c.coords()) {
                None => self.unlabeled += 1,
                Some(l) => {
                    let side = sides[l as usize - 1];
                    if matches!(self.last[i], Some(prev) if prev != side) {
                        self.crossed[i] = true;
                    }
                    self.last[i] = Some(side);
                }
            }
        }
        Ok(())
    }

    pub fn report(&self) -> CrossingReport {
        let crossed = self.crossed.iter().filter(|&&c| c).count();
        let members = self.last.len();
        CrossingReport {
            snapshots: self.snapshots,
            members,
            crossed,
            crossing_fraction: self
                .failure
                .is_none()
                .then(|| crossed as f64 / members as f64),
            unlabeled: self.unlabeled,
            separation_failure: self.failure.clone(),
        }
    }
}

/// Runs a [`CrossingMonitor`] over a recorded timeline.
pub fn crossing_monitor(
    timeline: &[(BranchDecomposition, Vec<Configuration>)],
    pointer_axis: usize,
    expected: usize,
) -> Result<CrossingReport> {
    let members = timeline.first().map_or(0, |(_, p)| p.len());
    let mut m = CrossingMonitor::new(members, pointer_axis, expected);
    for (dec, pos) in timeline {
        m.observe(dec, pos)?;
    }
    Ok(m.report())
}

/// Field and member positions at one post-measurement sample time.
#[derive(Debug, Clone)]
pub struct MeasurementSnapshot {
    pub field: WaveField,
    pub positions: Vec<Configuration>,
    /// Per-member count of regularized drift evaluations so far.
    pub regularized_hits: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct MeasurementRun {
    pub record: MeasurementRecord,
    pub snapshots: Vec<MeasurementSnapshot>,
    pub final_field: WaveField,
    pub final_ensemble: Ensemble,
    pub branch_threshold: f64,
}

fn snap(t: f64, dt: f64) -> i64 {
    (t / dt).round() as i64
}

/// Evolves the scenario's initial state with an `n`-member ensemble drawn
/// from it and reads out every member at the final time.
pub fn run_measurement(
    scenario: &MeasurementScenario,
    params: &PhysicalParams,
    n: usize,
    seed: u64,
) -> Result<MeasurementRun> {
    let grid = scenario.validate(params)?;
    let field = scenario.initial_field(&grid)?;
    field.check_boundary()?;
    let propagator = scenario.propagator(&grid, params)?;
    let ensemble = sample_from_density(&field, n, seed)?;
    let initial = ensemble.positions();

    let dt = scenario.dt;
    let t_sep = scenario.separation_time();
    let mut steps: Vec<i64> = scenario.sample_times.iter().map(|&t| snap(t, dt)).collect();
    let mut t = t_sep;
    while t < scenario.t_final + 1e-12 {
        steps.push(snap(t, dt));
        t += scenario.monitor_interval;
    }
    steps.push(snap(scenario.t_final, dt));
    steps.sort_unstable();
    steps.dedup();
    let keep: Vec<i64> = scenario.sample_times.iter().map(|&t| snap(t, dt)).collect();

    let (c1, c2) = scenario.coefficients();
    let expected = (c1.norm_sqr() > 0.0) as usize + (c2.norm_sqr() > 0.0) as usize;
    let mut monitor = CrossingMonitor::new(n, 1, expected);
    let mut co = CoEvolution::new(&propagator, field, ensemble, dt, scenario.substeps)?;
    let mut snapshots = Vec::new();
    let mut last_dec = None;
    for &s in &steps {
        co.advance_to(s as f64 * dt)?;
        if co.max_boundary_density() >= BOUNDARY_DENSITY_LIMIT {
            return Err(Error::BoundaryViolation {
                density: co.max_boundary_density(),
                limit: BOUNDARY_DENSITY_LIMIT,
                time: co.time(),
            });
        }
        let positions = co.ensemble().positions();
        let dec = branch_decompose(co.field(), scenario.branch_threshold, None)?;
        monitor.observe(&dec, &positions)?;
        if keep.contains(&s) {
            snapshots.push(MeasurementSnapshot {
                field: co.field().clone(),
                positions,
                regularized_hits: co
                    .ensemble()
                    .members()
                    .iter()
                    .map(|m| m.regularized_hits)
                    .collect(),
            });
        }
        last_dec = Some(dec);
    }
    let dec = last_dec.expect("at least the final time is visited");
    let branch1_weight = dec
        .branches()
        .iter()
        .filter(|b| b.centroid[1] > 0.0)
        .map(|b| b.weight)
        .sum::<f64>()
        / dec.field_norm();

    let (final_field, final_ensemble) = co.into_parts();
    let shifts: Vec<f64> = scenario.pointers().iter().map(|p| p.shift).collect();
    let rows: Vec<RecordRow> = final_ensemble
        .members()
        .iter()
        .map(|m| {
            let x = m.config.coords();
            let x0 = initial[m.id as usize].coords()[0];
            let z2 = scenario.second_pointer.as_ref().map(|_| x[2]);
            RecordRow {
                id: m.id,
                x_initial: x0,
                x_final: x[0],
                z_final: x[1],
                z2_final: z2,
                o1: readout(shifts[0], x[1]),
                o2: z2.map(|z| readout(shifts[1], z)),
                support: scenario.initial_support(&grid, x0),
            }
        })
        .collect();
    let summary = summarize(&rows, monitor.report(), branch1_weight);
    let undecided_fraction = summary.undecided as f64 / n as f64;
    if undecided_fraction > MAX_UNDECIDED_FRACTION {
        return Err(Error::Scenario(format!(
            "{:.2}% of members undecided; pointer separation is misconfigured",
            100.0 * undecided_fraction
        )));
    }
    let record = MeasurementRecord {
        scenario_hash: scenario.hash(),
        alpha: params.alpha(),
        n,
        seed,
        shifts,
        rows,
        summary,
    };
    record.validate()?;
    Ok(MeasurementRun {
        record,
        snapshots,
        final_field,
        final_ensemble,
        branch_threshold: scenario.branch_threshold,
    })
}

fn summarize(rows: &[RecordRow], crossing: CrossingReport, branch1_weight: f64) -> RecordSummary {
    let decided: Vec<&RecordRow> = rows.iter().filter(|r| r.o1 != UNDECIDED).collect();
    let frac = |k: usize| {
        if decided.is_empty() {
            0.0
        } else {
            k as f64 / decided.len() as f64
        }
    };
    let ones = decided.iter().filter(|r| r.o1 == 1).count();
    let agree = decided.iter().filter(|r| r.o1 == r.support).count();
    let repeat = rows.first().and_then(|r| r.o2).map(|_| {
        let mut joint = [[0usize; 3]; 3];
        for r in rows {
            joint[r.o1 as usize][r.o2.unwrap_or(0) as usize] += 1;
        }
        let both = joint[1][1] + joint[1][2] + joint[2][1] + joint[2][2];
        AgreementReport {
            decided: both,
            agreement: if both == 0 {
                0.0
            } else {
                (joint[1][1] + joint[2][2]) as f64 / both as f64
            },
            joint,
        }
    });
    RecordSummary {
        decided: decided.len(),
        undecided: rows.len() - decided.len(),
        outcome1_frequency: frac(ones),
        branch1_weight,
        support_agreement: frac(agree),
        crossing,
        repeat,
    }
}

/// Runs a scenario with a second pointer and reports outcome agreement.
pub fn repeated_measurement(
    scenario: &MeasurementScenario,
    params: &PhysicalParams,
    n: usize,
    seed: u64,
) -> Result<AgreementReport> {
    if scenario.second_pointer.is_none() {
        return Err(Error::Scenario(
            "repeated measurement needs a second pointer".into(),
        ));
    }
    let run = run_measurement(scenario, params, n, seed)?;
    Ok(run.record.summary.repeat.expect("second pointer present"))
}

/// Conditioned-ensemble comparison at one sample time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubensembleEntry {
    pub time: f64,
    pub members: usize,
    /// Against the normalized branch density.
    pub l1_branch: f64,
    /// Against the full density.
    pub l1_full: f64,
    /// Sampling floor for `members` draws.
    pub floor: f64,
    /// `2 (1 - w)` for branch weight `w`: the L1 distance between the
    /// normalized branch density and the full density.
    pub analytic_gap: f64,
}

impl SubensembleEntry {
    pub fn branch_consistent(&self) -> bool {
        self.l1_branch <= 2.0 * self.floor
    }

    pub fn full_contrast_holds(&self) -> bool {
        self.l1_full >= self.analytic_gap - self.floor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubensembleReport {
    pub outcome: u8,
    pub provenance: Provenance,
    pub entries: Vec<SubensembleEntry>,
}

/// Compares the members with first-pointer outcome `outcome` against the
/// matching branch density and the full density at every kept snapshot.
/// The members were guided by the full field throughout.
pub fn subensemble_analysis(
    run: &MeasurementRun,
    outcome: u8,
    bins: &[usize],
    replicates: usize,
    seed: u64,
) -> Result<SubensembleReport> {
    if outcome != 1 && outcome != 2 {
        return Err(Error::InvalidArgument(format!(
            "outcome {outcome} is not 1 or 2"
        )));
    }
    let selected: Vec<usize> = run
        .record
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.o1 == outcome)
        .map(|(i, _)| i)
        .collect();
    if selected.is_empty() {
        return Err(Error::EmptySubEnsemble(outcome));
    }
    let mut entries = Vec::new();
    for s in &run.snapshots {
        let positions: Vec<Configuration> = selected.iter().map(|&i| s.positions[i]).collect();
        let dec = branch_decompose(&s.field, run.branch_threshold, None)?;
        let label = dec
            .branches()
            .iter()
            .find(|b| (b.centroid[1] > 0.0) == (outcome == 1))
            .map(|b| b.label)
            .ok_or(Error::EmptySubEnsemble(outcome))?;
        let branch = dec.branch_density(label)?;
        let full = crate::field::density_of(&s.field)?;
        let weight = dec.branches()[label as usize - 1].weight / dec.field_norm();
        let l1_branch = equivariance_check(&positions, &branch, bins)?.l1_distance;
        let l1_full = equivariance_check(&positions, &full, bins)?.l1_distance;
        let floor = sampling_floor(&branch, positions.len(), bins, seed, replicates)?;
        entries.push(SubensembleEntry {
            time: s.field.time(),
            members: positions.len(),
            l1_branch,
            l1_full,
            floor,
            analytic_gap: 2.0 * (1.0 - weight),
        });
    }
    Ok(SubensembleReport {
        outcome,
        provenance: Provenance::Conditioned {
            outcome,
            parent_seed: run.record.seed,
        },
        entries,
    })
}
