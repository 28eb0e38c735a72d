//! Ensembles of guided configurations: sampling from `|psi|^2`, co-evolution
//! with the wave field, and statistical checks that the empirical
//! distribution keeps following `|psi|^2`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::field::{density_of, DensityField, WaveField};
use crate::grid::{Grid, MAX_DIMS};
use crate::guidance::{
    drift_from_values, Configuration, GuidanceField, StepContext, DEFAULT_NODE_THRESHOLD,
};
use crate::rng::{member_stream, sampling_stream, MemberRng};
use crate::schrodinger::{CouplingTerm, Propagator};
use crate::spectral::Spectral;

/// Rejection sampling aborts when fewer than this fraction of proposals is accepted.
pub const MIN_ACCEPTANCE: f64 = 1e-4;

/// How an ensemble was put together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    /// i.i.d. draws from the full density.
    FullDensity { seed: u64, time: f64 },
    /// Members of a parent ensemble selected by measurement outcome.
    Conditioned { outcome: u8, parent_seed: u64 },
    /// Positions supplied by the caller.
    Explicit,
}

#[derive(Debug, Clone)]
pub struct Member {
    /// Stream identifier; unique within an ensemble.
    pub id: u64,
    pub config: Configuration,
    rng: MemberRng,
    pub wraps: u32,
    pub regularized_hits: u32,
}

impl Member {
    pub fn new(id: u64, config: Configuration, seed: u64) -> Self {
        Self {
            id,
            config,
            rng: member_stream(seed, id),
            wraps: 0,
            regularized_hits: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    members: Vec<Member>,
    seed: u64,
    provenance: Provenance,
}

impl Ensemble {
    /// Ensemble at given positions with streams `(seed, 0..n)`.
    pub fn from_positions(
        configs: Vec<Configuration>,
        seed: u64,
        provenance: Provenance,
    ) -> Result<Self> {
        if configs.is_empty() {
            return Err(Error::InvalidArgument(
                "an ensemble needs at least one member".into(),
            ));
        }
        let members = configs
            .into_iter()
            .enumerate()
            .map(|(i, c)| Member::new(i as u64, c, seed))
            .collect();
        Ok(Self {
            members,
            seed,
            provenance,
        })
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut [Member] {
        &mut self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Stream identifiers of all members.
    pub fn seeds(&self) -> Vec<u64> {
        self.members.iter().map(|m| m.id).collect()
    }

    pub fn positions(&self) -> Vec<Configuration> {
        self.members.iter().map(|m| m.config).collect()
    }

    /// Members selected by `keep`, preserving their streams.
    pub fn select<F: Fn(&Member) -> bool>(&self, keep: F, provenance: Provenance) -> Result<Self> {
        let members: Vec<Member> = self.members.iter().filter(|m| keep(m)).cloned().collect();
        if members.is_empty() {
            return Err(Error::InvalidArgument("selection left no members".into()));
        }
        Ok(Self {
            members,
            seed: self.seed,
            provenance,
        })
    }

    pub fn reversed(mut self) -> Self {
        self.members.reverse();
        self
    }
}

/// Draws `count` i.i.d. positions from `|psi|^2`.
pub fn sample_from_density(field: &WaveField, count: usize, seed: u64) -> Result<Ensemble> {
    let rho = density_of(field)?;
    let positions = sample_density(&rho, count, seed)?;
    Ensemble::from_positions(
        positions,
        seed,
        Provenance::FullDensity {
            seed,
            time: field.time(),
        },
    )
}

/// Rejection sampling from the multilinear interpolant of `rho`, proposing
/// from the piecewise-constant envelope of per-cell corner maxima.
pub fn sample_density(rho: &DensityField, count: usize, seed: u64) -> Result<Vec<Configuration>> {
    sample_density_with(rho, count, &mut sampling_stream(seed))
}

pub(crate) fn sample_density_with<R: Rng>(
    rho: &DensityField,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Configuration>> {
    if count == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    let grid = rho.grid();
    let d = grid.dims();
    let envelope = rho.cell_maxima();
    let mut cumulative = Vec::with_capacity(envelope.len());
    let mut acc = 0.0;
    for &m in &envelope {
        acc += m;
        cumulative.push(acc);
    }
    if !(acc > 0.0 && acc.is_finite()) {
        return Err(Error::InvalidArgument(
            "density has no mass to sample".into(),
        ));
    }
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0u64;
    let mut x = [0.0; MAX_DIMS];
    while out.len() < count {
        attempts += 1;
        let u: f64 = rng.gen::<f64>() * acc;
        let cell = cumulative
            .partition_point(|&c| c <= u)
            .min(envelope.len() - 1);
        let idx = grid.unravel(cell);
        for k in 0..d {
            x[k] = grid.coord(k, idx[k]) + rng.gen::<f64>() * grid.spacing(k);
            x[k] = grid.wrap_coord(k, x[k]).0;
        }
        if rng.gen::<f64>() * envelope[cell] < rho.interpolate(&x[..d]) {
            out.push(Configuration::new(&x[..d]));
        }
        if attempts >= 10_000 {
            let rate = out.len() as f64 / attempts as f64;
            if rate < MIN_ACCEPTANCE {
                return Err(Error::Acceptance {
                    rate,
                    limit: MIN_ACCEPTANCE,
                });
            }
        }
    }
    Ok(out)
}

/// Field and ensemble advancing together: the field by the split-operator
/// propagator, every member by Euler–Maruyama against the two snapshots that
/// bracket its step.
pub struct CoEvolution<'a> {
    propagator: &'a Propagator,
    current: GuidanceField,
    ensemble: Ensemble,
    dt: f64,
    substeps: usize,
    node_threshold: f64,
    origin: f64,
    steps_taken: usize,
    max_boundary_density: f64,
}

impl<'a> CoEvolution<'a> {
    pub fn new(
        propagator: &'a Propagator,
        field: WaveField,
        ensemble: Ensemble,
        dt: f64,
        substeps: usize,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "time step must be > 0, got {dt}"
            )));
        }
        if substeps == 0 {
            return Err(Error::InvalidArgument("substeps must be >= 1".into()));
        }
        if field.grid() != propagator.grid() {
            return Err(Error::InvalidArgument(
                "field and propagator grids differ".into(),
            ));
        }
        if let Some(m) = ensemble
            .members
            .iter()
            .find(|m| m.config.dims() != field.grid().dims())
        {
            return Err(Error::InvalidArgument(format!(
                "member {} has the wrong dimension",
                m.id
            )));
        }
        let origin = field.time();
        let max_boundary_density = field.boundary_density();
        Ok(Self {
            current: GuidanceField::new(field, propagator.spectral()),
            propagator,
            ensemble,
            dt,
            substeps,
            node_threshold: DEFAULT_NODE_THRESHOLD,
            origin,
            steps_taken: 0,
            max_boundary_density,
        })
    }

    pub fn with_node_threshold(mut self, threshold: f64) -> Self {
        self.node_threshold = threshold;
        self
    }

    pub fn field(&self) -> &WaveField {
        self.current.field()
    }

    pub fn guidance_field(&self) -> &GuidanceField {
        &self.current
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    pub fn into_parts(self) -> (WaveField, Ensemble) {
        let (field, ensemble) = (self.current, self.ensemble);
        (field.field().clone(), ensemble)
    }

    pub fn time(&self) -> f64 {
        self.current.time()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Largest boundary density seen at any step so far.
    pub fn max_boundary_density(&self) -> f64 {
        self.max_boundary_density
    }

    /// Advances to the step nearest `t`. Earlier times are a no-op.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        let target = ((t - self.origin) / self.dt).round().max(0.0) as usize;
        while self.steps_taken < target {
            self.step()?;
        }
        Ok(())
    }

    pub fn step(&mut self) -> Result<()> {
        let mut next = self.propagator.step(self.current.field(), self.dt)?;
        self.steps_taken += 1;
        let t_next = self.origin + self.steps_taken as f64 * self.dt;
        next.set_time(t_next);
        self.max_boundary_density = self.max_boundary_density.max(next.boundary_density());
        let next = GuidanceField::new(next, self.propagator.spectral());
        let ctx = StepContext {
            start: &self.current,
            end: &next,
            couplings: self.propagator.couplings(),
            params: self.propagator.params(),
            node_threshold: self.node_threshold,
        };
        let t0 = self.current.time();
        let h = self.dt / self.substeps as f64;
        let substeps = self.substeps;
        self.ensemble.members.par_iter_mut().for_each(|m| {
            for s in 0..substeps {
                let (c, diag) = ctx.step(&m.config, t0 + s as f64 * h, h, &mut m.rng);
                m.config = c;
                m.wraps += diag.wrapped as u32;
                m.regularized_hits += diag.regularized as u32;
            }
        });
        self.current = next;
        Ok(())
    }
}

/// State of the field and the ensemble at one sample time.
#[derive(Debug, Clone)]
pub struct EnsembleSnapshot {
    pub field: WaveField,
    pub positions: Vec<Configuration>,
}

/// Co-evolves `ens` with `field` and records both at every sample time.
pub fn evolve_ensemble(
    ens: Ensemble,
    field: &WaveField,
    propagator: &Propagator,
    dt: f64,
    substeps: usize,
    sample_times: &[f64],
) -> Result<(Vec<EnsembleSnapshot>, Ensemble)> {
    let mut times = sample_times.to_vec();
    times.sort_by(f64::total_cmp);
    let mut co = CoEvolution::new(propagator, field.clone(), ens, dt, substeps)?;
    let mut out = Vec::with_capacity(times.len());
    for t in times {
        co.advance_to(t)?;
        out.push(EnsembleSnapshot {
            field: co.field().clone(),
            positions: co.ensemble().positions(),
        });
    }
    let (_, ens) = co.into_parts();
    Ok((out, ens))
}

/// Histogram comparison of an ensemble against a reference density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceReport {
    pub time: f64,
    /// `sum over bins |empirical - reference|`, in `[0, 2]`.
    pub l1_distance: f64,
    /// Marginal Kolmogorov–Smirnov statistic per axis.
    pub ks_statistic: Vec<f64>,
    pub member_count: usize,
    /// Bins per axis.
    pub bin_spec: Vec<usize>,
}

fn validate_bins(grid: &Grid, bins: &[usize]) -> Result<Vec<usize>> {
    let d = grid.dims();
    let bins = if bins.len() == 1 {
        vec![bins[0]; d]
    } else {
        bins.to_vec()
    };
    if bins.len() != d {
        return Err(Error::InvalidArgument(format!("need 1 or {d} bin counts")));
    }
    for (k, &b) in bins.iter().enumerate() {
        let n = grid.points()[k];
        if b == 0 || b > n || !n.is_multiple_of(b) {
            return Err(Error::InvalidArgument(format!(
                "{b} bins on axis {k} do not evenly divide the {n} grid cells"
            )));
        }
    }
    Ok(bins)
}

fn bin_of_cell(grid: &Grid, bins: &[usize], cell: &[usize; MAX_DIMS]) -> usize {
    let mut b = 0;
    for k in 0..grid.dims() {
        let per = grid.points()[k] / bins[k];
        b = b * bins[k] + cell[k] / per;
    }
    b
}

fn cell_of_point(grid: &Grid, x: &[f64]) -> [usize; MAX_DIMS] {
    let mut c = [0; MAX_DIMS];
    for k in 0..grid.dims() {
        let n = grid.points()[k] as i64;
        let i = ((x[k] - grid.lo(k)) / grid.spacing(k)).floor() as i64;
        c[k] = i.rem_euclid(n) as usize;
    }
    c
}

/// Reference probability of every bin.
pub fn bin_probabilities(rho: &DensityField, bins: &[usize]) -> Result<Vec<f64>> {
    let grid = rho.grid();
    let bins = validate_bins(grid, bins)?;
    let masses = rho.cell_masses();
    let total: f64 = masses.iter().sum();
    let mut p = vec![0.0; bins.iter().product()];
    for (cell, m) in masses.iter().enumerate() {
        p[bin_of_cell(grid, &bins, &grid.unravel(cell))] += m / total;
    }
    Ok(p)
}

/// Member count per bin.
pub fn histogram(grid: &Grid, positions: &[Configuration], bins: &[usize]) -> Result<Vec<usize>> {
    let bins = validate_bins(grid, bins)?;
    let mut h = vec![0usize; bins.iter().product()];
    for c in positions {
        h[bin_of_cell(grid, &bins, &cell_of_point(grid, c.coords()))] += 1;
    }
    Ok(h)
}

fn marginal_ks(
    rho: &DensityField,
    masses: &[f64],
    positions: &[Configuration],
    axis: usize,
) -> f64 {
    let grid = rho.grid();
    let n = grid.points()[axis];
    let total: f64 = masses.iter().sum();
    let mut marginal = vec![0.0; n];
    for (cell, m) in masses.iter().enumerate() {
        marginal[grid.unravel(cell)[axis]] += m / total;
    }
    let mut cdf = vec![0.0; n + 1];
    for i in 0..n {
        cdf[i + 1] = cdf[i] + marginal[i];
    }
    let mut xs: Vec<f64> = positions.iter().map(|c| c.coords()[axis]).collect();
    xs.sort_by(f64::total_cmp);
    let count = xs.len() as f64;
    let mut ks: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let s = (x - grid.lo(axis)) / grid.spacing(axis);
        let cell = (s.floor().max(0.0) as usize).min(n - 1);
        let f = cdf[cell] + marginal[cell] * (s - cell as f64).clamp(0.0, 1.0);
        ks = ks
            .max((i as f64 + 1.0) / count - f)
            .max(f - i as f64 / count);
    }
    ks
}

/// Compares member positions with `rho` by histogram L1 distance and
/// per-axis KS statistics.
pub fn equivariance_check(
    positions: &[Configuration],
    rho: &DensityField,
    bins: &[usize],
) -> Result<EquivarianceReport> {
    if positions.is_empty() {
        return Err(Error::InvalidArgument("no members to compare".into()));
    }
    let grid = rho.grid();
    let bins = validate_bins(grid, bins)?;
    let p = bin_probabilities(rho, &bins)?;
    let h = histogram(grid, positions, &bins)?;
    let n = positions.len() as f64;
    let l1 = p
        .iter()
        .zip(&h)
        .map(|(p, &c)| (c as f64 / n - p).abs())
        .sum();
    let masses = rho.cell_masses();
    let ks = (0..grid.dims())
        .map(|k| marginal_ks(rho, &masses, positions, k))
        .collect();
    Ok(EquivarianceReport {
        time: rho.time(),
        l1_distance: l1,
        ks_statistic: ks,
        member_count: positions.len(),
        bin_spec: bins,
    })
}

/// Mean L1 distance between `rho` and `replicates` fresh samples of size
/// `count` drawn from `rho` itself: the finite-sample floor of the metric.
pub fn sampling_floor(
    rho: &DensityField,
    count: usize,
    bins: &[usize],
    seed: u64,
    replicates: usize,
) -> Result<f64> {
    if replicates == 0 {
        return Err(Error::InvalidArgument("need at least one replicate".into()));
    }
    let l1: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = member_stream(seed ^ 0x00f1_00f1, r as u64);
            let pos = sample_density_with(rho, count, &mut rng)?;
            Ok(equivariance_check(&pos, rho, bins)?.l1_distance)
        })
        .collect::<Result<_>>()?;
    Ok(l1.iter().sum::<f64>() / replicates as f64)
}

/// Pearson chi-square goodness of fit of member positions against `rho`.
/// Bins expecting fewer than five members are pooled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

pub fn chi_square_test(
    positions: &[Configuration],
    rho: &DensityField,
    bins: &[usize],
) -> Result<ChiSquareReport> {
    let p = bin_probabilities(rho, bins)?;
    let h = histogram(rho.grid(), positions, bins)?;
    let n = positions.len() as f64;
    let mut stat = 0.0;
    let mut cells = 0usize;
    let (mut pool_e, mut pool_o) = (0.0, 0.0);
    for (p, &o) in p.iter().zip(&h) {
        let e = p * n;
        if e >= 5.0 {
            stat += (o as f64 - e).powi(2) / e;
            cells += 1;
        } else {
            pool_e += e;
            pool_o += o as f64;
        }
    }
    if pool_e > 0.0 {
        stat += (pool_o - pool_e).powi(2) / pool_e;
        cells += 1;
    }
    if cells < 2 {
        return Err(Error::InvalidArgument(
            "too few populated bins for a chi-square test".into(),
        ));
    }
    let dof = cells - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(ChiSquareReport {
        statistic: stat,
        degrees_of_freedom: dof,
        p_value: 1.0 - dist.cdf(stat),
    })
}

/// Residual of `d rho/dt + div j = 0` at the middle of three snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub time: f64,
    pub max_abs: f64,
    pub l2: f64,
    /// Largest `|d rho / dt|`, for scale.
    pub max_rate: f64,
}

/// Evaluates the continuity residual with a centered time difference of the
/// outer snapshots and a spectral divergence of the drift-built current
/// `j = (b + b*) rho / 2` at the middle one.
pub fn continuity_residual(
    snapshots: [&WaveField; 3],
    params: &crate::params::PhysicalParams,
    couplings: &[CouplingTerm],
    node_threshold: f64,
) -> Result<ContinuityReport> {
    let [prev, mid, next] = snapshots;
    let grid = mid.grid();
    if prev.grid() != grid || next.grid() != grid {
        return Err(Error::InvalidArgument(
            "snapshots live on different grids".into(),
        ));
    }
    let span = next.time() - prev.time();
    if !(span > 0.0) || !(mid.time() > prev.time() && mid.time() < next.time()) {
        return Err(Error::InvalidArgument(
            "snapshots must be strictly increasing in time".into(),
        ));
    }
    let d = grid.dims();
    let spectral = Spectral::new(grid);
    let gf = GuidanceField::new(mid.clone(), &spectral);
    let floor = node_threshold * gf.max_density();
    let mut j = vec![vec![0.0; grid.len()]; d];
    for (i, &psi) in mid.psi().iter().enumerate() {
        let mut grad = [num_complex::Complex64::default(); MAX_DIMS];
        for k in 0..d {
            grad[k] = gf.gradient()[k][i];
        }
        let x = grid.position(i);
        let extra =
            crate::guidance::coupling_velocity(couplings, grid, &x[..d], prev.time(), next.time());
        let s = drift_from_values(psi, &grad, d, params, &extra, floor);
        for k in 0..d {
            j[k][i] = s.j[k];
        }
    }
    let div = spectral.divergence(&j);
    let (r0, r2) = (density_of(prev)?, density_of(next)?);
    let mut out = ContinuityReport {
        time: mid.time(),
        max_abs: 0.0,
        l2: 0.0,
        max_rate: 0.0,
    };
    let mut sum_sq = 0.0;
    for i in 0..grid.len() {
        let rate = (r2.rho()[i] - r0.rho()[i]) / span;
        let res = rate + div[i];
        out.max_abs = out.max_abs.max(res.abs());
        out.max_rate = out.max_rate.max(rate.abs());
        sum_sq += res * res;
    }
    out.l2 = (sum_sq * grid.cell_volume()).sqrt();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::gaussian_packet;
    use crate::grid::build_grid;
    use crate::params::PhysicalParams;
    use crate::schrodinger::Potential;
    use num_complex::Complex64;

    fn grid1() -> Grid {
        build_grid(&[[-10.0, 10.0]], &[256]).unwrap()
    }

    #[test]
    fn sample_mean_matches_center() {
        let g = grid1();
        let f = gaussian_packet(&g, &[1.25], 1.0, &[0.0]).unwrap();
        let n = 100_000;
        let ens = sample_from_density(&f, n, 3).unwrap();
        let mean: f64 = ens
            .members()
            .iter()
            .map(|m| m.config.coords()[0])
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.25).abs() < 4.0 / (n as f64).sqrt());
        let mut ids = ens.seeds();
        ids.dedup();
        assert_eq!(ids.len(), n);
    }

    #[test]
    fn singleton_and_empty_requests() {
        let g = grid1();
        let f = gaussian_packet(&g, &[0.0], 1.0, &[0.0]).unwrap();
        assert_eq!(sample_from_density(&f, 1, 0).unwrap().len(), 1);
        assert!(sample_from_density(&f, 0, 0).is_err());
    }

    #[test]
    fn two_packet_fraction() {
        let g = grid1();
        let p1 = gaussian_packet(&g, &[-5.0], 0.6, &[0.0]).unwrap();
        let p2 = gaussian_packet(&g, &[5.0], 0.6, &[0.0]).unwrap();
        let f = WaveField::linear_combination(&[
            (Complex64::new(0.6, 0.0), &p1),
            (Complex64::new(0.0, 0.8), &p2),
        ])
        .unwrap();
        let n = 10_000;
        let ens = sample_from_density(&f, n, 11).unwrap();
        let frac = ens
            .members()
            .iter()
            .filter(|m| m.config.coords()[0] < 0.0)
            .count() as f64
            / n as f64;
        assert!((frac - 0.36).abs() < 3.0 * (0.36f64 * 0.64 / n as f64).sqrt());
    }

    #[test]
    fn equivariance_metric_extremes() {
        let g = grid1();
        let f = gaussian_packet(&g, &[0.0], 1.0, &[0.0]).unwrap();
        let rho = density_of(&f).unwrap();
        let fresh = sample_density(&rho, 10_000, 5).unwrap();
        let floor = sampling_floor(&rho, 10_000, &[64], 9, 16).unwrap();
        let rep = equivariance_check(&fresh, &rho, &[64]).unwrap();
        assert!(
            rep.l1_distance <= 2.0 * floor,
            "{} vs floor {floor}",
            rep.l1_distance
        );
        assert!(rep.ks_statistic[0] < 0.03);

        let stuck = vec![Configuration::new(&[3.0]); 1000];
        let rep = equivariance_check(&stuck, &rho, &[64]).unwrap();
        assert!(rep.l1_distance > 1.9);
        assert!(rep.ks_statistic[0] > 0.9);
        assert!(equivariance_check(&fresh, &rho, &[512]).is_err());
        assert!(equivariance_check(&fresh, &rho, &[48]).is_err());
    }

    #[test]
    fn chi_square_accepts_exact_sampler() {
        let g = build_grid(&[[-8.0, 8.0], [-8.0, 8.0]], &[64, 64]).unwrap();
        let f = gaussian_packet(&g, &[0.5, -1.0], 1.2, &[0.3, 0.0]).unwrap();
        let rho = density_of(&f).unwrap();
        let pos = sample_density(&rho, 100_000, 21).unwrap();
        let chi = chi_square_test(&pos, &rho, &[16, 16]).unwrap();
        assert!(chi.p_value > 1e-3, "{chi:?}");
    }

    #[test]
    fn continuity_of_stationary_state() {
        let g = grid1();
        let p = PhysicalParams::natural(1, 1.0).unwrap();
        let v = Potential::harmonic(&g, &p, 1.0, &[0.0]).unwrap();
        let f0 = WaveField::from_fn(&g, 0.0, |x| Complex64::new((-x[0] * x[0] / 2.0).exp(), 0.0))
            .normalized()
            .unwrap();
        let prop = Propagator::new(&g, v, vec![], &p).unwrap();
        let snaps = prop
            .evolve(&f0, 0.002, 0.001, &[0.0, 0.001, 0.002])
            .unwrap();
        let r = continuity_residual(
            [&snaps[0], &snaps[1], &snaps[2]],
            &p,
            &[],
            DEFAULT_NODE_THRESHOLD,
        )
        .unwrap();
        assert!(r.max_abs <= 1e-8, "{r:?}");
    }

    #[test]
    fn permutation_of_members_does_not_change_results() {
        let g = grid1();
        let p = PhysicalParams::natural(1, 1.0).unwrap();
        let f = gaussian_packet(&g, &[0.0], 1.0, &[0.5]).unwrap();
        let prop = Propagator::new(&g, Potential::zero(&g), vec![], &p).unwrap();
        let ens = sample_from_density(&f, 200, 4).unwrap();
        let (_, a) = evolve_ensemble(ens.clone(), &f, &prop, 0.01, 2, &[0.3]).unwrap();
        let (_, b) = evolve_ensemble(ens.reversed(), &f, &prop, 0.01, 2, &[0.3]).unwrap();
        let mut bm: Vec<_> = b.members().to_vec();
        bm.sort_by_key(|m| m.id);
        for (x, y) in a.members().iter().zip(&bm) {
            assert_eq!(x.id, y.id);
            assert_eq!(
                x.config.coords()[0].to_bits(),
                y.config.coords()[0].to_bits()
            );
        }
    }

    #[test]
    fn empty_horizon_leaves_ensemble_unchanged() {
        let g = grid1();
        let p = PhysicalParams::natural(1, 1.0).unwrap();
        let f = gaussian_packet(&g, &[0.0], 1.0, &[0.5]).unwrap();
        let prop = Propagator::new(&g, Potential::zero(&g), vec![], &p).unwrap();
        let ens = sample_from_density(&f, 50, 4).unwrap();
        let (snaps, after) = evolve_ensemble(ens.clone(), &f, &prop, 0.01, 1, &[]).unwrap();
        assert!(snaps.is_empty());
        assert_eq!(after.positions(), ens.positions());
    }
}
