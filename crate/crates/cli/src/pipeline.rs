//! Scenario execution: evolve, co-evolve an ensemble, write reports and the
//! manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hcsim_core::ensemble::{
    continuity_residual, equivariance_check, sampling_floor, ContinuityReport,
};
use hcsim_core::guidance::DEFAULT_NODE_THRESHOLD;
use hcsim_core::io::{encode_hcf1, write_field_csv, TrajectoryWriter};
use hcsim_core::measurement::{run_measurement, subensemble_analysis, MeasurementRun};
use hcsim_core::{
    branch_decompose, density_of, packet, sample_from_density, CoEvolution, Ensemble, Grid,
    Potential, Propagator, WaveField,
};
use num_complex::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Format, Resolved, ScenarioConfig, TermSpec};

/// Environment variable overriding the output root directory.
pub const OUTPUT_ROOT_ENV: &str = "HCSIM_OUTPUT_ROOT";

const DEFAULT_OUTPUT_ROOT: &str = "out";

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

/// Normalized superposition of packets.
pub fn superposition(grid: &Grid, terms: &[TermSpec]) -> hcsim_core::Result<WaveField> {
    let packets = terms
        .iter()
        .map(|t| packet(grid, &t.packet()))
        .collect::<hcsim_core::Result<Vec<_>>>()?;
    let pairs: Vec<(Complex64, &WaveField)> = terms
        .iter()
        .zip(&packets)
        .map(|(t, p)| (Complex64::new(t.coefficient[0], t.coefficient[1]), p))
        .collect();
    WaveField::linear_combination(&pairs)?.normalized()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivarianceEntry {
    pub time: f64,
    pub l1: f64,
    pub floor: f64,
    pub ks: Vec<f64>,
    pub pass: bool,
}

/// Equivariance of an ensemble co-evolved with `field` over `times`.
pub struct SeriesSpec<'a> {
    pub propagator: &'a Propagator,
    pub members: usize,
    pub seed: u64,
    pub dt: f64,
    pub substeps: usize,
    pub times: &'a [f64],
    pub bins: &'a [usize],
    pub replicates: usize,
}

/// Runs the series, calling `observe` at every sample time.
pub fn equivariance_series<F>(
    field: &WaveField,
    spec: &SeriesSpec,
    mut observe: F,
) -> hcsim_core::Result<Vec<EquivarianceEntry>>
where
    F: FnMut(&WaveField, &Ensemble) -> hcsim_core::Result<()>,
{
    let ensemble = sample_from_density(field, spec.members, spec.seed)?;
    let mut co = CoEvolution::new(
        spec.propagator,
        field.clone(),
        ensemble,
        spec.dt,
        spec.substeps,
    )?;
    let mut out = Vec::with_capacity(spec.times.len());
    for (i, &t) in spec.times.iter().enumerate() {
        co.advance_to(t)?;
        co.field().check_boundary()?;
        let rho = density_of(co.field())?;
        let positions = co.ensemble().positions();
        let report = equivariance_check(&positions, &rho, spec.bins)?;
        let floor_seed = spec.seed.wrapping_mul(0x9e37_79b9).wrapping_add(i as u64);
        let floor = sampling_floor(&rho, spec.members, spec.bins, floor_seed, spec.replicates)?;
        observe(co.field(), co.ensemble())?;
        out.push(EquivarianceEntry {
            time: co.time(),
            l1: report.l1_distance,
            floor,
            ks: report.ks_statistic,
            pass: report.l1_distance <= 2.0 * floor,
        });
    }
    Ok(out)
}

/// Continuity residual around `field` from one step back and one forward.
pub fn continuity_around(
    propagator: &Propagator,
    field: &WaveField,
    dt: f64,
) -> hcsim_core::Result<ContinuityReport> {
    let prev = propagator.step_signed(field, -dt)?;
    let next = propagator.step(field, dt)?;
    continuity_residual(
        [&prev, field, &next],
        propagator.params(),
        propagator.couplings(),
        DEFAULT_NODE_THRESHOLD,
    )
}

#[derive(Debug, Serialize)]
struct WaveReport<'a> {
    scenario: String,
    alpha: f64,
    members: usize,
    seed: u64,
    bins: &'a [usize],
    times: Vec<f64>,
    equivariance: Vec<EquivarianceEntry>,
    continuity: Vec<ContinuityReport>,
    max_regularized_hits: u32,
    all_pass: bool,
}

#[derive(Debug, Serialize)]
struct FileEntry {
    sha256: String,
    bytes: usize,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    kind: String,
    seed: u64,
    config_sha256: String,
    config: String,
    files: BTreeMap<String, FileEntry>,
}

/// Collects artifacts in memory; nothing is written until [`Artifacts::commit`].
#[derive(Default)]
struct Artifacts {
    files: BTreeMap<String, Vec<u8>>,
}

impl Artifacts {
    fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.insert(name.into(), bytes);
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    fn commit(self, dir: &Path, config: &ScenarioConfig, text: &str) -> Result<Manifest> {
        let mut files = BTreeMap::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)
                    .with_context(|| format!("creating {}", parent.display()))?;
            }
            fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
            files.insert(
                name.clone(),
                FileEntry {
                    sha256: sha256_hex(bytes),
                    bytes: bytes.len(),
                },
            );
        }
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            core_version: hcsim_core::VERSION,
            kind: serde_json::to_value(config.kind)?
                .as_str()
                .unwrap_or_default()
                .to_string(),
            seed: config.seed,
            config_sha256: sha256_hex(text.as_bytes()),
            config: text.to_string(),
            files,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        fs::write(dir.join("manifest.json"), bytes)?;
        Ok(manifest)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Outcome of a `run`.
#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
    /// Whether every statistical check in the reports passed.
    pub checks_pass: bool,
}

/// Executes a resolved configuration and writes its artifacts below `root`.
pub fn run(
    config: &ScenarioConfig,
    text: &str,
    resolved: &Resolved,
    root: &Path,
) -> Result<RunOutcome> {
    let dir = root.join(&config.output.dir);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut art = Artifacts::default();
    let checks_pass = match resolved {
        Resolved::Wave { .. } => run_wave(config, resolved, &mut art)?,
        Resolved::Measurement { scenario, params } => {
            let run = run_measurement(scenario, params, config.run.members, config.seed)?;
            write_measurement(config, &run, &mut art)?
        }
    };
    let manifest = art.commit(&dir, config, text)?;
    Ok(RunOutcome {
        dir,
        manifest,
        checks_pass,
    })
}

fn wants(config: &ScenarioConfig, f: Format) -> bool {
    config.output.formats.contains(&f)
}

fn run_wave(config: &ScenarioConfig, resolved: &Resolved, art: &mut Artifacts) -> Result<bool> {
    let Resolved::Wave {
        grid,
        params,
        terms,
        potential,
        dt,
        snapshot_times,
        ..
    } = resolved
    else {
        unreachable!("wave configuration expected")
    };
    let field = superposition(grid, terms)?;
    let potential = match potential {
        Some(p) => Potential::harmonic(grid, params, p.omega, &p.center)?,
        None => Potential::zero(grid),
    };
    let propagator = Propagator::new(grid, potential, vec![], params)?;
    let spec = SeriesSpec {
        propagator: &propagator,
        members: config.run.members,
        seed: config.seed,
        dt: *dt,
        substeps: config.run.substeps,
        times: snapshot_times,
        bins: &config.report.bins,
        replicates: config.report.floor_replicates,
    };
    let mut traj = wants(config, Format::Trajectories)
        .then(|| TrajectoryWriter::new(Vec::new(), grid.dims()))
        .transpose()?;
    let mut continuity = Vec::new();
    let mut max_hits = 0;
    let mut index = 0;
    let series = equivariance_series(&field, &spec, |f, ens| {
        if f.time() > 0.0 {
            continuity.push(continuity_around(&propagator, f, *dt)?);
        }
        if let Some(tw) = traj.as_mut() {
            tw.write_snapshot(f.time(), ens, None)?;
        }
        max_hits = ens
            .members()
            .iter()
            .map(|m| m.regularized_hits)
            .max()
            .unwrap_or(0);
        if wants(config, Format::Hcf1) {
            art.add(
                format!("fields/snapshot_{index:03}.hcf1"),
                encode_hcf1(f, params.alpha()),
            );
        }
        if wants(config, Format::FieldCsv) {
            let mut buf = Vec::new();
            write_field_csv(&mut buf, f)?;
            art.add(format!("fields/snapshot_{index:03}.csv"), buf);
        }
        index += 1;
        Ok(())
    })?;
    if let Some(tw) = traj {
        art.add("trajectories.csv", tw.finish()?);
    }
    let all_pass = series.iter().all(|e| e.pass);
    let report = WaveReport {
        scenario: config.output.dir.clone(),
        alpha: params.alpha(),
        members: config.run.members,
        seed: config.seed,
        bins: &config.report.bins,
        times: series.iter().map(|e| e.time).collect(),
        equivariance: series,
        continuity,
        max_regularized_hits: max_hits,
        all_pass,
    };
    art.json("report.json", &report)?;
    Ok(all_pass)
}

fn write_measurement(
    config: &ScenarioConfig,
    run: &MeasurementRun,
    art: &mut Artifacts,
) -> Result<bool> {
    art.json("record.json", &run.record)?;
    let dims = run.final_field.grid().dims();
    let mut traj = TrajectoryWriter::new(Vec::new(), dims)?;
    for (i, s) in run.snapshots.iter().enumerate() {
        let dec = branch_decompose(&s.field, run.branch_threshold, None)?;
        for (id, (c, hits)) in s.positions.iter().zip(&s.regularized_hits).enumerate() {
            traj.write_row(s.field.time(), id as u64, c, Some(&dec), *hits)?;
        }
        if wants(config, Format::Hcf1) {
            art.add(
                format!("fields/snapshot_{i:03}.hcf1"),
                encode_hcf1(&s.field, run.record.alpha),
            );
        }
        if wants(config, Format::FieldCsv) {
            let mut buf = Vec::new();
            write_field_csv(&mut buf, &s.field)?;
            art.add(format!("fields/snapshot_{i:03}.csv"), buf);
        }
    }
    if wants(config, Format::Trajectories) {
        art.add("trajectories.csv", traj.finish()?);
    }
    let mut pass = run.record.summary.crossing.separation_failure.is_none();
    if run.record.rows.iter().any(|r| r.o1 == 1) {
        let sub = subensemble_analysis(
            run,
            1,
            &config.report.bins,
            config.report.floor_replicates,
            config.seed,
        )?;
        pass &= sub
            .entries
            .iter()
            .all(|e| e.branch_consistent() && e.full_contrast_holds());
        art.json("subensemble.json", &sub)?;
    }
    Ok(pass)
}

/// Loads, resolves and runs a configuration file.
pub fn run_file(path: &Path, root: &Path) -> std::result::Result<RunOutcome, RunError> {
    let (config, text) = ScenarioConfig::load(path).map_err(RunError::Config)?;
    let resolved = config.resolve().map_err(RunError::Config)?;
    run(&config, &text, &resolved, root).map_err(RunError::Runtime)
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(crate::config::ConfigError),
    #[error(transparent)]
    Runtime(anyhow::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Runtime(_) => 1,
        }
    }
}
