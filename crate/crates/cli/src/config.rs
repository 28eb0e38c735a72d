//! Scenario configuration files (TOML). Unknown keys are rejected everywhere.

use std::path::Path;

use hcsim_core::measurement::MeasurementScenario;
use hcsim_core::{build_grid, Grid, PacketSpec, PhysicalParams};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    FreePacket,
    Harmonic,
    TwoPacketMeasurement,
    RepeatedMeasurement,
    Custom,
}

impl ScenarioKind {
    pub fn is_measurement(self) -> bool {
        matches!(self, Self::TwoPacketMeasurement | Self::RepeatedMeasurement)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub extents: Vec<[f64; 2]>,
    pub points: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSpec {
    #[serde(default = "unit")]
    pub hbar: f64,
    /// Per-axis masses; defaults to 1 on every axis (measurement kinds: 1
    /// for the particle, 20 for each pointer).
    #[serde(default)]
    pub masses: Option<Vec<f64>>,
    pub alpha: f64,
}

fn unit() -> f64 {
    1.0
}

/// Harmonic confinement `sum m omega^2 (x - c)^2 / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub omega: f64,
    pub center: Vec<f64>,
}

/// One term of a custom superposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    /// `(re, im)`.
    pub coefficient: [f64; 2],
    pub center: Vec<f64>,
    pub sigma: Vec<f64>,
    #[serde(default)]
    pub wavevector: Vec<f64>,
}

impl TermSpec {
    pub fn packet(&self) -> PacketSpec {
        PacketSpec {
            center: self.center.clone(),
            sigma: self.sigma.clone(),
            wavevector: self.wavevector.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub members: usize,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub t_final: Option<f64>,
    #[serde(default)]
    pub snapshot_times: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub substeps: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ReportSpec {
    /// Histogram bins per axis (one value applies to all axes).
    #[serde(default = "default_bins")]
    pub bins: Vec<usize>,
    /// Resamples used to calibrate the sampling floor.
    #[serde(default = "default_replicates")]
    pub floor_replicates: usize,
}

fn default_bins() -> Vec<usize> {
    vec![64]
}

fn default_replicates() -> usize {
    20
}

impl Default for ReportSpec {
    fn default() -> Self {
        Self {
            bins: default_bins(),
            floor_replicates: default_replicates(),
        }
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, JsonSchema,
)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    /// JSON reports (always written).
    Json,
    /// `HCF1` field snapshots.
    Hcf1,
    /// Field snapshots as CSV.
    FieldCsv,
    /// Member trajectories as CSV.
    Trajectories,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory name below the output root.
    pub dir: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Hcf1, Format::Trajectories]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub seed: u64,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    pub physics: PhysicsSpec,
    /// Initial packet for `free_packet` and `harmonic`.
    #[serde(default)]
    pub packet: Option<PacketSpec>,
    /// Superposition for `custom`.
    #[serde(default)]
    pub terms: Option<Vec<TermSpec>>,
    #[serde(default)]
    pub potential: Option<PotentialSpec>,
    /// Measurement setup; the built-in default is used when absent.
    #[serde(default)]
    pub measurement: Option<MeasurementScenario>,
    pub run: RunSpec,
    #[serde(default)]
    pub report: ReportSpec,
    pub output: OutputSpec,
}

/// A checked configuration with everything derived that the pipeline needs.
#[derive(Debug, Clone)]
pub enum Resolved {
    Wave {
        grid: Grid,
        params: PhysicalParams,
        terms: Vec<TermSpec>,
        potential: Option<PotentialSpec>,
        dt: f64,
        t_final: f64,
        snapshot_times: Vec<f64>,
    },
    Measurement {
        scenario: Box<MeasurementScenario>,
        params: PhysicalParams,
    },
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<(Self, String), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Ok((Self::from_toml(&text)?, text))
    }

    /// Cross-field checks that the schema alone cannot express.
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.run.members == 0 {
            return invalid("run.members must be >= 1".into());
        }
        if self.run.substeps == 0 {
            return invalid("run.substeps must be >= 1".into());
        }
        if self.output.dir.is_empty()
            || Path::new(&self.output.dir).is_absolute()
            || self.output.dir.contains("..")
        {
            return invalid("output.dir must be a relative path without '..'".into());
        }
        let set = |name: &str, present: bool, wanted: bool| -> Result<(), ConfigError> {
            match (present, wanted) {
                (true, false) => Err(ConfigError::Invalid(format!(
                    "`{name}` is not used by kind {:?}",
                    self.kind
                ))),
                (false, true) => Err(ConfigError::Invalid(format!(
                    "kind {:?} requires `{name}`",
                    self.kind
                ))),
                _ => Ok(()),
            }
        };
        let measurement = self.kind.is_measurement();
        set("grid", self.grid.is_some(), !measurement)?;
        set(
            "packet",
            self.packet.is_some(),
            matches!(self.kind, ScenarioKind::FreePacket | ScenarioKind::Harmonic),
        )?;
        set(
            "terms",
            self.terms.is_some(),
            self.kind == ScenarioKind::Custom,
        )?;
        if self.measurement.is_some() && !measurement {
            return invalid(format!("`measurement` is not used by kind {:?}", self.kind));
        }
        if self.potential.is_some()
            && !matches!(self.kind, ScenarioKind::Harmonic | ScenarioKind::Custom)
        {
            return invalid(format!("`potential` is not used by kind {:?}", self.kind));
        }
        if self.kind == ScenarioKind::Harmonic && self.potential.is_none() {
            return invalid("kind Harmonic requires `potential`".into());
        }
        for (name, present) in [
            ("run.dt", self.run.dt.is_some()),
            ("run.t_final", self.run.t_final.is_some()),
            ("run.snapshot_times", self.run.snapshot_times.is_some()),
        ] {
            set(name, present, !measurement)?;
        }

        if measurement {
            let scenario = self.measurement.clone().unwrap_or_else(|| match self.kind {
                ScenarioKind::RepeatedMeasurement => MeasurementScenario::repeated(),
                _ => MeasurementScenario::two_packet(),
            });
            if (self.kind == ScenarioKind::RepeatedMeasurement) != scenario.second_pointer.is_some()
            {
                return invalid(
                    "repeated_measurement needs measurement.second_pointer and only it may set one"
                        .into(),
                );
            }
            let params = match &self.physics.masses {
                Some(m) => PhysicalParams::new(self.physics.hbar, m.clone(), self.physics.alpha),
                None => scenario.default_params(self.physics.alpha).and_then(|p| {
                    PhysicalParams::new(self.physics.hbar, p.masses().to_vec(), p.alpha())
                }),
            }
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            scenario
                .validate(&params)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            return Ok(Resolved::Measurement {
                scenario: Box::new(scenario),
                params,
            });
        }

        let g = self.grid.as_ref().expect("checked above");
        let grid =
            build_grid(&g.extents, &g.points).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let masses = self
            .physics
            .masses
            .clone()
            .unwrap_or_else(|| vec![1.0; grid.dims()]);
        let params = PhysicalParams::new(self.physics.hbar, masses, self.physics.alpha)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if params.dims() != grid.dims() {
            return invalid(format!(
                "{} masses for a {}-dimensional grid",
                params.dims(),
                grid.dims()
            ));
        }
        let terms = match (&self.packet, &self.terms) {
            (Some(p), None) => vec![TermSpec {
                coefficient: [1.0, 0.0],
                center: p.center.clone(),
                sigma: p.sigma.clone(),
                wavevector: p.wavevector.clone(),
            }],
            (None, Some(t)) if !t.is_empty() => t.clone(),
            _ => return invalid("need a packet or a non-empty list of terms".into()),
        };
        if let Some(p) = &self.potential {
            if p.center.len() != grid.dims() || !(p.omega > 0.0) {
                return invalid("potential needs omega > 0 and one center per axis".into());
            }
        }
        let dt = self.run.dt.expect("checked above");
        let t_final = self.run.t_final.expect("checked above");
        let mut snapshot_times = self.run.snapshot_times.clone().expect("checked above");
        if !(dt > 0.0 && t_final > 0.0) {
            return invalid("run.dt and run.t_final must be > 0".into());
        }
        if snapshot_times
            .iter()
            .any(|&t| !(0.0..=t_final).contains(&t))
        {
            return invalid(format!("snapshot times must lie in [0, {t_final}]"));
        }
        snapshot_times.sort_by(f64::total_cmp);
        snapshot_times.dedup();
        if self.report.floor_replicates == 0 {
            return invalid("report.floor_replicates must be >= 1".into());
        }
        Ok(Resolved::Wave {
            grid,
            params,
            terms,
            potential: self.potential.clone(),
            dt,
            t_final,
            snapshot_times,
        })
    }
}

/// JSON schema of the configuration format.
pub fn schema() -> schemars::schema::RootSchema {
    schemars::schema_for!(ScenarioConfig)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FREE: &str = r#"
kind = "free_packet"
seed = 1
[grid]
extents = [[-10.0, 10.0]]
points = [256]
[physics]
alpha = 0.5
[packet]
center = [0.0]
sigma = [1.0]
wavevector = [0.5]
[run]
members = 100
dt = 0.01
t_final = 1.0
snapshot_times = [0.0, 1.0]
[output]
dir = "free"
"#;

    #[test]
    fn parses_and_resolves() {
        let c = ScenarioConfig::from_toml(FREE).unwrap();
        assert!(matches!(c.resolve().unwrap(), Resolved::Wave { .. }));
        assert_eq!(c.report.bins, vec![64]);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = FREE.replace("alpha = 0.5", "alpha = 0.5\nbeta = 1.0");
        let err = ScenarioConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("beta"), "{err}");
    }

    #[test]
    fn kind_specific_sections() {
        let text = FREE.replace("kind = \"free_packet\"", "kind = \"harmonic\"");
        assert!(ScenarioConfig::from_toml(&text).unwrap().resolve().is_err());
        let text = format!("{FREE}[potential]\nomega = 1.0\ncenter = [0.0]\n")
            .replace("kind = \"free_packet\"", "kind = \"harmonic\"");
        assert!(ScenarioConfig::from_toml(&text).unwrap().resolve().is_ok());
    }

    #[test]
    fn measurement_defaults() {
        let text = r#"
kind = "two_packet_measurement"
seed = 7
[physics]
alpha = 0.0
[run]
members = 10
[output]
dir = "m"
"#;
        let c = ScenarioConfig::from_toml(text).unwrap();
        match c.resolve().unwrap() {
            Resolved::Measurement { scenario, params } => {
                assert_eq!(*scenario, MeasurementScenario::two_packet());
                assert_eq!(params.masses(), &[1.0, 20.0]);
            }
            _ => panic!("expected a measurement"),
        }
    }

    #[test]
    fn schema_lists_kinds() {
        let s = serde_json::to_string(&schema()).unwrap();
        assert!(s.contains("two_packet_measurement"));
    }
}
