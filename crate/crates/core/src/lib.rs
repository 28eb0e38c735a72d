//! Simulation of hidden-configuration quantum dynamics: a Schrödinger wave
//! field on a periodic grid together with configurations guided by the
//! one-parameter family of drift/diffusion laws `dx = b dt + sqrt(alpha) dw`.

pub mod branches;
pub mod ensemble;
pub mod error;
pub mod field;
pub mod grid;
pub mod guidance;
mod interp;
pub mod io;
pub mod measurement;
pub mod params;
pub mod rng;
pub mod schrodinger;
pub mod spectral;

pub use branches::{branch_decompose, Branch, BranchDecomposition};
pub use ensemble::{
    equivariance_check, evolve_ensemble, sample_from_density, CoEvolution, Ensemble,
    EquivarianceReport,
};
pub use error::{Error, Result};
pub use field::{
    density_of, gaussian_packet, packet, polar_decompose, DensityField, PacketSpec, PolarFields,
    WaveField,
};
pub use grid::{build_grid, Grid};
pub use measurement::{
    crossing_monitor, repeated_measurement, run_measurement, subensemble_analysis,
    MeasurementRecord, MeasurementScenario,
};
pub use params::PhysicalParams;
pub use schrodinger::{
    energy_expectation, evolve, step, CouplingTerm, CouplingWindow, Potential, Propagator,
};

/// Version of this library, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
