use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical constants of a run: Planck's constant, one mass per axis, and the
/// diffusion parameter `alpha` selecting the member of the theory family
/// (0 is the deterministic guidance law, 1 the Nelson diffusion).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    hbar: f64,
    masses: Vec<f64>,
    alpha: f64,
}

impl PhysicalParams {
    pub fn new(hbar: f64, masses: Vec<f64>, alpha: f64) -> Result<Self> {
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "hbar must be > 0, got {hbar}"
            )));
        }
        if masses.is_empty() || masses.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "masses must be positive and finite, got {masses:?}"
            )));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be >= 0, got {alpha}"
            )));
        }
        Ok(Self {
            hbar,
            masses,
            alpha,
        })
    }

    /// Natural units (hbar = 1, unit masses) on `dims` axes.
    pub fn natural(dims: usize, alpha: f64) -> Result<Self> {
        Self::new(1.0, vec![1.0; dims], alpha)
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, axis: usize) -> f64 {
        self.masses[axis]
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dims(&self) -> usize {
        self.masses.len()
    }

    /// Same constants with a different `alpha`.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(self.hbar, self.masses.clone(), alpha)
    }

    /// Diffusion constant `alpha * hbar / m` of one axis.
    pub fn nu(&self, axis: usize) -> f64 {
        self.alpha * self.hbar / self.masses[axis]
    }

    pub(crate) fn check_dims(&self, dims: usize) -> Result<()> {
        if self.masses.len() != dims {
            return Err(Error::InvalidArgument(format!(
                "{} masses for a {dims}-dimensional grid",
                self.masses.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nu_follows_alpha_hbar_over_mass() {
        let p = PhysicalParams::new(0.5, vec![1.0, 4.0], 2.0).unwrap();
        assert_eq!(p.nu(0), 1.0);
        assert_eq!(p.nu(1), 0.25);
        assert_eq!(p.with_alpha(0.0).unwrap().nu(1), 0.0);
    }

    #[test]
    fn rejects_unphysical() {
        assert!(PhysicalParams::new(0.0, vec![1.0], 1.0).is_err());
        assert!(PhysicalParams::new(1.0, vec![-1.0], 1.0).is_err());
        assert!(PhysicalParams::new(1.0, vec![], 1.0).is_err());
        assert!(PhysicalParams::new(1.0, vec![1.0], -0.1).is_err());
        assert!(PhysicalParams::new(1.0, vec![1.0], f64::NAN).is_err());
    }
}
