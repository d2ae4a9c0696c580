//! Model parameters: anisotropic Heisenberg couplings with uniform local decay.
//!
//! The Hamiltonian is `H = sum_<ij> (Jx sx_i sx_j + Jy sy_i sy_j + Jz sz_i sz_j)`
//! over nearest-neighbor bonds, and every site decays through `sqrt(gamma) s^-`.
//! Rates are quoted in units of `gamma`, so `gamma = 1` unless overridden.

use crate::lattice::{Axis, Boundary, LatticeSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub jx: f64,
    pub jy: f64,
    pub jz: f64,
    /// Local decay rate, the unit of time. Leave at 1 unless comparing scales.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_gamma() -> f64 {
    1.0
}

impl ModelParams {
    pub fn new(jx: f64, jy: f64, jz: f64) -> Self {
        ModelParams {
            jx,
            jy,
            jz,
            gamma: 1.0,
        }
    }

    #[inline]
    pub fn coupling(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.jx,
            Axis::Y => self.jy,
            Axis::Z => self.jz,
        }
    }

    pub fn with_jy(&self, jy: f64) -> Self {
        ModelParams { jy, ..*self }
    }
}

/// Full problem description: geometry plus couplings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub lattice: LatticeSpec,
    pub model: ModelParams,
}

impl Problem {
    pub fn new(lattice: LatticeSpec, model: ModelParams) -> Self {
        Problem { lattice, model }
    }
}

/// On-disk configuration. Every field has a default so partial files work;
/// command-line flags override whatever the file says.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    pub lx: usize,
    pub ly: usize,
    pub boundary: Boundary,
    pub jx: f64,
    pub jy: f64,
    pub jz: f64,
    pub gamma: f64,
    /// Detection efficiency in [0, 1].
    pub eta: f64,
}

impl Default for FileConfig {
    fn default() -> Self {
        FileConfig {
            lx: 4,
            ly: 4,
            boundary: Boundary::Periodic,
            jx: 0.9,
            jy: 1.0,
            jz: 1.0,
            gamma: 1.0,
            eta: 1.0,
        }
    }
}

impl FileConfig {
    pub fn parse_str(s: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(s)
    }

    pub fn problem(&self) -> Problem {
        Problem {
            lattice: LatticeSpec::new(self.lx, self.ly, self.boundary),
            model: ModelParams {
                jx: self.jx,
                jy: self.jy,
                jz: self.jz,
                gamma: self.gamma,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_overrides() {
        let cfg = FileConfig::parse_str("").unwrap();
        assert_eq!(cfg.lx, 4);
        assert_eq!(cfg.eta, 1.0);
        let cfg = FileConfig::parse_str(
            "lx = 6\nly = 6\nboundary = \"open\"\njy = 1.05\neta = 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.lx, 6);
        assert_eq!(cfg.boundary, Boundary::Open);
        assert_eq!(cfg.jy, 1.05);
        assert_eq!(cfg.eta, 0.5);
        assert_eq!(cfg.jx, 0.9);
    }

    #[test]
    fn coupling_lookup() {
        let m = ModelParams::new(0.9, 1.1, 1.0);
        assert_eq!(m.coupling(Axis::X), 0.9);
        assert_eq!(m.coupling(Axis::Y), 1.1);
        assert_eq!(m.coupling(Axis::Z), 1.0);
    }
}
