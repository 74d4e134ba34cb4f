//! Flat JSON ingestion of device parameters. Ordinary frequencies in GHz/MHz
//! are converted to angular units here and nowhere else.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::units;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub omega_ge_ghz: f64,
    pub omega_r_ghz: f64,
    pub g_mhz: f64,
    pub alpha_ghz: f64,
    pub kappa_mhz: f64,
    pub gamma_mhz: f64,
    #[serde(default = "default_n_transmon")]
    pub n_transmon: usize,
    #[serde(default = "default_n_fock")]
    pub n_fock: usize,
}

fn default_n_transmon() -> usize {
    SystemParams::DEFAULT_N_TRANSMON
}

fn default_n_fock() -> usize {
    SystemParams::DEFAULT_N_FOCK
}

impl SystemConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_params(&self) -> Result<SystemParams> {
        SystemParams::new(
            units::ghz(self.omega_ge_ghz),
            units::ghz(self.omega_r_ghz),
            units::mhz(self.g_mhz),
            units::ghz(self.alpha_ghz),
            units::mhz(self.kappa_mhz),
            units::mhz(self.gamma_mhz),
            self.n_transmon,
            self.n_fock,
        )
        .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_params(p: &SystemParams) -> Self {
        Self {
            omega_ge_ghz: units::to_ghz(p.omega_ge),
            omega_r_ghz: units::to_ghz(p.omega_r),
            g_mhz: units::to_mhz(p.g),
            alpha_ghz: units::to_ghz(p.alpha),
            kappa_mhz: units::to_mhz(p.kappa),
            gamma_mhz: units::to_mhz(p.gamma),
            n_transmon: p.n_transmon,
            n_fock: p.n_fock,
        }
    }
}
