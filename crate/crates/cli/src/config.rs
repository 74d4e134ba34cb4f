//! Run configuration: one JSON document, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use raman_core::config::SystemConfig;
use raman_core::SystemParams;

use crate::error::{config_err, CliResult};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub seed: u64,
    pub spectrum: Option<SpectrumConfig>,
    pub stark: Option<StarkRunConfig>,
    pub dynamics: Option<DynamicsConfig>,
    pub fit: Option<FitConfig>,
    pub calibrate: Option<CalibrateConfig>,
}

/// `points` values evenly spaced on [start, stop] (ordinary frequency, GHz).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Grid {
    pub fn values(&self, what: &str) -> CliResult<Vec<f64>> {
        if self.points == 0 {
            return Err(config_err(format!("{what}: empty grid")));
        }
        if !(self.start.is_finite() && self.stop.is_finite()) || self.start < 0.0 || self.stop < self.start {
            return Err(config_err(format!("{what}: need 0 <= start <= stop, got [{}, {}]", self.start, self.stop)));
        }
        if self.points == 1 {
            return Ok(vec![self.start]);
        }
        let n = self.points - 1;
        Ok((0..=n).map(|i| self.start + (self.stop - self.start) * i as f64 / n as f64).collect())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub omega_ghz: Grid,
    #[serde(default)]
    pub phi: f64,
    /// Steps of the exact Stark sweep; defaults to 4000 per GHz.
    pub n_steps: Option<usize>,
}

fn default_orders() -> Vec<usize> {
    vec![2, 6]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StarkRunConfig {
    pub omega_ghz: Grid,
    pub n_steps: Option<usize>,
    #[serde(default = "default_orders")]
    pub orders: Vec<usize>,
}

fn default_true() -> bool {
    true
}

fn default_dynamics_omega_max() -> f64 {
    0.6
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSeriesConfig {
    pub total_ns: f64,
    pub rise_ns: f64,
    pub samples: usize,
    #[serde(default = "default_true")]
    pub chirp: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub total_times_ns: Vec<f64>,
    pub rise_times_ns: Vec<f64>,
    /// Range of the Stark sweep that maps g̃ to Ω.
    #[serde(default = "default_dynamics_omega_max")]
    pub omega_max_ghz: f64,
    pub n_steps: Option<usize>,
    pub time_series: Option<TimeSeriesConfig>,
}

fn default_a0() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTrace {
    #[serde(default = "default_a0")]
    pub a0: f64,
    pub gtilde_mhz: f64,
    pub center_ghz: f64,
    pub kappa_mhz: f64,
    pub gamma_mhz: f64,
    pub half_span_mhz: f64,
    pub points: usize,
    #[serde(default)]
    pub noise: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub trace_csv: Option<PathBuf>,
    pub synthetic: Option<SyntheticTrace>,
}

fn default_order() -> usize {
    6
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    pub measurements_csv: PathBuf,
    #[serde(default = "default_order")]
    pub order_omega: usize,
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    /// Reads the config and resolves relative input paths against its directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(f) = cfg.fit.as_mut() {
            if let Some(p) = f.trace_csv.as_mut() {
                resolve(p);
            }
        }
        if let Some(c) = cfg.calibrate.as_mut() {
            resolve(&mut c.measurements_csv);
        }
        cfg.params()?;
        Ok(cfg)
    }

    pub fn params(&self) -> CliResult<SystemParams> {
        self.system.to_params().map_err(|e| config_err(e.to_string()))
    }

    pub fn block<'a, T>(block: &'a Option<T>, name: &str) -> CliResult<&'a T> {
        block.as_ref().ok_or_else(|| config_err(format!("missing \"{name}\" block")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SYSTEM: &str = r#""system": {"omega_ge_ghz": 8.103, "omega_r_ghz": 7.126, "g_mhz": 65.0,
        "alpha_ghz": -0.376, "kappa_mhz": 6.6, "gamma_mhz": 1.0}"#;

    #[test]
    fn minimal_config_parses() {
        let cfg = RunConfig::from_json(&format!("{{{SYSTEM}}}")).unwrap();
        assert_eq!(cfg.seed, 0);
        assert!(cfg.spectrum.is_none());
        assert!(RunConfig::block(&cfg.spectrum, "spectrum").is_err());
    }

    #[test]
    fn unknown_keys_are_fatal() {
        assert!(RunConfig::from_json(&format!("{{{SYSTEM}, \"sede\": 3}}")).is_err());
        let nested = format!("{{{SYSTEM}, \"spectrum\": {{\"omega_ghz\": {{\"start\": 0, \"stop\": 1, \"points\": 3, \"step\": 1}}}}}}");
        assert!(RunConfig::from_json(&nested).is_err());
    }

    #[test]
    fn grids() {
        let g = Grid { start: 0.0, stop: 0.4, points: 5 };
        assert_eq!(g.values("x").unwrap(), vec![0.0, 0.1, 0.2, 0.30000000000000004, 0.4]);
        assert!(Grid { start: 0.0, stop: 0.4, points: 0 }.values("x").is_err());
        assert!(Grid { start: 0.5, stop: 0.4, points: 3 }.values("x").is_err());
    }
}
