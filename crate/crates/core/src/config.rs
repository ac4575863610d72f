//! Run configuration, read from a single TOML file. Frequencies are ν in MHz,
//! delays and windows in ns. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{
    SystemParams, DEFAULT_GAMMA_MHZ, DEFAULT_G_MEAN_MHZ, DEFAULT_G_SIGMA_MHZ, DEFAULT_KAPPA_I_MHZ,
    SWEEP_DETUNING_MHZ, WORKING_POINT_RATIO,
};
use crate::polarization::{canonical_settings, DetectorSetting};
use crate::transmission::linear_grid;
use crate::twophoton::SimulationOptions;
use crate::units::angular;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    /// Fixed coupling used by single-point evaluations; defaults to g_mean.
    pub g_mhz: Option<f64>,
    pub g_mean_mhz: f64,
    pub g_sigma_mhz: f64,
    pub kappa_i_mhz: f64,
    pub kappa_f_mhz: f64,
    pub gamma_mhz: f64,
    pub delta_al_mhz: f64,
    pub delta_rl_mhz: f64,
    pub delta_ar_mhz: Option<f64>,
    /// Total input amplitude in √(photons/µs).
    pub drive: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            g_mhz: None,
            g_mean_mhz: DEFAULT_G_MEAN_MHZ,
            g_sigma_mhz: DEFAULT_G_SIGMA_MHZ,
            kappa_i_mhz: DEFAULT_KAPPA_I_MHZ,
            kappa_f_mhz: WORKING_POINT_RATIO * DEFAULT_KAPPA_I_MHZ,
            gamma_mhz: DEFAULT_GAMMA_MHZ,
            delta_al_mhz: 0.0,
            delta_rl_mhz: 0.0,
            delta_ar_mhz: None,
            drive: 0.05,
        }
    }
}

impl SystemConfig {
    pub fn params(&self) -> Result<SystemParams> {
        let p = SystemParams {
            g: angular(self.g_mhz.unwrap_or(self.g_mean_mhz)),
            kappa_i: angular(self.kappa_i_mhz),
            kappa_f: angular(self.kappa_f_mhz),
            gamma: angular(self.gamma_mhz),
            delta_al: angular(self.delta_al_mhz),
            delta_rl: angular(self.delta_rl_mhz),
            delta_ar: self.delta_ar_mhz.map(angular),
            drive: Complex64::from(self.drive),
            g_mean: angular(self.g_mean_mhz),
            g_sigma: angular(self.g_sigma_mhz),
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsConfig {
    pub n_max: usize,
    /// Coupling nodes for master-equation averages.
    pub g_nodes: usize,
    /// Midpoint samples per delay bin.
    pub substeps: usize,
    /// Coupling nodes for analytic averages.
    pub quadrature_order: usize,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        let s = SimulationOptions::default();
        Self { n_max: s.n_max, g_nodes: s.g_nodes, substeps: s.substeps, quadrature_order: crate::quadrature::DEFAULT_ORDER }
    }
}

impl NumericsConfig {
    pub fn simulation(&self) -> SimulationOptions {
        SimulationOptions { n_max: self.n_max, g_nodes: self.g_nodes, substeps: self.substeps }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub points: usize,
    /// Detunings for the sweep, overriding [system].
    pub delta_al_mhz: f64,
    pub delta_rl_mhz: f64,
    pub delta_ar_mhz: Option<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            ratio_min: 0.5,
            ratio_max: 6.0,
            points: 111,
            delta_al_mhz: SWEEP_DETUNING_MHZ,
            delta_rl_mhz: 0.0,
            delta_ar_mhz: Some(SWEEP_DETUNING_MHZ),
        }
    }
}

impl SweepConfig {
    pub fn grid(&self) -> Vec<f64> {
        linear_grid(self.ratio_min, self.ratio_max, self.points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoincidenceConfig {
    pub bin_width_ns: f64,
    pub max_delay_ns: f64,
    /// Detector pairs such as "RL"; empty means the 19 canonical settings.
    pub settings: Vec<String>,
    /// Also simulate the empty resonator (g = 0).
    pub empty_resonator: bool,
    /// When set, Poisson-sample this many coincidences into a count table.
    pub sample_pairs: Option<f64>,
}

impl Default for CoincidenceConfig {
    fn default() -> Self {
        Self { bin_width_ns: 1.0, max_delay_ns: 60.0, settings: Vec::new(), empty_resonator: true, sample_pairs: None }
    }
}

impl CoincidenceConfig {
    pub fn settings(&self) -> Result<Vec<DetectorSetting>> {
        if self.settings.is_empty() {
            return Ok(canonical_settings());
        }
        self.settings.iter().map(|s| s.parse()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    /// Single-photon phase from the table metadata when present, else lab.
    Auto,
    Lab,
    /// Single-photon phase estimated from a long-delay reference window.
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TomographyConfig {
    /// Coincidence table to analyze; synthesized from [system] when absent.
    pub data: Option<PathBuf>,
    /// Coincidences drawn for the synthetic table.
    pub total_pairs: f64,
    pub bin_width_ns: f64,
    /// Headline window.
    pub mean_delay_ns: f64,
    pub window_ns: f64,
    /// Surface axes.
    pub mean_delays_ns: Vec<f64>,
    pub window_widths_ns: Vec<f64>,
    pub frame: Frame,
    pub reference_delay_ns: f64,
    pub restarts: usize,
    pub phase_threshold: f64,
}

impl Default for TomographyConfig {
    fn default() -> Self {
        Self {
            data: None,
            total_pairs: 1e6,
            bin_width_ns: 1.0,
            mean_delay_ns: 0.0,
            window_ns: 3.0,
            mean_delays_ns: vec![0.0, 2.0, 4.0, 6.0, 10.0, 20.0, 50.0],
            window_widths_ns: vec![1.0, 3.0, 5.0, 9.0],
            frame: Frame::Auto,
            reference_delay_ns: 60.0,
            restarts: 5,
            phase_threshold: crate::metrics::PHASE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    pub enabled: bool,
    pub replicates: usize,
    /// Also resample every surface window, not only the headline one.
    pub surfaces: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { enabled: true, replicates: crate::bootstrap::DEFAULT_REPLICATES, surfaces: false }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub system: SystemConfig,
    pub numerics: NumericsConfig,
    pub sweep: SweepConfig,
    pub coincidences: CoincidenceConfig,
    pub tomography: TomographyConfig,
    pub bootstrap: BootstrapConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let at = e
                .span()
                .map(|s| {
                    let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
                    format!(" (line {line})")
                })
                .unwrap_or_default();
            Error::Config(format!("{}{at}", e.message()))
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// System parameters with the sweep detunings applied.
    pub fn sweep_params(&self) -> Result<SystemParams> {
        let sys = SystemConfig {
            delta_al_mhz: self.sweep.delta_al_mhz,
            delta_rl_mhz: self.sweep.delta_rl_mhz,
            delta_ar_mhz: self.sweep.delta_ar_mhz,
            ..self.system.clone()
        };
        sys.params()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roundtrip() {
        let c = RunConfig::default();
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn unknown_key_has_location() {
        let err = RunConfig::from_toml("seed = 1\n[system]\nkappa_x_mhz = 3.0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("kappa_x_mhz") && msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn defaults_match_params() {
        let c = RunConfig::default();
        let p = c.system.params().unwrap();
        let d = SystemParams::default();
        assert!((p.kappa_f - d.kappa_f).abs() < 1e-9);
        assert!((p.g_sigma - d.g_sigma).abs() < 1e-12);
        let s = c.sweep_params().unwrap();
        assert!((s.delta_al - SystemParams::coupling_sweep().delta_al).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_detuning_rejected() {
        let c = RunConfig::from_toml("[system]\ndelta_al_mhz = 1.0\ndelta_ar_mhz = 2.0\n").unwrap();
        assert!(matches!(c.system.params(), Err(Error::InconsistentDetuning { .. })));
    }
}
