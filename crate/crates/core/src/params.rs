//! Physical parameters of the atom–resonator–fiber system.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::angular;

/// Default atomic dipole decay rate, ν = 3.0 MHz (rubidium D2, amplitude decay).
pub const DEFAULT_GAMMA_MHZ: f64 = 3.0;
/// Intrinsic resonator loss rate used throughout the experiment, ν = 8.4 MHz.
pub const DEFAULT_KAPPA_I_MHZ: f64 = 8.4;
/// Working point κ_f/κ_i.
pub const WORKING_POINT_RATIO: f64 = 2.8;
/// Mean and spread of the atom–resonator coupling, ν in MHz.
pub const DEFAULT_G_MEAN_MHZ: f64 = 13.5;
pub const DEFAULT_G_SIGMA_MHZ: f64 = 4.0;
/// Residual atom–light detuning used for the single-photon coupling sweep, ν in MHz.
pub const SWEEP_DETUNING_MHZ: f64 = 2.2;

/// All rates and detunings in rad/µs.
///
/// Detunings follow Δ_x = ω_x − ω_light, so Δ_ar = Δ_al − Δ_rl. `drive` is the
/// coherent input amplitude ⟨a_H,in⟩ in √(photons/µs).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub g: f64,
    pub kappa_i: f64,
    pub kappa_f: f64,
    pub gamma: f64,
    pub delta_al: f64,
    pub delta_rl: f64,
    pub delta_ar: Option<f64>,
    pub drive: Complex64,
    pub g_mean: f64,
    pub g_sigma: f64,
}

impl Default for SystemParams {
    /// Resonant working point (κ_f = 2.8 κ_i) with a weak drive.
    fn default() -> Self {
        let g_mean = angular(DEFAULT_G_MEAN_MHZ);
        let kappa_i = angular(DEFAULT_KAPPA_I_MHZ);
        Self {
            g: g_mean,
            kappa_i,
            kappa_f: WORKING_POINT_RATIO * kappa_i,
            gamma: angular(DEFAULT_GAMMA_MHZ),
            delta_al: 0.0,
            delta_rl: 0.0,
            delta_ar: None,
            drive: Complex64::new(0.05, 0.0),
            g_mean,
            g_sigma: angular(DEFAULT_G_SIGMA_MHZ),
        }
    }
}

impl SystemParams {
    /// Parameters of the single-photon coupling sweep: Δ_ar = Δ_al = 2.2 MHz, hence Δ_rl = 0.
    pub fn coupling_sweep() -> Self {
        let d = angular(SWEEP_DETUNING_MHZ);
        Self {
            delta_al: d,
            delta_rl: 0.0,
            delta_ar: Some(d),
            ..Self::default()
        }
    }

    pub fn with_g(mut self, g: f64) -> Self {
        self.g = g;
        self
    }

    pub fn with_kappa_f(mut self, kappa_f: f64) -> Self {
        self.kappa_f = kappa_f;
        self
    }

    pub fn with_drive(mut self, drive: Complex64) -> Self {
        self.drive = drive;
        self
    }

    /// Fixes the coupling to a single value (no spread).
    pub fn with_fixed_coupling(mut self, g: f64) -> Self {
        self.g = g;
        self.g_mean = g;
        self.g_sigma = 0.0;
        self
    }

    /// Total resonator field decay rate κ_f + κ_i.
    pub fn kappa(&self) -> f64 {
        self.kappa_f + self.kappa_i
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.g,
            self.kappa_i,
            self.kappa_f,
            self.gamma,
            self.delta_al,
            self.delta_rl,
            self.drive.re,
            self.drive.im,
            self.g_mean,
            self.g_sigma,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite value".into()));
        }
        if self.kappa_i <= 0.0 {
            return Err(Error::InvalidParameter(format!("kappa_i = {} must be > 0", self.kappa_i)));
        }
        if self.kappa_f < 0.0 {
            return Err(Error::InvalidParameter(format!("kappa_f = {} must be >= 0", self.kappa_f)));
        }
        if self.gamma <= 0.0 {
            return Err(Error::InvalidParameter(format!("gamma = {} must be > 0", self.gamma)));
        }
        if self.g < 0.0 || self.g_mean < 0.0 {
            return Err(Error::InvalidParameter("coupling must be >= 0".into()));
        }
        if self.g_sigma < 0.0 {
            return Err(Error::InvalidParameter(format!("g_sigma = {} must be >= 0", self.g_sigma)));
        }
        if let Some(delta_ar) = self.delta_ar {
            let expected = self.delta_al - self.delta_rl;
            if (delta_ar - expected).abs() > 1e-9 * (1.0 + expected.abs()) {
                return Err(Error::InconsistentDetuning { delta_ar, expected });
            }
        }
        Ok(())
    }
}
