//! Polarization-dependent nonlinear optics with a single atom coupled to a
//! fiber-coupled whispering-gallery-mode resonator.

pub mod bootstrap;
pub mod config;
pub mod error;
pub mod io;
pub mod metrics;
pub mod optim;
pub mod params;
pub mod pipeline;
pub mod polarization;
pub mod qops;
pub mod quadrature;
pub mod tomography;
pub mod transmission;
pub mod twophoton;
pub mod units;

pub use error::{Error, Result};
pub use params::SystemParams;
pub use polarization::{DetectorSetting, Label};
