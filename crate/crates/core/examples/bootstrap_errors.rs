//! Bootstrap error bars on the zero-delay metrics and how they shrink with
//! the number of recorded coincidences.

use wgm_nonlinear::bootstrap::{bootstrap_metrics, BootstrapOptions};
use wgm_nonlinear::metrics::phase_in_pi_units;
use wgm_nonlinear::tomography::{expected_counts, MeasurementModel};
use wgm_nonlinear::twophoton::{windowed_state, SimulationOptions, Window};
use wgm_nonlinear::SystemParams;

fn main() -> wgm_nonlinear::Result<()> {
    let params = SystemParams::default();
    let ws = windowed_state(&params, &Window::new(0.0, 3.0)?, &SimulationOptions::default())?;
    let model = MeasurementModel::canonical()?;
    for n in [1e3, 1e4, 1e5] {
        let counts = expected_counts(&ws.lab_state, &model, n);
        let opts = BootstrapOptions { frame_phase: ws.single_photon_phase, ..BootstrapOptions::default() };
        let r = bootstrap_metrics(&counts, &model, &opts)?;
        println!(
            "N = {n:>6.0e}: overlap {:.3} +- {:.3}, concurrence {:.3} +- {:.3}, phi {:.3} +- {:.3} pi ({} failed)",
            r.overlap.mean,
            r.overlap.std,
            r.concurrence.mean,
            r.concurrence.std,
            phase_in_pi_units(r.phase.mean),
            r.phase.std / std::f64::consts::PI,
            r.failures
        );
    }
    Ok(())
}
