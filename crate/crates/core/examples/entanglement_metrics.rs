//! Concurrence, nonlinear phase and overlap with the ideal output for a few
//! reference states, including a dephased ideal output.

use num_complex::Complex64;
use wgm_nonlinear::metrics::{phase_in_pi_units, MetricsReport, PHASE_THRESHOLD};
use wgm_nonlinear::qops::CMatrix;
use wgm_nonlinear::twophoton::{ideal_states, TwoPhotonState};

fn report(name: &str, state: &TwoPhotonState) -> wgm_nonlinear::Result<()> {
    match MetricsReport::evaluate(state, PHASE_THRESHOLD) {
        Ok(m) => println!(
            "{name:>18}: overlap {:.4}, concurrence {:.4}, phi {}",
            m.overlap_ideal,
            m.concurrence,
            m.nonlinear_phase.map_or("undefined".to_string(), |p| format!("{:.4} pi", phase_in_pi_units(p)))
        ),
        Err(e) => println!("{name:>18}: {e}"),
    }
    Ok(())
}

fn main() -> wgm_nonlinear::Result<()> {
    let (init, fin) = ideal_states();
    report("psi_initial (PP)", &TwoPhotonState::pure(&init)?)?;
    report("psi_final", &TwoPhotonState::pure(&fin)?)?;
    report("I/3", &TwoPhotonState::maximally_mixed())?;
    let pure = TwoPhotonState::pure(&fin)?;
    for keep in [0.8, 0.5, 0.2] {
        let mut m: CMatrix = pure.matrix().clone();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    m[(i, j)] *= Complex64::from(keep);
                }
            }
        }
        report(&format!("dephased x{keep}"), &TwoPhotonState::new(m)?)?;
    }
    Ok(())
}
