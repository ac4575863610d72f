//! Maximum-likelihood reconstruction from sampled counts for states of known
//! fidelity, at increasing numbers of coincidences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wgm_nonlinear::bootstrap::resample;
use wgm_nonlinear::metrics::fidelity;
use wgm_nonlinear::tomography::{expected_counts, mle_reconstruct, random_state, MeasurementModel, MleOptions};
use wgm_nonlinear::twophoton::{ideal_states, TwoPhotonState};

fn main() -> wgm_nonlinear::Result<()> {
    let model = MeasurementModel::canonical()?;
    println!("{} settings, rank {}", model.len(), model.rank());
    let (_, fin) = ideal_states();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let states = [("psi_final", TwoPhotonState::pure(&fin)?), ("I/3", TwoPhotonState::maximally_mixed()), ("random", random_state(&mut rng))];
    for (name, truth) in &states {
        for n in [1e3, 1e4, 1e5, 1e6] {
            let counts = resample(&expected_counts(truth, &model, n), n as u64)?;
            let r = mle_reconstruct(&counts, &model, &MleOptions::default())?;
            println!(
                "{name:>10} N = {n:>7.0e}: fidelity {:.5}, {} iterations, restart spread {:.1e}",
                fidelity(&r.state, truth),
                r.iterations,
                r.restart_spread
            );
        }
    }
    Ok(())
}
