//! Error bars by Poisson resampling of coincidence counts: each replicate
//! replaces n by a Poisson(n) draw, reconstructs the state and evaluates the
//! metrics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{nonlinear_phase, overlap_ideal, state_concurrence};
use crate::tomography::{mle_reconstruct, MeasurementModel, MleOptions};
use crate::twophoton::poisson;

pub const DEFAULT_REPLICATES: usize = 100;
/// Fraction of failed replicates above which a report is unreliable.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// Poisson(n) for every count; deterministic in `seed`.
pub fn resample(counts: &[f64], seed: u64) -> Result<Vec<f64>> {
    resample_with(counts, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn resample_with(counts: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if counts.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
        return Err(Error::InvalidParameter("counts must be finite and nonnegative".into()));
    }
    counts.iter().map(|&n| poisson(rng, n)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    pub std: f64,
    pub replicates: usize,
}

impl MetricStats {
    fn linear(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN, replicates: 0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, replicates: n }
    }

    /// Mean direction and circular standard deviation √(−2 ln R).
    fn circular(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN, replicates: 0 };
        }
        let (s, c) = values.iter().fold((0.0, 0.0), |(s, c), v| (s + v.sin(), c + v.cos()));
        let r = ((s * s + c * c).sqrt() / n as f64).min(1.0);
        let std = if n > 1 { (-2.0 * r.ln()).max(0.0).sqrt() } else { 0.0 };
        Self { mean: s.atan2(c), std, replicates: n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub overlap: MetricStats,
    pub concurrence: MetricStats,
    /// Radians; circular statistics.
    pub phase: MetricStats,
    pub seed: u64,
    pub requested: usize,
    pub failures: usize,
    /// Replicates whose phase was undefined (counted separately from failures).
    pub undefined_phase: usize,
    pub unreliable: bool,
    /// Single replicate: standard deviations are zero by convention.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    /// Single-photon phase removed from each reconstruction before the overlap.
    pub frame_phase: f64,
    pub phase_threshold: f64,
    pub mle: MleOptions,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            replicates: DEFAULT_REPLICATES,
            seed: 1,
            frame_phase: 0.0,
            phase_threshold: crate::metrics::PHASE_THRESHOLD,
            mle: MleOptions { restarts: 2, ..MleOptions::default() },
        }
    }
}

struct Replicate {
    overlap: f64,
    concurrence: f64,
    phase: Option<f64>,
}

fn run_replicate(counts: &[f64], model: &MeasurementModel, opts: &BootstrapOptions, k: usize) -> Result<Replicate> {
    let sample = resample_with(counts, &mut replicate_rng(opts.seed, k as u64))?;
    let mle = mle_reconstruct(&sample, model, &opts.mle)?;
    if !mle.converged {
        return Err(Error::NumericalFailure("replicate did not converge".into()));
    }
    let state = mle.state.remove_single_photon_phase(opts.frame_phase)?;
    let phase = match nonlinear_phase(&state, opts.phase_threshold) {
        Ok(p) => Some(p),
        Err(Error::UndefinedPhase { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(Replicate { overlap: overlap_ideal(&state), concurrence: state_concurrence(&state)?, phase })
}

/// Resample → reconstruct → metrics, `opts.replicates` times in parallel.
/// Replicate k draws from stream k of the seeded generator, so results do not
/// depend on scheduling.
pub fn bootstrap_metrics(counts: &[f64], model: &MeasurementModel, opts: &BootstrapOptions) -> Result<BootstrapReport> {
    if opts.replicates == 0 {
        return Err(Error::InvalidParameter("replicates must be > 0".into()));
    }
    if counts.len() != model.len() {
        return Err(Error::InvalidParameter(format!("{} counts for {} settings", counts.len(), model.len())));
    }
    let results: Vec<Result<Replicate>> =
        (0..opts.replicates).into_par_iter().map(|k| run_replicate(counts, model, opts, k)).collect();
    let ok: Vec<&Replicate> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let failures = opts.replicates - ok.len();
    let phases: Vec<f64> = ok.iter().filter_map(|r| r.phase).collect();
    Ok(BootstrapReport {
        overlap: MetricStats::linear(&ok.iter().map(|r| r.overlap).collect::<Vec<_>>()),
        concurrence: MetricStats::linear(&ok.iter().map(|r| r.concurrence).collect::<Vec<_>>()),
        phase: MetricStats::circular(&phases),
        seed: opts.seed,
        requested: opts.replicates,
        failures,
        undefined_phase: ok.len() - phases.len(),
        unreliable: failures as f64 > MAX_FAILURE_FRACTION * opts.replicates as f64,
        degenerate: opts.replicates == 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tomography::expected_counts;
    use crate::twophoton::{ideal_states, TwoPhotonState};

    #[test]
    fn zeros_stay_zero() {
        assert_eq!(resample(&[0.0; 5], 3).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn deterministic() {
        let c = [10.0, 200.0, 3.0];
        assert_eq!(resample(&c, 9).unwrap(), resample(&c, 9).unwrap());
        assert_ne!(resample(&c, 9).unwrap(), resample(&c, 10).unwrap());
        assert!(resample(&[-1.0], 0).is_err());
    }

    #[test]
    fn circular_stats_across_branch_cut() {
        let pi = std::f64::consts::PI;
        let s = MetricStats::circular(&[pi - 0.01, -pi + 0.01]);
        assert!((s.mean.abs() - pi).abs() < 1e-9);
        assert!(s.std < 0.02);
    }

    #[test]
    fn single_replicate_is_degenerate() {
        let m = MeasurementModel::canonical().unwrap();
        let (_, f) = ideal_states();
        let counts = expected_counts(&TwoPhotonState::pure(&f).unwrap(), &m, 1e4);
        let r = bootstrap_metrics(&counts, &m, &BootstrapOptions { replicates: 1, ..Default::default() }).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.overlap.std, 0.0);
        assert_eq!(r.phase.std, 0.0);
    }
}
