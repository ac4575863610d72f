//! Property tests for the structural invariants of each module.

use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wgm_nonlinear::bootstrap::{bootstrap_metrics, resample, BootstrapOptions};
use wgm_nonlinear::metrics::{concurrence, nonlinear_phase, sign_flip_gate, wrap_phase, PHASE_THRESHOLD};
use wgm_nonlinear::polarization::Label;
use wgm_nonlinear::qops::{build_liouvillian, propagate, CMatrix, Space};
use wgm_nonlinear::tomography::{
    embed_4x4, expected_counts, log_likelihood, mle_reconstruct, random_state, MeasurementModel, MleOptions,
};
use wgm_nonlinear::transmission::{transmit, JonesVector};
use wgm_nonlinear::twophoton::{
    normalized_correlation, symmetric_product, windowed_state, SimulationOptions, TwoPhotonState, Window,
};
use wgm_nonlinear::units::angular;
use wgm_nonlinear::SystemParams;

fn cplx() -> impl Strategy<Value = Complex64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

fn params() -> impl Strategy<Value = SystemParams> {
    (0.0..25.0f64, 0.5..6.0f64, 0.5..6.0f64, -10.0..10.0f64, -10.0..10.0f64, cplx()).prop_map(
        |(g, ratio, gamma, dal, drl, drive)| {
            let base = SystemParams::default();
            SystemParams {
                g: angular(g),
                kappa_f: ratio * base.kappa_i,
                gamma: angular(gamma),
                delta_al: angular(dal),
                delta_rl: angular(drl),
                delta_ar: None,
                drive: drive * 0.2,
                ..base
            }
        },
    )
}

fn random_matrix(n: usize, seed: u64) -> CMatrix {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
}

fn random_density4(seed: u64) -> CMatrix {
    let a = random_matrix(4, seed);
    let m = &a * a.adjoint();
    let tr = m.trace();
    m / tr
}

fn random_unitary2(seed: u64) -> CMatrix {
    let a = random_matrix(2, seed);
    let h = (&a + a.adjoint()) * Complex64::new(0.0, 1.0);
    h.exp()
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn assert_physical(s: &TwoPhotonState) {
    let m = s.matrix();
    assert!((m.trace() - Complex64::from(1.0)).norm() < 1e-10);
    assert!(max_abs(&(m - m.adjoint())) < 1e-12);
    let herm = CMatrix::from_fn(3, 3, |i, j| 0.5 * (m[(i, j)] + m[(j, i)].conj()));
    assert!(herm.symmetric_eigenvalues().iter().all(|&e| e >= -1e-9));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn liouvillian_preserves_trace(p in params(), seed in any::<u64>()) {
        let space = Space::new(3).unwrap();
        let l = build_liouvillian(&p, space).unwrap();
        let a = random_matrix(space.dim(), seed);
        let rho = &a + a.adjoint();
        prop_assert!(l.apply(&rho).trace().norm() < 1e-10 * (1.0 + max_abs(l.matrix())));
    }

    #[test]
    fn propagation_preserves_hermiticity(p in params(), seed in any::<u64>(), tau in 0.0..0.2f64) {
        let space = Space::new(2).unwrap();
        let l = build_liouvillian(&p, space).unwrap();
        let a = random_matrix(space.dim(), seed);
        let rho = &a + a.adjoint();
        let out = propagate(&l, &rho, tau).unwrap();
        prop_assert!(max_abs(&(&out - out.adjoint())) < 1e-9);
    }

    #[test]
    fn survival_bounded(p in params(), h in cplx(), v in cplx()) {
        prop_assume!(h.norm() + v.norm() > 1e-3);
        let jones = JonesVector::new(h, v);
        let r = transmit(&jones, &p, true).unwrap();
        prop_assert!(r.t_h.norm() <= 1.0 + 1e-12);
        prop_assert!(r.survival <= 1.0 + 1e-12 && r.survival >= 0.0);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&r.p_overlap));
    }

    #[test]
    fn zero_coupling_is_empty_resonator(p in params(), h in cplx(), v in cplx()) {
        prop_assume!(h.norm() + v.norm() > 1e-3);
        let jones = JonesVector::new(h, v);
        let q = p.with_g(0.0);
        prop_assert_eq!(transmit(&jones, &q, true).unwrap(), transmit(&jones, &q, false).unwrap());
    }

    #[test]
    fn symmetric_products_have_no_antisymmetric_weight(u0 in cplx(), u1 in cplx(), v0 in cplx(), v1 in cplx()) {
        let psi = symmetric_product([u0, u1], [v0, v1]);
        let n = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        prop_assume!(n > 1e-3);
        let psi = psi.map(|z| z / n);
        let rho4 = embed_4x4(&TwoPhotonState::pure(&psi).unwrap());
        let h = 1.0 / 2f64.sqrt();
        let a = [Complex64::from(0.0), Complex64::from(h), Complex64::from(-h), Complex64::from(0.0)];
        let mut w = Complex64::from(0.0);
        for i in 0..4 {
            for j in 0..4 {
                w += a[i].conj() * rho4[(i, j)] * a[j];
            }
        }
        prop_assert!(w.norm() < 1e-12);
    }

    #[test]
    fn concurrence_local_unitary_invariance(s in any::<u64>(), u1 in any::<u64>(), u2 in any::<u64>()) {
        let rho = random_density4(s);
        let u = random_unitary2(u1).kronecker(&random_unitary2(u2));
        let rotated = &u * &rho * u.adjoint();
        let (c0, c1) = (concurrence(&rho).unwrap(), concurrence(&rotated).unwrap());
        prop_assert!((c0 - c1).abs() < 1e-10);
        prop_assert!((0.0..=1.0).contains(&c0));
    }

    #[test]
    fn concurrence_bounds_on_pure_states(a in cplx(), b in cplx(), c in cplx(), d in cplx()) {
        let n = (a.norm_sqr() + b.norm_sqr() + c.norm_sqr() + d.norm_sqr()).sqrt();
        prop_assume!(n > 1e-3);
        let psi = [a / n, b / n, c / n, d / n];
        let rho = CMatrix::from_fn(4, 4, |i, j| psi[i] * psi[j].conj());
        let got = concurrence(&rho).unwrap();
        prop_assert!((got - 2.0 * (psi[0] * psi[3] - psi[1] * psi[2]).norm()).abs() < 1e-9);
    }

    #[test]
    fn phase_measures_only_the_nonlinear_part(seed in any::<u64>(), theta in -3.2..3.2f64) {
        let state = random_state(&mut ChaCha8Rng::seed_from_u64(seed));
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::from_polar(1.0, 2.0 * theta),
            Complex64::from_polar(1.0, theta),
            Complex64::from(1.0),
        ]));
        let moved = state.transformed(&d).unwrap();
        match (nonlinear_phase(&state, PHASE_THRESHOLD), nonlinear_phase(&moved, PHASE_THRESHOLD)) {
            (Ok(a), Ok(b)) => prop_assert!(wrap_phase(a - b).abs() < 1e-9),
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "{other:?}"),
        }
    }

    #[test]
    fn gate_is_linear_and_norm_preserving(x in prop::array::uniform4(cplx()), y in prop::array::uniform4(cplx()), a in cplx(), b in cplx()) {
        // the gate acts on normalized two-qubit states
        let norm = |v: &[Complex64; 4]| v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        prop_assume!(norm(&x) > 1e-3 && norm(&y) > 1e-3);
        let (x, y) = (x.map(|c| c / norm(&x)), y.map(|c| c / norm(&y)));
        let z: [Complex64; 4] = std::array::from_fn(|k| a * x[k] + b * y[k]);
        let nz = norm(&z);
        prop_assume!(nz > 1e-3);
        let gx = sign_flip_gate(&x).unwrap();
        let gy = sign_flip_gate(&y).unwrap();
        let gz = sign_flip_gate(&z.map(|c| c / nz)).unwrap();
        for k in 0..4 {
            prop_assert!((gz[k] * nz - (a * gx[k] + b * gy[k])).norm() < 1e-12);
        }
        prop_assert!((norm(&gx) - 1.0).abs() < 1e-12 && (norm(&gz) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn likelihood_gradient(seed in any::<u64>()) {
        let model = MeasurementModel::canonical().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = random_state(&mut rng);
        let counts = resample(&expected_counts(&truth, &model, 5e3), seed).unwrap();
        let x: Vec<f64> = (0..9).map(|k| 0.3 + 0.1 * k as f64 * if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let (_, grad) = log_likelihood(&x, &counts, &model);
        let scale = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
        for k in 0..9 {
            let h = 1e-6;
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[k] += h;
            xm[k] -= h;
            let fd = (log_likelihood(&xp, &counts, &model).0 - log_likelihood(&xm, &counts, &model).0) / (2.0 * h);
            prop_assert!((fd - grad[k]).abs() < 1e-6 * scale);
        }
    }

    #[test]
    fn random_states_are_physical(seed in any::<u64>()) {
        assert_physical(&random_state(&mut ChaCha8Rng::seed_from_u64(seed)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn reconstructions_are_physical_and_monotone(seed in any::<u64>(), n in 20.0..1e5f64) {
        let model = MeasurementModel::canonical().unwrap();
        let truth = random_state(&mut ChaCha8Rng::seed_from_u64(seed));
        let counts = resample(&expected_counts(&truth, &model, n), seed).unwrap();
        let Ok(r) = mle_reconstruct(&counts, &model, &MleOptions { seed, ..MleOptions::default() }) else {
            return Ok(());
        };
        assert_physical(&r.state);
        prop_assert!(r.history.windows(2).all(|w| w[1] <= w[0] + 1e-15 * w[0].abs()));
    }

    #[test]
    fn bootstrap_stats_well_formed(seed in any::<u64>(), reps in 2usize..12) {
        let model = MeasurementModel::canonical().unwrap();
        let truth = random_state(&mut ChaCha8Rng::seed_from_u64(seed));
        let counts = resample(&expected_counts(&truth, &model, 1e4), seed).unwrap();
        let r = bootstrap_metrics(&counts, &model, &BootstrapOptions { replicates: reps, seed, ..BootstrapOptions::default() }).unwrap();
        prop_assert_eq!(r.requested, reps);
        prop_assert_eq!(r.overlap.replicates + r.failures, reps);
        prop_assert!(r.overlap.std >= 0.0 && r.concurrence.std >= 0.0);
        prop_assert!(r.phase.std >= 0.0 || r.phase.replicates == 0);
    }
}

fn quick() -> SimulationOptions {
    SimulationOptions { n_max: 3, g_nodes: 4, substeps: 2 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn detector_order_flips_delay(ratio in 1.5..5.0f64, dal in -5.0..5.0f64, tau in 0.0..0.03f64, pair in 0usize..6) {
        let labels = [Label::H, Label::V, Label::P, Label::M, Label::R, Label::L];
        let (a, b) = (labels[pair], labels[(pair + 2) % 6]);
        let base = SystemParams::default();
        let p = SystemParams { kappa_f: ratio * base.kappa_i, delta_al: angular(dal), delta_ar: None, ..base };
        let ab = normalized_correlation(&p, a, b, &[tau, -tau], &quick()).unwrap();
        let ba = normalized_correlation(&p, b, a, &[-tau, tau], &quick()).unwrap();
        for k in 0..2 {
            prop_assert!((ab[k] - ba[k]).abs() <= 1e-9 * ab[k].abs().max(1.0));
        }
    }

    #[test]
    fn windowed_states_are_physical(mean in 0.0..40.0f64, width in 0.5..10.0f64) {
        let ws = windowed_state(&SystemParams::default(), &Window::new(mean, width).unwrap(), &quick()).unwrap();
        assert_physical(&ws.state);
        assert_physical(&ws.lab_state);
    }
}
