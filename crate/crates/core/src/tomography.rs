//! Maximum-likelihood reconstruction of the symmetric two-photon density
//! matrix from coincidence counts.
//!
//! A coincidence between analyzers i and j, counted in both detection orders,
//! has the effect (1 + |⟨i|j⟩|²)·|s_ij⟩⟨s_ij| on the symmetric subspace, with
//! |s_ij⟩ the normalized symmetrized product. The model keeps the projector
//! Π = |s_ij⟩⟨s_ij| and the pair weight 1 + |⟨i|j⟩|² separately.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{bfgs, Tolerances};
use crate::polarization::{canonical_settings, DetectorSetting};
use crate::qops::CMatrix;
use crate::twophoton::{symmetric_product, TwoPhotonState};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone)]
pub struct MeasurementModel {
    settings: Vec<DetectorSetting>,
    projectors: Vec<CMatrix>,
    pair_weights: Vec<f64>,
    efficiencies: Vec<f64>,
}

/// Normalized symmetrized product state of a detector pair.
pub fn setting_vector(setting: DetectorSetting) -> [Complex64; 3] {
    let u = setting.first().jones();
    let v = setting.second().jones();
    let mut s = symmetric_product(u, v);
    let n = s.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for z in &mut s {
        *z /= n;
    }
    s
}

/// 1 + |⟨i|j⟩|²: coincidence weight of an unordered pair summed over both orders.
pub fn pair_weight(setting: DetectorSetting) -> f64 {
    let u = setting.first().jones();
    let v = setting.second().jones();
    1.0 + (u[0].conj() * v[0] + u[1].conj() * v[1]).norm_sqr()
}

/// Hermitian basis of 3×3 matrices used for the rank check.
fn hermitian_basis() -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(9);
    for i in 0..3 {
        let mut m = CMatrix::zeros(3, 3);
        m[(i, i)] = Complex64::from(1.0);
        out.push(m);
    }
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let mut re = CMatrix::zeros(3, 3);
        re[(i, j)] = Complex64::from(1.0);
        re[(j, i)] = Complex64::from(1.0);
        let mut im = CMatrix::zeros(3, 3);
        im[(i, j)] = Complex64::new(0.0, -1.0);
        im[(j, i)] = Complex64::new(0.0, 1.0);
        out.push(re);
        out.push(im);
    }
    out
}

fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    // Tr[A B] = Σ_ij A_ij B_ji
    let mut acc = ZERO;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

impl MeasurementModel {
    /// Projectors for `settings`; fails unless they determine all 9 real
    /// parameters of the state.
    pub fn new(settings: &[DetectorSetting]) -> Result<Self> {
        let projectors: Vec<CMatrix> = settings
            .iter()
            .map(|&s| {
                let v = nalgebra::DVector::from_column_slice(&setting_vector(s));
                &v * v.adjoint()
            })
            .collect();
        let model = Self {
            settings: settings.to_vec(),
            projectors,
            pair_weights: settings.iter().map(|&s| pair_weight(s)).collect(),
            efficiencies: vec![1.0; settings.len()],
        };
        let rank = model.rank();
        if rank < 9 {
            return Err(Error::RankDeficient { rank });
        }
        Ok(model)
    }

    /// The 19 canonical settings.
    pub fn canonical() -> Result<Self> {
        Self::new(&canonical_settings())
    }

    pub fn with_efficiencies(mut self, efficiencies: Vec<f64>) -> Result<Self> {
        if efficiencies.len() != self.settings.len() || efficiencies.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidParameter("one positive efficiency per setting required".into()));
        }
        self.efficiencies = efficiencies;
        Ok(self)
    }

    pub fn settings(&self) -> &[DetectorSetting] {
        &self.settings
    }

    pub fn projectors(&self) -> &[CMatrix] {
        &self.projectors
    }

    pub fn pair_weights(&self) -> &[f64] {
        &self.pair_weights
    }

    pub fn efficiencies(&self) -> &[f64] {
        &self.efficiencies
    }

    pub fn len(&self) -> usize {
        self.settings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.settings.is_empty()
    }

    /// c_s = pair weight × efficiency.
    fn weight(&self, s: usize) -> f64 {
        self.pair_weights[s] * self.efficiencies[s]
    }

    /// Numerical rank of the linear map ρ ↦ (Tr[Π_s ρ])_s on Hermitian matrices.
    pub fn rank(&self) -> usize {
        let basis = hermitian_basis();
        let a = DMatrix::<f64>::from_fn(self.projectors.len(), basis.len(), |s, k| {
            trace_product(&self.projectors[s], &basis[k]).re
        });
        if a.nrows() == 0 {
            return 0;
        }
        let sv = a.singular_values();
        let max = sv.iter().copied().fold(0.0, f64::max);
        sv.iter().filter(|&&x| x > 1e-10 * max).count()
    }
}

/// Tr[Π_s ρ] for every setting.
pub fn outcome_traces(state: &TwoPhotonState, model: &MeasurementModel) -> Vec<f64> {
    model.projectors.iter().map(|p| trace_product(p, state.matrix()).re).collect()
}

/// Expected relative frequencies: weight × Tr[Π_s ρ], normalized over the
/// settings in the model.
pub fn predicted_probabilities(state: &TwoPhotonState, model: &MeasurementModel) -> Vec<f64> {
    let raw: Vec<f64> =
        outcome_traces(state, model).iter().enumerate().map(|(s, t)| (model.weight(s) * t).max(0.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total).collect()
}

/// Expected counts for `total` coincidences.
pub fn expected_counts(state: &TwoPhotonState, model: &MeasurementModel, total: f64) -> Vec<f64> {
    predicted_probabilities(state, model).iter().map(|p| p * total).collect()
}

/// Lower-triangular T from 9 reals: [T00, T11, T22, Re T10, Im T10, Re T20, Im T20, Re T21, Im T21].
pub fn t_matrix(x: &[f64]) -> CMatrix {
    let mut t = CMatrix::zeros(3, 3);
    t[(0, 0)] = Complex64::from(x[0]);
    t[(1, 1)] = Complex64::from(x[1]);
    t[(2, 2)] = Complex64::from(x[2]);
    t[(1, 0)] = Complex64::new(x[3], x[4]);
    t[(2, 0)] = Complex64::new(x[5], x[6]);
    t[(2, 1)] = Complex64::new(x[7], x[8]);
    t
}

const T_INDEX: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 0), (2, 0), (2, 1)];

/// ρ = T†T / Tr(T†T).
pub fn state_from_params(x: &[f64]) -> Result<TwoPhotonState> {
    let t = t_matrix(x);
    TwoPhotonState::from_estimate(&(t.adjoint() * t))
}

/// Parameters of a state (inverse of [`state_from_params`] up to a
/// regularizing admixture of the identity so that T stays invertible).
pub fn params_from_state(state: &TwoPhotonState, admix: f64) -> Vec<f64> {
    let m = state.matrix() * Complex64::from(1.0 - admix) + CMatrix::identity(3, 3) * Complex64::from(admix / 3.0);
    // M = T†T with T lower-triangular: reverse the index order, take the
    // Cholesky factor L (M' = L L†), then T = J L† J.
    let j = CMatrix::from_fn(3, 3, |r, c| if r + c == 2 { Complex64::from(1.0) } else { ZERO });
    let flipped = &j * &m * &j;
    let l = match nalgebra::Cholesky::new(flipped) {
        Some(c) => c.l(),
        None => CMatrix::identity(3, 3),
    };
    let t = &j * l.adjoint() * &j;
    vec![t[(0, 0)].re, t[(1, 1)].re, t[(2, 2)].re, t[(1, 0)].re, t[(1, 0)].im, t[(2, 0)].re, t[(2, 0)].im, t[(2, 1)].re, t[(2, 1)].im]
}

/// Log-likelihood ℓ = Σ n_s log q_s − N log Σ q_s, q_s = c_s Tr[Π_s T†T], and
/// its gradient with respect to the 9 parameters. The flux scale is profiled out.
pub fn log_likelihood(x: &[f64], counts: &[f64], model: &MeasurementModel) -> (f64, Vec<f64>) {
    let t = t_matrix(x);
    let m = t.adjoint() * &t;
    let n_total: f64 = counts.iter().sum();
    let q: Vec<f64> = (0..model.len()).map(|s| model.weight(s) * trace_product(&model.projectors[s], &m).re).collect();
    let q_total: f64 = q.iter().sum();

    let mut ll = -n_total * q_total.ln();
    // R = Σ n_s c_s Π_s/q_s − N Σ c_s Π_s/Q, so that dℓ = Tr[R dM]
    let mut r = CMatrix::zeros(3, 3);
    for s in 0..model.len() {
        let c = model.weight(s);
        let mut coef = -n_total * c / q_total;
        if counts[s] > 0.0 {
            ll += counts[s] * q[s].ln();
            coef += counts[s] * c / q[s];
        }
        r += &model.projectors[s] * Complex64::from(coef);
    }
    // dℓ = 2 Re Tr[R T† dT]
    let rt = r * t.adjoint();
    let mut grad = vec![0.0; 9];
    for (k, &(a, b)) in T_INDEX.iter().enumerate() {
        let z = rt[(b, a)];
        if k < 3 {
            grad[k] = 2.0 * z.re;
        } else {
            let slot = 3 + 2 * (k - 3);
            grad[slot] = 2.0 * z.re;
            grad[slot + 1] = -2.0 * z.im;
        }
    }
    (ll, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub f_rel: f64,
    pub step: f64,
    pub seed: u64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self { restarts: 5, max_iter: 100_000, f_rel: 1e-10, step: 1e-8, seed: 0x7e57 }
    }
}

#[derive(Debug, Clone)]
pub struct MleResult {
    pub state: TwoPhotonState,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Norm of the last accepted parameter step.
    pub residual: f64,
    /// Largest element difference between the best state and the other converged restarts.
    pub restart_spread: f64,
    /// Objective history of the best restart (−ℓ/N plus the scale penalty).
    pub history: Vec<f64>,
}

/// Maximizes the likelihood over ρ = T†T/Tr(T†T) by BFGS from several starts.
/// The objective −ℓ/N + (Tr T†T − 1)² fixes the otherwise flat scale.
pub fn mle_reconstruct(counts: &[f64], model: &MeasurementModel, opts: &MleOptions) -> Result<MleResult> {
    if counts.len() != model.len() {
        return Err(Error::InvalidParameter(format!("{} counts for {} settings", counts.len(), model.len())));
    }
    if counts.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
        return Err(Error::InvalidParameter("counts must be finite and nonnegative".into()));
    }
    let nonzero = counts.iter().filter(|&&c| c > 0.0).count();
    if nonzero < 9 {
        return Err(Error::InsufficientData(format!("{nonzero} settings with counts, need 9")));
    }
    let n_total: f64 = counts.iter().sum();
    let objective = |x: &[f64]| {
        let (ll, g) = log_likelihood(x, counts, model);
        let tr: f64 = x.iter().map(|v| v * v).sum();
        let pen = tr - 1.0;
        let f = -ll / n_total + pen * pen;
        let grad = g.iter().zip(x).map(|(gi, xi)| -gi / n_total + 4.0 * pen * xi).collect::<Vec<_>>();
        (if f.is_nan() { f64::INFINITY } else { f }, grad)
    };
    let tol = Tolerances { max_iter: opts.max_iter, f_rel: opts.f_rel, step: opts.step, grad: 0.0 };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut runs = Vec::with_capacity(opts.restarts.max(1));
    for k in 0..opts.restarts.max(1) {
        let x0: Vec<f64> = if k == 0 {
            let d = (1.0f64 / 3.0).sqrt();
            vec![d, d, d, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        } else {
            let mut v: Vec<f64> = (0..9).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            for d in &mut v[..3] {
                *d = d.abs() + 0.1;
            }
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            v.iter().map(|a| a / n).collect()
        };
        runs.push(bfgs(objective, &x0, tol));
    }

    let best = runs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.f.total_cmp(&b.1.f))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::NumericalFailure("no optimizer run".into()))?;
    let state = state_from_params(&runs[best].x)?;
    let mut spread: f64 = 0.0;
    for (i, r) in runs.iter().enumerate() {
        if i != best && r.converged {
            let s = state_from_params(&r.x)?;
            let d = (s.matrix() - state.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            spread = spread.max(d);
        }
    }
    let run = &runs[best];
    let (ll, _) = log_likelihood(&run.x, counts, model);
    Ok(MleResult {
        state,
        log_likelihood: ll,
        iterations: runs.iter().map(|r| r.iterations).sum(),
        converged: run.converged,
        residual: run.residual,
        restart_spread: spread,
        history: run.history.clone(),
    })
}

/// Embeds ρ3 into (|HH⟩, |HV⟩, |VH⟩, |VV⟩); the antisymmetric state gets no weight.
pub fn embed_4x4(state: &TwoPhotonState) -> CMatrix {
    let s = Complex64::from(std::f64::consts::FRAC_1_SQRT_2);
    let mut v = CMatrix::zeros(4, 3);
    v[(0, 0)] = Complex64::from(1.0);
    v[(1, 1)] = s;
    v[(2, 1)] = s;
    v[(3, 2)] = Complex64::from(1.0);
    &v * state.matrix() * v.adjoint()
}

/// Random state T†T/Tr with Gaussian entries in T, for tests and examples.
pub fn random_state<R: Rng>(rng: &mut R) -> TwoPhotonState {
    loop {
        let x: Vec<f64> = (0..9).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        if let Ok(s) = state_from_params(&x) {
            return s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polarization::Label;
    use crate::twophoton::ideal_states;
    use approx::assert_relative_eq;

    fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn setting(a: Label, b: Label) -> DetectorSetting {
        DetectorSetting::new(a, b)
    }

    #[test]
    fn diagonal_projectors() {
        let m = MeasurementModel::canonical().unwrap();
        let find = |s: DetectorSetting| m.settings().iter().position(|x| *x == s).unwrap();
        let hh = &m.projectors()[find(setting(Label::H, Label::H))];
        let hv = &m.projectors()[find(setting(Label::H, Label::V))];
        for i in 0..3 {
            for j in 0..3 {
                let e = |k: usize| if i == k && j == k { 1.0 } else { 0.0 };
                assert_relative_eq!(hh[(i, j)].norm(), e(0), epsilon = 1e-15);
                assert_relative_eq!(hv[(i, j)].norm(), e(1), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn pm_outcome_on_final_state() {
        // ψ_final = (|VP⟩ + |PV⟩ − |HM⟩ − |MH⟩)/(2√2) by a change of basis;
        // one detection order gives |⟨PM|ψ⟩|² = 1/4, the symmetrized projector 1/2
        let (_, f) = ideal_states();
        let rho = TwoPhotonState::pure(&f).unwrap();
        let model = MeasurementModel::new(&[setting(Label::P, Label::M)]);
        assert!(matches!(model, Err(Error::RankDeficient { rank: 1 })));
        let full = MeasurementModel::canonical().unwrap();
        let k = full.settings().iter().position(|s| *s == setting(Label::P, Label::M)).unwrap();
        assert_relative_eq!(outcome_traces(&rho, &full)[k], 0.5, epsilon = 1e-12);
        assert_relative_eq!(full.pair_weights()[k], 1.0, epsilon = 1e-15);

        // ordered amplitude ⟨P⊗M|ψ⟩ in the 4-dim product space
        let psi4 = [-0.5, 0.5, 0.5, 0.5];
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let (p, m) = ([s, s], [s, -s]);
        let amp = p[0] * m[0] * psi4[0] + p[0] * m[1] * psi4[1] + p[1] * m[0] * psi4[2] + p[1] * m[1] * psi4[3];
        assert_relative_eq!(amp * amp, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn hh_probability_of_final_state() {
        let (_, f) = ideal_states();
        let rho = TwoPhotonState::pure(&f).unwrap();
        let m = MeasurementModel::canonical().unwrap();
        let t = outcome_traces(&rho, &m);
        let get = |s: DetectorSetting| t[m.settings().iter().position(|x| *x == s).unwrap()];
        assert_relative_eq!(get(setting(Label::H, Label::H)), 0.25, epsilon = 1e-12);
        let sum = get(setting(Label::H, Label::H)) + get(setting(Label::H, Label::V));
        // VV is excluded from the canonical set; completeness uses the projector directly
        let vv = TwoPhotonState::pure(&f).unwrap().element(2, 2).re;
        assert_relative_eq!(sum + vv, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mixed_state_symmetry() {
        let m = MeasurementModel::new(&crate::polarization::Label::ALL
            .iter()
            .flat_map(|&a| Label::ALL.iter().map(move |&b| setting(a, b)))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect::<Vec<_>>())
        .unwrap();
        let p = predicted_probabilities(&TwoPhotonState::maximally_mixed(), &m);
        let get = |s: DetectorSetting| p[m.settings().iter().position(|x| *x == s).unwrap()];
        assert_relative_eq!(get(setting(Label::H, Label::H)), get(setting(Label::V, Label::V)), epsilon = 1e-15);
        assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn canonical_is_complete_and_subsets_are_not() {
        assert_eq!(MeasurementModel::canonical().unwrap().rank(), 9);
        let hv = [setting(Label::H, Label::H), setting(Label::H, Label::V), setting(Label::V, Label::V)];
        assert!(matches!(MeasurementModel::new(&hv), Err(Error::RankDeficient { rank: 3 })));
    }

    #[test]
    fn parametrization_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let s = random_state(&mut rng);
            let x = params_from_state(&s, 0.0);
            let back = state_from_params(&x).unwrap();
            assert!(max_diff(back.matrix(), s.matrix()) < 1e-10);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = MeasurementModel::canonical().unwrap();
        let truth = random_state(&mut rng);
        let counts = expected_counts(&truth, &m, 1e4);
        for _ in 0..5 {
            let x: Vec<f64> = (0..9).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let (_, g) = log_likelihood(&x, &counts, &m);
            for k in 0..9 {
                let h = 1e-6 * (1.0 + x[k].abs());
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let fd = (log_likelihood(&xp, &counts, &m).0 - log_likelihood(&xm, &counts, &m).0) / (2.0 * h);
                let scale = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
                assert!((fd - g[k]).abs() < 1e-6 * scale.max(1.0), "k={k}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn reconstructs_mixed_state_from_expected_counts() {
        let m = MeasurementModel::canonical().unwrap();
        let truth = TwoPhotonState::maximally_mixed();
        let r = mle_reconstruct(&expected_counts(&truth, &m, 1e6), &m, &MleOptions::default()).unwrap();
        assert!(r.converged);
        assert!(max_diff(r.state.matrix(), truth.matrix()) < 1e-6);
        assert!(r.restart_spread < 1e-6);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_count_settings_still_physical() {
        let m = MeasurementModel::canonical().unwrap();
        let mut counts = expected_counts(&TwoPhotonState::maximally_mixed(), &m, 1e3);
        for c in counts.iter_mut().take(5) {
            *c = 0.0;
        }
        let r = mle_reconstruct(&counts, &m, &MleOptions::default()).unwrap();
        TwoPhotonState::new(r.state.matrix().clone()).unwrap();
    }

    #[test]
    fn rejects_insufficient_counts() {
        let m = MeasurementModel::canonical().unwrap();
        let mut counts = vec![0.0; 19];
        counts[0] = 5.0;
        assert!(matches!(mle_reconstruct(&counts, &m, &MleOptions::default()), Err(Error::InsufficientData(_))));
        assert!(mle_reconstruct(&[1.0; 3], &m, &MleOptions::default()).is_err());
    }

    #[test]
    fn embedding() {
        let mut d = CMatrix::zeros(3, 3);
        d[(0, 0)] = Complex64::from(1.0);
        let e = embed_4x4(&TwoPhotonState::new(d).unwrap());
        assert_relative_eq!(e[(0, 0)].re, 1.0);
        assert_relative_eq!(e.iter().map(|z| z.norm()).sum::<f64>(), 1.0);

        let mut s = CMatrix::zeros(3, 3);
        s[(1, 1)] = Complex64::from(1.0);
        let e = embed_4x4(&TwoPhotonState::new(s).unwrap());
        for i in 1..3 {
            for j in 1..3 {
                assert_relative_eq!(e[(i, j)].re, 0.5, epsilon = 1e-15);
            }
        }
        assert_relative_eq!(e.trace().re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn embedding_has_no_antisymmetric_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let a = nalgebra::DVector::from_vec(vec![ZERO, Complex64::from(s), Complex64::from(-s), ZERO]);
        for _ in 0..5 {
            let e = embed_4x4(&random_state(&mut rng));
            let w = (a.adjoint() * &e * &a)[(0, 0)];
            assert!(w.norm() < 1e-12);
            assert_relative_eq!(e.trace().re, 1.0, epsilon = 1e-12);
        }
    }
}
