//! Entanglement and phase metrics of two-photon states, and the photon–photon
//! sign-flip gate protocol.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qops::CMatrix;
use crate::tomography::embed_4x4;
use crate::twophoton::{ideal_states, TwoPhotonState};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Default magnitude below which an off-diagonal element carries no phase.
pub const PHASE_THRESHOLD: f64 = 1e-4;

/// W with ρ = W W†, keeping eigenvectors whose eigenvalue exceeds the
/// round-off floor so that pure states factor exactly.
fn factor(m: &CMatrix) -> CMatrix {
    let h = (m + m.adjoint()) * Complex64::from(0.5);
    let eig = h.symmetric_eigen();
    let floor = 1e-14 * eig.eigenvalues.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let keep: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&k| eig.eigenvalues[k] > floor).collect();
    CMatrix::from_fn(m.nrows(), keep.len(), |r, c| {
        eig.eigenvectors[(r, keep[c])] * eig.eigenvalues[keep[c]].sqrt()
    })
}

fn check_density(rho: &CMatrix, dim: usize) -> Result<()> {
    if rho.nrows() != dim || rho.ncols() != dim {
        return Err(Error::NotPhysical(format!("expected {dim}x{dim}")));
    }
    let herm = (rho - rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tr = rho.trace();
    if herm > 1e-9 || (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
        return Err(Error::NotPhysical(format!("Hermiticity {herm:e}, trace {tr}")));
    }
    let h = (rho + rho.adjoint()) * Complex64::from(0.5);
    let min = h.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -1e-9 {
        return Err(Error::NotPhysical(format!("eigenvalue {min:e}")));
    }
    Ok(())
}

/// Wootters concurrence of a two-qubit density matrix.
///
/// With ρ = W W†, the λ_i (square roots of the eigenvalues of ρ ρ̃,
/// ρ̃ = (σ_y⊗σ_y) ρ* (σ_y⊗σ_y)) are the singular values of Wᵀ (σ_y⊗σ_y) W.
pub fn concurrence(rho4: &CMatrix) -> Result<f64> {
    check_density(rho4, 4)?;
    // σ_y⊗σ_y is real: antidiagonal (−1, 1, 1, −1)
    let mut yy = CMatrix::zeros(4, 4);
    for (i, s) in [-1.0, 1.0, 1.0, -1.0].into_iter().enumerate() {
        yy[(i, 3 - i)] = Complex64::from(s);
    }
    let w = factor(rho4);
    let m = w.transpose() * yy * &w;
    let mut lambda: Vec<f64> = m.singular_values().iter().copied().collect();
    lambda.resize(4, 0.0);
    lambda.sort_by(|a, b| b.total_cmp(a));
    Ok((lambda[0] - lambda[1] - lambda[2] - lambda[3]).clamp(0.0, 1.0))
}

/// Concurrence of the symmetric-subspace state.
pub fn state_concurrence(state: &TwoPhotonState) -> Result<f64> {
    concurrence(&embed_4x4(state))
}

/// Wraps to (−π, π].
pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// φ_nl = arg ρ_{HH,S} − arg ρ_{S,VV} in (−π, π].
pub fn nonlinear_phase(state: &TwoPhotonState, threshold: f64) -> Result<f64> {
    let a = state.element(0, 1);
    let b = state.element(1, 2);
    let magnitude = a.norm().min(b.norm());
    if magnitude < threshold {
        return Err(Error::UndefinedPhase { magnitude });
    }
    Ok(wrap_phase(a.arg() - b.arg()))
}

/// Phase in units of π on the branch (−0.5, 1.5], so values just beyond π stay unwrapped.
pub fn phase_in_pi_units(phi: f64) -> f64 {
    let v = wrap_phase(phi) / PI;
    if v <= -0.5 {
        v + 2.0
    } else {
        v
    }
}

/// Alternative estimator (not the reference one): magnitude-weighted circular
/// mean of the three off-diagonal combinations that isolate the nonlinear
/// phase, arg ρ01 − arg ρ12, arg ρ02 − 2 arg ρ12 and 2 arg ρ01 − arg ρ02.
pub fn combined_nonlinear_phase(state: &TwoPhotonState, threshold: f64) -> Result<f64> {
    let r01 = state.element(0, 1);
    let r12 = state.element(1, 2);
    let r02 = state.element(0, 2);
    let candidates = [
        (r01 * r12.conj(), r01.norm().min(r12.norm())),
        (r02 * r12.conj() * r12.conj(), r02.norm().min(r12.norm())),
        (r01 * r01 * r02.conj(), r01.norm().min(r02.norm())),
    ];
    let mut z = ZERO;
    let mut used = 0;
    for (v, w) in candidates {
        if w >= threshold && v.norm() > 0.0 {
            z += v / v.norm() * w;
            used += 1;
        }
    }
    if used == 0 || z.norm() == 0.0 {
        let magnitude = [r01.norm(), r12.norm(), r02.norm()].into_iter().fold(f64::INFINITY, f64::min);
        return Err(Error::UndefinedPhase { magnitude });
    }
    Ok(z.arg())
}

/// ⟨ψ|ρ|ψ⟩.
pub fn fidelity_pure(state: &TwoPhotonState, psi: &[Complex64; 3]) -> f64 {
    let v = DVector::from_column_slice(psi);
    (v.adjoint() * state.matrix() * &v)[(0, 0)].re
}

/// ⟨ψ_final|ρ|ψ_final⟩.
pub fn overlap_ideal(state: &TwoPhotonState) -> f64 {
    fidelity_pure(state, &ideal_states().1)
}

/// Uhlmann fidelity (Tr √(√σ ρ √σ))².
///
/// Tr|√σ √ρ| equals the sum of singular values of W_σ† W_ρ for any factors.
pub fn fidelity(rho: &TwoPhotonState, sigma: &TwoPhotonState) -> f64 {
    let m = factor(sigma.matrix()).adjoint() * factor(rho.matrix());
    let t: f64 = m.singular_values().iter().sum();
    (t * t).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overlap_ideal: f64,
    pub concurrence: f64,
    /// Radians in (−π, π]; `None` when undefined.
    pub nonlinear_phase: Option<f64>,
    /// Same phase in units of π on the display branch (−0.5, 1.5].
    pub nonlinear_phase_pi: Option<f64>,
    pub mean_delay_ns: Option<f64>,
    pub window_ns: Option<f64>,
}

impl MetricsReport {
    pub fn evaluate(state: &TwoPhotonState, threshold: f64) -> Result<Self> {
        let phase = match nonlinear_phase(state, threshold) {
            Ok(p) => Some(p),
            Err(Error::UndefinedPhase { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            overlap_ideal: overlap_ideal(state),
            concurrence: state_concurrence(state)?,
            nonlinear_phase: phase,
            nonlinear_phase_pi: phase.map(phase_in_pi_units),
            mean_delay_ns: None,
            window_ns: None,
        })
    }

    pub fn with_window(mut self, mean_delay_ns: f64, window_ns: f64) -> Self {
        self.mean_delay_ns = Some(mean_delay_ns);
        self.window_ns = Some(window_ns);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Photon1 {
    H,
    V,
    Stored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Photon2 {
    H,
    V,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Atom {
    Coupled,
    Uncoupled,
}

type Register = Vec<((Photon1, Photon2, Atom), Complex64)>;

fn add(reg: &mut Register, key: (Photon1, Photon2, Atom), amp: Complex64) {
    match reg.iter_mut().find(|(k, _)| *k == key) {
        Some((_, a)) => *a += amp,
        None => reg.push((key, amp)),
    }
}

/// Controlled sign flip by storage: (1) an H-polarized first photon is stored,
/// moving the atom to an uncoupled ground state; (2) the second photon's H part
/// meets either the blocked resonator (atom coupled, no phase) or the empty one
/// (π phase); V passes untouched; (3) the stored photon is released.
///
/// Input and output amplitudes are ordered (H₁H₂, H₁V₂, V₁H₂, V₁V₂).
pub fn sign_flip_gate(input: &[Complex64; 4]) -> Result<[Complex64; 4]> {
    let norm_sqr: f64 = input.iter().map(|c| c.norm_sqr()).sum();
    if (norm_sqr - 1.0).abs() > 1e-10 {
        return Err(Error::Unnormalized { norm_sqr });
    }
    let p1 = [Photon1::H, Photon1::H, Photon1::V, Photon1::V];
    let p2 = [Photon2::H, Photon2::V, Photon2::H, Photon2::V];
    let mut reg: Register = Vec::new();
    for k in 0..4 {
        add(&mut reg, (p1[k], p2[k], Atom::Coupled), input[k]);
    }

    let mut stored = Register::new();
    for &((a, b, atom), amp) in &reg {
        let key = match (a, atom) {
            (Photon1::H, Atom::Coupled) => (Photon1::Stored, b, Atom::Uncoupled),
            _ => (a, b, atom),
        };
        add(&mut stored, key, amp);
    }

    let mut passed = Register::new();
    for &((a, b, atom), amp) in &stored {
        let phase = match (b, atom) {
            (Photon2::H, Atom::Uncoupled) => -1.0,
            _ => 1.0,
        };
        add(&mut passed, (a, b, atom), amp * phase);
    }

    let mut out = [ZERO; 4];
    for &((a, b, atom), amp) in &passed {
        let (a, atom) = match (a, atom) {
            (Photon1::Stored, Atom::Uncoupled) => (Photon1::H, Atom::Coupled),
            other => other,
        };
        if atom != Atom::Coupled {
            return Err(Error::NumericalFailure("atom left uncoupled after retrieval".into()));
        }
        let k = match (a, b) {
            (Photon1::H, Photon2::H) => 0,
            (Photon1::H, Photon2::V) => 1,
            (Photon1::V, Photon2::H) => 2,
            (Photon1::V, Photon2::V) => 3,
            (Photon1::Stored, _) => return Err(Error::NumericalFailure("photon not retrieved".into())),
        };
        out[k] += amp;
    }
    Ok(out)
}

/// The gate as a 4×4 matrix, column k being the image of basis state k.
pub fn sign_flip_matrix() -> Result<CMatrix> {
    let mut m = CMatrix::zeros(4, 4);
    for k in 0..4 {
        let mut e = [ZERO; 4];
        e[k] = Complex64::from(1.0);
        let out = sign_flip_gate(&e)?;
        for (r, v) in out.iter().enumerate() {
            m[(r, k)] = *v;
        }
    }
    Ok(m)
}

/// |ψ⟩⟨ψ| for a 4-component pure state.
pub fn pure_density4(psi: &[Complex64; 4]) -> CMatrix {
    let v = DVector::from_column_slice(psi);
    &v * v.adjoint()
}
