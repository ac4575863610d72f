//! Operator algebra for the driven Jaynes–Cummings system on a truncated
//! Fock ⊗ two-level space, its Liouvillian, steady state, time evolution and
//! two-time correlators (quantum regression).
//!
//! Basis ordering: index = 2·n + a, with n the resonator photon number and
//! a ∈ {0 = ground, 1 = excited}. Density operators are vectorized
//! column-major, which is nalgebra's native storage order, so
//! vec(A X B) = (Bᵀ ⊗ A) vec(X).

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::SystemParams;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Default photon-number truncation.
pub const DEFAULT_N_MAX: usize = 3;

/// Truncated resonator ⊗ atom Hilbert space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Space {
    n_max: usize,
}

impl Default for Space {
    fn default() -> Self {
        Self { n_max: DEFAULT_N_MAX }
    }
}

impl Space {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 2 {
            return Err(Error::InvalidParameter(format!("n_max = {n_max} must be >= 2")));
        }
        Ok(Self { n_max })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        2 * (self.n_max + 1)
    }

    pub fn index(&self, photons: usize, excited: bool) -> usize {
        2 * photons + usize::from(excited)
    }

    pub fn identity(&self) -> CMatrix {
        CMatrix::identity(self.dim(), self.dim())
    }

    /// |n, a⟩⟨n, a|
    pub fn projector(&self, photons: usize, excited: bool) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim(), self.dim());
        let k = self.index(photons, excited);
        m[(k, k)] = ONE;
        m
    }
}

#[derive(Debug, Clone)]
pub struct Operators {
    pub b: CMatrix,
    pub b_dag: CMatrix,
    pub sigma_minus: CMatrix,
    pub sigma_plus: CMatrix,
}

impl Operators {
    pub fn number(&self) -> CMatrix {
        &self.b_dag * &self.b
    }

    pub fn excitation(&self) -> CMatrix {
        &self.sigma_plus * &self.sigma_minus
    }
}

pub fn build_operators(space: Space) -> Operators {
    let n = space.n_max + 1;
    let mut ladder = CMatrix::zeros(n, n);
    for k in 1..n {
        ladder[(k - 1, k)] = Complex64::from((k as f64).sqrt());
    }
    let mut lower = CMatrix::zeros(2, 2);
    lower[(0, 1)] = ONE;

    let b = ladder.kronecker(&CMatrix::identity(2, 2));
    let sigma_minus = CMatrix::identity(n, n).kronecker(&lower);
    Operators {
        b_dag: b.adjoint(),
        sigma_plus: sigma_minus.adjoint(),
        b,
        sigma_minus,
    }
}

/// H = Δ_rl b†b + Δ_al σ⁺σ⁻ + g(b†σ⁻ + bσ⁺) + √(2κ_f)(⟨a⟩* b + ⟨a⟩ b†).
pub fn build_hamiltonian(params: &SystemParams, space: Space) -> Result<CMatrix> {
    params.validate()?;
    let ops = build_operators(space);
    Ok(hamiltonian_from(params, &ops))
}

fn hamiltonian_from(params: &SystemParams, ops: &Operators) -> CMatrix {
    let pump = (2.0 * params.kappa_f).sqrt();
    let mut h = ops.number() * Complex64::from(params.delta_rl);
    h += ops.excitation() * Complex64::from(params.delta_al);
    h += (&ops.b_dag * &ops.sigma_minus + &ops.b * &ops.sigma_plus) * Complex64::from(params.g);
    h += &ops.b * (params.drive.conj() * pump);
    h += &ops.b_dag * (params.drive * pump);
    h
}

/// Generator of dρ/dt acting on column-vectorized density operators.
#[derive(Debug, Clone)]
pub struct SuperOperator {
    dim: usize,
    matrix: CMatrix,
}

impl SuperOperator {
    pub fn from_matrix(dim: usize, matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != dim * dim || matrix.ncols() != dim * dim {
            return Err(Error::InvalidParameter(format!(
                "superoperator must be {0}x{0}, got {1}x{2}",
                dim * dim,
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { dim, matrix })
    }

    /// Hilbert-space dimension the superoperator acts on.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        unvectorize(&(&self.matrix * vectorize(rho)), self.dim)
    }

    /// Row vector of the trace functional composed with the generator. Zero
    /// for a trace-preserving generator.
    pub fn trace_row(&self) -> CVector {
        let d = self.dim;
        let mut row = CVector::zeros(d * d);
        for k in 0..d {
            let diag = k * (d + 1);
            for c in 0..d * d {
                row[c] += self.matrix[(diag, c)];
            }
        }
        row
    }

    /// max-norm residual ‖L(ρ)‖.
    pub fn residual(&self, rho: &CMatrix) -> f64 {
        max_abs(&self.apply(rho))
    }

    fn scale(&self) -> f64 {
        max_abs(&self.matrix).max(1.0)
    }
}

pub fn vectorize(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

pub fn unvectorize(v: &CVector, dim: usize) -> CMatrix {
    CMatrix::from_column_slice(dim, dim, v.as_slice())
}

pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Lindblad generator with field decay κ_f + κ_i and atomic decay γ:
/// dρ/dt = −i[H,ρ] + κ(2bρb† − b†bρ − ρb†b) + γ(2σ⁻ρσ⁺ − σ⁺σ⁻ρ − ρσ⁺σ⁻).
pub fn build_liouvillian(params: &SystemParams, space: Space) -> Result<SuperOperator> {
    params.validate()?;
    let ops = build_operators(space);
    let h = hamiltonian_from(params, &ops);
    let d = space.dim();
    let id = CMatrix::identity(d, d);

    let mut l = (id.kronecker(&h) - h.transpose().kronecker(&id)) * (-I);
    for (rate, c) in [(params.kappa(), &ops.b), (params.gamma, &ops.sigma_minus)] {
        let cdc = c.adjoint() * c;
        let dissipator = c.conjugate().kronecker(c) * Complex64::from(2.0)
            - id.kronecker(&cdc)
            - cdc.transpose().kronecker(&id);
        l += dissipator * Complex64::from(rate);
    }
    SuperOperator::from_matrix(d, l)
}

/// Unique stationary state: L with its first row replaced by the trace
/// constraint, solved directly.
pub fn steady_state(l: &SuperOperator) -> Result<CMatrix> {
    let d = l.dim;
    let n = d * d;

    let svd = l.matrix.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let null_dim = svd.singular_values.iter().filter(|&&s| s <= 1e-10 * smax).count();
    if null_dim > 1 {
        return Err(Error::DegenerateSteadyState { null_dim });
    }

    let mut a = l.matrix.clone();
    for c in 0..n {
        a[(0, c)] = ZERO;
    }
    for k in 0..d {
        a[(0, k * (d + 1))] = ONE;
    }
    let mut rhs = CVector::zeros(n);
    rhs[0] = ONE;
    let x = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NumericalFailure("steady-state system is singular".into()))?;
    let rho = unvectorize(&x, d);
    let rho = (&rho + rho.adjoint()) * Complex64::from(0.5);

    let residual = l.residual(&rho);
    if residual > 1e-10 * l.scale() {
        return Err(Error::NumericalFailure(format!("steady-state residual {residual:.3e}")));
    }
    Ok(rho)
}

/// exp(Lτ) applied to ρ₀.
pub fn propagate(l: &SuperOperator, rho0: &CMatrix, tau: f64) -> Result<CMatrix> {
    if tau < 0.0 || !tau.is_finite() {
        return Err(Error::NegativeTime(tau));
    }
    if tau == 0.0 {
        return Ok(rho0.clone());
    }
    let u = (&l.matrix * Complex64::from(tau)).exp();
    Ok(unvectorize(&(u * vectorize(rho0)), l.dim))
}

/// Evolves a vectorized operator through an ascending grid of times, reusing
/// exp(L·Δτ) for repeated step sizes.
#[derive(Debug)]
pub struct GridEvolver<'a> {
    l: &'a SuperOperator,
    cache: HashMap<u64, CMatrix>,
}

impl<'a> GridEvolver<'a> {
    pub fn new(l: &'a SuperOperator) -> Self {
        Self { l, cache: HashMap::new() }
    }

    fn step(&mut self, dt: f64) -> &CMatrix {
        // steps equal to ~1e-12 relative share one key
        let key = (dt * 1e12).round() as u64;
        let l = self.l;
        self.cache
            .entry(key)
            .or_insert_with(|| (&l.matrix * Complex64::from(dt)).exp())
    }

    /// Calls `visit(k, x(τ_k))` for every grid point.
    pub fn evolve(
        &mut self,
        x0: &CVector,
        taus: &[f64],
        mut visit: impl FnMut(usize, &CVector),
    ) -> Result<()> {
        let mut t = 0.0;
        let mut x = x0.clone();
        for (k, &tau) in taus.iter().enumerate() {
            if !tau.is_finite() || tau < 0.0 {
                return Err(Error::NegativeTime(tau));
            }
            if tau < t {
                return Err(Error::UnsortedGrid);
            }
            let dt = tau - t;
            if dt > 0.0 {
                x = self.step(dt) * &x;
            }
            t = tau;
            visit(k, &x);
        }
        Ok(())
    }
}

/// Tr[O · e^{Lτ}(left ρ right†)] on an ascending τ grid.
pub fn regression(
    l: &SuperOperator,
    rho: &CMatrix,
    left: &CMatrix,
    right: &CMatrix,
    observable: &CMatrix,
    taus: &[f64],
) -> Result<Vec<Complex64>> {
    let x0 = vectorize(&(left * rho * right.adjoint()));
    // Tr[O X] = Σ_ij O_ji X_ij = vec(Oᵀ) · vec(X)
    let functional = vectorize(&observable.transpose());
    let mut out = vec![ZERO; taus.len()];
    GridEvolver::new(l).evolve(&x0, taus, |k, x| {
        out[k] = functional.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    })?;
    Ok(out)
}

/// G(τ) = Tr[B†B · e^{Lτ}(A ρ_ss A†)], the quantum-regression two-time
/// correlator ⟨A†(0) B†(τ) B(τ) A(0)⟩.
pub fn two_time_correlator(
    l: &SuperOperator,
    rho_ss: &CMatrix,
    a: &CMatrix,
    b: &CMatrix,
    taus: &[f64],
) -> Result<Vec<Complex64>> {
    let residual = l.residual(rho_ss);
    if residual > 1e-8 * l.scale() {
        return Err(Error::NotSteady { residual });
    }
    regression(l, rho_ss, a, a, &(b.adjoint() * b), taus)
}

pub fn expectation(op: &CMatrix, rho: &CMatrix) -> Complex64 {
    (op * rho).trace()
}
