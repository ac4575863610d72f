//! Two-photon physics: ideal input/output states, output-field operators,
//! delay-resolved coincidence rates from the quantum regression theorem, click
//! sampling, and the windowed state prediction.
//!
//! The input is a weak coherent beam with total amplitude `params.drive`,
//! polarization balanced as in [`crate::transmission::balance_input`]. Only its
//! H part drives the resonator. The transmitted H field is
//! a_H,out = a_H,in − i√(2κ_f) b; the V field passes unchanged.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::polarization::{DetectorSetting, Label, CIRCULAR_CONVENTION};
use crate::qops::{
    build_liouvillian, build_operators, expectation, steady_state, vectorize, CMatrix, GridEvolver, Space,
};
use crate::quadrature::GaussianCoupling;
use crate::tomography::{mle_reconstruct, MeasurementModel, MleOptions, MleResult};
use crate::transmission::{balanced_input, JonesVector};
use crate::units::ns_to_us;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Phase of the field leaking from the resonator into the fiber.
pub const OUT_COUPLING_PHASE: Complex64 = Complex64::new(0.0, -1.0);

/// Density matrix on the symmetric two-photon basis (|HH⟩, |S⟩, |VV⟩),
/// |S⟩ = (|HV⟩ + |VH⟩)/√2.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhotonState {
    rho: CMatrix,
}

impl TwoPhotonState {
    /// Validates Hermiticity (1e-12), unit trace (1e-10) and positivity (−1e-9).
    pub fn new(rho: CMatrix) -> Result<Self> {
        if rho.nrows() != 3 || rho.ncols() != 3 {
            return Err(Error::NotPhysical(format!("expected 3x3, got {}x{}", rho.nrows(), rho.ncols())));
        }
        let herm = (&rho - rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > 1e-12 {
            return Err(Error::NotPhysical(format!("not Hermitian (deviation {herm:e})")));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::NotPhysical(format!("trace {tr}")));
        }
        let min = min_eigenvalue(&rho);
        if min < -1e-9 {
            return Err(Error::NotPhysical(format!("eigenvalue {min:e}")));
        }
        Ok(Self { rho })
    }

    /// Hermitizes and renormalizes before validating.
    pub fn from_estimate(rho: &CMatrix) -> Result<Self> {
        let h = (rho + rho.adjoint()) * Complex64::from(0.5);
        let tr = h.trace().re;
        if !(tr > 0.0 && tr.is_finite()) {
            return Err(Error::NotPhysical(format!("trace {tr}")));
        }
        Self::new(h / Complex64::from(tr))
    }

    pub fn pure(psi: &[Complex64; 3]) -> Result<Self> {
        let norm_sqr: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
        if (norm_sqr - 1.0).abs() > 1e-10 {
            return Err(Error::Unnormalized { norm_sqr });
        }
        let v = nalgebra::Vector3::from_column_slice(psi);
        let m = v * v.adjoint();
        Self::new(CMatrix::from_fn(3, 3, |i, j| m[(i, j)]))
    }

    pub fn maximally_mixed() -> Self {
        Self { rho: CMatrix::identity(3, 3) / Complex64::from(3.0) }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.rho
    }

    pub fn element(&self, i: usize, j: usize) -> Complex64 {
        self.rho[(i, j)]
    }

    /// U ρ U† for a 3×3 unitary U.
    pub fn transformed(&self, u: &CMatrix) -> Result<Self> {
        Self::from_estimate(&(u * &self.rho * u.adjoint()))
    }

    /// Removes a single-photon phase θ between H and V: each photon gets
    /// diag(e^{−iθ}, 1), i.e. diag(e^{−2iθ}, e^{−iθ}, 1) on the symmetric basis.
    pub fn remove_single_photon_phase(&self, theta: f64) -> Result<Self> {
        let u = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::from_polar(1.0, -2.0 * theta),
            Complex64::from_polar(1.0, -theta),
            ONE,
        ]));
        self.transformed(&u)
    }
}

pub(crate) fn min_eigenvalue(rho: &CMatrix) -> f64 {
    let h = (rho + rho.adjoint()) * Complex64::from(0.5);
    h.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// (ψ_initial, ψ_final) on (|HH⟩, |S⟩, |VV⟩): P⊗P before the interaction and
/// the state with the π phase on |HH⟩ after it.
pub fn ideal_states() -> ([Complex64; 3], [Complex64; 3]) {
    let c = |x: f64| Complex64::from(x);
    let s = FRAC_1_SQRT_2;
    ([c(0.5), c(s), c(0.5)], [c(-0.5), c(s), c(0.5)])
}

/// Amplitudes of a product state u⊗v on the symmetric basis, unnormalized.
pub fn symmetric_product(u: [Complex64; 2], v: [Complex64; 2]) -> [Complex64; 3] {
    let r2 = std::f64::consts::SQRT_2;
    [
        u[0] * v[0],
        (u[0] * v[1] + u[1] * v[0]) * (0.5 * r2),
        u[1] * v[1],
    ]
}

/// A_u = c_b·b + c_0, an output-field mode as an operator on the resonator
/// space plus a c-number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputField {
    pub b_coefficient: Complex64,
    pub offset: Complex64,
}

impl OutputField {
    pub fn operator(&self, b: &CMatrix) -> CMatrix {
        let mut m = b * self.b_coefficient;
        for k in 0..m.nrows() {
            m[(k, k)] += self.offset;
        }
        m
    }

    pub fn is_scalar(&self) -> bool {
        self.b_coefficient == ZERO
    }
}

/// Output field projected on the analyzer state `label` for an input with
/// polarization `input` and total amplitude `params.drive`.
pub fn output_field_for(label: Label, params: &SystemParams, input: &JonesVector) -> OutputField {
    let [uh, uv] = label.jones();
    let a_h = params.drive * input.h;
    let a_v = params.drive * input.v;
    let leak = OUT_COUPLING_PHASE * (2.0 * params.kappa_f).sqrt();
    OutputField {
        b_coefficient: uh.conj() * leak,
        offset: uh.conj() * a_h + uv.conj() * a_v,
    }
}

/// [`output_field_for`] with the balanced input of `params`.
pub fn output_field(label: Label, params: &SystemParams) -> Result<OutputField> {
    Ok(output_field_for(label, params, &balanced_input(params)?))
}

/// Parameters of the resonator drive: ⟨a_H,in⟩ = drive·α_H.
fn driven(params: &SystemParams, input: &JonesVector, g: f64) -> SystemParams {
    SystemParams { g, drive: params.drive * input.h, ..*params }
}

/// t_H = ⟨a_H,out⟩/⟨a_H,in⟩ from the steady state of the master equation with
/// ⟨a_H,in⟩ = `params.drive` and coupling `params.g`.
pub fn master_equation_transmission(params: &SystemParams, space: Space) -> Result<Complex64> {
    if params.drive == ZERO {
        return Err(Error::InvalidParameter("drive must be nonzero".into()));
    }
    let l = build_liouvillian(params, space)?;
    let rho = steady_state(&l)?;
    let b = expectation(&build_operators(space).b, &rho);
    Ok(ONE + OUT_COUPLING_PHASE * (2.0 * params.kappa_f).sqrt() * b / params.drive)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub n_max: usize,
    /// Quadrature nodes over the coupling distribution.
    pub g_nodes: usize,
    /// Midpoint samples per delay bin (even).
    pub substeps: usize,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self { n_max: crate::qops::DEFAULT_N_MAX, g_nodes: 24, substeps: 4 }
    }
}

impl SimulationOptions {
    fn validate(&self) -> Result<Space> {
        if self.g_nodes == 0 {
            return Err(Error::InvalidParameter("g_nodes must be > 0".into()));
        }
        if self.substeps == 0 || self.substeps % 2 != 0 {
            return Err(Error::InvalidParameter("substeps must be even and > 0".into()));
        }
        Space::new(self.n_max)
    }
}

/// Bins of width `bin_width_ns` centered at k·width for k = −half_bins..=half_bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayGrid {
    pub bin_width_ns: f64,
    pub half_bins: usize,
}

impl DelayGrid {
    pub fn new(bin_width_ns: f64, half_bins: usize) -> Result<Self> {
        if !(bin_width_ns > 0.0 && bin_width_ns.is_finite()) {
            return Err(Error::InvalidParameter(format!("bin width {bin_width_ns} must be > 0")));
        }
        Ok(Self { bin_width_ns, half_bins })
    }

    /// Smallest grid reaching at least `max_delay_ns`.
    pub fn covering(bin_width_ns: f64, max_delay_ns: f64) -> Result<Self> {
        Self::new(bin_width_ns, (max_delay_ns / bin_width_ns).ceil().max(0.0) as usize)
    }

    pub fn len(&self) -> usize {
        2 * self.half_bins + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn centers_ns(&self) -> Vec<f64> {
        let k = self.half_bins as i64;
        (-k..=k).map(|i| i as f64 * self.bin_width_ns).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableMode {
    /// Coincidences per µs of acquisition in each bin.
    Rate,
    Count,
    /// Rate divided by the product of singles rates times the bin width.
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TableMeta {
    pub seed: Option<u64>,
    pub total_pairs: Option<f64>,
    /// Phase of ⟨a_V,out† a_H,out⟩, i.e. the single-photon H–V phase of the output.
    pub single_photon_phase: Option<f64>,
    pub circular_convention: String,
}

/// Per-setting, delay-binned coincidences on a shared bin grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceTable {
    pub mode: TableMode,
    pub bin_width_ns: f64,
    pub delays_ns: Vec<f64>,
    pub values: BTreeMap<DetectorSetting, Vec<f64>>,
    /// Uncorrelated expectation per bin (w·S_i·S_j), when known.
    pub baseline: Option<BTreeMap<DetectorSetting, Vec<f64>>>,
    pub meta: TableMeta,
}

/// Sliding coincidence window over the photon–photon delay |τ|, covering
/// |τ| ∈ [mean − width/2, mean + width/2] in both detection orders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub mean_delay_ns: f64,
    pub width_ns: f64,
}

impl Window {
    pub fn new(mean_delay_ns: f64, width_ns: f64) -> Result<Self> {
        if !(width_ns > 0.0 && width_ns.is_finite()) || !(mean_delay_ns >= 0.0 && mean_delay_ns.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "window mean {mean_delay_ns} ns, width {width_ns} ns"
            )));
        }
        Ok(Self { mean_delay_ns, width_ns })
    }

    pub fn lo_ns(&self) -> f64 {
        (self.mean_delay_ns - 0.5 * self.width_ns).max(0.0)
    }

    pub fn hi_ns(&self) -> f64 {
        self.mean_delay_ns + 0.5 * self.width_ns
    }

    pub fn contains(&self, delay_ns: f64) -> bool {
        let tol = 1e-9 * (1.0 + self.width_ns);
        (delay_ns.abs() - self.mean_delay_ns).abs() <= 0.5 * self.width_ns + tol
    }
}

impl CoincidenceTable {
    pub fn settings(&self) -> Vec<DetectorSetting> {
        self.values.keys().copied().collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width_ns > 0.0) {
            return Err(Error::InvalidParameter("bin width must be > 0".into()));
        }
        let n = self.delays_ns.len();
        for (s, v) in &self.values {
            if v.len() != n {
                return Err(Error::InvalidParameter(format!("setting {s}: {} bins, expected {n}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite() && self.mode != TableMode::Normalized) {
                return Err(Error::InvalidParameter(format!("setting {s}: non-finite value")));
            }
            if self.mode != TableMode::Normalized && v.iter().any(|&x| x < 0.0) {
                return Err(Error::InvalidParameter(format!("setting {s}: negative value")));
            }
            if self.mode == TableMode::Count && v.iter().any(|x| x.fract() != 0.0) {
                return Err(Error::InvalidParameter(format!("setting {s}: non-integer count")));
            }
        }
        Ok(())
    }

    /// Values divided by the baseline. Bins whose baseline is negligible
    /// (below 1e-12 of the largest) are undefined and reported as NaN.
    pub fn normalized(&self) -> Result<CoincidenceTable> {
        let baseline = self
            .baseline
            .as_ref()
            .ok_or_else(|| Error::InsufficientData("table has no baseline".into()))?;
        let max = baseline.values().flatten().copied().fold(0.0, f64::max);
        let values = self
            .values
            .iter()
            .map(|(s, v)| {
                let b = baseline.get(s).ok_or_else(|| Error::InsufficientData(format!("no baseline for {s}")))?;
                let row = v
                    .iter()
                    .zip(b)
                    .map(|(&x, &base)| if base > 1e-12 * max { x / base } else { f64::NAN })
                    .collect();
                Ok((*s, row))
            })
            .collect::<Result<_>>()?;
        Ok(CoincidenceTable { mode: TableMode::Normalized, values, baseline: None, ..self.clone() })
    }

    /// Sum over the bins inside `window`, per setting.
    pub fn window_sums(&self, window: &Window) -> Result<BTreeMap<DetectorSetting, f64>> {
        let inside: Vec<usize> = (0..self.delays_ns.len()).filter(|&k| window.contains(self.delays_ns[k])).collect();
        if inside.is_empty() {
            return Err(Error::EmptyWindow { lo: window.lo_ns(), hi: window.hi_ns() });
        }
        Ok(self.values.iter().map(|(s, v)| (*s, inside.iter().map(|&k| v[k]).sum())).collect())
    }

    pub fn series(&self, setting: DetectorSetting) -> Option<&[f64]> {
        self.values.get(&setting).map(Vec::as_slice)
    }

    /// Value of the bin whose center is closest to `delay_ns`.
    pub fn value_at(&self, setting: DetectorSetting, delay_ns: f64) -> Option<f64> {
        let k = self
            .delays_ns
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - delay_ns).abs().total_cmp(&(b.1 - delay_ns).abs()))?
            .0;
        self.values.get(&setting).map(|v| v[k])
    }
}

/// Correlations of one coupling node: singles S_i and G2_ij(τ_m) for all
/// ordered label pairs on a list of positive delays.
struct NodeCorrelations {
    singles: [f64; 6],
    /// g2[m][i][j] = ⟨A_i† A_j†(τ_m) A_j(τ_m) A_i⟩
    g2: Vec<[[f64; 6]; 6]>,
    cross: Complex64,
}

fn node_correlations(
    params: &SystemParams,
    input: &JonesVector,
    g: f64,
    space: Space,
    taus_us: &[f64],
) -> Result<NodeCorrelations> {
    let p = driven(params, input, g);
    let l = build_liouvillian(&p, space)?;
    let rho = steady_state(&l)?;
    let b = build_operators(space).b;
    let fields: Vec<CMatrix> = Label::ALL.iter().map(|&u| output_field_for(u, params, input).operator(&b)).collect();
    let mut singles = [0.0; 6];
    let mut functionals = Vec::with_capacity(6);
    for (i, a) in fields.iter().enumerate() {
        let n = a.adjoint() * a;
        singles[i] = expectation(&n, &rho).re;
        functionals.push(vectorize(&n.transpose()));
    }
    let cross = expectation(&(fields[Label::V.index()].adjoint() * &fields[Label::H.index()]), &rho);

    let mut g2 = vec![[[0.0; 6]; 6]; taus_us.len()];
    let mut evolver = GridEvolver::new(&l);
    for (i, a) in fields.iter().enumerate() {
        let x0 = vectorize(&(a * &rho * a.adjoint()));
        evolver.evolve(&x0, taus_us, |m, x| {
            for (j, f) in functionals.iter().enumerate() {
                g2[m][i][j] = f.iter().zip(x.iter()).map(|(u, v)| u * v).sum::<Complex64>().re;
            }
        })?;
    }
    Ok(NodeCorrelations { singles, g2, cross })
}

/// Coupling-averaged correlations on `taus_us`.
struct Averaged {
    /// Σ w S_i S_j, per ordered pair.
    singles_product: [[f64; 6]; 6],
    g2: Vec<[[f64; 6]; 6]>,
    cross: Complex64,
}

fn averaged_correlations(
    params: &SystemParams,
    input: &JonesVector,
    space: Space,
    g_nodes: usize,
    taus_us: &[f64],
) -> Result<Averaged> {
    let nodes = GaussianCoupling::new(params.g_mean, params.g_sigma).nodes(g_nodes);
    let per_node: Vec<(f64, NodeCorrelations)> = nodes
        .par_iter()
        .map(|&(g, w)| node_correlations(params, input, g, space, taus_us).map(|c| (w, c)))
        .collect::<Result<_>>()?;
    let mut out = Averaged { singles_product: [[0.0; 6]; 6], g2: vec![[[0.0; 6]; 6]; taus_us.len()], cross: ZERO };
    for (w, c) in &per_node {
        for i in 0..6 {
            for j in 0..6 {
                out.singles_product[i][j] += w * c.singles[i] * c.singles[j];
            }
        }
        for (acc, v) in out.g2.iter_mut().zip(&c.g2) {
            for i in 0..6 {
                for j in 0..6 {
                    acc[i][j] += w * v[i][j];
                }
            }
        }
        out.cross += c.cross * *w;
    }
    let max = out.g2.iter().flatten().flatten().copied().fold(0.0, f64::max);
    let min = out.g2.iter().flatten().flatten().copied().fold(0.0, f64::min);
    if min < -1e-10 * max.max(f64::MIN_POSITIVE) {
        return Err(Error::NumericalFailure(format!("negative coincidence rate {min:e}")));
    }
    for v in out.g2.iter_mut().flatten().flatten() {
        *v = v.max(0.0);
    }
    Ok(out)
}

fn check_drive(params: &SystemParams) -> Result<()> {
    params.validate()?;
    if params.drive == ZERO {
        return Err(Error::InvalidParameter("drive must be nonzero".into()));
    }
    Ok(())
}

/// Delay-binned coincidence rates for `settings`, averaged over the coupling
/// distribution. Each bin is integrated with `substeps` midpoint samples.
/// Positive delays mean the photon at `setting.first()` was detected first.
pub fn coincidence_rates(
    params: &SystemParams,
    settings: &[DetectorSetting],
    grid: &DelayGrid,
    opts: &SimulationOptions,
) -> Result<CoincidenceTable> {
    check_drive(params)?;
    let space = opts.validate()?;
    let input = balanced_input(params)?;
    let s = opts.substeps;
    let w_us = ns_to_us(grid.bin_width_ns);
    let h = w_us / s as f64;
    let n_samples = grid.half_bins * s + s / 2;
    let taus: Vec<f64> = (0..n_samples).map(|m| (m as f64 + 0.5) * h).collect();
    let avg = averaged_correlations(params, &input, space, opts.g_nodes, &taus)?;

    let k_max = grid.half_bins as i64;
    let s_i = s as i64;
    let mut values = BTreeMap::new();
    let mut baseline = BTreeMap::new();
    for &setting in settings {
        let (a, b) = (setting.first().index(), setting.second().index());
        let mut row = Vec::with_capacity(grid.len());
        for k in -k_max..=k_max {
            let mut acc = 0.0;
            for j in 0..s_i {
                // sample at (m + ½)h with m possibly negative
                let m = k * s_i - s_i / 2 + j;
                acc += if m >= 0 { avg.g2[m as usize][a][b] } else { avg.g2[(-m - 1) as usize][b][a] };
            }
            row.push(w_us * acc / s as f64);
        }
        values.insert(setting, row);
        baseline.insert(setting, vec![w_us * avg.singles_product[a][b]; grid.len()]);
    }
    Ok(CoincidenceTable {
        mode: TableMode::Rate,
        bin_width_ns: grid.bin_width_ns,
        delays_ns: grid.centers_ns(),
        values,
        baseline: Some(baseline),
        meta: TableMeta {
            single_photon_phase: Some(avg.cross.arg()),
            circular_convention: CIRCULAR_CONVENTION.to_string(),
            ..TableMeta::default()
        },
    })
}

/// Normalized correlation G2_ij(τ)/(S_i S_j) at exact delays (µs, either
/// sign), averaged over the coupling distribution as a ratio of averages.
pub fn normalized_correlation(
    params: &SystemParams,
    first: Label,
    second: Label,
    taus_us: &[f64],
    opts: &SimulationOptions,
) -> Result<Vec<f64>> {
    check_drive(params)?;
    let space = opts.validate()?;
    let input = balanced_input(params)?;
    let mut abs: Vec<f64> = taus_us.iter().map(|t| t.abs()).collect();
    abs.sort_by(f64::total_cmp);
    abs.dedup();
    let avg = averaged_correlations(params, &input, space, opts.g_nodes, &abs)?;
    let (a, b) = (first.index(), second.index());
    let base = avg.singles_product[a][b];
    Ok(taus_us
        .iter()
        .map(|&t| {
            let m = abs.partition_point(|&x| x < t.abs());
            let v = if t >= 0.0 { avg.g2[m][a][b] } else { avg.g2[m][b][a] };
            v / base
        })
        .collect())
}

/// Poisson click counts with total expectation `total_pairs` distributed in
/// proportion to the table values.
pub fn sample_clicks(table: &CoincidenceTable, total_pairs: f64, seed: u64) -> Result<CoincidenceTable> {
    if !(total_pairs > 0.0 && total_pairs.is_finite()) {
        return Err(Error::InvalidParameter(format!("total_pairs = {total_pairs} must be > 0")));
    }
    if table.mode == TableMode::Normalized {
        return Err(Error::InvalidParameter("cannot sample from a normalized table".into()));
    }
    table.validate()?;
    let total: f64 = table.values.values().flatten().sum();
    let scale = if total > 0.0 { total_pairs / total } else { 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = BTreeMap::new();
    for (s, row) in &table.values {
        let counts = row.iter().map(|&v| poisson(&mut rng, v * scale)).collect::<Result<_>>()?;
        values.insert(*s, counts);
    }
    let baseline = table
        .baseline
        .as_ref()
        .map(|b| b.iter().map(|(s, row)| (*s, row.iter().map(|v| v * scale).collect())).collect());
    Ok(CoincidenceTable {
        mode: TableMode::Count,
        values,
        baseline,
        meta: TableMeta { seed: Some(seed), total_pairs: Some(total_pairs), ..table.meta.clone() },
        ..table.clone()
    })
}

pub(crate) fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> Result<f64> {
    if mean <= 0.0 {
        return Ok(0.0);
    }
    let d = Poisson::new(mean).map_err(|e| Error::NumericalFailure(format!("Poisson({mean}): {e}")))?;
    Ok(d.sample(rng))
}

/// Predicted state for one coincidence window.
#[derive(Debug, Clone)]
pub struct WindowedState {
    /// Reconstruction with the single-photon phase removed.
    pub state: TwoPhotonState,
    /// Reconstruction in the laboratory polarization frame.
    pub lab_state: TwoPhotonState,
    pub single_photon_phase: f64,
    /// Expected (unnormalized) window coincidences per canonical setting.
    pub expected: Vec<f64>,
    pub mle: MleResult,
}

/// Integrates the predicted coincidences over `window`, reconstructs the state
/// with the same maximum-likelihood fit applied to measured data, and removes
/// the single-photon phase so that an empty resonator yields P⊗P.
pub fn windowed_state(params: &SystemParams, window: &Window, opts: &SimulationOptions) -> Result<WindowedState> {
    check_drive(params)?;
    let space = opts.validate()?;
    let input = balanced_input(params)?;
    let (lo, hi) = (ns_to_us(window.lo_ns()), ns_to_us(window.hi_ns()));
    if hi <= lo {
        return Err(Error::EmptyWindow { lo: window.lo_ns(), hi: window.hi_ns() });
    }
    // midpoint rule, at least 8 samples and ≤ 0.125 ns spacing
    let n = (((hi - lo) / ns_to_us(0.125)).ceil() as usize).max(8);
    let h = (hi - lo) / n as f64;
    let taus: Vec<f64> = (0..n).map(|m| lo + (m as f64 + 0.5) * h).collect();
    let avg = averaged_correlations(params, &input, space, opts.g_nodes, &taus)?;

    let model = MeasurementModel::canonical()?;
    let expected: Vec<f64> = model
        .settings()
        .iter()
        .map(|s| {
            let (a, b) = (s.first().index(), s.second().index());
            avg.g2.iter().map(|g| h * (g[a][b] + g[b][a])).sum()
        })
        .collect();
    let total: f64 = expected.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InsufficientData("no coincidences in window".into()));
    }
    let counts: Vec<f64> = expected.iter().map(|e| e / total * 1e6).collect();
    let mle = mle_reconstruct(&counts, &model, &MleOptions::default())?;
    let theta = avg.cross.arg();
    Ok(WindowedState {
        state: mle.state.remove_single_photon_phase(theta)?,
        lab_state: mle.state.clone(),
        single_photon_phase: theta,
        expected,
        mle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polarization::canonical_settings;
    use crate::transmission::atom_transmission;
    use crate::units::angular;
    use approx::assert_relative_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::from(re)
    }

    #[test]
    fn ideal_states_normalized() {
        let (i, f) = ideal_states();
        let n = |v: &[Complex64; 3]| v.iter().map(|z| z.norm_sqr()).sum::<f64>();
        assert_relative_eq!(n(&i), 1.0, epsilon = 1e-15);
        assert_relative_eq!(n(&f), 1.0, epsilon = 1e-15);
        let ov: Complex64 = i.iter().zip(&f).map(|(a, b)| a.conj() * b).sum();
        assert_relative_eq!(ov.norm_sqr(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn initial_state_is_pp() {
        let p = Label::P.jones();
        let pp = symmetric_product(p, p);
        let (i, _) = ideal_states();
        for k in 0..3 {
            assert_relative_eq!((pp[k] - i[k]).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn state_validation() {
        assert!(TwoPhotonState::new(CMatrix::identity(3, 3)).is_err());
        assert!(TwoPhotonState::pure(&[c(1.0), c(1.0), c(0.0)]).is_err());
        let mut m = CMatrix::zeros(3, 3);
        m[(0, 0)] = c(1.5);
        m[(2, 2)] = c(-0.5);
        assert!(matches!(TwoPhotonState::new(m), Err(Error::NotPhysical(_))));
        TwoPhotonState::new(TwoPhotonState::maximally_mixed().matrix().clone()).unwrap();
    }

    #[test]
    fn phase_removal_maps_mm_to_pp() {
        let m = Label::M.jones();
        let mm = symmetric_product(m, m);
        let s = TwoPhotonState::pure(&mm).unwrap().remove_single_photon_phase(std::f64::consts::PI).unwrap();
        let (i, _) = ideal_states();
        let pp = TwoPhotonState::pure(&i).unwrap();
        let diff = (s.matrix() - pp.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn output_fields() {
        let p = SystemParams::default();
        let v = output_field(Label::V, &p).unwrap();
        assert!(v.is_scalar());
        let input = balanced_input(&p).unwrap();
        assert_relative_eq!((v.offset - p.drive * input.v).norm(), 0.0, epsilon = 1e-15);

        let q = p.with_kappa_f(0.0);
        let h = output_field(Label::H, &q).unwrap();
        assert!(h.is_scalar());

        let fh = output_field(Label::H, &p).unwrap();
        let fv = output_field(Label::V, &p).unwrap();
        let fp = output_field(Label::P, &p).unwrap();
        let s = FRAC_1_SQRT_2;
        assert_relative_eq!((fp.b_coefficient - (fh.b_coefficient + fv.b_coefficient) * s).norm(), 0.0, epsilon = 1e-15);
        assert_relative_eq!((fp.offset - (fh.offset + fv.offset) * s).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn weak_drive_matches_analytic() {
        let p = SystemParams { delta_al: angular(1.3), delta_rl: angular(-0.7), drive: c(0.02), ..SystemParams::default() };
        let t_me = master_equation_transmission(&p, Space::default()).unwrap();
        let t_an = atom_transmission(&p, p.g).unwrap();
        assert!((t_me - t_an).norm() < 1e-3, "{t_me} vs {t_an}");
    }

    fn quick() -> SimulationOptions {
        SimulationOptions { g_nodes: 6, ..SimulationOptions::default() }
    }

    #[test]
    fn empty_resonator_is_flat() {
        let p = SystemParams::default().with_fixed_coupling(0.0);
        let grid = DelayGrid::new(1.0, 5).unwrap();
        let t = coincidence_rates(&p, &canonical_settings(), &grid, &quick()).unwrap();
        let norm = t.normalized().unwrap();
        for (s, row) in &norm.values {
            for (k, v) in row.iter().enumerate() {
                if v.is_nan() {
                    assert!(t.values[s][k] < 1e-15, "{s}");
                } else {
                    assert!((v - 1.0).abs() < 1e-6, "{s}: {v}");
                }
            }
        }
    }

    #[test]
    fn swapped_order_flips_delay() {
        let p = SystemParams::default();
        let opts = quick();
        let taus = [-0.004, 0.0015, 0.01];
        let ab = normalized_correlation(&p, Label::R, Label::P, &taus, &opts).unwrap();
        let neg: Vec<f64> = taus.iter().map(|t| -t).collect();
        let ba = normalized_correlation(&p, Label::P, Label::R, &neg, &opts).unwrap();
        for (x, y) in ab.iter().zip(&ba) {
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
    }

    #[test]
    fn table_rates_nonnegative_and_shared_grid() {
        let p = SystemParams::default();
        let grid = DelayGrid::new(2.0, 3).unwrap();
        let t = coincidence_rates(&p, &canonical_settings(), &grid, &quick()).unwrap();
        t.validate().unwrap();
        assert_eq!(t.values.len(), 19);
        assert_eq!(t.delays_ns, vec![-6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn sampling_zero_and_deterministic() {
        let p = SystemParams::default();
        let grid = DelayGrid::new(1.0, 2).unwrap();
        let t = coincidence_rates(&p, &canonical_settings(), &grid, &quick()).unwrap();
        let a = sample_clicks(&t, 1e4, 7).unwrap();
        let b = sample_clicks(&t, 1e4, 7).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        let mut zero = t.clone();
        zero.values.values_mut().flatten().for_each(|v| *v = 0.0);
        let z = sample_clicks(&zero, 1e4, 1).unwrap();
        assert!(z.values.values().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn window_selection() {
        let t = CoincidenceTable {
            mode: TableMode::Count,
            bin_width_ns: 1.0,
            delays_ns: vec![-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0],
            values: [(DetectorSetting::new(Label::H, Label::V), vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0])]
                .into_iter()
                .collect(),
            baseline: None,
            meta: TableMeta::default(),
        };
        let s = |w: Window| t.window_sums(&w).unwrap().values().next().copied().unwrap();
        assert_eq!(s(Window::new(0.0, 3.0).unwrap()), 28.0);
        assert_eq!(s(Window::new(2.0, 1.0).unwrap()), 34.0);
        assert!(matches!(t.window_sums(&Window::new(10.0, 1.0).unwrap()), Err(Error::EmptyWindow { .. })));
    }

    #[test]
    fn window_rejects_bad_width() {
        assert!(Window::new(0.0, 0.0).is_err());
        assert!(Window::new(-1.0, 1.0).is_err());
    }
}
