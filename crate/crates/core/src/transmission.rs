//! Single-photon input–output model of the fiber-coupled resonator.
//!
//! H-polarized light couples to the resonator with amplitude transmission
//! t_H = (κ_L − κ_f + iΔ_rl)/(κ_L + κ_f + iΔ_rl), where the loss rate κ_L is
//! κ_i for the empty resonator and κ_i + g²/(γ + iΔ_al) with a coupled atom.
//! V-polarized light passes with unit transmission.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{nelder_mead, Tolerances};
use crate::params::SystemParams;
use crate::polarization::Label;
use crate::quadrature::{GaussianCoupling, DEFAULT_ORDER};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JonesVector {
    pub h: Complex64,
    pub v: Complex64,
}

impl JonesVector {
    pub fn new(h: Complex64, v: Complex64) -> Self {
        Self { h, v }
    }

    pub fn from_label(label: Label) -> Self {
        let [h, v] = label.jones();
        Self { h, v }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.h.norm_sqr() + self.v.norm_sqr()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidParameter("Jones vector has zero or non-finite norm".into()));
        }
        let s = 1.0 / n.sqrt();
        Ok(Self { h: self.h * s, v: self.v * s })
    }

    /// ⟨u|self⟩ for the analyzer state `label`.
    pub fn amplitude_on(&self, label: Label) -> Complex64 {
        let [uh, uv] = label.jones();
        uh.conj() * self.h + uv.conj() * self.v
    }

    /// Power transmitted to the detector `label`.
    pub fn power_on(&self, label: Label) -> f64 {
        self.amplitude_on(label).norm_sqr()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionResult {
    pub t_h: Complex64,
    pub t_v: Complex64,
    pub jones_out: JonesVector,
    pub p_overlap: f64,
    pub survival: f64,
}

/// κ_L = g²/(γ + iΔ_al) + κ_i.
pub fn effective_loss_rate(g: f64, gamma: f64, delta_al: f64, kappa_i: f64) -> Result<Complex64> {
    let denom = Complex64::new(gamma, delta_al);
    if denom.norm() == 0.0 {
        if g == 0.0 {
            return Ok(Complex64::from(kappa_i));
        }
        return Err(Error::Singular("gamma + i*delta_al = 0"));
    }
    Ok(Complex64::from(g * g) / denom + kappa_i)
}

pub fn amplitude_transmission(kappa_l: Complex64, kappa_f: f64, delta_rl: f64) -> Result<Complex64> {
    let denom = kappa_l + kappa_f + Complex64::new(0.0, delta_rl);
    if denom.norm() == 0.0 {
        return Err(Error::Singular("kappa_L + kappa_f + i*delta_rl = 0"));
    }
    Ok((kappa_l - kappa_f + Complex64::new(0.0, delta_rl)) / denom)
}

/// t_{H,0}: transmission of the empty resonator.
pub fn empty_transmission(params: &SystemParams) -> Result<Complex64> {
    amplitude_transmission(Complex64::from(params.kappa_i), params.kappa_f, params.delta_rl)
}

/// t_{H,A} at coupling `g` with the atom present.
pub fn atom_transmission(params: &SystemParams, g: f64) -> Result<Complex64> {
    let kl = effective_loss_rate(g, params.gamma, params.delta_al, params.kappa_i)?;
    amplitude_transmission(kl, params.kappa_f, params.delta_rl)
}

/// Input with α_V = −t_{H,0} α_H, normalized to unit power; the empty
/// resonator then emits M-polarized light with |t_{H,0} α_H| = |α_V|.
/// Continuous through critical coupling, where it tends to pure H.
fn balanced_amplitudes(t0: Complex64) -> JonesVector {
    let h = 1.0 / (1.0 + t0.norm_sqr()).sqrt();
    JonesVector { h: Complex64::from(h), v: -t0 * h }
}

pub fn balance_input(kappa_f: f64, kappa_i: f64, delta_rl: f64) -> Result<JonesVector> {
    let t0 = amplitude_transmission(Complex64::from(kappa_i), kappa_f, delta_rl)?;
    if t0.norm() < 1e-12 {
        return Err(Error::Unbalanceable);
    }
    Ok(balanced_amplitudes(t0))
}

/// Balanced input for `params` (see [`balance_input`]).
pub fn balanced_input(params: &SystemParams) -> Result<JonesVector> {
    balance_input(params.kappa_f, params.kappa_i, params.delta_rl)
}

fn result_for(jones_in: &JonesVector, t_h: Complex64) -> TransmissionResult {
    let out = JonesVector { h: t_h * jones_in.h, v: jones_in.v };
    let total = out.norm_sqr();
    let p_overlap = if total > 0.0 { out.power_on(Label::P) / total } else { 0.0 };
    TransmissionResult {
        t_h,
        t_v: Complex64::from(1.0),
        jones_out: out,
        p_overlap,
        survival: total / jones_in.norm_sqr(),
    }
}

/// Pushes `jones_in` through the resonator, with or without the atom at `params.g`.
pub fn transmit(jones_in: &JonesVector, params: &SystemParams, atom_present: bool) -> Result<TransmissionResult> {
    let n = jones_in.norm_sqr();
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::InvalidParameter("input Jones vector is zero".into()));
    }
    let t_h = if atom_present { atom_transmission(params, params.g)? } else { empty_transmission(params)? };
    Ok(result_for(jones_in, t_h))
}

/// ⟨f⟩ over the truncated normal distribution N(g_mean, g_sigma); `f`
/// receives a copy of `params` with `g` set to each quadrature node.
pub fn average_over_g<F>(params: &SystemParams, order: usize, mut observable: F) -> Result<f64>
where
    F: FnMut(&SystemParams) -> Result<f64>,
{
    if params.g_sigma < 0.0 {
        return Err(Error::InvalidParameter("g_sigma must be >= 0".into()));
    }
    let dist = GaussianCoupling::new(params.g_mean, params.g_sigma);
    let mut acc = 0.0;
    for (g, w) in dist.nodes(order) {
        acc += w * observable(&params.with_g(g))?;
    }
    Ok(acc)
}

/// One row of the coupling sweep. Powers are normalized to the total input
/// power; the `*_empty` fields describe the resonator without atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kappa_f_over_kappa_i: f64,
    pub p_overlap: f64,
    pub survival: f64,
    pub t2_h: f64,
    pub t2_v: f64,
    pub t2_p: f64,
    pub t2_m: f64,
    pub t2_h_empty: f64,
    pub t2_v_empty: f64,
    pub t2_p_empty: f64,
    pub t2_m_empty: f64,
}

#[derive(Debug, Clone, Copy)]
struct Powers {
    p_overlap: f64,
    survival: f64,
    h: f64,
    v: f64,
    p: f64,
    m: f64,
}

fn powers(jones_in: &JonesVector, t_h: Complex64) -> Powers {
    let r = result_for(jones_in, t_h);
    let o = r.jones_out;
    Powers {
        p_overlap: r.p_overlap,
        survival: r.survival,
        h: o.power_on(Label::H),
        v: o.power_on(Label::V),
        p: o.power_on(Label::P),
        m: o.power_on(Label::M),
    }
}

fn sweep_row(params: &SystemParams, ratio: f64, order: usize) -> Result<SweepRow> {
    let p = params.with_kappa_f(ratio * params.kappa_i);
    let t0 = empty_transmission(&p)?;
    let input = balanced_amplitudes(t0);
    let empty = powers(&input, t0);

    let dist = GaussianCoupling::new(p.g_mean, p.g_sigma);
    let mut acc = [0.0; 6];
    for (g, w) in dist.nodes(order) {
        let a = powers(&input, atom_transmission(&p, g)?);
        for (slot, v) in acc.iter_mut().zip([a.p_overlap, a.survival, a.h, a.v, a.p, a.m]) {
            *slot += w * v;
        }
    }
    Ok(SweepRow {
        kappa_f_over_kappa_i: ratio,
        p_overlap: acc[0],
        survival: acc[1],
        t2_h: acc[2],
        t2_v: acc[3],
        t2_p: acc[4],
        t2_m: acc[5],
        t2_h_empty: empty.h,
        t2_v_empty: empty.v,
        t2_p_empty: empty.p,
        t2_m_empty: empty.m,
    })
}

/// Gaussian-averaged polarization change for each κ_f/κ_i in `grid`
/// (nonempty, strictly ascending). The input is re-balanced at every κ_f.
pub fn sweep_coupling(params: &SystemParams, grid: &[f64], order: usize) -> Result<Vec<SweepRow>> {
    params.validate()?;
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) || grid[0] <= 0.0 {
        return Err(Error::UnsortedGrid);
    }
    grid.par_iter().map(|&r| sweep_row(params, r, order)).collect()
}

/// Evenly spaced grid of `points` values from `start` to `stop` inclusive.
pub fn linear_grid(start: f64, stop: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..points)
            .map(|k| start + (stop - start) * k as f64 / (points - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingFit {
    pub g_mean: f64,
    pub g_sigma: f64,
    pub sum_sq: f64,
    pub converged: bool,
}

/// Unweighted least-squares fit of (ḡ, σ_g) to measured P-overlap and survival
/// curves; every other parameter stays fixed at its value in `params`.
pub fn fit_coupling_distribution(
    params: &SystemParams,
    grid: &[f64],
    overlap: &[f64],
    survival: &[f64],
    order: usize,
) -> Result<CouplingFit> {
    if grid.len() != overlap.len() || grid.len() != survival.len() {
        return Err(Error::InvalidParameter("fit data length mismatch".into()));
    }
    // fit in units of κ_i for conditioning
    let unit = params.kappa_i;
    let cost = |x: &[f64]| -> f64 {
        let p = SystemParams { g_mean: x[0].abs() * unit, g_sigma: x[1].abs() * unit, ..*params };
        match sweep_coupling(&p, grid, order) {
            Ok(rows) => rows
                .iter()
                .zip(overlap.iter().zip(survival))
                .map(|(r, (o, s))| (r.p_overlap - o).powi(2) + (r.survival - s).powi(2))
                .sum(),
            Err(_) => f64::INFINITY,
        }
    };
    let x0 = [params.g_mean / unit, params.g_sigma.max(0.1 * params.g_mean) / unit];
    let tol = Tolerances { max_iter: 2000, f_rel: 1e-12, step: 1e-7, grad: 0.0 };
    let m = nelder_mead(cost, &x0, &[0.2 * x0[0].max(0.1), 0.2 * x0[1].max(0.1)], tol);
    Ok(CouplingFit {
        g_mean: m.x[0].abs() * unit,
        g_sigma: m.x[1].abs() * unit,
        sum_sq: m.f,
        converged: m.converged,
    })
}

/// Default quadrature order for analytic averages.
pub const QUADRATURE_ORDER: usize = DEFAULT_ORDER;
