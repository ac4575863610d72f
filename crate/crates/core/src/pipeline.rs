//! End-to-end runs behind the `wgm-nl` subcommands. Each writes plot-ready
//! CSV/TOML files and a manifest into the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_metrics, BootstrapOptions, BootstrapReport};
use crate::config::{Frame, RunConfig};
use crate::error::{Error, Result};
use crate::io::{self, Manifest, MatrixRecord};
use crate::metrics::{self, phase_in_pi_units, MetricsReport};
use crate::params::SystemParams;
use crate::qops::{self, Space};
use crate::tomography::{self, embed_4x4, MeasurementModel, MleOptions};
use crate::transmission;
use crate::twophoton::{self, CoincidenceTable, DelayGrid, TwoPhotonState, Window};

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Complete,
    /// Finished with some units of work failed; messages describe them.
    Partial(Vec<String>),
}

/// 0 success, 1 configuration or input error, 2 numerical failure, 3 partial results.
pub fn exit_code(result: &Result<Outcome>) -> i32 {
    match result {
        Ok(Outcome::Complete) => 0,
        Ok(Outcome::Partial(_)) => 3,
        Err(e) => match e {
            Error::Config(_)
            | Error::Parse { .. }
            | Error::Io(_)
            | Error::InvalidParameter(_)
            | Error::InconsistentDetuning { .. }
            | Error::EmptyGrid
            | Error::UnsortedGrid
            | Error::UnknownLabel(_)
            | Error::EmptyWindow { .. }
            | Error::Unbalanceable => 1,
            _ => 2,
        },
    }
}

fn prepare(out: &Path, command: &str, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(out)?;
    Manifest::new(command, cfg).write(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SweepMeta {
    params: SystemParams,
    gamma_mhz: f64,
    quadrature_order: usize,
    p_overlap_max: f64,
    kappa_f_at_max_mhz: f64,
    survival_monotone: bool,
}

/// Coupling sweep of the P-overlap and survival.
pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let params = cfg.sweep_params()?;
    let grid = cfg.sweep.grid();
    let rows = transmission::sweep_coupling(&params, &grid, cfg.numerics.quadrature_order)?;
    prepare(out, "sweep", cfg)?;
    io::write_sweep(&out.join("sweep.csv"), &rows, params.kappa_i)?;
    let best = rows
        .iter()
        .max_by(|a, b| a.p_overlap.total_cmp(&b.p_overlap))
        .ok_or(Error::EmptyGrid)?;
    let meta = SweepMeta {
        params,
        gamma_mhz: cfg.system.gamma_mhz,
        quadrature_order: cfg.numerics.quadrature_order,
        p_overlap_max: best.p_overlap,
        kappa_f_at_max_mhz: crate::units::mhz(best.kappa_f_over_kappa_i * params.kappa_i),
        survival_monotone: rows.windows(2).all(|w| w[1].survival >= w[0].survival),
    };
    io::write_toml(&out.join("sweep.meta.toml"), &meta)?;
    Ok(Outcome::Complete)
}

/// Delay-resolved rates and normalized correlations for the atom-coupled and
/// (optionally) empty resonator, with optional Poisson-sampled counts.
pub fn cmd_coincidences(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let params = cfg.system.params()?;
    let settings = cfg.coincidences.settings()?;
    let grid = DelayGrid::covering(cfg.coincidences.bin_width_ns, cfg.coincidences.max_delay_ns)?;
    let opts = cfg.numerics.simulation();
    let rates = twophoton::coincidence_rates(&params, &settings, &grid, &opts)?;
    prepare(out, "coincidences", cfg)?;
    io::write_table(&out.join("rates.csv"), &rates)?;
    io::write_table(&out.join("normalized.csv"), &rates.normalized()?)?;
    if let Some(n) = cfg.coincidences.sample_pairs {
        io::write_table(&out.join("counts.csv"), &twophoton::sample_clicks(&rates, n, cfg.seed)?)?;
    }
    if cfg.coincidences.empty_resonator {
        let empty = params.with_fixed_coupling(0.0);
        let e = twophoton::coincidence_rates(&empty, &settings, &grid, &opts)?;
        io::write_table(&out.join("rates_empty.csv"), &e)?;
        io::write_table(&out.join("normalized_empty.csv"), &e.normalized()?)?;
    }
    Ok(Outcome::Complete)
}

/// Synthetic count table for the tomography run.
pub fn synthetic_table(cfg: &RunConfig) -> Result<CoincidenceTable> {
    let params = cfg.system.params()?;
    let t = &cfg.tomography;
    let widest = t.window_widths_ns.iter().copied().chain([t.window_ns]).fold(0.0, f64::max);
    let farthest = t.mean_delays_ns.iter().copied().chain([t.mean_delay_ns, t.reference_delay_ns]).fold(0.0, f64::max);
    let grid = DelayGrid::covering(t.bin_width_ns, farthest + 0.5 * widest + t.bin_width_ns)?;
    let rates = twophoton::coincidence_rates(
        &params,
        &crate::polarization::canonical_settings(),
        &grid,
        &cfg.numerics.simulation(),
    )?;
    twophoton::sample_clicks(&rates, t.total_pairs, cfg.seed)
}

#[derive(Debug, Clone)]
pub struct WindowResult {
    pub window: Window,
    pub state: Option<TwoPhotonState>,
    pub metrics: Option<MetricsReport>,
    pub bootstrap: Option<BootstrapReport>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TomographyRun {
    pub frame_phase: f64,
    pub headline: WindowResult,
    pub surface: Vec<WindowResult>,
}

fn window_counts(table: &CoincidenceTable, model: &MeasurementModel, window: &Window) -> Result<Vec<f64>> {
    let sums = table.window_sums(window)?;
    Ok(model.settings().iter().map(|s| sums.get(s).copied().unwrap_or(0.0)).collect())
}

fn frame_phase(table: &CoincidenceTable, model: &MeasurementModel, cfg: &RunConfig, mle: &MleOptions) -> Result<f64> {
    let t = &cfg.tomography;
    match t.frame {
        Frame::Lab => Ok(0.0),
        Frame::Auto => Ok(table.meta.single_photon_phase.unwrap_or(0.0)),
        Frame::Reference => {
            let w = Window::new(t.reference_delay_ns, t.window_ns)?;
            let r = tomography::mle_reconstruct(&window_counts(table, model, &w)?, model, mle)?;
            // product state of single photons (a, b): arg ρ_{HH,S} = arg a − arg b
            Ok(r.state.element(0, 1).arg())
        }
    }
}

fn analyze_window(
    table: &CoincidenceTable,
    model: &MeasurementModel,
    window: Window,
    theta: f64,
    cfg: &RunConfig,
    with_bootstrap: bool,
) -> WindowResult {
    let mle = MleOptions { restarts: cfg.tomography.restarts, seed: cfg.seed, ..MleOptions::default() };
    let run = || -> Result<(TwoPhotonState, MetricsReport, Option<BootstrapReport>, bool)> {
        let counts = window_counts(table, model, &window)?;
        let r = tomography::mle_reconstruct(&counts, model, &mle)?;
        let state = r.state.remove_single_photon_phase(theta)?;
        let m = MetricsReport::evaluate(&state, cfg.tomography.phase_threshold)?
            .with_window(window.mean_delay_ns, window.width_ns);
        let b = if with_bootstrap && cfg.bootstrap.enabled {
            let opts = BootstrapOptions {
                replicates: cfg.bootstrap.replicates,
                seed: cfg.seed,
                frame_phase: theta,
                phase_threshold: cfg.tomography.phase_threshold,
                mle: MleOptions { restarts: 2, seed: cfg.seed, ..MleOptions::default() },
            };
            Some(bootstrap_metrics(&counts, model, &opts)?)
        } else {
            None
        };
        Ok((state, m, b, r.converged))
    };
    match run() {
        Ok((state, m, b, converged)) => WindowResult {
            window,
            state: Some(state),
            metrics: Some(m),
            bootstrap: b,
            converged,
            error: (!converged).then(|| "maximum-likelihood fit did not converge".to_string()),
        },
        Err(e) => WindowResult { window, state: None, metrics: None, bootstrap: None, converged: false, error: Some(e.to_string()) },
    }
}

/// Windows `table` over the headline window and the (mean delay × width)
/// surface, reconstructs each state and evaluates metrics and error bars.
pub fn analyze_table(table: &CoincidenceTable, cfg: &RunConfig) -> Result<TomographyRun> {
    let model = MeasurementModel::new(&table.settings())?;
    let mle = MleOptions { restarts: cfg.tomography.restarts, seed: cfg.seed, ..MleOptions::default() };
    let theta = frame_phase(table, &model, cfg, &mle)?;
    let t = &cfg.tomography;
    let headline = analyze_window(table, &model, Window::new(t.mean_delay_ns, t.window_ns)?, theta, cfg, true);
    let mut surface = Vec::new();
    for &w in &t.window_widths_ns {
        for &d in &t.mean_delays_ns {
            surface.push(analyze_window(table, &model, Window::new(d, w)?, theta, cfg, cfg.bootstrap.surfaces));
        }
    }
    Ok(TomographyRun { frame_phase: theta, headline, surface })
}

#[derive(Debug, Serialize)]
struct StateRecord {
    mean_delay_ns: f64,
    window_ns: f64,
    frame_phase: f64,
    rho3: MatrixRecord,
    rho4: MatrixRecord,
    rho_final3: MatrixRecord,
    rho_final4: MatrixRecord,
}

#[derive(Debug, Serialize)]
struct HeadlineRecord {
    metrics: MetricsReport,
    bootstrap: Option<BootstrapReport>,
    converged: bool,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Windowed reconstruction, metrics and bootstrap on measured or synthetic data.
pub fn cmd_tomography(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let table = match &cfg.tomography.data {
        Some(p) => io::read_table(p)?,
        None => synthetic_table(cfg)?,
    };
    prepare(out, "tomography", cfg)?;
    if cfg.tomography.data.is_none() {
        io::write_table(&out.join("counts.csv"), &table)?;
    }
    let run = analyze_table(&table, cfg)?;
    let mut failures = Vec::new();

    let mut w = csv::Writer::from_path(out.join("fig4_surfaces.csv")).map_err(|e| Error::Config(e.to_string()))?;
    let header = [
        "mean_delay_ns", "window_ns", "overlap", "concurrence", "phase_pi", "overlap_std", "concurrence_std",
        "phase_pi_std", "converged", "status",
    ];
    w.write_record(header).map_err(|e| Error::Config(e.to_string()))?;
    for r in &run.surface {
        let m = r.metrics.as_ref();
        let b = r.bootstrap.as_ref();
        let status = r.error.clone().unwrap_or_else(|| "ok".into());
        if let Some(e) = &r.error {
            failures.push(format!("window {} ns / {} ns: {e}", r.window.mean_delay_ns, r.window.width_ns));
        }
        w.write_record([
            r.window.mean_delay_ns.to_string(),
            r.window.width_ns.to_string(),
            fmt_opt(m.map(|m| m.overlap_ideal)),
            fmt_opt(m.map(|m| m.concurrence)),
            fmt_opt(m.and_then(|m| m.nonlinear_phase_pi)),
            fmt_opt(b.map(|b| b.overlap.std)),
            fmt_opt(b.map(|b| b.concurrence.std)),
            fmt_opt(b.map(|b| b.phase.std / std::f64::consts::PI)),
            r.converged.to_string(),
            status,
        ])
        .map_err(|e| Error::Config(e.to_string()))?;
    }
    w.flush()?;

    let h = &run.headline;
    match (&h.state, &h.metrics) {
        (Some(state), Some(m)) => {
            let fin = TwoPhotonState::pure(&twophoton::ideal_states().1)?;
            io::write_toml(
                &out.join("state.toml"),
                &StateRecord {
                    mean_delay_ns: h.window.mean_delay_ns,
                    window_ns: h.window.width_ns,
                    frame_phase: run.frame_phase,
                    rho3: state.matrix().into(),
                    rho4: (&embed_4x4(state)).into(),
                    rho_final3: fin.matrix().into(),
                    rho_final4: (&embed_4x4(&fin)).into(),
                },
            )?;
            io::write_toml(
                &out.join("metrics.toml"),
                &HeadlineRecord { metrics: m.clone(), bootstrap: h.bootstrap.clone(), converged: h.converged },
            )?;
            if let Some(b) = &h.bootstrap {
                if b.unreliable {
                    failures.push(format!("bootstrap unreliable: {} of {} replicates failed", b.failures, b.requested));
                }
            }
            if let Some(e) = &h.error {
                failures.push(format!("headline window: {e}"));
            }
        }
        _ => failures.push(format!("headline window: {}", h.error.clone().unwrap_or_default())),
    }
    if failures.is_empty() {
        Ok(Outcome::Complete)
    } else {
        fs::write(out.join("failures.txt"), failures.join("\n") + "\n")?;
        Ok(Outcome::Partial(failures))
    }
}

#[derive(Debug, Serialize)]
struct GateRecord {
    matrix: MatrixRecord,
    max_deviation_from_cz: f64,
    pp_output: Vec<[f64; 2]>,
    pp_concurrence: f64,
    passed: bool,
}

/// Checks the storage-based sign-flip protocol against diag(−1, 1, 1, 1).
pub fn gate_check(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let m = metrics::sign_flip_matrix()?;
    let mut target = qops::CMatrix::identity(4, 4);
    target[(0, 0)] = Complex64::from(-1.0);
    let dev = (&m - target).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let pp = metrics::sign_flip_gate(&[Complex64::from(0.5); 4])?;
    let c = metrics::concurrence(&metrics::pure_density4(&pp))?;
    let passed = dev < 1e-12 && (c - 1.0).abs() < 1e-9;
    prepare(out, "gate-check", cfg)?;
    io::write_toml(
        &out.join("gate.toml"),
        &GateRecord {
            matrix: (&m).into(),
            max_deviation_from_cz: dev,
            pp_output: pp.iter().map(|z| [z.re, z.im]).collect(),
            pp_concurrence: c,
            passed,
        },
    )?;
    if passed {
        Ok(Outcome::Complete)
    } else {
        Err(Error::NumericalFailure(format!("gate deviates by {dev:e}, concurrence {c}")))
    }
}

/// One line of the `verify` report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

/// Fast property checks over all modules.
pub fn run_checks(cfg: &RunConfig) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let params = cfg.system.params()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // trace and Hermiticity preservation of the generator
    let space = Space::new(cfg.numerics.n_max)?;
    let l = qops::build_liouvillian(&params, space)?;
    let dim = space.dim();
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let a = qops::CMatrix::from_fn(dim, dim, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let h = &a + a.adjoint();
        worst = worst.max(l.apply(&h).trace().norm());
    }
    out.push(check("liouvillian trace preservation", worst < 1e-10, format!("max |Tr L(rho)| = {worst:.2e}")));

    // weak-drive master equation against the analytic transmission
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let p = SystemParams {
            g: crate::units::angular(25.0 * rng.random::<f64>()),
            kappa_f: params.kappa_i * (0.5 + 5.5 * rng.random::<f64>()),
            delta_al: crate::units::angular(20.0 * rng.random::<f64>() - 10.0),
            delta_rl: crate::units::angular(20.0 * rng.random::<f64>() - 10.0),
            delta_ar: None,
            drive: Complex64::from(0.02),
            ..params
        };
        let me = twophoton::master_equation_transmission(&p, space)?;
        let an = transmission::atom_transmission(&p, p.g)?;
        worst = worst.max((me - an).norm());
    }
    out.push(check("weak-drive transmission oracle", worst < 1e-3, format!("max |dt| = {worst:.2e}")));

    // truncation convergence
    let number = |n_max: usize| -> Result<f64> {
        let s = Space::new(n_max)?;
        let rho = qops::steady_state(&qops::build_liouvillian(&params, s)?)?;
        Ok(qops::expectation(&qops::build_operators(s).number(), &rho).re)
    };
    let (n3, n5) = (number(3)?, number(5)?);
    let rel = (n3 - n5).abs() / n5.abs().max(f64::MIN_POSITIVE);
    out.push(check("fock truncation convergence", rel < 1e-4, format!("relative change {rel:.2e}")));

    // ideal-state metrics
    let (init, fin) = twophoton::ideal_states();
    let sf = TwoPhotonState::pure(&fin)?;
    let c = metrics::state_concurrence(&sf)?;
    let phi = metrics::nonlinear_phase(&sf, metrics::PHASE_THRESHOLD)?;
    let ov = metrics::overlap_ideal(&TwoPhotonState::pure(&init)?);
    out.push(check(
        "ideal-state metrics",
        (c - 1.0).abs() < 1e-9 && (phi - std::f64::consts::PI).abs() < 1e-9 && (ov - 0.25).abs() < 1e-9,
        format!("C = {c:.12}, phi/pi = {:.12}, overlap = {ov:.12}", phase_in_pi_units(phi)),
    ));

    // tomography round trip from expected counts
    let model = MeasurementModel::canonical()?;
    let rec = tomography::mle_reconstruct(&tomography::expected_counts(&sf, &model, 1e6), &model, &MleOptions::default())?;
    let f = metrics::fidelity_pure(&rec.state, &fin);
    out.push(check("tomography round trip", f > 0.999 && model.rank() == 9, format!("fidelity {f:.8}")));

    // gate
    let m = metrics::sign_flip_matrix()?;
    let mut target = qops::CMatrix::identity(4, 4);
    target[(0, 0)] = Complex64::from(-1.0);
    let dev = (&m - target).iter().map(|z| z.norm()).fold(0.0, f64::max);
    out.push(check("sign-flip gate", dev < 1e-12, format!("deviation {dev:.2e}")));

    // balanced empty resonator gives M
    let jones = transmission::balanced_input(&params)?;
    let r = transmission::transmit(&jones, &params, false)?;
    out.push(check(
        "balanced input",
        r.p_overlap < 1e-12,
        format!("empty-resonator P overlap {:.2e}", r.p_overlap),
    ));
    Ok(out)
}

/// Runs [`run_checks`], writes `verify.txt` and prints one line per check.
pub fn verify(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let checks = run_checks(cfg)?;
    prepare(out, "verify", cfg)?;
    let mut text = String::new();
    for c in &checks {
        let _ = writeln!(text, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    print!("{text}");
    fs::write(out.join("verify.txt"), &text)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(Outcome::Complete)
    } else {
        Err(Error::NumericalFailure(format!("failed checks: {}", failed.join(", "))))
    }
}
