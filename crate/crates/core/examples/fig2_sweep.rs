//! P-overlap and survival against the fiber coupling, averaged over the
//! coupling distribution, with the empty-resonator powers for comparison.
//!
//! Pass a path to also write the table as CSV.

use wgm_nonlinear::io::write_sweep;
use wgm_nonlinear::transmission::{linear_grid, sweep_coupling, QUADRATURE_ORDER};
use wgm_nonlinear::units::mhz;
use wgm_nonlinear::SystemParams;

fn main() -> wgm_nonlinear::Result<()> {
    let params = SystemParams::coupling_sweep();
    let rows = sweep_coupling(&params, &linear_grid(0.5, 6.0, 23), QUADRATURE_ORDER)?;
    println!("{:>8} {:>10} {:>9} {:>9} {:>9} {:>9}", "kf/ki", "kf/2pi", "P", "survival", "|tH|^2", "|tH0|^2");
    for r in &rows {
        println!(
            "{:>8.2} {:>10.2} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            r.kappa_f_over_kappa_i,
            mhz(r.kappa_f_over_kappa_i * params.kappa_i),
            r.p_overlap,
            r.survival,
            r.t2_h,
            r.t2_h_empty
        );
    }
    let best = rows.iter().max_by(|a, b| a.p_overlap.total_cmp(&b.p_overlap)).expect("non-empty sweep");
    println!(
        "max P-overlap {:.3} at kappa_f = 2pi x {:.1} MHz",
        best.p_overlap,
        mhz(best.kappa_f_over_kappa_i * params.kappa_i)
    );
    if let Some(path) = std::env::args().nth(1) {
        write_sweep(path.as_ref(), &rows, params.kappa_i)?;
        println!("wrote {path}");
    }
    Ok(())
}
