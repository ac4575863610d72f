//! Weak-drive steady state of the driven atom–resonator system and the
//! transmission it implies, next to the closed-form result.

use wgm_nonlinear::qops::{build_liouvillian, build_operators, expectation, steady_state, Space};
use wgm_nonlinear::transmission::atom_transmission;
use wgm_nonlinear::twophoton::master_equation_transmission;
use wgm_nonlinear::units::angular;
use wgm_nonlinear::SystemParams;

fn main() -> wgm_nonlinear::Result<()> {
    let space = Space::new(3)?;
    println!("{:>8} {:>12} {:>12} {:>22} {:>22}", "g/2pi", "<n>", "P_exc", "t_H (master eq.)", "t_H (closed form)");
    for g_mhz in [0.0, 5.0, 10.0, 13.5, 20.0] {
        let p = SystemParams::default().with_g(angular(g_mhz));
        let rho = steady_state(&build_liouvillian(&p, space)?)?;
        let ops = build_operators(space);
        let n = expectation(&ops.number(), &rho).re;
        let exc = expectation(&ops.excitation(), &rho).re;
        let me = master_equation_transmission(&p, space)?;
        let an = atom_transmission(&p, p.g)?;
        println!(
            "{g_mhz:>8.1} {n:>12.3e} {exc:>12.3e} {:>10.5}{:>+10.5}i {:>10.5}{:>+10.5}i",
            me.re, me.im, an.re, an.im
        );
    }
    Ok(())
}
