//! Normalized coincidences for the four detector pairs of the figure, with
//! and without the atom, plus a Poisson-sampled count histogram.

use wgm_nonlinear::polarization::{DetectorSetting, Label};
use wgm_nonlinear::twophoton::{coincidence_rates, sample_clicks, DelayGrid, SimulationOptions};
use wgm_nonlinear::SystemParams;

fn main() -> wgm_nonlinear::Result<()> {
    let settings = [
        DetectorSetting::new(Label::R, Label::L),
        DetectorSetting::new(Label::R, Label::P),
        DetectorSetting::new(Label::M, Label::M),
        DetectorSetting::new(Label::H, Label::M),
    ];
    let params = SystemParams::default();
    let grid = DelayGrid::covering(2.0, 30.0)?;
    let opts = SimulationOptions::default();
    let atom = coincidence_rates(&params, &settings, &grid, &opts)?;
    let empty = coincidence_rates(&params.with_fixed_coupling(0.0), &settings, &grid, &opts)?;
    let (na, ne) = (atom.normalized()?, empty.normalized()?);

    print!("{:>8}", "tau/ns");
    for s in &settings {
        print!(" {:>9} {:>9}", format!("{s}"), format!("{s} g=0"));
    }
    println!();
    for (k, d) in atom.delays_ns.iter().enumerate() {
        print!("{d:>8.1}");
        for s in &settings {
            print!(" {:>9.3} {:>9.3}", na.values[s][k], ne.values[s][k]);
        }
        println!();
    }

    let counts = sample_clicks(&atom, 2e5, 3)?;
    let mm = DetectorSetting::new(Label::M, Label::M);
    println!("sampled MM counts: {:?}", counts.values[&mm]);
    Ok(())
}
