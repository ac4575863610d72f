//! Storage-based controlled sign flip on two polarization qubits.

use num_complex::Complex64;
use wgm_nonlinear::metrics::{concurrence, pure_density4, sign_flip_gate, sign_flip_matrix};
use wgm_nonlinear::polarization::Label;

fn main() -> wgm_nonlinear::Result<()> {
    let m = sign_flip_matrix()?;
    println!("gate in the (HH, HV, VH, VV) basis:");
    for i in 0..4 {
        let row: Vec<String> = (0..4).map(|j| format!("{:>5.1}", m[(i, j)].re)).collect();
        println!("  {}", row.join(" "));
    }
    let p = Label::P.jones();
    let pp: [Complex64; 4] = [p[0] * p[0], p[0] * p[1], p[1] * p[0], p[1] * p[1]];
    let out = sign_flip_gate(&pp)?;
    println!("|PP> -> {:?}", out.map(|z| z.re));
    println!("concurrence of the output: {:.6}", concurrence(&pure_density4(&out))?);
    Ok(())
}
