//! Leading eigenvalues of the pseudo generator G2 and of the two
//! reconstructions R^t (Taylor) and E^t (exponential) for the double well.
//!
//!     cargo run --example double_well_spectrum

use pseudogen::collocation::{assemble_et, assemble_g2, assemble_rt, CollocationGrid};
use pseudogen::potential::{DynamicsParams, PotentialSpec};
use pseudogen::spectrum::solve_spectrum;

fn main() -> pseudogen::Result<()> {
    let params = DynamicsParams::new(1.0, 1.0)?;
    let grid = CollocationGrid::new(1, 33)?;
    let g2 = assemble_g2(&grid, &PotentialSpec::double_well(), &params)?;
    let base = solve_spectrum(&g2, 5)?;
    println!("G2: {:?}", base.real_eigenvalues().iter().map(|l| format!("{l:.4}")).collect::<Vec<_>>());

    println!("{:>6} {:>10} {:>10} {:>10} {:>10}", "t", "R l2", "R l3", "E l2", "E l3");
    for t in [0.05, 0.1, 0.2, 0.3, 0.5, 1.0] {
        let r = solve_spectrum(&assemble_rt(&g2, t, &params)?, 3)?.real_eigenvalues();
        let e = solve_spectrum(&assemble_et(&g2, t)?, 3)?.real_eigenvalues();
        println!("{t:>6} {:>10.4} {:>10.4} {:>10.4} {:>10.4}", r[1], r[2], e[1], e[2]);
    }
    Ok(())
}
