//! The four-well potential on the 2-torus: collocation on 33 x 33 nodes shows
//! a spectral gap after the fourth eigenvalue, and the sign structures of
//! v2, v3, v4 give three tiers of metastable set pairs.
//!
//!     cargo run --release --example four_well

use pseudogen::collocation::{assemble_et, assemble_g2, CollocationGrid};
use pseudogen::metastability::{sign_partition, spectral_gap};
use pseudogen::potential::{DynamicsParams, PotentialSpec};
use pseudogen::spectrum::solve_spectrum;

fn main() -> pseudogen::Result<()> {
    let params = DynamicsParams::new(1.0, 1.0)?;
    let grid = CollocationGrid::new(2, 33)?;
    let g2 = assemble_g2(&grid, &PotentialSpec::four_well(), &params)?;
    let et = solve_spectrum(&assemble_et(&g2, 0.1)?, 8)?;
    let ev = et.real_eigenvalues();
    println!("E^0.1 leading eigenvalues: {:?}", ev.iter().map(|l| format!("{l:.4}")).collect::<Vec<_>>());
    let gap = spectral_gap(&ev)?;
    println!("spectral gap after lambda_{gap}");

    let part = sign_partition(&et, Some(gap))?;
    for tier in &part.tiers {
        println!(
            "tier v{}: masses {:.3} / {:.3}",
            tier.eigen_index + 1,
            tier.masses.0,
            tier.masses.1
        );
    }
    let sets = part.decomposition(gap)?;
    println!("combined partition: {} sets with masses {:?}", sets.len(), sets.iter().map(|s| format!("{:.3}", part.mass(s))).collect::<Vec<_>>());
    Ok(())
}
