//! The sign structure of the second eigenvector of G2 splits the double-well
//! torus into two metastable halves. The split is the same for R^t and E^t,
//! which share the eigenvectors of G2.

use pseudogen::collocation::{assemble_et, assemble_g2, assemble_rt, CollocationGrid};
use pseudogen::metastability::sign_partition;
use pseudogen::potential::{DynamicsParams, PotentialSpec};
use pseudogen::spectrum::solve_spectrum;

fn main() -> pseudogen::Result<()> {
    let params = DynamicsParams::new(1.0, 1.0)?;
    let grid = CollocationGrid::new(1, 33)?;
    let g2 = assemble_g2(&grid, &PotentialSpec::double_well(), &params)?;
    let part = sign_partition(&solve_spectrum(&g2, 4)?, Some(2))?;
    let tier = &part.tiers[0];
    let h = 1.0 / grid.n_per_axis() as f64;
    let show = |cells: &[usize]| cells.iter().map(|&c| format!("{:.3}", c as f64 * h)).collect::<Vec<_>>().join(" ");
    println!("v2 > 0 at nodes: {}", show(&tier.positive));
    println!("v2 < 0 at nodes: {}", show(&tier.negative));
    println!("set masses: {:.4} / {:.4}", tier.masses.0, tier.masses.1);

    for t in [0.1, 0.5] {
        let r = sign_partition(&solve_spectrum(&assemble_rt(&g2, t, &params)?, 4)?, Some(2))?;
        let e = sign_partition(&solve_spectrum(&assemble_et(&g2, t)?, 4)?, Some(2))?;
        let same = |p: &pseudogen::metastability::PartitionResult| {
            let mut a = [p.tiers[0].positive.clone(), p.tiers[0].negative.clone()];
            a.sort();
            let mut b = [tier.positive.clone(), tier.negative.clone()];
            b.sort();
            a == b
        };
        println!("t={t}: R^t partition identical: {}, E^t partition identical: {}", same(&r), same(&e));
    }
    Ok(())
}
