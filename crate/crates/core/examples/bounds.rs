//! Bounds on the metastability of the two double-well halves, computed from
//! the eigenvalues of E^t, compared with a direct Monte-Carlo estimate of the
//! probability of staying in each half. The E^t bounds track the simulation
//! only for short lags: beyond t = 0.1 E^t decays faster than the Langevin dynamics.

use pseudogen::collocation::{assemble_et, assemble_g2, CollocationGrid};
use pseudogen::metastability::{estimate_metastability, huisinga_bounds, sign_partition, McOptions};
use pseudogen::potential::{DynamicsParams, PotentialSpec};
use pseudogen::sim::SamplerConfig;
use pseudogen::spectrum::solve_spectrum;

fn main() -> pseudogen::Result<()> {
    let params = DynamicsParams::new(1.0, 1.0)?;
    let dw = PotentialSpec::double_well();
    let grid = CollocationGrid::new(1, 33)?;
    let g2 = assemble_g2(&grid, &dw, &params)?;
    let sets = sign_partition(&solve_spectrum(&g2, 4)?, Some(2))?.decomposition(2)?;
    let density = dw.canonical(params.beta(), 4096);

    println!("{:>5} {:>8} {:>8} {:>16}", "t", "lower", "upper", "monte carlo");
    for t in [0.1, 0.2, 0.3, 0.5] {
        let spectrum = solve_spectrum(&assemble_et(&g2, t)?, 4)?;
        let b = huisinga_bounds(&spectrum, &sets, None)?;
        let config = SamplerConfig::langevin(1e-3, 11, 0);
        let mc = estimate_metastability(&density, grid.layout(), &sets, &params, t, 5000, &config, &McOptions::default())?;
        println!("{t:>5} {:>8.4} {:>8.4} {:>9.4} +- {:.4}", b.lower, b.upper, mc.sum, mc.sum_stderr);
    }
    Ok(())
}
