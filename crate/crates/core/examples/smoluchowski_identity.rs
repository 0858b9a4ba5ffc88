//! E^t equals the Smoluchowski transfer operator at time t^2/2. The Ulam
//! estimate of the latter, from overdamped trajectories, should reproduce the
//! eigenvalues of E^t up to Monte-Carlo error.

use pseudogen::collocation::{assemble_et, assemble_g2, CollocationGrid};
use pseudogen::potential::{DynamicsParams, PotentialSpec};
use pseudogen::sim::SamplerConfig;
use pseudogen::spectrum::solve_spectrum;
use pseudogen::ulam::{build_partition, eigenvalue_stderr, estimate_smoluchowski_ulam, ulam_spectrum};

fn main() -> pseudogen::Result<()> {
    let params = DynamicsParams::new(1.0, 1.0)?;
    let dw = PotentialSpec::double_well();
    let g2 = assemble_g2(&CollocationGrid::new(1, 33)?, &dw, &params)?;
    let partition = build_partition(&dw, &params, 64)?;
    for t in [0.3f64, 0.6] {
        let e = solve_spectrum(&assemble_et(&g2, t)?, 2)?.real_eigenvalues();
        // Euler-Maruyama needs a small step in the stiff wells
        let config = SamplerConfig::smoluchowski(2e-4, 3, 0);
        let u = estimate_smoluchowski_ulam(&partition, &params, t * t / 2.0, 1000, &config)?;
        let l = ulam_spectrum(&u, 2)?.real_eigenvalues();
        let se = eigenvalue_stderr(&u, 2)?;
        println!("t={t}: lambda2(E^t) = {:.4}, Smoluchowski Ulam at t^2/2 = {:.4} +- {:.4}", e[1], l[1], se[1]);
    }
    Ok(())
}
