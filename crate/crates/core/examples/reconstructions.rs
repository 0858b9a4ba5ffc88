//! R^t and E^t share the eigenvectors of G2; their eigenvalues follow from
//! those of G2 by 1 + (t^2/2 - gamma t^3/6) l and exp(t^2/2 l). This example
//! checks both maps and compares the Padé exponential with V exp(sL) V^-1.

use pseudogen::collocation::{assemble_et, assemble_g2, assemble_rt, taylor_factor, CollocationGrid};
use pseudogen::potential::{DynamicsParams, PotentialSpec};
use pseudogen::spectrum::{exp_via_eigen, solve_spectrum};

fn main() -> pseudogen::Result<()> {
    let params = DynamicsParams::new(1.0, 1.0)?;
    let grid = CollocationGrid::new(1, 33)?;
    let g2 = assemble_g2(&grid, &PotentialSpec::double_well(), &params)?;
    let base = solve_spectrum(&g2, 6)?.real_eigenvalues();

    for t in [0.1, 0.3, 0.6] {
        let c = taylor_factor(t, params.gamma());
        let r = solve_spectrum(&assemble_rt(&g2, t, &params)?, 6)?.real_eigenvalues();
        let et = assemble_et(&g2, t)?;
        let e = solve_spectrum(&et, 6)?.real_eigenvalues();
        let r_err = r.iter().zip(&base).map(|(x, l)| (x - (1.0 + c * l)).abs()).fold(0.0, f64::max);
        let e_err = e.iter().zip(&base).map(|(x, l)| (x - (0.5 * t * t * l).exp()).abs()).fold(0.0, f64::max);
        let direct = exp_via_eigen(&g2, 0.5 * t * t)?;
        let route = (&et.matrix - &direct).norm_max();
        println!("t={t}: affine map error {r_err:.2e}, exp map error {e_err:.2e}, Pade vs eigen {route:.2e}");
    }
    Ok(())
}
