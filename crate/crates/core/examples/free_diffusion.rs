//! G2 of the zero potential is (1/beta) times the periodic Laplacian, whose
//! eigenvalues on 33 Fourier nodes are exactly -(2 pi k)^2 / beta, |k| <= 16.
//!
//!     cargo run --example free_diffusion -- 2.5

use std::f64::consts::TAU;

use pseudogen::collocation::{assemble_g2, CollocationGrid};
use pseudogen::potential::{DynamicsParams, PotentialSpec};
use pseudogen::spectrum::solve_spectrum;

fn main() -> pseudogen::Result<()> {
    let beta: f64 = std::env::args().nth(1).map_or(1.0, |s| s.parse().expect("beta must be a number"));
    let params = DynamicsParams::new(beta, 1.0)?;
    let grid = CollocationGrid::new(1, 33)?;
    let g2 = assemble_g2(&grid, &PotentialSpec::zero(1)?, &params)?;
    let spectrum = solve_spectrum(&g2, 33)?;

    let mut exact: Vec<f64> = (-16i64..=16).map(|k| -(TAU * k as f64).powi(2) / beta).collect();
    exact.sort_by(|a, b| b.total_cmp(a));
    let mut worst: f64 = 0.0;
    println!("{:>4} {:>22} {:>22}", "j", "computed", "exact");
    for (j, (z, e)) in spectrum.eigenvalues.iter().zip(&exact).enumerate() {
        worst = worst.max((z.re - e).abs());
        if j < 7 || j == 32 {
            println!("{:>4} {:>22.12} {:>22.12}", j + 1, z.re, e);
        }
    }
    println!("max |error| = {worst:.3e}");
    Ok(())
}
