//! Trajectory-based Ulam reference for the double well: walkers start from
//! the canonical density in each box, run Langevin dynamics for time t, and
//! the arrival counts form a row-stochastic matrix.
//!
//!     cargo run --release --example ulam_reference -- 256 4000
//!
//! The defaults (64 boxes, 1000 samples) finish in a few seconds.

use pseudogen::potential::{DynamicsParams, PotentialSpec};
use pseudogen::sim::SamplerConfig;
use pseudogen::ulam::{build_partition, eigenvalue_stderr, estimate_spatial_ulam, ulam_spectrum};

fn main() -> pseudogen::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<usize>().expect("integer argument"));
    let boxes = args.next().unwrap_or(64);
    let samples = args.next().unwrap_or(1000);
    let params = DynamicsParams::new(1.0, 1.0)?;
    let partition = build_partition(&PotentialSpec::double_well(), &params, boxes)?;
    for t in [0.1, 0.5] {
        let config = SamplerConfig::langevin(1e-3, 1, 0);
        let u = estimate_spatial_ulam(&partition, &params, t, samples, &config)?;
        let s = ulam_spectrum(&u, 5)?;
        let se = eigenvalue_stderr(&u, 5)?;
        let flux = u.flux_asymmetry();
        print!("t={t}:");
        for (l, e) in s.real_eigenvalues().iter().zip(&se) {
            print!(" {l:.4}({e:.4})");
        }
        println!("  flux asymmetry {:.3} (noise {:.3})", flux.pooled, flux.noise_scale);
    }
    Ok(())
}
