//! Rejection sampling of the canonical position density restricted to a box,
//! Gaussian momenta, and a short trajectory dump.

use pseudogen::potential::{DynamicsParams, PotentialSpec};
use pseudogen::sim::{dump_trajectories, sample_canonical_momentum, CanonicalSampler, EnsembleState, Region, SamplerConfig};

fn main() -> pseudogen::Result<()> {
    let dw = PotentialSpec::double_well();
    let params = DynamicsParams::new(1.0, 1.0)?;
    let left = Region::Box { lo: vec![0.0], hi: vec![0.5] };
    let sampler = CanonicalSampler::new(&dw, &params, Some(&left))?;
    println!("mass of (0, 0.5): {:.6}, acceptance {:.3}", sampler.mass(), sampler.acceptance());

    let ids: Vec<u64> = (0..10_000).collect();
    let q = sampler.sample(5, &ids)?;
    let mean = q.iter().sum::<f64>() / q.len() as f64;
    println!("mean position in (0, 0.5): {mean:.4}");

    let p = sample_canonical_momentum(1, &params, 4, 5);
    let state = EnsembleState::new(1, q[..4].to_vec(), Some(p), ids[..4].to_vec())?;
    let mut csv = Vec::new();
    dump_trajectories(&state, &dw, &params, 0.01, &SamplerConfig::langevin(1e-3, 5, 4), 5, &mut csv)?;
    print!("{}", String::from_utf8_lossy(&csv));
    Ok(())
}
