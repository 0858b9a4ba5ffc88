//! Ulam's method: Monte-Carlo Galerkin projection of transfer operators onto
//! indicator functions of a uniform box partition.
//!
//! Row `i` of the estimated matrix is obtained by drawing positions from `f_Q`
//! restricted to box `i` (plus canonical momenta for Langevin dynamics),
//! integrating for the lag time, and counting the boxes the walkers land in.
//! The stored form is row-stochastic (transition probabilities); the Galerkin
//! matrix with respect to the canonical measure is `D P D^-1` with
//! `D = diag(box masses)` and has the same spectrum.
//!
//! Samples are split round-robin into [`REPLICATES`] independent batches whose
//! counts are kept separately, so every estimate comes with a batch-means
//! standard error at no extra simulation cost.

use std::io::Write;
use std::path::Path;

use faer::Mat;
use rayon::prelude::*;
use serde::Serialize;

use crate::collocation::{OperatorKind, OperatorMatrix};
use crate::error::{Error, Result};
use crate::io::{create, fmt_sci};
use crate::layout::CellLayout;
use crate::potential::{CanonicalDensity, DynamicsParams, PotentialSpec};
use crate::sim::{integrate, CanonicalSampler, EnsembleState, Region, SamplerConfig, Scheme};
use crate::spectrum::{solve_spectrum, weighted_similarity, SpectrumResult};
use crate::streams::derive_seed;

/// Number of independent sample batches per Ulam estimate.
pub const REPLICATES: usize = 8;

const GAUSS_LEGENDRE_8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];

/// Uniform partition of the torus into `n^dim` half-open boxes with their canonical masses.
#[derive(Clone, Debug)]
pub struct BoxPartition {
    layout: CellLayout,
    masses: Vec<f64>,
    density: CanonicalDensity,
}

/// Builds the partition; box masses come from a tensor 8-point Gauss-Legendre
/// rule per box, normalized to sum to one.
pub fn build_partition(spec: &PotentialSpec, params: &DynamicsParams, n: usize) -> Result<BoxPartition> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 boxes per axis, got {n}")));
    }
    let dim = spec.dim();
    let layout = CellLayout::boxes(dim, n);
    let density = spec.canonical(params.beta(), if dim == 1 { 4096 } else { 256 });
    let h = layout.width();
    let mut masses: Vec<f64> = (0..layout.len())
        .into_par_iter()
        .map(|b| {
            let lo = layout.lower(b);
            let mut q = vec![0.0; dim];
            let mut sum = 0.0;
            for idx in 0..8usize.pow(dim as u32) {
                let mut r = idx;
                let mut w = 1.0;
                for a in 0..dim {
                    let (x, wx) = GAUSS_LEGENDRE_8[r % 8];
                    q[a] = lo[a] + 0.5 * h * (x + 1.0);
                    w *= 0.5 * h * wx;
                    r /= 8;
                }
                sum += w * density.boltzmann(&q);
            }
            sum
        })
        .collect();
    let total: f64 = masses.iter().sum();
    masses.iter_mut().for_each(|m| *m /= total);
    Ok(BoxPartition { layout, masses, density })
}

impl BoxPartition {
    pub fn layout(&self) -> CellLayout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.layout.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn box_of(&self, q: &[f64]) -> usize {
        self.layout.cell_of(q)
    }

    /// Average of `f_Q` over each box.
    pub fn densities(&self) -> Vec<f64> {
        let vol = self.layout.volume();
        self.masses.iter().map(|m| m / vol).collect()
    }

    pub fn canonical(&self) -> &CanonicalDensity {
        &self.density
    }
}

/// Row-stochastic Ulam transition matrix with per-batch counts.
#[derive(Clone, Debug)]
pub struct UlamMatrix {
    pub kind: OperatorKind,
    pub t: f64,
    pub samples_per_box: usize,
    pub seed: u64,
    pub params: DynamicsParams,
    pub dt: f64,
    layout: CellLayout,
    masses: Vec<f64>,
    /// `counts[r][i * size + j]`: batch `r` walkers from box `i` ending in box `j`.
    counts: Vec<Vec<u32>>,
    matrix: Mat<f64>,
}

#[derive(Serialize)]
struct UlamMetadata<'a> {
    kind: &'a str,
    t: f64,
    dim: usize,
    boxes_per_axis: usize,
    samples_per_box: usize,
    replicates: usize,
    seed: u64,
    dt: f64,
    beta: f64,
    gamma: f64,
}

impl UlamMatrix {
    pub fn size(&self) -> usize {
        self.layout.len()
    }

    pub fn layout(&self) -> CellLayout {
        self.layout
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.matrix
    }

    /// Row-stochastic matrix from batch `r` alone.
    pub fn replicate(&self, r: usize) -> Mat<f64> {
        row_normalize(&self.counts[r], self.size())
    }

    /// The Galerkin matrix with respect to the canonical measure, `D P D^-1`.
    pub fn galerkin_form(&self) -> Mat<f64> {
        let m = &self.masses;
        Mat::from_fn(self.size(), self.size(), |i, j| m[i] * self.matrix[(i, j)] / m[j])
    }

    pub fn to_operator(&self) -> OperatorMatrix {
        let vol = self.layout.volume();
        OperatorMatrix {
            kind: self.kind,
            t: self.t,
            params: self.params,
            matrix: self.matrix.clone(),
            layout: self.layout,
            weights: self.masses.clone(),
            density: self.masses.iter().map(|m| m / vol).collect(),
        }
    }

    /// Relative asymmetry `||F - F^T||_1 / ||F||_1` of the flux `F = D P`,
    /// for the pooled matrix and as a batch-means noise scale.
    pub fn flux_asymmetry(&self) -> FluxAsymmetry {
        let pooled = flux_asymmetry(&self.matrix, &self.masses);
        let per_batch: Vec<f64> = (0..REPLICATES).map(|r| flux_asymmetry(&self.replicate(r), &self.masses)).collect();
        let mean = per_batch.iter().sum::<f64>() / REPLICATES as f64;
        FluxAsymmetry { pooled, noise_scale: mean / (REPLICATES as f64).sqrt() }
    }

    /// Dense matrix CSV (no header, `%.12e`) plus a JSON sidecar with the run metadata.
    pub fn write(&self, csv_path: &Path) -> Result<()> {
        let mut out = create(csv_path)?;
        for i in 0..self.size() {
            let row: Vec<String> = (0..self.size()).map(|j| fmt_sci(self.matrix[(i, j)])).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        let meta = UlamMetadata {
            kind: self.kind.label(),
            t: self.t,
            dim: self.layout.dim,
            boxes_per_axis: self.layout.n,
            samples_per_box: self.samples_per_box,
            replicates: REPLICATES,
            seed: self.seed,
            dt: self.dt,
            beta: self.params.beta(),
            gamma: self.params.gamma(),
        };
        let meta_path = csv_path.with_extension("meta.json");
        let mut m = create(&meta_path)?;
        serde_json::to_writer_pretty(&mut m, &meta).map_err(|e| Error::Numerical(e.to_string()))?;
        writeln!(m)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluxAsymmetry {
    pub pooled: f64,
    pub noise_scale: f64,
}

fn flux_asymmetry(p: &Mat<f64>, masses: &[f64]) -> f64 {
    let n = p.nrows();
    let mut asym = 0.0;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let f = masses[i] * p[(i, j)];
            asym += (f - masses[j] * p[(j, i)]).abs();
            total += f.abs();
        }
    }
    asym / total
}

fn row_normalize(counts: &[u32], size: usize) -> Mat<f64> {
    let mut m = Mat::zeros(size, size);
    for i in 0..size {
        let row = &counts[i * size..(i + 1) * size];
        let total: u64 = row.iter().map(|&c| c as u64).sum();
        if total == 0 {
            continue;
        }
        for j in 0..size {
            m[(i, j)] = row[j] as f64 / total as f64;
        }
        // the last nonzero entry takes 1 - (sum of the ones before it), which
        // makes the left-to-right row sum exactly 1.0
        let last = (0..size).rev().find(|&j| row[j] > 0).expect("non-empty row");
        let prefix: f64 = (0..last).map(|j| m[(i, j)]).sum();
        m[(i, last)] = 1.0 - prefix;
    }
    m
}

fn estimate(
    partition: &BoxPartition,
    params: &DynamicsParams,
    t: f64,
    samples_per_box: usize,
    config: &SamplerConfig,
    kind: OperatorKind,
) -> Result<UlamMatrix> {
    if samples_per_box == 0 {
        return Err(Error::InvalidInput("need at least one sample per box".into()));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidInput(format!("Ulam lag time must be positive, got {t}")));
    }
    config.steps_for(t)?;
    let spec = partition.density.spec();
    let layout = partition.layout;
    let size = layout.len();
    let dim = layout.dim;
    let m = samples_per_box as u64;
    let langevin = config.scheme == Scheme::LangevinBaoab;

    let rows: Vec<Vec<Vec<u32>>> = (0..size)
        .into_par_iter()
        .map(|i| -> Result<Vec<Vec<u32>>> {
            let region = Region::Cells { layout, cells: vec![i] };
            let sampler = CanonicalSampler::with_density(&partition.density, Some(&region))?;
            let ids: Vec<u64> = (0..m).map(|s| i as u64 * m + s).collect();
            let q = sampler.sample(config.seed, &ids)?;
            let p = langevin.then(|| crate::sim::sample_momenta(dim, params, config.seed, &ids));
            let state = EnsembleState::new(dim, q, p, ids)?;
            let end = integrate(&state, spec, params, t, config)?;
            let mut counts = vec![vec![0u32; size]; REPLICATES];
            for s in 0..samples_per_box {
                counts[s % REPLICATES][layout.cell_of(end.position(s))] += 1;
            }
            Ok(counts)
        })
        .collect::<Result<_>>()?;

    let mut counts = vec![vec![0u32; size * size]; REPLICATES];
    for (i, row) in rows.into_iter().enumerate() {
        for (r, c) in row.into_iter().enumerate() {
            counts[r][i * size..(i + 1) * size].copy_from_slice(&c);
        }
    }
    let mut pooled = vec![0u32; size * size];
    for c in &counts {
        for (p, x) in pooled.iter_mut().zip(c) {
            *p += x;
        }
    }
    Ok(UlamMatrix {
        kind,
        t,
        samples_per_box,
        seed: config.seed,
        params: *params,
        dt: config.dt,
        layout,
        masses: partition.masses.clone(),
        counts,
        matrix: row_normalize(&pooled, size),
    })
}

/// Ulam estimate of the spatial transfer operator (momentum-averaged Langevin dynamics).
pub fn estimate_spatial_ulam(
    partition: &BoxPartition,
    params: &DynamicsParams,
    t: f64,
    samples_per_box: usize,
    config: &SamplerConfig,
) -> Result<UlamMatrix> {
    let config = SamplerConfig { scheme: Scheme::LangevinBaoab, ..*config };
    estimate(partition, params, t, samples_per_box, &config, OperatorKind::UlamS)
}

/// Ulam estimate of the Smoluchowski transfer operator at time `t`.
pub fn estimate_smoluchowski_ulam(
    partition: &BoxPartition,
    params: &DynamicsParams,
    t: f64,
    samples_per_box: usize,
    config: &SamplerConfig,
) -> Result<UlamMatrix> {
    let config = SamplerConfig { scheme: Scheme::SmoluchowskiEm, ..*config };
    estimate(partition, params, t, samples_per_box, &config, OperatorKind::UlamSmol)
}

/// Top-`k` eigenpairs; right eigenvectors are observables, weighted ones are densities.
pub fn ulam_spectrum(matrix: &UlamMatrix, k: usize) -> Result<SpectrumResult> {
    solve_spectrum(&matrix.to_operator(), k)
}

/// Batch-means standard error of each of the top-`k` eigenvalues (real parts).
pub fn eigenvalue_stderr(matrix: &UlamMatrix, k: usize) -> Result<Vec<f64>> {
    let n = matrix.size();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("requested {k} eigenvalues of a {n}x{n} matrix")));
    }
    let per_batch: Vec<Vec<f64>> = (0..REPLICATES)
        .map(|r| {
            let sym = weighted_similarity(&matrix.replicate(r), &matrix.masses);
            let mut ev: Vec<f64> = sym
                .eigenvalues()
                .map_err(|_| Error::EigenSolver { size: n, kind: matrix.kind.label().into() })?
                .into_iter()
                .map(|z| z.re)
                .collect();
            ev.sort_by(|a, b| b.total_cmp(a));
            ev.truncate(k);
            Ok(ev)
        })
        .collect::<Result<_>>()?;
    Ok((0..k)
        .map(|j| {
            let xs: Vec<f64> = per_batch.iter().map(|v| v[j]).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
            (var / xs.len() as f64).sqrt()
        })
        .collect())
}

/// Seed for the Ulam run at lag-time index `idx` of a sweep.
pub fn sweep_seed(seed: u64, idx: usize) -> u64 {
    derive_seed(seed, 0x5eed_0000 + idx as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::Mat;

    fn params() -> DynamicsParams {
        DynamicsParams::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn partition_boxes_and_masses() {
        let zero = PotentialSpec::zero(1).unwrap();
        let part = build_partition(&zero, &params(), 4).unwrap();
        for (b, lo) in [0.0, 0.25, 0.5, 0.75].iter().enumerate() {
            assert!((part.layout().lower(b)[0] - lo).abs() < 1e-15);
            assert!((part.masses()[b] - 0.25).abs() < 1e-12);
        }
        assert!((part.masses().iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(build_partition(&zero, &params(), 1).is_err());
    }

    #[test]
    fn double_well_masses_peak_in_a_well() {
        let dw = PotentialSpec::double_well();
        let part = build_partition(&dw, &params(), 16).unwrap();
        let (argmax, _) = part
            .masses()
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, &m)| if m > acc.1 { (i, m) } else { acc });
        // minimizers of V found by a dense scan
        let n = 100_000;
        let mins: Vec<f64> = (0..n)
            .map(|i| i as f64 / n as f64)
            .filter(|&q| {
                let h = 1.0 / n as f64;
                let v = dw.value(&[q]).unwrap();
                v < dw.value(&[q - h]).unwrap() && v < dw.value(&[q + h]).unwrap()
            })
            .collect();
        let lo = argmax as f64 / 16.0;
        assert!(mins.iter().any(|m| *m >= lo && *m < lo + 1.0 / 16.0), "{argmax} {mins:?}");
        assert!((part.masses().iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rows_are_stochastic_and_short_lags_stay_home() {
        let dw = PotentialSpec::double_well();
        let part = build_partition(&dw, &params(), 8).unwrap();
        let cfg = SamplerConfig::langevin(1e-3, 17, 0);
        let u = estimate_spatial_ulam(&part, &params(), 1e-3, 200, &cfg).unwrap();
        for i in 0..8 {
            let s: f64 = (0..8).map(|j| u.matrix()[(i, j)]).sum();
            assert_eq!(s, 1.0);
            assert!(u.matrix()[(i, i)] >= 0.9);
            assert!((0..8).all(|j| u.matrix()[(i, j)] >= 0.0));
        }
        let smol = estimate_smoluchowski_ulam(&part, &params(), 0.05, 200, &cfg).unwrap();
        for i in 0..8 {
            let s: f64 = (0..8).map(|j| smol.matrix()[(i, j)]).sum();
            assert_eq!(s, 1.0);
        }
        let spec = ulam_spectrum(&u, 3).unwrap();
        assert!((spec.eigenvalues[0].re - 1.0).abs() < 1e-12);
        assert!(spec.eigenvalues.iter().all(|z| z.norm() <= 1.0 + 1e-12));
    }

    #[test]
    fn estimates_are_deterministic() {
        let dw = PotentialSpec::double_well();
        let part = build_partition(&dw, &params(), 4).unwrap();
        let cfg = SamplerConfig::langevin(1e-3, 5, 0);
        let a = estimate_spatial_ulam(&part, &params(), 0.05, 50, &cfg).unwrap();
        let b = estimate_spatial_ulam(&part, &params(), 0.05, 50, &cfg).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        let c = estimate_spatial_ulam(&part, &params(), 0.05, 50, &cfg.with_seed(6)).unwrap();
        assert_ne!(a.matrix(), c.matrix());
    }

    #[test]
    fn galerkin_form_is_similar_to_transition_form() {
        // two boxes with masses (0.3, 0.7) and a reversible transition matrix
        let masses = vec![0.3, 0.7];
        let p = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => 0.86,
            (0, 1) => 0.14,
            (1, 0) => 0.06,
            _ => 0.94,
        });
        let u = UlamMatrix {
            kind: OperatorKind::UlamS,
            t: 1.0,
            samples_per_box: 1,
            seed: 0,
            params: params(),
            dt: 1e-3,
            layout: CellLayout::boxes(1, 2),
            masses: masses.clone(),
            counts: vec![vec![0; 4]; REPLICATES],
            matrix: p,
        };
        let g = u.galerkin_form();
        let mut a: Vec<f64> = g.eigenvalues().unwrap().iter().map(|z| z.re).collect();
        let mut b: Vec<f64> = u.matrix().eigenvalues().unwrap().iter().map(|z| z.re).collect();
        a.sort_by(|x, y| y.total_cmp(x));
        b.sort_by(|x, y| y.total_cmp(x));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!((a[1] - 0.8).abs() < 1e-14);
        // detailed balance: 0.3 * 0.14 == 0.7 * 0.06
        assert!(flux_asymmetry(u.matrix(), &masses) < 1e-15);
    }

    #[test]
    fn free_diffusion_row_matches_heat_kernel() {
        // wrapped Gaussian transition probability from box i to box j, averaged over box i
        let zero = PotentialSpec::zero(1).unwrap();
        let n = 16;
        let part = build_partition(&zero, &params(), n).unwrap();
        let t = 0.01;
        let m = 4000;
        let cfg = SamplerConfig::smoluchowski(1e-3, 3, 0);
        let u = estimate_smoluchowski_ulam(&part, &params(), t, m, &cfg).unwrap();
        let sd = (2.0 * t).sqrt();
        let phi = |x: f64| 0.5 * (1.0 + statrs::function::erf::erf(x / (sd * std::f64::consts::SQRT_2)));
        let h = 1.0 / n as f64;
        let row = 5;
        for j in 0..n {
            // average over start points in box `row` by midpoint rule
            let mut p = 0.0;
            let k = 400;
            for s in 0..k {
                let x0 = (row as f64 + (s as f64 + 0.5) / k as f64) * h;
                for wrap in -2i32..=2 {
                    let lo = j as f64 * h + wrap as f64;
                    p += phi(lo + h - x0) - phi(lo - x0);
                }
            }
            p /= k as f64;
            let stderr = (p * (1.0 - p) / m as f64).sqrt().max(1e-4);
            let got = u.matrix()[(row, j)];
            assert!((got - p).abs() < 3.0 * stderr + 2e-3, "j={j}: {got} vs {p}");
        }
    }
}
