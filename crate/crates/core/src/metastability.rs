//! Metastable sets from eigenvector sign structure, Huisinga-type bounds on
//! their combined metastability, and direct Monte-Carlo estimates of it.

use std::io::Write;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{fmt_sci, write_csv};
use crate::layout::CellLayout;
use crate::potential::{CanonicalDensity, DynamicsParams};
use crate::sim::{integrate, sample_momenta, CanonicalSampler, EnsembleState, Region, SamplerConfig, Scheme};
use crate::spectrum::SpectrumResult;
use crate::streams::derive_seed;

/// Relative threshold below which eigenvector entries count as zero.
pub const SIGN_THRESHOLD: f64 = 1e-8;

/// Only the leading eigenvalues are searched for a gap.
pub const GAP_WINDOW: usize = 8;

/// Sign split `{v_j > 0}` / `{v_j < 0}` of one eigenvector.
#[derive(Clone, Debug, PartialEq)]
pub struct SetPair {
    /// Zero-based eigenpair index `j` (1 for the second eigenvector).
    pub eigen_index: usize,
    /// Sorted cell indices of the positive set.
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
    /// `f_Q` masses of (positive, negative).
    pub masses: (f64, f64),
    /// `+1` or `-1` for every cell.
    pub labels: Vec<i8>,
}

/// Hierarchical sign partitions, one tier per dominant non-constant eigenvector.
#[derive(Clone, Debug)]
pub struct PartitionResult {
    pub layout: CellLayout,
    pub weights: Vec<f64>,
    /// Number of dominant eigenvalues (metastable sets) the tiers were built for.
    pub n_dominant: usize,
    pub tiers: Vec<SetPair>,
}

impl PartitionResult {
    /// Full decomposition into `n` sets, formed by intersecting the tier
    /// splits in eigenvalue order until exactly `n` non-empty sets remain.
    pub fn decomposition(&self, n: usize) -> Result<Vec<Vec<usize>>> {
        let mut sets = vec![(0..self.layout.len()).collect::<Vec<_>>()];
        if n == 1 {
            return Ok(sets);
        }
        for tier in &self.tiers {
            sets = sets
                .into_iter()
                .flat_map(|s| {
                    let (p, m): (Vec<usize>, Vec<usize>) = s.into_iter().partition(|&c| tier.labels[c] > 0);
                    [p, m]
                })
                .filter(|s| !s.is_empty())
                .collect();
            if sets.len() == n {
                return Ok(sets);
            }
            if sets.len() > n {
                break;
            }
        }
        Err(Error::DegeneratePartition(format!(
            "sign structure of {} eigenvectors does not split into exactly {n} sets",
            self.tiers.len()
        )))
    }

    /// `f_Q` mass of a set of cells.
    pub fn mass(&self, set: &[usize]) -> f64 {
        set.iter().map(|&c| self.weights[c]).sum()
    }

    /// Cell labels as CSV: `cell, q0.., tier_2, tier_3, ...` with entries `+1`/`-1`.
    pub fn write_labels<W: Write>(&self, out: &mut W) -> Result<()> {
        let mut header: Vec<String> = vec!["cell".into()];
        header.extend((0..self.layout.dim).map(|a| format!("q{a}")));
        header.extend(self.tiers.iter().map(|t| format!("v{}", t.eigen_index + 1)));
        let rows = (0..self.layout.len()).map(|c| {
            let mut row = vec![c.to_string()];
            row.extend(self.layout.center(c).into_iter().map(fmt_sci));
            row.extend(self.tiers.iter().map(|t| format!("{:+}", t.labels[c])));
            row
        });
        write_csv(out, &header, rows)
    }
}

/// Count of dominant eigenvalues: the `j >= 2` maximizing `lambda_j - lambda_{j+1}`
/// among the leading [`GAP_WINDOW`], smallest `j` on ties.
pub fn spectral_gap(eigenvalues: &[f64]) -> Result<usize> {
    if eigenvalues.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "spectral gap needs at least 3 eigenvalues, got {}",
            eigenvalues.len()
        )));
    }
    let top = &eigenvalues[..eigenvalues.len().min(GAP_WINDOW)];
    let scale = top.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    let mut best = (2, top[1] - top[2]);
    for j in 3..top.len() {
        let gap = top[j - 1] - top[j];
        if gap > best.1 + 1e-12 * scale {
            best = (j, gap);
        }
    }
    Ok(best.0)
}

fn sign_labels(v: &[f64], layout: &CellLayout) -> Result<Vec<i8>> {
    let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tau = SIGN_THRESHOLD * vmax;
    let mut labels: Vec<i8> = v
        .iter()
        .map(|&x| if x > tau { 1 } else if x < -tau { -1 } else { 0 })
        .collect();
    if !labels.contains(&1) || !labels.contains(&-1) {
        return Err(Error::DegeneratePartition("eigenvector has a single sign".into()));
    }
    let signed: Vec<usize> = (0..v.len()).filter(|&i| labels[i] != 0).collect();
    for i in 0..v.len() {
        if labels[i] == 0 {
            // nearest signed cell, smaller index on ties (signed is sorted)
            let nearest = signed.iter().min_by_key(|&&s| layout.torus_distance(i, s)).copied().unwrap();
            labels[i] = labels[nearest];
        }
    }
    Ok(labels)
}

/// Sign partitions of eigenvectors `v_2 .. v_n`, where `n` is `n_sets_hint`
/// or, if absent, the detected spectral gap.
pub fn sign_partition(spectrum: &SpectrumResult, n_sets_hint: Option<usize>) -> Result<PartitionResult> {
    let k = spectrum.len();
    if k < 2 {
        return Err(Error::InvalidInput("sign partition needs at least 2 eigenpairs".into()));
    }
    let v1 = spectrum.eigenvector(0);
    let mean = v1.iter().sum::<f64>() / v1.len() as f64;
    let dev = v1.iter().fold(0.0f64, |m, x| m.max((x - mean).abs())) / mean.abs();
    if !(dev <= 0.05) {
        warn!("leading eigenvector deviates from constant by {dev:.3} (relative)");
    }
    let n = match n_sets_hint {
        Some(n) => n,
        None if k >= 3 => spectral_gap(&spectrum.real_eigenvalues())?,
        None => 2,
    };
    if n < 2 || n > k {
        return Err(Error::InvalidInput(format!("cannot build {n} sets from {k} eigenpairs")));
    }
    let layout = spectrum.layout;
    let tiers = (1..n)
        .map(|j| {
            let labels = sign_labels(&spectrum.eigenvector(j), &layout)?;
            let positive: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] > 0).collect();
            let negative: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] < 0).collect();
            let mp = positive.iter().map(|&c| spectrum.weights[c]).sum();
            let mn = negative.iter().map(|&c| spectrum.weights[c]).sum();
            Ok(SetPair { eigen_index: j, positive, negative, masses: (mp, mn), labels })
        })
        .collect::<Result<_>>()?;
    Ok(PartitionResult { layout, weights: spectrum.weights.clone(), n_dominant: n, tiers })
}

/// Upper and lower bounds on `sum_j p(t, A_j, A_j)` for a decomposition into `n` sets.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundsResult {
    pub t: f64,
    pub upper: f64,
    pub lower: f64,
    /// `rho_j = ||Pi v_j||^2` for `j = 2..n` (unit-norm `v_j`), the weight of
    /// `v_j` in `trace(Pi S Pi) = sum_j lambda_j ||Pi v_j||^2`.
    pub rho: Vec<f64>,
    pub c: f64,
    /// Spectral floor `a` used in the lower bound.
    pub a: f64,
    pub eigenvalues: Vec<f64>,
}

/// Conservative floor `min(0, smallest computed eigenvalue) - 0.05`.
pub fn default_floor(spectrum: &SpectrumResult) -> f64 {
    spectrum.real_eigenvalues().into_iter().fold(0.0f64, f64::min) - 0.05
}

/// Bounds for the decomposition `sets` from the leading `sets.len()` eigenpairs.
///
/// `Pi` is the orthogonal projection onto indicator functions in the
/// `f_Q`-weighted inner product. The lower bound is only valid if the whole
/// spectrum lies in `[a, 1]`, which a finite computation cannot verify.
pub fn huisinga_bounds(spectrum: &SpectrumResult, sets: &[Vec<usize>], a_floor: Option<f64>) -> Result<BoundsResult> {
    let n = sets.len();
    if n < 1 || n > spectrum.len() {
        return Err(Error::InvalidInput(format!(
            "{n} sets need {n} eigenpairs, spectrum has {}",
            spectrum.len()
        )));
    }
    let size = spectrum.layout.len();
    let mut seen = vec![false; size];
    for &c in sets.iter().flatten() {
        if c >= size || std::mem::replace(&mut seen[c], true) {
            return Err(Error::InvalidInput("sets must be disjoint cell indices in range".into()));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::InvalidInput("sets must cover every cell".into()));
    }
    let a = a_floor.unwrap_or_else(|| default_floor(spectrum));
    let w = &spectrum.weights;
    let lambdas: Vec<f64> = spectrum.real_eigenvalues()[..n].to_vec();
    let rho: Vec<f64> = (1..n)
        .map(|j| {
            let v = spectrum.eigenvector(j);
            let norm2: f64 = v.iter().zip(w).map(|(x, w)| w * x * x).sum();
            let proj2: f64 = sets
                .iter()
                .map(|s| {
                    let m: f64 = s.iter().map(|&c| w[c]).sum();
                    let inner: f64 = s.iter().map(|&c| w[c] * v[c]).sum();
                    inner * inner / m
                })
                .sum();
            proj2 / norm2
        })
        .collect();
    let upper = 1.0 + lambdas[1..].iter().sum::<f64>();
    let c = a * rho.iter().map(|r| 1.0 - r).sum::<f64>();
    let lower = 1.0 + rho.iter().zip(&lambdas[1..]).map(|(r, l)| r * l).sum::<f64>() + c;
    if rho.iter().any(|r| !(-1e-12..=1.0 + 1e-12).contains(r)) {
        return Err(Error::Numerical(format!("projection norms outside [0, 1]: {rho:?}")));
    }
    if lower > upper + 1e-12 {
        return Err(Error::Numerical(format!("lower bound {lower} exceeds upper bound {upper}")));
    }
    Ok(BoundsResult { t: spectrum.t, upper, lower, rho, c, a, eigenvalues: lambdas })
}

/// Monte-Carlo estimate of the probabilities `p(t, A, A)` of staying in each set.
#[derive(Clone, Debug, PartialEq)]
pub struct MetastabilityEstimate {
    pub t: f64,
    pub fractions: Vec<f64>,
    pub stderr: Vec<f64>,
    pub sum: f64,
    pub sum_stderr: f64,
}

/// Options for [`estimate_metastability`].
#[derive(Clone, Debug, Default)]
pub struct McOptions<'a> {
    /// Per-cell weights for the initial distribution (e.g. `|v_2|`);
    /// uniform within `f_Q` if absent.
    pub initial_weights: Option<&'a [f64]>,
}

/// Starts `n_samples` walkers from `f_Q` restricted to each set, runs the
/// dynamics in `config.scheme` for time `t`, and counts those ending in the same set.
pub fn estimate_metastability(
    density: &CanonicalDensity,
    layout: CellLayout,
    sets: &[Vec<usize>],
    params: &DynamicsParams,
    t: f64,
    n_samples: usize,
    config: &SamplerConfig,
    options: &McOptions,
) -> Result<MetastabilityEstimate> {
    let spec = density.spec();
    if spec.dim() != layout.dim {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: layout.dim });
    }
    if n_samples == 0 || sets.is_empty() {
        return Err(Error::InvalidInput("need at least one set and one sample".into()));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(format!("lag time must be non-negative, got {t}")));
    }
    let steps = config.steps_for(t)?;
    let dim = layout.dim;
    let per_set: Vec<(f64, f64)> = sets
        .par_iter()
        .enumerate()
        .map(|(k, set)| -> Result<(f64, f64)> {
            let mut cells = set.clone();
            cells.sort_unstable();
            let region = Region::Cells { layout, cells };
            let sampler = CanonicalSampler::with_density(density, Some(&region))?;
            if steps == 0 {
                return Ok((1.0, 0.0));
            }
            let seed = derive_seed(config.seed, k as u64);
            let ids: Vec<u64> = (0..n_samples as u64).collect();
            let q = sampler.sample(seed, &ids)?;
            let p = (config.scheme == Scheme::LangevinBaoab).then(|| sample_momenta(dim, params, seed, &ids));
            let start = EnsembleState::new(dim, q, p, ids)?;
            let cfg = SamplerConfig { seed, ..*config };
            let end = integrate(&start, spec, params, t, &cfg)?;
            let weight = |s: usize| match options.initial_weights {
                Some(w) => w[layout.cell_of(start.position(s))],
                None => 1.0,
            };
            let (mut stay, mut total, mut sq) = (0.0, 0.0, 0.0);
            for s in 0..n_samples {
                let w = weight(s);
                total += w;
                sq += w * w;
                if region.contains(end.position(s)) {
                    stay += w;
                }
            }
            if !(total > 0.0) {
                return Err(Error::InvalidInput(format!("initial weights vanish on set {k}")));
            }
            let frac = stay / total;
            let n_eff = total * total / sq;
            Ok((frac, (frac * (1.0 - frac) / n_eff).sqrt()))
        })
        .collect::<Result<_>>()?;
    let fractions: Vec<f64> = per_set.iter().map(|x| x.0).collect();
    let stderr: Vec<f64> = per_set.iter().map(|x| x.1).collect();
    Ok(MetastabilityEstimate {
        t,
        sum: fractions.iter().sum(),
        sum_stderr: stderr.iter().map(|s| s * s).sum::<f64>().sqrt(),
        fractions,
        stderr,
    })
}

/// Spectrum a bound was computed from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundSource {
    Ulam,
    CollocationEt,
    CollocationRt,
}

impl BoundSource {
    pub fn label(&self) -> &'static str {
        match self {
            BoundSource::Ulam => "ulam",
            BoundSource::CollocationEt => "collocation_Et",
            BoundSource::CollocationRt => "collocation_Rt",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundsRow {
    pub t: f64,
    pub upper: f64,
    pub lower: f64,
    pub mc_sum: f64,
    pub mc_stderr: f64,
    pub source: BoundSource,
}

impl BoundsRow {
    /// Whether the estimate lies within the bounds widened by `k` standard errors.
    pub fn contains(&self, k: f64) -> bool {
        self.mc_sum >= self.lower - k * self.mc_stderr && self.mc_sum <= self.upper + k * self.mc_stderr
    }
}

/// `t, upper, lower, mc_sum, mc_stderr, source`.
pub fn write_bounds_csv<W: Write>(out: &mut W, rows: &[BoundsRow]) -> Result<()> {
    let header = ["t", "upper", "lower", "mc_sum", "mc_stderr", "source"].map(String::from);
    let rows = rows.iter().map(|r| {
        vec![
            fmt_sci(r.t),
            fmt_sci(r.upper),
            fmt_sci(r.lower),
            fmt_sci(r.mc_sum),
            fmt_sci(r.mc_stderr),
            r.source.label().to_string(),
        ]
    });
    write_csv(out, &header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collocation::{OperatorKind, OperatorMatrix};
    use crate::potential::PotentialSpec;
    use crate::spectrum::solve_spectrum;
    use faer::Mat;

    fn params() -> DynamicsParams {
        DynamicsParams::new(1.0, 1.0).unwrap()
    }

    fn toy_spectrum(matrix: Mat<f64>, weights: Vec<f64>) -> SpectrumResult {
        let n = weights.len();
        let op = OperatorMatrix {
            kind: OperatorKind::UlamS,
            t: 1.0,
            params: params(),
            matrix,
            layout: CellLayout::boxes(1, n),
            density: weights.iter().map(|w| w * n as f64).collect(),
            weights,
        };
        solve_spectrum(&op, n).unwrap()
    }

    #[test]
    fn gap_examples() {
        assert_eq!(spectral_gap(&[1.0, 0.94, 0.43, 0.31]).unwrap(), 2);
        assert_eq!(spectral_gap(&[0.997, 0.905, 0.895, 0.812, 0.406, 0.365]).unwrap(), 4);
        assert_eq!(spectral_gap(&[1.0, 0.9, 0.8, 0.7, 0.6]).unwrap(), 2);
        assert!(spectral_gap(&[1.0, 0.5]).is_err());
        // only the leading eight are considered
        let mut ev = vec![1.0, 0.99, 0.98, 0.97, 0.96, 0.95, 0.94, 0.93, 0.0];
        assert_eq!(spectral_gap(&ev).unwrap(), 2);
        ev[2] = 0.5;
        assert_eq!(spectral_gap(&ev).unwrap(), 2);
    }

    #[test]
    fn decoupled_blocks_give_tight_bounds() {
        // two invariant blocks {0,1} and {2,3}; lambda_2 = 1
        let p = Mat::from_fn(4, 4, |i, j| if i / 2 == j / 2 { 0.5 } else { 0.0 });
        let mut s = toy_spectrum(p, vec![0.25; 4]);
        // the degenerate unit eigenspace: pick the block indicator difference explicitly
        s.eigenvalues[1] = faer::c64::new(1.0, 0.0);
        for i in 0..4 {
            s.eigenvectors_nodal[(i, 1)] = if i < 2 { 1.0 } else { -1.0 };
        }
        let part = sign_partition(&s, Some(2)).unwrap();
        let sets = part.decomposition(2).unwrap();
        assert_eq!(sets, vec![vec![0, 1], vec![2, 3]]);
        let b = huisinga_bounds(&s, &sets, None).unwrap();
        assert!((b.rho[0] - 1.0).abs() < 1e-14);
        assert!((b.upper - 2.0).abs() < 1e-14);
        assert!((b.lower - b.upper).abs() < 1e-14);
    }

    #[test]
    fn nearly_decoupled_blocks() {
        let eps = 0.01;
        let p = Mat::from_fn(4, 4, |i, j| if i / 2 == j / 2 { 0.5 - eps / 2.0 } else { eps / 2.0 });
        let s = toy_spectrum(p, vec![0.25; 4]);
        let lam2 = s.eigenvalues[1].re;
        assert!((lam2 - (1.0 - 2.0 * eps)).abs() < 1e-12);
        let part = sign_partition(&s, None).unwrap();
        assert_eq!(part.n_dominant, 2);
        let sets = part.decomposition(2).unwrap();
        let b = huisinga_bounds(&s, &sets, Some(-0.05)).unwrap();
        // exact: p(A,A) = 1 - eps for both blocks
        let exact = 2.0 * (1.0 - eps);
        assert!(b.lower <= exact + 1e-12 && exact <= b.upper + 1e-12);
        assert!((b.upper - (1.0 + lam2)).abs() < 1e-14);
    }

    #[test]
    fn bounds_contain_exact_metastability_of_reversible_chain() {
        // P = D^-1 K with symmetric K is reversible w.r.t. mu = rowsum(K) / sum(K)
        let k = [
            [4.0, 2.0, 1.0, 0.2, 0.1, 0.05],
            [2.0, 5.0, 2.0, 0.3, 0.1, 0.1],
            [1.0, 2.0, 3.0, 0.6, 0.2, 0.1],
            [0.2, 0.3, 0.6, 3.0, 1.5, 1.0],
            [0.1, 0.1, 0.2, 1.5, 4.0, 2.0],
            [0.05, 0.1, 0.1, 1.0, 2.0, 5.0],
        ];
        let d: Vec<f64> = k.iter().map(|r| r.iter().sum()).collect();
        let total: f64 = d.iter().sum();
        let mu: Vec<f64> = d.iter().map(|x| x / total).collect();
        let p = Mat::from_fn(6, 6, |i, j| k[i][j] / d[i]);
        let sets = vec![vec![0, 1, 2], vec![3, 4, 5]];
        let exact: f64 = sets
            .iter()
            .map(|s| {
                let m: f64 = s.iter().map(|&i| mu[i]).sum();
                s.iter().map(|&i| mu[i] * s.iter().map(|&j| p[(i, j)]).sum::<f64>()).sum::<f64>() / m
            })
            .sum();
        let s = toy_spectrum(p, mu);
        let a = s.real_eigenvalues().into_iter().fold(1.0, f64::min);
        let b = huisinga_bounds(&s, &sets, Some(a)).unwrap();
        assert!((exact - 1.849392712550607).abs() < 1e-12);
        assert!(b.lower <= exact && exact <= b.upper, "{} <= {exact} <= {}", b.lower, b.upper);
        // the squared projection norm matters: with ||Pi v|| the lower bound would exceed the exact value
        let unsquared = 1.0 + b.rho[0].sqrt() * b.eigenvalues[1] + a * (1.0 - b.rho[0].sqrt());
        assert!(unsquared > exact);
    }

    #[test]
    fn constant_vector_is_rejected() {
        let layout = CellLayout::boxes(1, 5);
        assert!(sign_labels(&[1.0; 5], &layout).is_err());
        assert!(sign_labels(&[0.0; 5], &layout).is_err());
    }

    #[test]
    fn zeros_follow_nearest_neighbor() {
        let layout = CellLayout::boxes(1, 8);
        let v = [1.0, 1.0, 0.0, -1.0, -1.0, -1.0, 0.0, 0.0];
        let labels = sign_labels(&v, &layout).unwrap();
        // cell 2 ties between 1 (+) and 3 (-): smaller index wins
        assert_eq!(labels, vec![1, 1, 1, -1, -1, -1, -1, 1]);
    }

    #[test]
    fn mismatched_counts_are_rejected() {
        let p = Mat::from_fn(2, 2, |i, j| if i == j { 0.9 } else { 0.1 });
        let s = toy_spectrum(p, vec![0.5; 2]);
        let three = vec![vec![0], vec![1], vec![]];
        assert!(huisinga_bounds(&s, &three, None).is_err());
        assert!(huisinga_bounds(&s, &[vec![0], vec![0]], None).is_err());
    }

    #[test]
    fn zero_lag_fractions_are_one() {
        let dw = PotentialSpec::double_well();
        let density = dw.canonical(1.0, 4096);
        let layout = CellLayout::boxes(1, 8);
        let sets = vec![(0..4).collect(), (4..8).collect()];
        let cfg = SamplerConfig::langevin(1e-3, 1, 0);
        let est = estimate_metastability(&density, layout, &sets, &params(), 0.0, 100, &cfg, &McOptions::default())
            .unwrap();
        assert_eq!(est.fractions, vec![1.0, 1.0]);
        assert_eq!(est.sum, 2.0);
    }

    #[test]
    fn free_diffusion_mixes_to_one_half() {
        let zero = PotentialSpec::zero(1).unwrap();
        let density = zero.canonical(1.0, 64);
        let layout = CellLayout::boxes(1, 2);
        let sets = vec![vec![0], vec![1]];
        let cfg = SamplerConfig::smoluchowski(1e-2, 9, 0);
        let n = 4000;
        let est =
            estimate_metastability(&density, layout, &sets, &params(), 2.0, n, &cfg, &McOptions::default()).unwrap();
        for (f, s) in est.fractions.iter().zip(&est.stderr) {
            assert!((f - 0.5).abs() < 3.0 * s.max(0.5 / (n as f64).sqrt()), "{f} {s}");
        }
    }

    #[test]
    fn bounds_csv_header() {
        let mut buf = Vec::new();
        let row = BoundsRow { t: 0.1, upper: 1.9, lower: 1.8, mc_sum: 1.85, mc_stderr: 0.01, source: BoundSource::Ulam };
        write_bounds_csv(&mut buf, std::slice::from_ref(&row)).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("t,upper,lower,mc_sum,mc_stderr,source\n1.000000000000e-01,"));
        assert!(s.trim_end().ends_with(",ulam"));
        assert!(row.contains(0.0));
    }
}
