//! Canonical sampling and SDE integration on the torus.
//!
//! Langevin dynamics (unit mass) is integrated with the BAOAB splitting using
//! the exact Ornstein-Uhlenbeck momentum update; overdamped Smoluchowski
//! dynamics with Euler-Maruyama. Walkers are independent and each owns a
//! counter-based random stream, so ensembles are advanced in parallel with
//! bit-identical results.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::CellLayout;
use crate::potential::{CanonicalDensity, DynamicsParams, PotentialSpec};
use crate::streams::{substream, Purpose};

/// Largest torus dimension supported by the walker kernels.
pub const MAX_DIM: usize = 8;

const MAX_TRIES_PER_SAMPLE: u64 = 100_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "langevin_baoab")]
    LangevinBaoab,
    #[serde(rename = "smoluchowski_em")]
    SmoluchowskiEm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub dt: f64,
    pub seed: u64,
    pub n_walkers: usize,
    pub scheme: Scheme,
}

impl SamplerConfig {
    pub fn langevin(dt: f64, seed: u64, n_walkers: usize) -> Self {
        Self { dt, seed, n_walkers, scheme: Scheme::LangevinBaoab }
    }

    pub fn smoluchowski(dt: f64, seed: u64, n_walkers: usize) -> Self {
        Self { dt, seed, n_walkers, scheme: Scheme::SmoluchowskiEm }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Number of steps covering lag time `t`; rejects step sizes that would
    /// shift `t` by more than 0.5 %.
    pub fn steps_for(&self, t: f64) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidInput(format!("lag time must be >= 0, got {t}")));
        }
        if t == 0.0 {
            return Ok(0);
        }
        let steps = (t / self.dt).round().max(1.0);
        if (steps * self.dt - t).abs() > 5e-3 * t {
            return Err(Error::InvalidInput(format!(
                "lag time {t} is not within 0.5% of a multiple of dt = {}",
                self.dt
            )));
        }
        Ok(steps as usize)
    }
}

/// Positions (and, for Langevin dynamics, momenta) of an ensemble of walkers,
/// stored flat with `dim` coordinates per walker.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleState {
    pub dim: usize,
    pub positions: Vec<f64>,
    pub momenta: Option<Vec<f64>>,
    pub stream_ids: Vec<u64>,
}

impl EnsembleState {
    pub fn new(dim: usize, positions: Vec<f64>, momenta: Option<Vec<f64>>, stream_ids: Vec<u64>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidInput(format!("dimension must be in 1..={MAX_DIM}")));
        }
        if positions.len() != dim * stream_ids.len() {
            return Err(Error::InvalidInput("positions length must be dim * walkers".into()));
        }
        if let Some(p) = &momenta {
            if p.len() != positions.len() {
                return Err(Error::InvalidInput("momenta length must equal positions length".into()));
            }
        }
        let positions = positions.into_iter().map(|x| x.rem_euclid(1.0)).collect();
        Ok(Self { dim, positions, momenta, stream_ids })
    }

    pub fn len(&self) -> usize {
        self.stream_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stream_ids.is_empty()
    }

    pub fn position(&self, walker: usize) -> &[f64] {
        &self.positions[walker * self.dim..(walker + 1) * self.dim]
    }
}

/// Subset of the torus a sampler is restricted to.
#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    /// Axis-aligned box `[lo, hi)` with `0 <= lo < hi <= 1` per axis.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Union of cells of a uniform layout.
    Cells { layout: CellLayout, cells: Vec<usize> },
}

impl Region {
    pub fn dim(&self) -> usize {
        match self {
            Region::Box { lo, .. } => lo.len(),
            Region::Cells { layout, .. } => layout.dim,
        }
    }

    pub fn contains(&self, q: &[f64]) -> bool {
        match self {
            Region::Box { lo, hi } => q
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(x, (l, h))| {
                    let x = x.rem_euclid(1.0);
                    x >= *l && x < *h
                }),
            Region::Cells { layout, cells } => cells.binary_search(&layout.cell_of(q)).is_ok(),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: self.dim() });
        }
        match self {
            Region::Box { lo, hi } => {
                if lo.len() != hi.len() || lo.iter().zip(hi).any(|(l, h)| !(0.0 <= *l && l < h && *h <= 1.0)) {
                    return Err(Error::InvalidInput("region box needs 0 <= lo < hi <= 1 on every axis".into()));
                }
            }
            Region::Cells { layout, cells } => {
                if cells.iter().any(|&c| c >= layout.len()) || cells.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidInput("region cells must be sorted, unique and in range".into()));
                }
            }
        }
        Ok(())
    }

    /// Sub-boxes (lower corner, widths) that make up the region.
    fn pieces(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        match self {
            Region::Box { lo, hi } => vec![(lo.clone(), lo.iter().zip(hi).map(|(l, h)| h - l).collect())],
            Region::Cells { layout, cells } => cells
                .iter()
                .map(|&c| (layout.lower(c), vec![layout.width(); layout.dim]))
                .collect(),
        }
    }
}

/// Rejection sampler for `f_Q` restricted to a region, with a uniform proposal.
#[derive(Clone, Debug)]
pub struct CanonicalSampler {
    spec: PotentialSpec,
    beta: f64,
    pieces: Vec<(Vec<f64>, Vec<f64>)>,
    /// Cumulative piece volumes for proposal selection.
    cumulative: Vec<f64>,
    /// Reference energy: the envelope of `exp(-beta (V - v_ref))` is one.
    v_ref: f64,
    acceptance: f64,
    mass: f64,
}

impl CanonicalSampler {
    /// Builds the sampler; the envelope is the maximum of the Boltzmann factor
    /// on a dense midpoint scan, raised by a Lipschitz bound on the scan spacing.
    pub fn new(spec: &PotentialSpec, params: &DynamicsParams, region: Option<&Region>) -> Result<Self> {
        let global = spec.canonical(params.beta(), if spec.dim() == 1 { 4096 } else { 256 });
        Self::with_density(&global, region)
    }

    /// As [`Self::new`], reusing an already normalized density.
    pub fn with_density(global: &CanonicalDensity, region: Option<&Region>) -> Result<Self> {
        let spec = global.spec();
        let dim = spec.dim();
        let whole = Region::Box { lo: vec![0.0; dim], hi: vec![1.0; dim] };
        let region = region.unwrap_or(&whole);
        region.validate(dim)?;
        let beta = global.beta();
        let pieces = region.pieces();

        // scan density: about 2^16 points in total, at least 4 per axis per piece
        let per_piece = ((65536.0 / pieces.len() as f64).powf(1.0 / dim as f64).ceil() as usize).clamp(4, 4096);
        let mut vmin = f64::INFINITY;
        let mut gmax: f64 = 0.0;
        let mut hmax: f64 = 0.0;
        let mut values = Vec::with_capacity(pieces.len() * per_piece.pow(dim as u32));
        let mut weights = Vec::with_capacity(values.capacity());
        let mut q = vec![0.0; dim];
        let mut g = vec![0.0; dim];
        for (lo, w) in &pieces {
            let cell_vol: f64 = w.iter().map(|x| x / per_piece as f64).product();
            hmax = hmax.max(w.iter().map(|x| (x / per_piece as f64).powi(2)).sum::<f64>().sqrt());
            for idx in 0..per_piece.pow(dim as u32) {
                let mut r = idx;
                for a in 0..dim {
                    q[a] = lo[a] + w[a] * ((r % per_piece) as f64 + 0.5) / per_piece as f64;
                    r /= per_piece;
                }
                let v = spec.gradient_into(&q, &mut g);
                vmin = vmin.min(v);
                gmax = gmax.max(g.iter().map(|x| x * x).sum::<f64>().sqrt());
                values.push(v);
                weights.push(cell_vol);
            }
        }
        let volume: f64 = pieces.iter().map(|(_, w)| w.iter().product::<f64>()).sum();
        // every point lies within hmax/2 of a scan point
        let v_ref = vmin - 1.5 * gmax * hmax / 2.0 - (1e-6f64).ln_1p() / beta;

        let boltz_sum: f64 = values.iter().zip(&weights).map(|(v, w)| w * (-beta * (v - v_ref)).exp()).sum();
        let acceptance = boltz_sum / volume;
        let mass = boltz_sum * (-beta * (v_ref - global.shift())).exp() / global.boltzmann_normalizer();
        if mass <= 1e-12 {
            return Err(Error::ZeroMass { mass });
        }
        if acceptance < 1e-4 {
            return Err(Error::LowAcceptance { rate: acceptance });
        }

        let mut cumulative = Vec::with_capacity(pieces.len());
        let mut acc = 0.0;
        for (_, w) in &pieces {
            acc += w.iter().product::<f64>();
            cumulative.push(acc);
        }
        Ok(Self { spec: spec.clone(), beta, pieces, cumulative, v_ref, acceptance, mass })
    }

    /// Expected acceptance rate of the rejection step.
    pub fn acceptance(&self) -> f64 {
        self.acceptance
    }

    /// Canonical mass of the region (quadrature estimate).
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// One draw per stream id, written into `out` (`dim` entries per id).
    pub fn sample_into(&self, seed: u64, ids: &[u64], out: &mut [f64]) -> Result<()> {
        let dim = self.spec.dim();
        out.par_chunks_mut(dim)
            .zip(ids.par_iter())
            .try_for_each(|(q, &id)| self.draw(&mut substream(seed, Purpose::Position, id), q))
    }

    pub fn sample(&self, seed: u64, ids: &[u64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; ids.len() * self.spec.dim()];
        self.sample_into(seed, ids, &mut out)?;
        Ok(out)
    }

    fn draw(&self, rng: &mut ChaCha8Rng, q: &mut [f64]) -> Result<()> {
        let total = *self.cumulative.last().unwrap();
        for _ in 0..MAX_TRIES_PER_SAMPLE {
            let u = rng.random::<f64>() * total;
            let k = self.cumulative.partition_point(|c| *c <= u).min(self.pieces.len() - 1);
            let (lo, w) = &self.pieces[k];
            for a in 0..q.len() {
                q[a] = (lo[a] + w[a] * rng.random::<f64>()).rem_euclid(1.0);
            }
            let ratio = (-self.beta * (self.spec.value_unchecked(q) - self.v_ref)).exp();
            if rng.random::<f64>() < ratio {
                return Ok(());
            }
        }
        Err(Error::LowAcceptance { rate: 0.0 })
    }
}

/// `n` i.i.d. positions from `f_Q` (restricted to `region` if given).
pub fn sample_canonical_position(
    spec: &PotentialSpec,
    params: &DynamicsParams,
    n: usize,
    region: Option<&Region>,
    seed: u64,
) -> Result<Vec<f64>> {
    let sampler = CanonicalSampler::new(spec, params, region)?;
    let ids: Vec<u64> = (0..n as u64).collect();
    sampler.sample(seed, &ids)
}

/// Gaussian momenta with covariance `(1/beta) I`, one per stream id.
pub fn sample_momenta(dim: usize, params: &DynamicsParams, seed: u64, ids: &[u64]) -> Vec<f64> {
    let sd = (1.0 / params.beta()).sqrt();
    let mut out = vec![0.0; ids.len() * dim];
    out.par_chunks_mut(dim).zip(ids.par_iter()).for_each(|(p, &id)| {
        let mut rng = substream(seed, Purpose::Momentum, id);
        for x in p.iter_mut() {
            *x = sd * rng.sample::<f64, _>(StandardNormal);
        }
    });
    out
}

/// `n` i.i.d. momenta from `f_P`.
pub fn sample_canonical_momentum(dim: usize, params: &DynamicsParams, n: usize, seed: u64) -> Vec<f64> {
    let ids: Vec<u64> = (0..n as u64).collect();
    sample_momenta(dim, params, seed, &ids)
}

#[inline]
fn wrap(x: f64) -> f64 {
    if x < 0.0 {
        let y = x + 1.0;
        if !(0.0..1.0).contains(&y) { x.rem_euclid(1.0) } else { y }
    } else if x >= 1.0 {
        let y = x - 1.0;
        if y >= 1.0 { x.rem_euclid(1.0) } else { y }
    } else {
        x
    }
}

/// Advances one Langevin walker by `steps` BAOAB steps; `observe` sees the
/// state after every step.
#[allow(clippy::too_many_arguments)]
pub fn baoab_walker(
    q: &mut [f64],
    p: &mut [f64],
    spec: &PotentialSpec,
    params: &DynamicsParams,
    dt: f64,
    steps: usize,
    rng: &mut ChaCha8Rng,
    mut observe: impl FnMut(usize, &[f64], &[f64]),
) -> std::result::Result<(), usize> {
    let dim = q.len();
    let c1 = (-params.gamma() * dt).exp();
    let c2 = ((1.0 - c1 * c1) / params.beta()).sqrt();
    let half = 0.5 * dt;
    let mut f = [0.0; MAX_DIM];
    spec.gradient_into(q, &mut f[..dim]);
    for step in 0..steps {
        for a in 0..dim {
            p[a] -= half * f[a];
            q[a] += half * p[a];
            let xi: f64 = rng.sample(StandardNormal);
            p[a] = c1 * p[a] + c2 * xi;
            q[a] = wrap(q[a] + half * p[a]);
        }
        spec.gradient_into(q, &mut f[..dim]);
        let mut finite = true;
        for a in 0..dim {
            p[a] -= half * f[a];
            finite &= p[a].is_finite() && q[a].is_finite();
        }
        if !finite {
            return Err(step);
        }
        observe(step, q, p);
    }
    Ok(())
}

/// Advances one overdamped walker by `steps` Euler-Maruyama steps.
#[allow(clippy::too_many_arguments)]
pub fn euler_maruyama_walker(
    q: &mut [f64],
    spec: &PotentialSpec,
    params: &DynamicsParams,
    dt: f64,
    steps: usize,
    rng: &mut ChaCha8Rng,
    mut observe: impl FnMut(usize, &[f64]),
) -> std::result::Result<(), usize> {
    let dim = q.len();
    let noise = (2.0 * dt / params.beta()).sqrt();
    let mut f = [0.0; MAX_DIM];
    for step in 0..steps {
        spec.gradient_into(q, &mut f[..dim]);
        let mut finite = true;
        for a in 0..dim {
            let xi: f64 = rng.sample(StandardNormal);
            let x = q[a] - f[a] * dt + noise * xi;
            finite &= x.is_finite();
            q[a] = wrap(x);
        }
        if !finite {
            return Err(step);
        }
        observe(step, q);
    }
    Ok(())
}

fn check_state(state: &EnsembleState, spec: &PotentialSpec) -> Result<()> {
    if state.dim != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: state.dim });
    }
    Ok(())
}

/// Advances every walker by lag time `t` under Langevin dynamics.
pub fn integrate_langevin(
    state: &EnsembleState,
    spec: &PotentialSpec,
    params: &DynamicsParams,
    t: f64,
    config: &SamplerConfig,
) -> Result<EnsembleState> {
    check_state(state, spec)?;
    let momenta = state
        .momenta
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("Langevin integration needs momenta".into()))?;
    let steps = config.steps_for(t)?;
    let mut out = state.clone();
    if steps == 0 {
        return Ok(out);
    }
    let dim = state.dim;
    let mut p = momenta.clone();
    out.positions
        .par_chunks_mut(dim)
        .zip(p.par_chunks_mut(dim))
        .zip(state.stream_ids.par_iter())
        .enumerate()
        .try_for_each(|(w, ((q, p), &id))| {
            let mut rng = substream(config.seed, Purpose::Noise, id);
            baoab_walker(q, p, spec, params, config.dt, steps, &mut rng, |_, _, _| {})
                .map_err(|step| Error::NonFinite { walker: w, step })
        })?;
    out.momenta = Some(p);
    Ok(out)
}

/// Advances every walker by time `t` under Smoluchowski dynamics.
pub fn integrate_smoluchowski(
    state: &EnsembleState,
    spec: &PotentialSpec,
    params: &DynamicsParams,
    t: f64,
    config: &SamplerConfig,
) -> Result<EnsembleState> {
    check_state(state, spec)?;
    let steps = config.steps_for(t)?;
    let mut out = state.clone();
    if steps == 0 {
        return Ok(out);
    }
    out.positions
        .par_chunks_mut(state.dim)
        .zip(state.stream_ids.par_iter())
        .enumerate()
        .try_for_each(|(w, (q, &id))| {
            let mut rng = substream(config.seed, Purpose::Noise, id);
            euler_maruyama_walker(q, spec, params, config.dt, steps, &mut rng, |_, _| {})
                .map_err(|step| Error::NonFinite { walker: w, step })
        })?;
    Ok(out)
}

/// Advances according to `config.scheme`.
pub fn integrate(
    state: &EnsembleState,
    spec: &PotentialSpec,
    params: &DynamicsParams,
    t: f64,
    config: &SamplerConfig,
) -> Result<EnsembleState> {
    match config.scheme {
        Scheme::LangevinBaoab => integrate_langevin(state, spec, params, t, config),
        Scheme::SmoluchowskiEm => integrate_smoluchowski(state, spec, params, t, config),
    }
}

/// Integrates serially and writes `walker, step, q..., p...` rows every
/// `every` steps. Output grows as walkers * steps / every.
pub fn dump_trajectories<W: std::io::Write>(
    state: &EnsembleState,
    spec: &PotentialSpec,
    params: &DynamicsParams,
    t: f64,
    config: &SamplerConfig,
    every: usize,
    out: &mut W,
) -> Result<EnsembleState> {
    check_state(state, spec)?;
    let steps = config.steps_for(t)?;
    let every = every.max(1);
    let dim = state.dim;
    let mut header = vec!["walker".to_string(), "step".to_string()];
    header.extend((0..dim).map(|a| format!("q{a}")));
    if state.momenta.is_some() {
        header.extend((0..dim).map(|a| format!("p{a}")));
    }
    writeln!(out, "{}", header.join(","))?;
    let mut next = state.clone();
    let mut io_err = None;
    for w in 0..state.len() {
        let mut rng = substream(config.seed, Purpose::Noise, state.stream_ids[w]);
        let q = &mut next.positions[w * dim..(w + 1) * dim];
        let mut write_row = |step: usize, q: &[f64], p: Option<&[f64]>| {
            if !step.is_multiple_of(every) || io_err.is_some() {
                return;
            }
            let mut cols: Vec<String> = vec![w.to_string(), step.to_string()];
            cols.extend(q.iter().map(|x| crate::io::fmt_sci(*x)));
            if let Some(p) = p {
                cols.extend(p.iter().map(|x| crate::io::fmt_sci(*x)));
            }
            if let Err(e) = writeln!(out, "{}", cols.join(",")) {
                io_err = Some(e);
            }
        };
        let result = match (config.scheme, next.momenta.as_mut()) {
            (Scheme::LangevinBaoab, Some(p)) => {
                let p = &mut p[w * dim..(w + 1) * dim];
                write_row(0, q, Some(p));
                baoab_walker(q, p, spec, params, config.dt, steps, &mut rng, |s, q, p| {
                    write_row(s + 1, q, Some(p))
                })
            }
            (Scheme::LangevinBaoab, None) => {
                return Err(Error::InvalidInput("Langevin integration needs momenta".into()))
            }
            (Scheme::SmoluchowskiEm, _) => {
                write_row(0, q, None);
                euler_maruyama_walker(q, spec, params, config.dt, steps, &mut rng, |s, q| write_row(s + 1, q, None))
            }
        };
        result.map_err(|step| Error::NonFinite { walker: w, step })?;
    }
    if let Some(e) = io_err {
        return Err(e.into());
    }
    Ok(next)
}
