//! Smooth periodic potentials on the unit torus `[0,1)^d`.
//!
//! A potential is a trigonometric polynomial: a constant plus a sum of
//! monomials `coef * prod_i cos(2*pi*freq_i*q_i - phase_i)^power_i`. This form
//! keeps every potential 1-periodic in each coordinate, infinitely smooth, and
//! gives exact analytic gradients.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of distinct `(axis, freq, phase)` angles evaluated on the stack.
const STACK_ANGLES: usize = 16;

/// One axis of a trigonometric monomial: `cos(2*pi*freq*q - phase)^power`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisFactor {
    pub freq: i32,
    /// Radians.
    pub phase: f64,
    pub power: u32,
}

impl AxisFactor {
    pub fn new(freq: i32, phase: f64, power: u32) -> Self {
        Self { freq, phase, power }
    }

    /// A factor identically equal to one.
    pub fn unit() -> Self {
        Self::new(0, 0.0, 1)
    }
}

/// `coef * prod_i factor_i(q_i)`, one factor per torus axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub coef: f64,
    pub factors: Vec<AxisFactor>,
}

impl TrigTerm {
    /// Term depending on a single axis of a `dim`-dimensional torus.
    pub fn on_axis(dim: usize, axis: usize, coef: f64, factor: AxisFactor) -> Self {
        let mut factors = vec![AxisFactor::unit(); dim];
        factors[axis] = factor;
        Self { coef, factors }
    }
}

#[derive(Clone, Copy, Debug)]
struct CompiledFactor {
    angle: usize,
    power: u32,
}

#[derive(Clone, Debug)]
struct CompiledTerm {
    coef: f64,
    factors: Vec<CompiledFactor>,
}

/// Sum of all single-factor terms on one angle, as a polynomial in its cosine.
#[derive(Clone, Debug)]
struct AnglePoly {
    angle: usize,
    /// `coefs[p]` multiplies `cos^p`.
    coefs: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Angle {
    axis: usize,
    /// `2*pi*freq`
    omega: f64,
    phase: f64,
}

/// A periodic potential `V` on the `dim`-torus.
///
/// Construction validates the terms and compiles them into a table of distinct
/// angles so that each gradient evaluation computes every `sin`/`cos` once.
#[derive(Clone, Debug)]
pub struct PotentialSpec {
    dim: usize,
    terms: Vec<TrigTerm>,
    constant: f64,
    angles: Vec<Angle>,
    polys: Vec<AnglePoly>,
    compiled: Vec<CompiledTerm>,
    compiled_constant: f64,
}

impl PartialEq for PotentialSpec {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.terms == other.terms && self.constant == other.constant
    }
}

impl PotentialSpec {
    pub fn new(dim: usize, constant: f64, terms: Vec<TrigTerm>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("potential dimension must be positive".into()));
        }
        if !constant.is_finite() {
            return Err(Error::InvalidInput("potential constant must be finite".into()));
        }
        let mut angles: Vec<Angle> = Vec::new();
        let mut compiled = Vec::with_capacity(terms.len());
        let mut polys: Vec<AnglePoly> = Vec::new();
        let mut compiled_constant = constant;
        for (t, term) in terms.iter().enumerate() {
            if term.factors.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "term {t} has {} axis factors, potential dimension is {dim}",
                    term.factors.len()
                )));
            }
            if !term.coef.is_finite() || term.factors.iter().any(|f| !f.phase.is_finite()) {
                return Err(Error::InvalidInput(format!("term {t} has a non-finite coefficient or phase")));
            }
            let mut coef = term.coef;
            let mut factors = Vec::new();
            for (axis, f) in term.factors.iter().enumerate() {
                if f.power == 0 {
                    continue;
                }
                if f.freq == 0 {
                    // constant factor
                    coef *= (-f.phase).cos().powi(f.power as i32);
                    continue;
                }
                let angle = Angle { axis, omega: TAU * f.freq as f64, phase: f.phase };
                let idx = match angles.iter().position(|a| *a == angle) {
                    Some(i) => i,
                    None => {
                        angles.push(angle);
                        angles.len() - 1
                    }
                };
                factors.push(CompiledFactor { angle: idx, power: f.power });
            }
            if factors.is_empty() {
                compiled_constant += coef;
            } else if factors.len() == 1 {
                let f = factors[0];
                let k = match polys.iter().position(|p| p.angle == f.angle) {
                    Some(k) => k,
                    None => {
                        polys.push(AnglePoly { angle: f.angle, coefs: Vec::new() });
                        polys.len() - 1
                    }
                };
                let c = &mut polys[k].coefs;
                if c.len() <= f.power as usize {
                    c.resize(f.power as usize + 1, 0.0);
                }
                c[f.power as usize] += coef;
            } else if coef != 0.0 {
                compiled.push(CompiledTerm { coef, factors });
            }
        }
        Ok(Self { dim, terms, constant, angles, polys, compiled, compiled_constant })
    }

    /// The zero potential on the `dim`-torus.
    pub fn zero(dim: usize) -> Result<Self> {
        Self::new(dim, 0.0, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[TrigTerm] {
        &self.terms
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    fn check_dim(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: q.len() });
        }
        Ok(())
    }

    /// `V(q)`. Coordinates are reduced mod 1 first.
    pub fn value(&self, q: &[f64]) -> Result<f64> {
        self.check_dim(q)?;
        Ok(self.value_unchecked(q))
    }

    /// `grad V(q)`.
    pub fn gradient(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(q)?;
        let mut g = vec![0.0; self.dim];
        self.gradient_into(q, &mut g);
        Ok(g)
    }

    /// `V(q)` without the dimension check; `q.len()` must equal `dim`.
    pub fn value_unchecked(&self, q: &[f64]) -> f64 {
        self.with_trig(q, |trig| {
            let mut v = self.compiled_constant;
            for poly in &self.polys {
                let c = trig[poly.angle].0;
                v += poly.coefs.iter().rev().fold(0.0, |acc, k| acc * c + k);
            }
            for term in &self.compiled {
                let mut prod = term.coef;
                for f in &term.factors {
                    prod *= ipow(trig[f.angle].0, f.power);
                }
                v += prod;
            }
            v
        })
    }

    /// Writes `grad V(q)` into `out` (length `dim`) and returns `V(q)`.
    pub fn gradient_into(&self, q: &[f64], out: &mut [f64]) -> f64 {
        out.iter_mut().for_each(|g| *g = 0.0);
        self.with_trig(q, |trig| {
            let mut v = self.compiled_constant;
            for poly in &self.polys {
                let (c, s) = trig[poly.angle];
                // Horner for P(c) and P'(c) together
                let (mut p, mut dp) = (0.0, 0.0);
                for k in poly.coefs.iter().rev() {
                    dp = dp * c + p;
                    p = p * c + k;
                }
                v += p;
                let angle = &self.angles[poly.angle];
                out[angle.axis] -= angle.omega * s * dp;
            }
            for term in &self.compiled {
                let mut prod = term.coef;
                for f in &term.factors {
                    prod *= ipow(trig[f.angle].0, f.power);
                }
                v += prod;
                for (k, fk) in term.factors.iter().enumerate() {
                    let (c, s) = trig[fk.angle];
                    let angle = &self.angles[fk.angle];
                    // d/dq cos(wq - phi)^p = -p w sin(wq - phi) cos(wq - phi)^(p-1)
                    let mut d = -(fk.power as f64) * angle.omega * s * ipow(c, fk.power.saturating_sub(1));
                    d *= term.coef;
                    for (m, fm) in term.factors.iter().enumerate() {
                        if m != k {
                            d *= ipow(trig[fm.angle].0, fm.power);
                        }
                    }
                    out[angle.axis] += d;
                }
            }
            v
        })
    }

    #[inline]
    fn with_trig<R>(&self, q: &[f64], f: impl FnOnce(&[(f64, f64)]) -> R) -> R {
        let fill = |buf: &mut [(f64, f64)]| {
            for (slot, a) in buf.iter_mut().zip(&self.angles) {
                let r = q[a.axis];
                // the common case needs no (slow) fmod
                let r = if (0.0..1.0).contains(&r) { r } else { r.rem_euclid(1.0) };
                let x = a.omega * r - a.phase;
                let (s, c) = x.sin_cos();
                *slot = (c, s);
            }
        };
        if self.angles.len() <= STACK_ANGLES {
            let mut buf = [(0.0, 0.0); STACK_ANGLES];
            fill(&mut buf[..self.angles.len()]);
            f(&buf[..self.angles.len()])
        } else {
            let mut buf = vec![(0.0, 0.0); self.angles.len()];
            fill(&mut buf);
            f(&buf)
        }
    }

    /// Minimum and maximum of `V` over the tensor grid with `n` points per axis,
    /// plus the largest gradient norm seen on that grid.
    pub fn grid_extrema(&self, n: usize) -> (f64, f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut gmax: f64 = 0.0;
        let mut q = vec![0.0; self.dim];
        let mut g = vec![0.0; self.dim];
        for idx in 0..n.pow(self.dim as u32) {
            let mut r = idx;
            for x in q.iter_mut() {
                *x = (r % n) as f64 / n as f64;
                r /= n;
            }
            let v = self.gradient_into(&q, &mut g);
            lo = lo.min(v);
            hi = hi.max(v);
            gmax = gmax.max(g.iter().map(|x| x * x).sum::<f64>().sqrt());
        }
        (lo, hi, gmax)
    }

    /// The double-well potential `1 + 3cos(2 pi q) + 3cos^2(2 pi q) - cos^3(2 pi q)` on the circle.
    pub fn double_well() -> Self {
        Self::new(1, 1.0, well_terms(1, 0)).expect("builtin potential is valid")
    }

    /// Sum of two double wells (one per axis) plus the asymmetric coupling
    /// `cos(2 pi q_2 - pi/3)`, giving four minima of different depth.
    pub fn four_well() -> Self {
        let mut terms = well_terms(2, 0);
        terms.extend(well_terms(2, 1));
        terms.push(TrigTerm::on_axis(2, 1, 1.0, AxisFactor::new(1, PI / 3.0, 1)));
        Self::new(2, 2.0, terms).expect("builtin potential is valid")
    }

    /// Looks up a built-in potential by name (`double_well` or `four_well`).
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "double_well" | "double-well" => Ok(Self::double_well()),
            "four_well" | "four-well" => Ok(Self::four_well()),
            other => Err(Error::InvalidInput(format!("unknown builtin potential `{other}`"))),
        }
    }

    /// Builds the canonical position density `exp(-beta V) / Z` with `Z`
    /// computed by the trapezoid rule on `quad_n` points per axis.
    pub fn canonical(&self, beta: f64, quad_n: usize) -> CanonicalDensity {
        CanonicalDensity::new(self.clone(), beta, quad_n)
    }
}

fn well_terms(dim: usize, axis: usize) -> Vec<TrigTerm> {
    vec![
        TrigTerm::on_axis(dim, axis, 3.0, AxisFactor::new(1, 0.0, 1)),
        TrigTerm::on_axis(dim, axis, 3.0, AxisFactor::new(1, 0.0, 2)),
        TrigTerm::on_axis(dim, axis, -1.0, AxisFactor::new(1, 0.0, 3)),
    ]
}

/// `x^p` by repeated squaring; cheaper than `powi` for the small powers used here.
#[inline]
fn ipow(mut x: f64, mut p: u32) -> f64 {
    let mut acc = 1.0;
    while p > 0 {
        if p & 1 == 1 {
            acc *= x;
        }
        x *= x;
        p >>= 1;
    }
    acc
}

/// Config-file form of a single term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub coef: f64,
    pub freq: Vec<i32>,
    #[serde(default)]
    pub phase: Option<Vec<f64>>,
    #[serde(default)]
    pub power: Option<Vec<u32>>,
}

/// Config-file form of a potential: either a builtin name or an inline table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PotentialConfig {
    Builtin(String),
    Inline {
        dim: usize,
        #[serde(default)]
        constant: f64,
        #[serde(default)]
        terms: Vec<TermConfig>,
    },
}

impl PotentialConfig {
    /// Resolves to a spec; errors name the offending field under `path`.
    pub fn resolve(&self, path: &str) -> Result<PotentialSpec> {
        match self {
            PotentialConfig::Builtin(name) => PotentialSpec::builtin(name)
                .map_err(|e| Error::config(path, e.to_string())),
            PotentialConfig::Inline { dim, constant, terms } => {
                if *dim == 0 {
                    return Err(Error::config(format!("{path}.dim"), "must be positive"));
                }
                let mut out = Vec::with_capacity(terms.len());
                for (i, t) in terms.iter().enumerate() {
                    let field = |name: &str| format!("{path}.terms[{i}].{name}");
                    if t.freq.len() != *dim {
                        return Err(Error::config(field("freq"), format!("expected {dim} entries")));
                    }
                    let phase = t.phase.clone().unwrap_or_else(|| vec![0.0; *dim]);
                    if phase.len() != *dim {
                        return Err(Error::config(field("phase"), format!("expected {dim} entries")));
                    }
                    let power = t.power.clone().unwrap_or_else(|| vec![1; *dim]);
                    if power.len() != *dim {
                        return Err(Error::config(field("power"), format!("expected {dim} entries")));
                    }
                    let factors = (0..*dim)
                        .map(|a| AxisFactor::new(t.freq[a], phase[a], power[a]))
                        .collect();
                    out.push(TrigTerm { coef: t.coef, factors });
                }
                PotentialSpec::new(*dim, *constant, out).map_err(|e| Error::config(path, e.to_string()))
            }
        }
    }
}

/// Thermodynamic and friction parameters of the Langevin dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    beta: f64,
    gamma: f64,
    sigma: f64,
}

impl DynamicsParams {
    /// `sigma` is always derived as `sqrt(2 gamma / beta)`.
    pub fn new(beta: f64, gamma: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidInput(format!("beta must be positive, got {beta}")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidInput(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Self { beta, gamma, sigma: (2.0 * gamma / beta).sqrt() })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// `f_Q(q) = exp(-beta V(q)) / Z` on the torus.
#[derive(Clone, Debug)]
pub struct CanonicalDensity {
    spec: PotentialSpec,
    beta: f64,
    /// Energy shift keeping the exponent non-positive.
    shift: f64,
    /// Partition function of the shifted Boltzmann factor.
    z_shifted: f64,
}

impl CanonicalDensity {
    pub fn new(spec: PotentialSpec, beta: f64, quad_n: usize) -> Self {
        let (lo, _, _) = spec.grid_extrema(quad_n);
        let z_shifted = trapezoid(&spec, quad_n, |v| (-beta * (v - lo)).exp());
        Self { spec, beta, shift: lo, z_shifted }
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn density(&self, q: &[f64]) -> f64 {
        self.boltzmann(q) / self.z_shifted
    }

    /// Unnormalized `exp(-beta (V(q) - shift))`.
    pub fn boltzmann(&self, q: &[f64]) -> f64 {
        (-self.beta * (self.spec.value_unchecked(q) - self.shift)).exp()
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Normalizer of the shifted Boltzmann factor returned by [`Self::boltzmann`].
    pub fn boltzmann_normalizer(&self) -> f64 {
        self.z_shifted
    }

    /// `ln Z` for the unshifted potential.
    pub fn log_partition(&self) -> f64 {
        self.z_shifted.ln() - self.beta * self.shift
    }
}

/// Trapezoid rule (equal weights on the periodic grid) of `g(V(q))` over the torus.
pub fn trapezoid(spec: &PotentialSpec, n: usize, g: impl Fn(f64) -> f64) -> f64 {
    let dim = spec.dim();
    let total = n.pow(dim as u32);
    let mut q = vec![0.0; dim];
    let mut sum = 0.0;
    for idx in 0..total {
        let mut r = idx;
        for x in q.iter_mut() {
            *x = (r % n) as f64 / n as f64;
            r /= n;
        }
        sum += g(spec.value_unchecked(&q));
    }
    sum / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn central_difference(spec: &PotentialSpec, q: &[f64], h: f64) -> Vec<f64> {
        (0..q.len())
            .map(|a| {
                let mut qp = q.to_vec();
                let mut qm = q.to_vec();
                qp[a] += h;
                qm[a] -= h;
                (spec.value(&qp).unwrap() - spec.value(&qm).unwrap()) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn double_well_values() {
        let dw = PotentialSpec::double_well();
        assert!((dw.value(&[0.0]).unwrap() - 6.0).abs() < 1e-14);
        assert!((dw.value(&[0.25]).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(dw.dim(), 1);
        assert_eq!(dw.terms().len() + 1, 4);
    }

    #[test]
    fn four_well_value_at_quarter() {
        let fw = PotentialSpec::four_well();
        // 1 + 1 + cos(pi/2 - pi/3)
        let expected = 2.0 + (PI / 6.0).cos();
        assert!((fw.value(&[0.25, 0.25]).unwrap() - expected).abs() < 1e-14);
        assert!((expected - 2.8660).abs() < 1e-4);
        assert_eq!(fw.dim(), 2);
        assert!(fw
            .terms()
            .iter()
            .any(|t| t.factors[1].phase == PI / 3.0 && t.factors[1].freq == 1));
    }

    #[test]
    fn gradient_vanishes_at_critical_point() {
        let dw = PotentialSpec::double_well();
        assert!(dw.gradient(&[0.0]).unwrap()[0].abs() < 1e-14);
        let zero = PotentialSpec::zero(2).unwrap();
        assert_eq!(zero.gradient(&[0.3, 0.7]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn gradient_matches_central_difference_at_point_one() {
        let dw = PotentialSpec::double_well();
        let g = dw.gradient(&[0.1]).unwrap();
        let fd = central_difference(&dw, &[0.1], 1e-5);
        assert!((g[0] - fd[0]).abs() < 1e-7, "{} vs {}", g[0], fd[0]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let dw = PotentialSpec::double_well();
        assert!(matches!(dw.value(&[0.1, 0.2]), Err(Error::DimensionMismatch { expected: 1, got: 2 })));
        assert!(dw.gradient(&[]).is_err());
    }

    #[test]
    fn double_well_minima_from_dense_scan() {
        // dense scan, then golden-section refinement around each local minimum
        let dw = PotentialSpec::double_well();
        let n = 10_000;
        let v: Vec<f64> = (0..n).map(|i| dw.value(&[i as f64 / n as f64]).unwrap()).collect();
        let mut minima = Vec::new();
        for i in 0..n {
            let (l, r) = (v[(i + n - 1) % n], v[(i + 1) % n]);
            if v[i] < l && v[i] < r {
                let (mut a, mut b) = ((i as f64 - 1.0) / n as f64, (i as f64 + 1.0) / n as f64);
                for _ in 0..60 {
                    let m1 = a + (b - a) / 3.0;
                    let m2 = b - (b - a) / 3.0;
                    if dw.value(&[m1]).unwrap() < dw.value(&[m2]).unwrap() {
                        b = m2;
                    } else {
                        a = m1;
                    }
                }
                minima.push(0.5 * (a + b));
            }
        }
        // dV/dc = 3 + 6c - 3c^2 vanishes at c = 1 - sqrt(2), c = cos(2 pi q)
        let q_star = (1.0 - 2f64.sqrt()).acos() / std::f64::consts::TAU;
        assert_eq!(minima.len(), 2);
        assert!((minima[0] - q_star).abs() < 1e-6, "{minima:?}");
        assert!((minima[1] - (1.0 - q_star)).abs() < 1e-6, "{minima:?}");
    }

    #[test]
    fn builtin_lookup() {
        assert_eq!(PotentialSpec::builtin("double_well").unwrap(), PotentialSpec::double_well());
        assert_eq!(PotentialSpec::builtin("four_well").unwrap(), PotentialSpec::four_well());
        assert!(PotentialSpec::builtin("six_well").is_err());
    }

    #[test]
    fn inline_config_resolves() {
        let src = r#"
            dim = 2
            constant = 2.0
            [[terms]]
            coef = 1.0
            freq = [0, 1]
            phase = [0.0, 1.0471975511965976]
        "#;
        let cfg: PotentialConfig = toml::from_str(src).unwrap();
        let spec = cfg.resolve("potential").unwrap();
        assert!((spec.value(&[0.1, 0.25]).unwrap() - (2.0 + (PI / 6.0).cos())).abs() < 1e-14);

        let bad: PotentialConfig = toml::from_str("dim = 2\n[[terms]]\ncoef = 1.0\nfreq = [1]\n").unwrap();
        match bad.resolve("potential") {
            Err(Error::Config { field, .. }) => assert_eq!(field, "potential.terms[0].freq"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fluctuation_dissipation() {
        for (beta, gamma) in [(1.0, 1.0), (4.0, 0.5), (0.3, 7.0)] {
            let p = DynamicsParams::new(beta, gamma).unwrap();
            assert!((p.sigma() * p.sigma() * p.beta() - 2.0 * p.gamma()).abs() <= 4.0 * f64::EPSILON * gamma);
        }
        assert!(DynamicsParams::new(0.0, 1.0).is_err());
        assert!(DynamicsParams::new(1.0, -1.0).is_err());
    }

    #[test]
    fn partition_function_converges_spectrally() {
        let dw = PotentialSpec::double_well();
        let z: Vec<f64> = [8, 16, 32, 64, 128]
            .iter()
            .map(|&n| trapezoid(&dw, n, |v| (-v).exp()))
            .collect();
        let diffs: Vec<f64> = z.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        for w in diffs.windows(2) {
            assert!(w[1] <= w[0] || w[1] < 1e-15, "{diffs:?}");
        }
        assert!(diffs[3] < 1e-14, "{diffs:?}");
    }

    #[test]
    fn canonical_density_normalized() {
        let fw = PotentialSpec::four_well();
        let rho = fw.canonical(1.0, 64);
        let n = 64;
        let mut sum = 0.0;
        for i in 0..n {
            for j in 0..n {
                sum += rho.density(&[i as f64 / n as f64, j as f64 / n as f64]);
            }
        }
        assert!((sum / (n * n) as f64 - 1.0).abs() < 1e-12);
    }

    fn random_spec(dim: usize) -> impl Strategy<Value = PotentialSpec> {
        let factor = (-3i32..=3, -3.0f64..3.0, 1u32..=3).prop_map(|(f, p, w)| AxisFactor::new(f, p, w));
        let term = (-2.0f64..2.0, prop::collection::vec(factor, dim))
            .prop_map(|(coef, factors)| TrigTerm { coef, factors });
        (prop::collection::vec(term, 0..5), -1.0f64..1.0)
            .prop_map(move |(terms, c)| PotentialSpec::new(dim, c, terms).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn periodic_in_every_axis(spec in random_spec(2), q0 in 0.0f64..1.0, q1 in 0.0f64..1.0) {
            let v = spec.value(&[q0, q1]).unwrap();
            prop_assert!((spec.value(&[q0 + 1.0, q1]).unwrap() - v).abs() <= 1e-12);
            prop_assert!((spec.value(&[q0, q1 + 1.0]).unwrap() - v).abs() <= 1e-12);
        }

        #[test]
        fn gradient_consistent_with_central_differences(spec in random_spec(2), q0 in 0.0f64..1.0, q1 in 0.0f64..1.0) {
            let q = [q0, q1];
            let g = spec.gradient(&q).unwrap();
            let fd = central_difference(&spec, &q, 1e-5);
            let scale = g.iter().map(|x| x.abs()).fold(1.0, f64::max);
            for a in 0..2 {
                prop_assert!((g[a] - fd[a]).abs() <= 1e-6 * scale, "{:?} vs {:?}", g, fd);
            }
        }

        #[test]
        fn builtin_periodicity(q0 in -3.0f64..3.0, q1 in -3.0f64..3.0) {
            let fw = PotentialSpec::four_well();
            let v = fw.value(&[q0, q1]).unwrap();
            prop_assert!((fw.value(&[q0 - 1.0, q1]).unwrap() - v).abs() <= 1e-12);
            prop_assert!((fw.value(&[q0, q1 + 1.0]).unwrap() - v).abs() <= 1e-12);
        }
    }
}
