//! Dominant eigenpairs of discretized transfer operators and generators.
//!
//! All operators handled here are self-adjoint in the canonically weighted
//! space, so with `W = diag(sqrt(w))` the similar matrix `W A W^-1` is
//! (nearly) symmetric. The solver works on that matrix, which keeps the
//! eigenproblem well conditioned, and maps the eigenvectors back.

use std::cmp::Ordering;

use faer::prelude::*;
use faer::{c64, Mat};

use crate::collocation::{OperatorKind, OperatorMatrix};
use crate::error::{Error, Result};
use crate::layout::CellLayout;

#[derive(Clone, Debug)]
pub struct SpectrumResult {
    pub kind: OperatorKind,
    pub t: f64,
    /// Sorted by descending real part, then ascending imaginary part.
    pub eigenvalues: Vec<c64>,
    /// Column `j` holds eigenvector `j` sampled at the nodes/boxes, with unit
    /// weighted 2-norm and its largest-magnitude entry positive.
    pub eigenvectors_nodal: Mat<f64>,
    /// Same vectors multiplied entrywise by `f_Q` (Lebesgue representation).
    pub eigenvectors_weighted: Mat<f64>,
    /// `||A v - lambda v||_2 / ||v||_2` per pair.
    pub residuals: Vec<f64>,
    pub weights: Vec<f64>,
    pub layout: CellLayout,
    /// Frobenius norm of the operator, the scale for residuals.
    pub operator_norm: f64,
}

impl SpectrumResult {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn real_eigenvalues(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|z| z.re).collect()
    }

    pub fn eigenvector(&self, j: usize) -> Vec<f64> {
        self.eigenvectors_nodal.col(j).iter().copied().collect()
    }

    pub fn weighted_eigenvector(&self, j: usize) -> Vec<f64> {
        self.eigenvectors_weighted.col(j).iter().copied().collect()
    }
}

fn frobenius(m: &Mat<f64>) -> f64 {
    m.norm_l2()
}

fn symmetrizer(weights: &[f64]) -> Option<Vec<f64>> {
    let ok = weights.iter().all(|w| w.is_finite() && *w > 1e-300);
    ok.then(|| weights.iter().map(|w| w.sqrt()).collect())
}

/// `W A W^-1` with `W = diag(sqrt(weights))`.
pub fn weighted_similarity(matrix: &Mat<f64>, weights: &[f64]) -> Mat<f64> {
    match symmetrizer(weights) {
        Some(s) => Mat::from_fn(matrix.nrows(), matrix.ncols(), |i, j| s[i] * matrix[(i, j)] / s[j]),
        None => matrix.clone(),
    }
}

/// `||S - S^T||_F / ||A||_F` for `S = W A W^-1`; zero for an operator that is
/// exactly self-adjoint in the weighted inner product.
pub fn symmetry_defect(op: &OperatorMatrix) -> f64 {
    let s = weighted_similarity(&op.matrix, &op.weights);
    let n = s.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = s[(i, j)] - s[(j, i)];
            acc += d * d;
        }
    }
    acc.sqrt() / frobenius(&op.matrix)
}

/// Top-`k` eigenpairs of `op` by real part.
pub fn solve_spectrum(op: &OperatorMatrix, k: usize) -> Result<SpectrumResult> {
    let n = op.size();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("requested {k} eigenpairs of a {n}x{n} operator")));
    }
    let scale = symmetrizer(&op.weights);
    let sym = weighted_similarity(&op.matrix, &op.weights);
    let evd = sym.eigen().map_err(|_| Error::EigenSolver { size: n, kind: op.kind.label().into() })?;
    let values = evd.S().column_vector();
    let vectors = evd.U();

    // map back to the nodal basis and normalize before ordering, so that the
    // peak-index tie-break sees the final vectors
    let mut pairs: Vec<(c64, Vec<c64>, usize)> = (0..n)
        .map(|j| {
            let mut v: Vec<c64> = (0..n)
                .map(|i| match &scale {
                    Some(s) => vectors[(i, j)] / s[i],
                    None => vectors[(i, j)],
                })
                .collect();
            normalize(&mut v, &op.weights);
            let peak = peak_index(&v);
            (values[j], v, peak)
        })
        .collect();
    pairs.sort_by(|a, b| {
        b.0.re
            .partial_cmp(&a.0.re)
            .unwrap_or(Ordering::Equal)
            .then(a.0.im.partial_cmp(&b.0.im).unwrap_or(Ordering::Equal))
            .then(a.2.cmp(&b.2))
    });
    pairs.truncate(k);

    let re = Mat::from_fn(n, k, |i, j| pairs[j].1[i].re);
    let im = Mat::from_fn(n, k, |i, j| pairs[j].1[i].im);
    let a_re = &op.matrix * &re;
    let a_im = &op.matrix * &im;
    let residuals = (0..k)
        .map(|j| {
            let lam = pairs[j].0;
            let mut r2 = 0.0;
            let mut v2 = 0.0;
            for i in 0..n {
                let av = c64::new(a_re[(i, j)], a_im[(i, j)]);
                let v = pairs[j].1[i];
                r2 += (av - lam * v).norm_sqr();
                v2 += v.norm_sqr();
            }
            (r2 / v2).sqrt()
        })
        .collect();

    let eigenvectors_weighted = Mat::from_fn(n, k, |i, j| re[(i, j)] * op.density[i]);
    Ok(SpectrumResult {
        kind: op.kind,
        t: op.t,
        eigenvalues: pairs.iter().map(|p| p.0).collect(),
        eigenvectors_nodal: re,
        eigenvectors_weighted,
        residuals,
        weights: op.weights.clone(),
        layout: op.layout,
        operator_norm: frobenius(&op.matrix),
    })
}

/// Unit weighted 2-norm, phase rotated so the largest-magnitude entry is real and positive.
fn normalize(v: &mut [c64], weights: &[f64]) {
    let norm: f64 = v.iter().zip(weights).map(|(x, w)| w * x.norm_sqr()).sum::<f64>().sqrt();
    let peak = v[peak_index(v)];
    let phase = if peak.norm() > 0.0 { peak.conj() / peak.norm() } else { c64::new(1.0, 0.0) };
    let f = phase / norm;
    v.iter_mut().for_each(|x| *x *= f);
}

/// First index of maximal magnitude; magnitudes within a relative 1e-9 count as equal.
fn peak_index(v: &[c64]) -> usize {
    let max = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    v.iter().position(|x| x.norm() >= max * (1.0 - 1e-9)).unwrap_or(0)
}

/// `exp(s A)` as `V diag(exp(s lambda)) V^-1` from the full eigendecomposition;
/// an independent route to the Padé exponential for diagonalizable operators.
pub fn exp_via_eigen(op: &OperatorMatrix, s: f64) -> Result<Mat<f64>> {
    let n = op.size();
    let evd = op
        .matrix
        .eigen()
        .map_err(|_| Error::EigenSolver { size: n, kind: op.kind.label().into() })?;
    let u = evd.U();
    let lam = evd.S().column_vector();
    let scaled = Mat::from_fn(n, n, |i, j| u[(i, j)] * (lam[j] * s).exp());
    let inv = u.partial_piv_lu().solve(Mat::<c64>::identity(n, n));
    let e = &scaled * &inv;
    Ok(Mat::from_fn(n, n, |i, j| e[(i, j)].re))
}
