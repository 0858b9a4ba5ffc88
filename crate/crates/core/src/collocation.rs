//! Fourier collocation of the second-order pseudo generator and of the two
//! reconstructions of the spatial transfer operator built from it.
//!
//! Everything works in the nodal representation: a discrete function is its
//! vector of values at the tensor grid `{0, 1/n, ..., (n-1)/n}^d`. For odd `n`
//! the nodal and Fourier-coefficient pictures are related by the invertible
//! synthesis matrix, so the standard eigenproblem of the nodal operator has the
//! same spectrum as the generalized coefficient-space problem.

use std::f64::consts::PI;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expm::expm;
use crate::layout::CellLayout;
use crate::potential::{DynamicsParams, PotentialSpec};

/// Default cap on the number of grid nodes (dense `n^d x n^d` operators).
pub const DEFAULT_MAX_NODES: usize = 4096;

/// Tensor Fourier collocation grid on the `dim`-torus.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CollocationGrid {
    dim: usize,
    n: usize,
}

impl CollocationGrid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        Self::with_cap(dim, n, DEFAULT_MAX_NODES)
    }

    pub fn with_cap(dim: usize, n: usize, max_nodes: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("grid dimension must be positive".into()));
        }
        if n < 3 || n.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!("nodes per axis must be odd and >= 3, got {n}")));
        }
        match n.checked_pow(dim as u32) {
            Some(total) if total <= max_nodes => Ok(Self { dim, n }),
            _ => Err(Error::InvalidInput(format!(
                "{n}^{dim} nodes exceed the cap of {max_nodes}"
            ))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_per_axis(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn layout(&self) -> CellLayout {
        CellLayout::nodes(self.dim, self.n)
    }

    /// Node `flat`, axis 0 fastest.
    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.layout()
            .multi_index(flat)
            .into_iter()
            .map(|i| i as f64 / self.n as f64)
            .collect()
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Fourier mode indices `-(n-1)/2 ..= (n-1)/2` resolved on each axis.
    pub fn mode_indices(&self) -> Vec<i64> {
        let h = (self.n as i64 - 1) / 2;
        (-h..=h).collect()
    }
}

/// One-dimensional Fourier differentiation matrices on `n` equispaced nodes of
/// `[0, 1)`; they act on every axis of the tensor grid.
#[derive(Clone, Debug)]
pub struct DiffMatrices {
    pub d1: Mat<f64>,
    pub d2: Mat<f64>,
}

pub fn diff_matrices(grid: &CollocationGrid) -> DiffMatrices {
    let n = grid.n_per_axis();
    let nf = n as f64;
    let d1 = Mat::from_fn(n, n, |j, l| {
        if j == l {
            return 0.0;
        }
        let k = j as i64 - l as i64;
        let sign = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        PI * sign / (PI * k as f64 / nf).sin()
    });
    let d2 = Mat::from_fn(n, n, |j, l| {
        if j == l {
            return -(2.0 * PI).powi(2) * (nf * nf - 1.0) / 12.0;
        }
        let k = j as i64 - l as i64;
        let sign = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let x = PI * k as f64 / nf;
        -2.0 * PI * PI * sign * x.cos() / (x.sin() * x.sin())
    });
    DiffMatrices { d1, d2 }
}

impl DiffMatrices {
    /// The 1-D matrix `m` applied along `axis` of the tensor grid (Kronecker embedding).
    pub fn along_axis(grid: &CollocationGrid, m: &Mat<f64>, axis: usize) -> Mat<f64> {
        let n = grid.n_per_axis();
        let total = grid.len();
        let stride = n.pow(axis as u32);
        let mut out = Mat::zeros(total, total);
        for r in 0..total {
            let i = (r / stride) % n;
            for l in 0..n {
                let c = r + l * stride - i * stride;
                out[(r, c)] = m[(i, l)];
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorKind {
    /// Second-order pseudo generator `(1/beta) Laplacian - grad V . grad`.
    G2,
    /// Third-order Taylor reconstruction `I + (t^2/2) G2 + (t^3/6) G3`, `G3 = -gamma G2`.
    Rt,
    /// Exponential reconstruction `exp((t^2/2) G2)`.
    Et,
    /// Ulam estimate of the spatial transfer operator.
    UlamS,
    /// Ulam estimate of the Smoluchowski transfer operator.
    UlamSmol,
}

impl OperatorKind {
    pub fn label(&self) -> &'static str {
        match self {
            OperatorKind::G2 => "G2",
            OperatorKind::Rt => "Rt",
            OperatorKind::Et => "Et",
            OperatorKind::UlamS => "UlamS",
            OperatorKind::UlamSmol => "UlamSmol",
        }
    }
}

/// A dense operator on the nodal (or box) space, tagged with what it represents.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub kind: OperatorKind,
    pub t: f64,
    pub params: DynamicsParams,
    pub matrix: Mat<f64>,
    pub layout: CellLayout,
    /// Discrete canonical probability of each node/box (sums to one).
    pub weights: Vec<f64>,
    /// Canonical density `f_Q` with respect to Lebesgue measure at each node/box.
    pub density: Vec<f64>,
}

impl OperatorMatrix {
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Quadrature points per axis used for the partition function of `f_Q`.
fn quadrature_points(dim: usize) -> usize {
    if dim == 1 { 4096 } else { 256 }
}

/// Assembles the collocation matrix of `G2 = (1/beta) Laplacian - grad V . grad`.
pub fn assemble_g2(grid: &CollocationGrid, spec: &PotentialSpec, params: &DynamicsParams) -> Result<OperatorMatrix> {
    if spec.dim() != grid.dim() {
        return Err(Error::DimensionMismatch { expected: grid.dim(), got: spec.dim() });
    }
    let n = grid.n_per_axis();
    let dim = grid.dim();
    let total = grid.len();
    let DiffMatrices { d1, d2 } = diff_matrices(grid);
    let inv_beta = 1.0 / params.beta();

    let mut grads = vec![0.0; total * dim];
    for r in 0..total {
        spec.gradient_into(&grid.node(r), &mut grads[r * dim..(r + 1) * dim]);
    }

    let mut l = Mat::zeros(total, total);
    for r in 0..total {
        for axis in 0..dim {
            let stride = n.pow(axis as u32);
            let i = (r / stride) % n;
            let g = grads[r * dim + axis];
            for k in 0..n {
                let c = r + k * stride - i * stride;
                l[(r, c)] += inv_beta * d2[(i, k)] - g * d1[(i, k)];
            }
        }
    }

    let canonical = spec.canonical(params.beta(), quadrature_points(dim));
    let density: Vec<f64> = (0..total).map(|r| canonical.density(&grid.node(r))).collect();
    let norm: f64 = density.iter().sum();
    let weights = density.iter().map(|d| d / norm).collect();

    Ok(OperatorMatrix {
        kind: OperatorKind::G2,
        t: 0.0,
        params: *params,
        matrix: l,
        layout: grid.layout(),
        weights,
        density,
    })
}

fn require_g2(g2: &OperatorMatrix) -> Result<()> {
    if g2.kind != OperatorKind::G2 {
        return Err(Error::InvalidInput(format!("expected a G2 operator, got {}", g2.kind.label())));
    }
    Ok(())
}

fn require_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!("lag time must be finite and >= 0, got {t}")));
    }
    Ok(())
}

/// Coefficient multiplying `G2` in the Taylor reconstruction.
pub fn taylor_factor(t: f64, gamma: f64) -> f64 {
    t * t / 2.0 - gamma * t * t * t / 6.0
}

/// `R^t = I + (t^2/2 - gamma t^3/6) G2`.
pub fn assemble_rt(g2: &OperatorMatrix, t: f64, params: &DynamicsParams) -> Result<OperatorMatrix> {
    require_g2(g2)?;
    require_time(t)?;
    let s = taylor_factor(t, params.gamma());
    let m = Mat::from_fn(g2.size(), g2.size(), |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id + s * g2.matrix[(i, j)]
    });
    Ok(OperatorMatrix { kind: OperatorKind::Rt, t, params: *params, matrix: m, ..g2.clone() })
}

/// `E^t = exp((t^2/2) G2)`.
pub fn assemble_et(g2: &OperatorMatrix, t: f64) -> Result<OperatorMatrix> {
    require_g2(g2)?;
    require_time(t)?;
    let s = t * t / 2.0;
    let scaled = Mat::from_fn(g2.size(), g2.size(), |i, j| s * g2.matrix[(i, j)]);
    Ok(OperatorMatrix { kind: OperatorKind::Et, t, matrix: expm(&scaled), ..g2.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    /// Differentiation matrix of order `p` built from the DFT definition:
    /// interpolate with the symmetric mode set, differentiate, resample.
    fn dft_diff(n: usize, p: u32) -> Mat<f64> {
        let h = (n as i64 - 1) / 2;
        Mat::from_fn(n, n, |j, l| {
            let x = TAU * (j as f64 - l as f64) / n as f64;
            let mut s = 0.0;
            for k in -h..=h {
                let w = TAU * k as f64;
                // Re[(i w)^p e^{i k x}]
                let term = match p % 4 {
                    0 => (k as f64 * x).cos(),
                    1 => -(k as f64 * x).sin(),
                    2 => -(k as f64 * x).cos(),
                    _ => (k as f64 * x).sin(),
                };
                s += w.powi(p as i32) * term;
            }
            s / n as f64
        })
    }

    fn max_abs_diff(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                m = m.max((a[(i, j)] - b[(i, j)]).abs());
            }
        }
        m
    }

    fn apply(m: &Mat<f64>, v: &[f64]) -> Vec<f64> {
        (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum()).collect()
    }

    #[test]
    fn grid_nodes_and_order() {
        let g = CollocationGrid::new(1, 5).unwrap();
        let nodes: Vec<f64> = g.nodes().into_iter().map(|x| x[0]).collect();
        for (a, b) in nodes.iter().zip([0.0, 0.2, 0.4, 0.6, 0.8]) {
            assert!((a - b).abs() < 1e-15);
        }
        let g2 = CollocationGrid::new(2, 3).unwrap();
        assert_eq!(g2.len(), 9);
        assert_eq!(g2.node(0), vec![0.0, 0.0]);
        assert_eq!(g2.node(1), vec![1.0 / 3.0, 0.0]);
        assert_eq!(g2.node(2), vec![2.0 / 3.0, 0.0]);
        assert_eq!(g.mode_indices(), vec![-2, -1, 0, 1, 2]);
    }

    #[test]
    fn grid_rejects_even_and_oversized() {
        assert!(CollocationGrid::new(1, 4).is_err());
        assert!(CollocationGrid::new(1, 1).is_err());
        assert!(CollocationGrid::new(3, 33).is_err());
        assert!(CollocationGrid::with_cap(2, 33, 1000).is_err());
    }

    #[test]
    fn closed_form_matches_dft_definition() {
        for n in [3, 5, 9, 33] {
            let g = CollocationGrid::new(1, n).unwrap();
            let d = diff_matrices(&g);
            let scale = (TAU * n as f64).powi(2);
            assert!(max_abs_diff(&d.d1, &dft_diff(n, 1)) < 1e-12 * scale.sqrt());
            assert!(max_abs_diff(&d.d2, &dft_diff(n, 2)) < 1e-12 * scale);
            let d1sq = &d.d1 * &d.d1;
            assert!(max_abs_diff(&d.d2, &d1sq) < 1e-11 * scale);
        }
    }

    #[test]
    fn derivatives_exact_for_resolved_modes() {
        let g = CollocationGrid::new(1, 5).unwrap();
        let d = diff_matrices(&g);
        let q: Vec<f64> = g.nodes().into_iter().map(|x| x[0]).collect();
        let s: Vec<f64> = q.iter().map(|x| (TAU * x).sin()).collect();
        let ds = apply(&d.d1, &s);
        for (a, x) in ds.iter().zip(&q) {
            assert!((a - TAU * (TAU * x).cos()).abs() < 1e-12);
        }
        let c: Vec<f64> = q.iter().map(|x| (TAU * x).cos()).collect();
        let ddc = apply(&d.d2, &c);
        for (a, x) in ddc.iter().zip(&q) {
            assert!((a + TAU * TAU * (TAU * x).cos()).abs() < 1e-11);
        }
        let ones = vec![1.0; 5];
        assert!(apply(&d.d1, &ones).iter().all(|x| x.abs() < 1e-13));
    }

    #[test]
    fn g2_annihilates_constants() {
        let params = DynamicsParams::new(1.0, 1.0).unwrap();
        for (spec, n) in [(PotentialSpec::double_well(), 33), (PotentialSpec::four_well(), 15)] {
            let grid = CollocationGrid::new(spec.dim(), n).unwrap();
            let g2 = assemble_g2(&grid, &spec, &params).unwrap();
            let ones = vec![1.0; grid.len()];
            let l1 = apply(&g2.matrix, &ones);
            let norm_inf = (0..g2.size())
                .map(|i| (0..g2.size()).map(|j| g2.matrix[(i, j)].abs()).sum::<f64>())
                .fold(0.0, f64::max);
            let worst = l1.iter().map(|x| x.abs()).fold(0.0, f64::max);
            assert!(worst <= 1e-12 * norm_inf, "{worst} vs {norm_inf}");
        }
    }

    #[test]
    fn g2_tensor_assembly_matches_kronecker_sum() {
        let spec = PotentialSpec::four_well();
        let params = DynamicsParams::new(2.0, 1.0).unwrap();
        let grid = CollocationGrid::new(2, 5).unwrap();
        let g2 = assemble_g2(&grid, &spec, &params).unwrap();
        let d = diff_matrices(&grid);
        let mut expected = Mat::<f64>::zeros(25, 25);
        for axis in 0..2 {
            let d1 = DiffMatrices::along_axis(&grid, &d.d1, axis);
            let d2 = DiffMatrices::along_axis(&grid, &d.d2, axis);
            for r in 0..25 {
                let g = spec.gradient(&grid.node(r)).unwrap()[axis];
                for c in 0..25 {
                    expected[(r, c)] += d2[(r, c)] / 2.0 - g * d1[(r, c)];
                }
            }
        }
        assert!(max_abs_diff(&g2.matrix, &expected) < 1e-12);
    }

    #[test]
    fn g2_dimension_mismatch() {
        let params = DynamicsParams::new(1.0, 1.0).unwrap();
        let grid = CollocationGrid::new(2, 5).unwrap();
        assert!(assemble_g2(&grid, &PotentialSpec::double_well(), &params).is_err());
    }

    #[test]
    fn reconstructions_at_zero_are_identity() {
        let params = DynamicsParams::new(1.0, 1.0).unwrap();
        let grid = CollocationGrid::new(1, 9).unwrap();
        let g2 = assemble_g2(&grid, &PotentialSpec::double_well(), &params).unwrap();
        let id = Mat::<f64>::identity(9, 9);
        assert_eq!(max_abs_diff(&assemble_rt(&g2, 0.0, &params).unwrap().matrix, &id), 0.0);
        assert_eq!(max_abs_diff(&assemble_et(&g2, 0.0).unwrap().matrix, &id), 0.0);
        let rt = assemble_rt(&g2, 0.3, &params).unwrap();
        assert!(assemble_rt(&rt, 0.3, &params).is_err());
        assert!(assemble_et(&g2, -1.0).is_err());
    }

    #[test]
    fn et_preserves_constants() {
        let params = DynamicsParams::new(1.0, 1.0).unwrap();
        let grid = CollocationGrid::new(1, 33).unwrap();
        let g2 = assemble_g2(&grid, &PotentialSpec::double_well(), &params).unwrap();
        for t in [0.1, 0.5, 1.0] {
            let et = assemble_et(&g2, t).unwrap();
            let row_sums = apply(&et.matrix, &vec![1.0; 33]);
            assert!(row_sums.iter().all(|s| (s - 1.0).abs() <= 1e-10), "t={t}: {row_sums:?}");
        }
    }
}
