//! Uniform tensor cell layouts on the torus.
//!
//! Both discretizations index space the same way: `n` cells per axis, flat
//! index with axis 0 fastest. Collocation nodes own the cell centered on the
//! node; Ulam boxes start at the node.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellAnchor {
    /// Cell `i` is `[(i - 1/2)/n, (i + 1/2)/n)` (collocation node at its center).
    Node,
    /// Cell `i` is `[i/n, (i + 1)/n)` (Ulam box).
    Box,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellLayout {
    pub dim: usize,
    pub n: usize,
    pub anchor: CellAnchor,
}

impl CellLayout {
    pub fn nodes(dim: usize, n: usize) -> Self {
        Self { dim, n, anchor: CellAnchor::Node }
    }

    pub fn boxes(dim: usize, n: usize) -> Self {
        Self { dim, n, anchor: CellAnchor::Box }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn volume(&self) -> f64 {
        self.width().powi(self.dim as i32)
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let mut r = flat;
        (0..self.dim)
            .map(|_| {
                let i = r % self.n;
                r /= self.n;
                i
            })
            .collect()
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().rev().fold(0, |acc, &i| acc * self.n + i)
    }

    /// Lower corner of cell `flat` (may be negative by half a cell for node anchors).
    pub fn lower(&self, flat: usize) -> Vec<f64> {
        let shift = match self.anchor {
            CellAnchor::Node => -0.5,
            CellAnchor::Box => 0.0,
        };
        self.multi_index(flat)
            .into_iter()
            .map(|i| (i as f64 + shift) / self.n as f64)
            .collect()
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        let w = self.width();
        self.lower(flat).into_iter().map(|x| (x + 0.5 * w).rem_euclid(1.0)).collect()
    }

    /// Index of the cell containing `q` (coordinates reduced mod 1).
    pub fn cell_of(&self, q: &[f64]) -> usize {
        let shift = match self.anchor {
            CellAnchor::Node => 0.5,
            CellAnchor::Box => 0.0,
        };
        let n = self.n;
        q.iter().rev().fold(0, |acc, &x| {
            let i = ((x.rem_euclid(1.0) * n as f64 + shift).floor() as usize) % n;
            acc * n + i
        })
    }

    /// L1 distance between multi-indices with periodic wrap.
    pub fn torus_distance(&self, a: usize, b: usize) -> usize {
        self.multi_index(a)
            .into_iter()
            .zip(self.multi_index(b))
            .map(|(x, y)| {
                let d = x.abs_diff(y);
                d.min(self.n - d)
            })
            .sum()
    }
}
