//! Level-by-level elimination of cell interiors.
//!
//! Every `(n-1)`-cell of `G_n` is a copy of `G_1`, glued to the rest of the
//! graph only at the images of `V₀`. Tracing each copy onto its boundary
//! therefore turns a level-`n` field into a level-`(n-1)` field with the same
//! effective resistances between surviving vertices, in `O(Nⁿ)` work.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::laplacian_to_conductance;
use crate::error::{Error, Result};
use crate::ifs::{build_graph, FractalGraph, IfsSpec};

#[derive(Debug, Clone)]
pub struct CellRenormalizer {
    n_maps: usize,
    pairs: Vec<(usize, usize)>,
    n_local: usize,
    /// Local vertex of boundary label `j` inside child `i`: `child_vertices[i][j]`.
    child_vertices: Vec<Vec<usize>>,
    boundary: Vec<usize>,
    interior: Vec<usize>,
}

impl CellRenormalizer {
    pub fn new(spec: &IfsSpec) -> Result<Self> {
        Self::from_level_one(&build_graph(spec, 1)?)
    }

    pub fn from_level_one(g1: &FractalGraph) -> Result<Self> {
        if g1.level() != 1 {
            return Err(Error::InvalidArgument(format!("expected G_1, got level {}", g1.level())));
        }
        let n_maps = g1.num_maps();
        let child_vertices: Vec<Vec<usize>> =
            (0..n_maps).map(|i| g1.cell_vertices(i).to_vec()).collect();
        let boundary = g1.boundary().to_vec();
        let interior = (0..g1.num_vertices()).filter(|v| !boundary.contains(v)).collect();
        Ok(Self {
            n_maps,
            pairs: g1.pairs().to_vec(),
            n_local: g1.num_vertices(),
            child_vertices,
            boundary,
            interior,
        })
    }

    pub fn boundary_size(&self) -> usize {
        self.boundary.len()
    }

    pub fn edges_per_cell(&self) -> usize {
        self.pairs.len()
    }

    pub fn num_maps(&self) -> usize {
        self.n_maps
    }

    /// Traces one copy of `G_1` (weights of its `N` children, cell-major) onto
    /// its boundary; returns one conductance per boundary pair. Zero weights
    /// are allowed as long as every interior vertex stays connected.
    pub fn trace_block(&self, child_weights: &[f64]) -> Result<Vec<f64>> {
        let p = self.pairs.len();
        if child_weights.len() != self.n_maps * p {
            return Err(Error::DimensionMismatch { expected: self.n_maps * p, got: child_weights.len() });
        }
        let mut l = DMatrix::<f64>::zeros(self.n_local, self.n_local);
        for (i, verts) in self.child_vertices.iter().enumerate() {
            for (k, &(a, b)) in self.pairs.iter().enumerate() {
                let w = child_weights[i * p + k];
                if !(w.is_finite() && w >= 0.0) {
                    return Err(Error::InvalidField(format!("cell weight {w} is negative or not finite")));
                }
                let (u, v) = (verts[a], verts[b]);
                l[(u, u)] += w;
                l[(v, v)] += w;
                l[(u, v)] -= w;
                l[(v, u)] -= w;
            }
        }
        let lbb = l.select_rows(&self.boundary).select_columns(&self.boundary);
        let s = if self.interior.is_empty() {
            lbb
        } else {
            let lii = l.select_rows(&self.interior).select_columns(&self.interior);
            let lib = l.select_rows(&self.interior).select_columns(&self.boundary);
            let chol = lii
                .cholesky()
                .ok_or_else(|| Error::SingularTrace("cell interior is not connected to its boundary".into()))?;
            lbb - lib.transpose() * chol.solve(&lib)
        };
        let labels: Vec<usize> = (0..self.boundary.len()).collect();
        let c = laplacian_to_conductance(&s, &labels)?;
        Ok(self.pairs.iter().map(|&(a, b)| c[(a, b)]).collect())
    }

    /// Level-`n` cell-major edge weights to level-`(n-1)` edge weights.
    pub fn coarsen(&self, weights: &[f64]) -> Result<Vec<f64>> {
        let block = self.n_maps * self.pairs.len();
        if weights.is_empty() || weights.len() % block != 0 {
            return Err(Error::InvalidArgument(format!(
                "weight count {} is not a positive multiple of {block}",
                weights.len()
            )));
        }
        let traced: Vec<Vec<f64>> = weights
            .par_chunks(block)
            .map(|w| self.trace_block(w))
            .collect::<Result<_>>()?;
        Ok(traced.into_iter().flatten().collect())
    }

    /// Repeated [`coarsen`](Self::coarsen) from level `from` down to level `to`.
    pub fn coarsen_to(&self, weights: &[f64], from: usize, to: usize) -> Result<Vec<f64>> {
        if to > from {
            return Err(Error::InvalidArgument(format!("cannot coarsen level {from} to {to}")));
        }
        let expected = self.n_maps.pow(from as u32) * self.pairs.len();
        if weights.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: weights.len() });
        }
        let mut w = weights.to_vec();
        for _ in to..from {
            w = self.coarsen(&w)?;
        }
        Ok(w)
    }
}
