use std::collections::{HashMap, VecDeque};

use super::{boundary, dist, CellWord, IfsSpec, MERGE_TOL};
use crate::error::{Error, Result};

/// Level-`n` approximation `G_n = (V_n, E_n)` of a nested fractal.
///
/// Layout conventions relied on elsewhere:
/// * cells are listed in lexicographic word order, so the children of the
///   `(n-1)`-cell of rank `p` are the cells `p·N .. p·N + N`;
/// * edges are cell-major, and within a cell follow the boundary-pair order
///   of [`FractalGraph::pairs`]. Edge `c·P + k` joins the vertices of cell `c`
///   carrying boundary labels `pairs()[k]`.
#[derive(Debug, Clone)]
pub struct FractalGraph {
    level: usize,
    dim: usize,
    n_maps: usize,
    beta: f64,
    coords: Vec<Vec<f64>>,
    addresses: Vec<Vec<(CellWord, usize)>>,
    cells: Vec<CellWord>,
    cell_vertices: Vec<usize>,
    boundary_size: usize,
    fixing_map: Vec<usize>,
    pairs: Vec<(usize, usize)>,
    edges: Vec<(usize, usize)>,
    boundary: Vec<usize>,
    index: HashMap<Vec<i64>, usize>,
    grid: f64,
}

fn grid_key(p: &[f64], grid: f64) -> Vec<i64> {
    p.iter().map(|x| (x / grid).round() as i64).collect()
}

fn neighbour_keys(key: &[i64]) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::with_capacity(key.len())];
    for &k in key {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (-1..=1).map(move |o| {
                    let mut p = prefix.clone();
                    p.push(k + o);
                    p
                })
            })
            .collect();
    }
    out.retain(|k| k.as_slice() != key);
    out
}

/// Builds `G_n`: vertices are the images `ψ_w(V₀)` over all words of length
/// `n`, merged on a grid of spacing `1e-9·β^{-n}`; edges join every pair of
/// vertices in a common `n`-cell.
pub fn build_graph(spec: &IfsSpec, n: usize) -> Result<FractalGraph> {
    let b = boundary(spec)?;
    let n_maps = spec.num_maps();
    let m = b.points.len();
    let grid = MERGE_TOL * spec.beta.powi(-(n as i32));
    let n_cells = n_maps
        .checked_pow(n as u32)
        .ok_or_else(|| Error::InvalidArgument(format!("level {n} is too large")))?;

    let pairs: Vec<(usize, usize)> =
        (0..m).flat_map(|j| (j + 1..m).map(move |k| (j, k))).collect();

    let mut coords: Vec<Vec<f64>> = Vec::new();
    let mut addresses: Vec<Vec<(CellWord, usize)>> = Vec::new();
    let mut index: HashMap<Vec<i64>, usize> = HashMap::new();
    let mut cells = Vec::with_capacity(n_cells);
    let mut cell_vertices = Vec::with_capacity(n_cells * m);

    for rank in 0..n_cells {
        let word = CellWord::from_rank(rank, n, n_maps);
        for (j, p) in b.points.iter().enumerate() {
            let x = spec.apply_word(&word, p);
            let key = grid_key(&x, grid);
            let v = match index.get(&key) {
                Some(&v) => {
                    let d = dist(&coords[v], &x);
                    if d > grid {
                        return Err(Error::Precision {
                            level: n,
                            detail: format!(
                                "vertex {j} of cell {word} lands {d:e} from merged vertex {v} \
                                 (grid {grid:e})"
                            ),
                        });
                    }
                    v
                }
                None => {
                    for nk in neighbour_keys(&key) {
                        if let Some(&other) = index.get(&nk) {
                            if dist(&coords[other], &x) <= grid {
                                return Err(Error::Precision {
                                    level: n,
                                    detail: format!(
                                        "vertex {j} of cell {word} is within {grid:e} of vertex \
                                         {other} but rounds to a different grid point"
                                    ),
                                });
                            }
                        }
                    }
                    let v = coords.len();
                    index.insert(key, v);
                    coords.push(x);
                    addresses.push(Vec::new());
                    v
                }
            };
            addresses[v].push((word.clone(), j));
            cell_vertices.push(v);
        }
        let verts = &cell_vertices[rank * m..];
        for j in 0..m {
            for k in j + 1..m {
                if verts[j] == verts[k] {
                    return Err(Error::CellLabelling(format!(
                        "cell {word} maps boundary points {j} and {k} to the same vertex"
                    )));
                }
            }
        }
        cells.push(word);
    }

    let edges = (0..n_cells)
        .flat_map(|c| {
            let cv = &cell_vertices[c * m..(c + 1) * m];
            pairs.iter().map(move |&(j, k)| (cv[j], cv[k]))
        })
        .collect();

    let boundary = b
        .points
        .iter()
        .map(|p| index[&grid_key(p, grid)])
        .collect();

    Ok(FractalGraph {
        level: n,
        dim: spec.dim,
        n_maps,
        beta: spec.beta,
        coords,
        addresses,
        cells,
        cell_vertices,
        boundary_size: m,
        fixing_map: b.fixing_map,
        pairs,
        edges,
        boundary,
        index,
        grid,
    })
}

impl FractalGraph {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_maps(&self) -> usize {
        self.n_maps
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn num_vertices(&self) -> usize {
        self.coords.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// `|V₀|`.
    pub fn boundary_size(&self) -> usize {
        self.boundary_size
    }

    pub fn coord(&self, v: usize) -> &[f64] {
        &self.coords[v]
    }

    pub fn coords(&self) -> &[Vec<f64>] {
        &self.coords
    }

    pub fn addresses(&self, v: usize) -> &[(CellWord, usize)] {
        &self.addresses[v]
    }

    pub fn cells(&self) -> &[CellWord] {
        &self.cells
    }

    /// Vertex indices of cell `c`, in boundary-label order.
    pub fn cell_vertices(&self, c: usize) -> &[usize] {
        let m = self.boundary_size;
        &self.cell_vertices[c * m..(c + 1) * m]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Cell containing edge `e`.
    pub fn edge_cell(&self, e: usize) -> usize {
        e / self.pairs.len()
    }

    /// Boundary-label pair `(j, k)`, `j < k`, carried by edge `e`.
    pub fn edge_label(&self, e: usize) -> (usize, usize) {
        self.pairs[e % self.pairs.len()]
    }

    /// Unordered boundary-label pairs in the within-cell edge order.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn edges_per_cell(&self) -> usize {
        self.pairs.len()
    }

    /// Indices of `V₀ ⊂ V_n`, in boundary-label order.
    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    /// For boundary label `j`, a map index `i` with `ψ_i(p_j) = p_j`.
    pub fn fixing_map(&self) -> &[usize] {
        &self.fixing_map
    }

    pub fn vertex_index(&self, p: &[f64]) -> Option<usize> {
        let key = grid_key(p, self.grid);
        if let Some(&v) = self.index.get(&key) {
            return Some(v);
        }
        neighbour_keys(&key)
            .into_iter()
            .filter_map(|k| self.index.get(&k).copied())
            .find(|&v| dist(&self.coords[v], p) <= self.grid)
    }

    /// Indices in `self` of the vertices of a coarser graph of the same fractal.
    pub fn embed(&self, coarse: &FractalGraph) -> Result<Vec<usize>> {
        coarse
            .coords
            .iter()
            .enumerate()
            .map(|(v, p)| {
                self.vertex_index(p).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "vertex {v} of level {} is not a vertex of level {}",
                        coarse.level, self.level
                    ))
                })
            })
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.num_vertices();
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == n
    }
}
