//! Weighted graph Laplacians and the quantities derived from them: energies,
//! traces (Schur complements), effective resistances, green kernels and
//! expected hitting times.
//!
//! Energy convention: weights are stored once per unordered edge and
//! `E(f) = Σ_e w_e (f(a) − f(b))²`, which equals the `½ Σ_{x,y}` double sum
//! over ordered pairs. With this convention a single edge of weight `w` has
//! effective resistance `1/w`.

mod hierarchy;
mod kernel;

pub use hierarchy::CellRenormalizer;
pub use kernel::ResistanceKernel;

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ifs::FractalGraph;

/// Traced conductances down to this negativity are rounding noise and are clamped to 0.
pub const CLAMP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldOrigin {
    Deterministic,
    Random,
    /// Derived from another field by multiplying every weight by the factor.
    Scaled(f64),
}

/// Strictly positive per-edge conductances on a finite graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductanceField {
    num_vertices: usize,
    edges: Vec<(usize, usize)>,
    weights: Vec<f64>,
    origin: FieldOrigin,
}

impl ConductanceField {
    pub fn new(
        num_vertices: usize,
        edges: Vec<(usize, usize)>,
        weights: Vec<f64>,
        origin: FieldOrigin,
    ) -> Result<Self> {
        if edges.len() != weights.len() {
            return Err(Error::DimensionMismatch { expected: edges.len(), got: weights.len() });
        }
        if let Some((e, w)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidField(format!("weight of edge {e} is {w}; weights must be > 0")));
        }
        let mut touched = vec![false; num_vertices];
        for &(a, b) in &edges {
            if a >= num_vertices || b >= num_vertices || a == b {
                return Err(Error::InvalidField(format!("bad edge ({a}, {b})")));
            }
            touched[a] = true;
            touched[b] = true;
        }
        if let Some(v) = touched.iter().position(|t| !t) {
            return Err(Error::InvalidField(format!("vertex {v} has no incident edge")));
        }
        Ok(Self { num_vertices, edges, weights, origin })
    }

    /// A field on the edges of `graph`, in the graph's edge order.
    pub fn on_graph(graph: &FractalGraph, weights: Vec<f64>, origin: FieldOrigin) -> Result<Self> {
        Self::new(graph.num_vertices(), graph.edges().to_vec(), weights, origin)
    }

    pub fn uniform(graph: &FractalGraph, w: f64) -> Result<Self> {
        Self::on_graph(graph, vec![w; graph.num_edges()], FieldOrigin::Deterministic)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.num_vertices,
            self.edges.clone(),
            self.weights.iter().map(|w| w * factor).collect(),
            FieldOrigin::Scaled(factor),
        )
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn origin(&self) -> FieldOrigin {
        self.origin
    }

    /// `ν(x) = Σ_{e ∋ x} w_e`.
    pub fn vertex_measure(&self) -> Vec<f64> {
        let mut nu = vec![0.0; self.num_vertices];
        for (&(a, b), &w) in self.edges.iter().zip(&self.weights) {
            nu[a] += w;
            nu[b] += w;
        }
        nu
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.num_vertices;
        let mut l = DMatrix::zeros(n, n);
        for (&(a, b), &w) in self.edges.iter().zip(&self.weights) {
            l[(a, a)] += w;
            l[(b, b)] += w;
            l[(a, b)] -= w;
            l[(b, a)] -= w;
        }
        l
    }

    pub(crate) fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_vertices];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// Vertices reachable from any vertex of `sources`.
    pub(crate) fn reachable_from(&self, sources: &[usize]) -> Vec<bool> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.num_vertices];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for &s in sources {
            if !seen[s] {
                seen[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    fn check_vertex(&self, v: usize) -> Result<()> {
        if v >= self.num_vertices {
            return Err(Error::InvalidArgument(format!(
                "vertex {v} out of range (graph has {})",
                self.num_vertices
            )));
        }
        Ok(())
    }
}

/// `Σ_e w_e (f(a) − f(b))²`.
pub fn energy(field: &ConductanceField, f: &[f64]) -> Result<f64> {
    if f.len() != field.num_vertices {
        return Err(Error::DimensionMismatch { expected: field.num_vertices, got: f.len() });
    }
    Ok(field
        .edges
        .iter()
        .zip(&field.weights)
        .map(|(&(a, b), w)| w * (f[a] - f[b]).powi(2))
        .sum())
}

/// A network on a vertex subset: symmetric nonnegative conductances, zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryForm {
    /// Vertex indices of the parent graph, in matrix order.
    pub vertices: Vec<usize>,
    pub conductance: DMatrix<f64>,
}

impl BoundaryForm {
    pub fn new(vertices: Vec<usize>, conductance: DMatrix<f64>) -> Result<Self> {
        let m = vertices.len();
        if conductance.nrows() != m || conductance.ncols() != m {
            return Err(Error::DimensionMismatch { expected: m, got: conductance.nrows() });
        }
        for i in 0..m {
            if conductance[(i, i)] != 0.0 {
                return Err(Error::InvalidArgument("boundary form diagonal must be zero".into()));
            }
            for j in 0..m {
                let c = conductance[(i, j)];
                if !(c >= 0.0 && c.is_finite()) || (c - conductance[(j, i)]).abs() > 1e-12 * c.abs().max(1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "boundary conductance ({i}, {j}) = {c} is not symmetric and nonnegative"
                    )));
                }
            }
        }
        Ok(Self { vertices, conductance })
    }

    /// Complete graph with the same conductance on every pair.
    pub fn uniform(size: usize, c: f64) -> Self {
        let mut m = DMatrix::from_element(size, size, c);
        m.fill_diagonal(0.0);
        Self { vertices: (0..size).collect(), conductance: m }
    }

    pub fn size(&self) -> usize {
        self.vertices.len()
    }

    pub fn energy(&self, f: &[f64]) -> Result<f64> {
        let m = self.size();
        if f.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: f.len() });
        }
        let mut e = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                e += self.conductance[(i, j)] * (f[i] - f[j]).powi(2);
            }
        }
        Ok(e)
    }

    /// The network as a field on vertices `0..size` (zero conductances dropped).
    pub fn to_field(&self) -> Result<ConductanceField> {
        let m = self.size();
        let mut edges = Vec::new();
        let mut weights = Vec::new();
        for i in 0..m {
            for j in i + 1..m {
                if self.conductance[(i, j)] > 0.0 {
                    edges.push((i, j));
                    weights.push(self.conductance[(i, j)]);
                }
            }
        }
        ConductanceField::new(m, edges, weights, FieldOrigin::Deterministic)
    }

    pub fn is_connected(&self) -> bool {
        self.to_field().map(|f| f.reachable_from(&[0]).iter().all(|&s| s)).unwrap_or(false)
    }

    /// Largest absolute entrywise difference.
    pub fn max_diff(&self, other: &BoundaryForm) -> f64 {
        (&self.conductance - &other.conductance).amax()
    }
}

/// Converts a Schur complement (a Laplacian on the boundary) into conductances.
pub(crate) fn laplacian_to_conductance(s: &DMatrix<f64>, labels: &[usize]) -> Result<DMatrix<f64>> {
    let m = s.nrows();
    let mut c = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let v = -0.5 * (s[(i, j)] + s[(j, i)]);
            let scale = s[(i, i)].abs().max(s[(j, j)].abs()).max(1.0);
            c[(i, j)] = if v >= 0.0 {
                v
            } else if v >= -CLAMP_TOL * scale {
                0.0
            } else {
                return Err(Error::NegativeConductance { a: labels[i], b: labels[j], value: v });
            };
        }
    }
    Ok(c)
}

fn check_subset(field: &ConductanceField, subset: &[usize]) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::InvalidArgument("vertex subset must be nonempty".into()));
    }
    let mut seen = vec![false; field.num_vertices];
    for &v in subset {
        field.check_vertex(v)?;
        if std::mem::replace(&mut seen[v], true) {
            return Err(Error::InvalidArgument(format!("vertex {v} repeated in subset")));
        }
    }
    Ok(())
}

/// Trace of the network onto `boundary`: the network whose energy equals the
/// minimal energy over extensions into the interior (the Schur complement of
/// the Laplacian).
pub fn trace_to(field: &ConductanceField, boundary: &[usize]) -> Result<BoundaryForm> {
    check_subset(field, boundary)?;
    let reach = field.reachable_from(boundary);
    if let Some(v) = reach.iter().position(|r| !r) {
        return Err(Error::SingularTrace(format!(
            "interior vertex {v} is not connected to the boundary"
        )));
    }
    let n = field.num_vertices;
    let mut is_boundary = vec![false; n];
    for &b in boundary {
        is_boundary[b] = true;
    }
    let interior: Vec<usize> = (0..n).filter(|&v| !is_boundary[v]).collect();
    let l = field.laplacian();
    let lbb = l.select_rows(boundary).select_columns(boundary);
    let s = if interior.is_empty() {
        lbb
    } else {
        let lii = l.select_rows(&interior).select_columns(&interior);
        let lib = l.select_rows(&interior).select_columns(boundary);
        let chol = lii.cholesky().ok_or_else(|| {
            Error::SingularTrace("interior block is not positive definite".into())
        })?;
        let x = chol.solve(&lib);
        lbb - lib.transpose() * x
    };
    let c = laplacian_to_conductance(&s, boundary)?;
    Ok(BoundaryForm { vertices: boundary.to_vec(), conductance: c })
}

/// Cholesky factor of the Laplacian with the `grounded` vertices removed,
/// plus the map from vertex to row (None for grounded vertices).
pub(crate) struct GroundedSolver {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    row: Vec<Option<usize>>,
    n_rows: usize,
}

impl GroundedSolver {
    pub(crate) fn new(field: &ConductanceField, grounded: &[usize]) -> Result<Self> {
        check_subset(field, grounded)?;
        let reach = field.reachable_from(grounded);
        if let Some(v) = reach.iter().position(|r| !r) {
            return Err(Error::Unreachable(format!(
                "vertex {v} is not connected to the grounded set"
            )));
        }
        let n = field.num_vertices;
        let mut row = vec![None; n];
        let mut is_g = vec![false; n];
        for &g in grounded {
            is_g[g] = true;
        }
        let keep: Vec<usize> = (0..n).filter(|&v| !is_g[v]).collect();
        for (r, &v) in keep.iter().enumerate() {
            row[v] = Some(r);
        }
        let l = field.laplacian().select_rows(&keep).select_columns(&keep);
        let chol = l
            .cholesky()
            .ok_or_else(|| Error::Unreachable("grounded Laplacian is singular".into()))?;
        Ok(Self { chol, row, n_rows: keep.len() })
    }

    /// Solves `L_g h = rhs` on the non-grounded vertices; grounded entries are 0.
    pub(crate) fn solve_vertex_rhs(&self, rhs: &[f64]) -> Vec<f64> {
        let mut b = DVector::zeros(self.n_rows);
        for (v, r) in self.row.iter().enumerate() {
            if let Some(r) = r {
                b[*r] = rhs[v];
            }
        }
        let x = self.chol.solve(&b);
        self.row.iter().map(|r| r.map_or(0.0, |r| x[r])).collect()
    }
}

/// `R(x, y) = 1 / inf{E(f) : f(x) = 1, f(y) = 0}`, by one grounded linear solve.
/// Returns 0 for `x = y`.
pub fn effective_resistance(field: &ConductanceField, x: usize, y: usize) -> Result<f64> {
    field.check_vertex(x)?;
    field.check_vertex(y)?;
    if x == y {
        return Ok(0.0);
    }
    let solver = GroundedSolver::new(field, &[y])?;
    let mut rhs = vec![0.0; field.num_vertices];
    rhs[x] = 1.0;
    Ok(solver.solve_vertex_rhs(&rhs)[x])
}

/// The same resistance computed from the two-point trace.
pub fn effective_resistance_via_trace(field: &ConductanceField, x: usize, y: usize) -> Result<f64> {
    if x == y {
        return Ok(0.0);
    }
    let form = trace_to(field, &[x, y])?;
    Ok(1.0 / form.conductance[(0, 1)])
}

/// Resistances between all pairs of `subset`, reusing one factorization
/// grounded at `subset[0]`.
pub fn pairwise_resistance(field: &ConductanceField, subset: &[usize]) -> Result<ResistanceKernel> {
    check_subset(field, subset)?;
    let m = subset.len();
    if m == 1 {
        return ResistanceKernel::new(subset.to_vec(), DMatrix::zeros(1, 1));
    }
    let ground = subset[0];
    let solver = GroundedSolver::new(field, &[ground])?;
    let rows: Vec<usize> = subset[1..].iter().map(|&v| solver.row[v].unwrap()).collect();
    let mut rhs = DMatrix::zeros(solver.n_rows, m - 1);
    for (k, &r) in rows.iter().enumerate() {
        rhs[(r, k)] = 1.0;
    }
    let g = solver.chol.solve(&rhs);
    // Green function grounded at `ground`, restricted to the subset.
    let green = |a: usize, b: usize| -> f64 {
        if a == 0 || b == 0 {
            0.0
        } else {
            g[(rows[a - 1], b - 1)]
        }
    };
    let mut r = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in a + 1..m {
            let v = green(a, a) + green(b, b) - green(a, b) - green(b, a);
            r[(a, b)] = v;
            r[(b, a)] = v;
        }
    }
    ResistanceKernel::new(subset.to_vec(), r)
}

/// `g_x(y, z) = (R(x,y) + R(x,z) − R(y,z)) / 2`, clamped at 0.
pub fn green_kernel(kernel: &ResistanceKernel, x: usize, y: usize, z: usize) -> Result<f64> {
    let (x, y, z) = (kernel.position(x)?, kernel.position(y)?, kernel.position(z)?);
    let m = kernel.matrix();
    Ok((0.5 * (m[(x, y)] + m[(x, z)] - m[(y, z)])).max(0.0))
}

/// Expected time to hit `target` from `start` for the chain with the field's
/// jump rates slowed by the speed measure `θ` (mean holding `θ(z)/ν(z)`),
/// computed two ways.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HittingTime {
    /// `Σ_z g_x(y, z) θ(z)` from the resistance kernel.
    pub via_green: f64,
    /// Solution of the grounded system `L h = θ`, `h(target) = 0`.
    pub via_solve: f64,
}

impl HittingTime {
    pub fn relative_gap(&self) -> f64 {
        let scale = self.via_solve.abs().max(self.via_green.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.via_solve - self.via_green).abs() / scale
        }
    }
}

pub fn expected_hitting_time(
    field: &ConductanceField,
    speed: &[f64],
    start: usize,
    target: usize,
) -> Result<HittingTime> {
    let n = field.num_vertices;
    if speed.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: speed.len() });
    }
    if speed.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidArgument("speed measure must be finite and nonnegative".into()));
    }
    field.check_vertex(start)?;
    field.check_vertex(target)?;
    let solver = GroundedSolver::new(field, &[target])?;
    if start == target {
        return Ok(HittingTime { via_green: 0.0, via_solve: 0.0 });
    }
    let via_solve = solver.solve_vertex_rhs(speed)[start];

    // Ground the kernel somewhere other than the target so the two routes
    // do not share a factorization.
    let order: Vec<usize> = (0..n).map(|k| (target + 1 + k) % n).collect();
    let kernel = pairwise_resistance(field, &order)?;
    let mut via_green = 0.0;
    for z in 0..n {
        if speed[z] > 0.0 {
            via_green += green_kernel(&kernel, target, start, z)? * speed[z];
        }
    }
    Ok(HittingTime { via_green, via_solve })
}

#[cfg(test)]
mod tests;
