//! Invariant boundary conductances and the resistance scale factor.
//!
//! One step of the renormalization map places a boundary network `q` on every
//! 1-cell and traces the result back onto `V₀`. A fixed point up to scaling,
//! `renorm_map(q) = q / ρ`, gives the conductances `q_{x,y}` and the factor
//! `ρ > 1`; the level-`n` metric `R_n` then uses conductance `ρⁿ q_{x,y}` on
//! every `n`-cell edge, which makes `R_m` restricted to `V_n` equal `R_n`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ifs::{build_graph, FractalGraph, IfsSpec};
use crate::network::{pairwise_resistance, BoundaryForm, CellRenormalizer, ConductanceField, FieldOrigin, ResistanceKernel};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone)]
pub struct RenormResult {
    /// Invariant conductances, scaled so the mean row sum is 1.
    pub q_star: BoundaryForm,
    pub rho: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Max-norm change of the normalized form at each iteration.
    pub residual_history: Vec<f64>,
}

impl RenormResult {
    /// Row-stochastic transition matrix `q_{xy} / Σ_z q_{xz}`.
    pub fn transition_matrix(&self) -> nalgebra::DMatrix<f64> {
        let q = &self.q_star.conductance;
        let mut p = q.clone();
        for i in 0..q.nrows() {
            let s: f64 = q.row(i).sum();
            for j in 0..q.ncols() {
                p[(i, j)] /= s;
            }
        }
        p
    }

    /// Largest and smallest off-diagonal entry of `q_star`.
    pub fn q_range(&self) -> (f64, f64) {
        let q = &self.q_star.conductance;
        let m = q.nrows();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    lo = lo.min(q[(i, j)]);
                    hi = hi.max(q[(i, j)]);
                }
            }
        }
        (lo, hi)
    }
}

fn map_with(ren: &CellRenormalizer, q: &BoundaryForm) -> Result<BoundaryForm> {
    let m = ren.boundary_size();
    if q.size() != m {
        return Err(Error::DimensionMismatch { expected: m, got: q.size() });
    }
    if !q.is_connected() {
        return Err(Error::InvalidArgument("boundary form is not connected".into()));
    }
    let per_cell: Vec<f64> = pairs(m).map(|(a, b)| q.conductance[(a, b)]).collect();
    let tiled: Vec<f64> = (0..ren.num_maps()).flat_map(|_| per_cell.iter().copied()).collect();
    let traced = ren.trace_block(&tiled).map_err(|e| match e {
        Error::SingularTrace(msg) => Error::CellLabelling(msg),
        other => other,
    })?;
    let mut c = nalgebra::DMatrix::zeros(m, m);
    for ((a, b), v) in pairs(m).zip(traced) {
        c[(a, b)] = v;
        c[(b, a)] = v;
    }
    BoundaryForm::new((0..m).collect(), c)
}

fn pairs(m: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..m).flat_map(move |a| (a + 1..m).map(move |b| (a, b)))
}

/// Places `q` on each 1-cell (through the cell's boundary labels) and traces
/// the level-1 network onto `V₀`.
pub fn renorm_map(spec: &IfsSpec, q: &BoundaryForm) -> Result<BoundaryForm> {
    map_with(&CellRenormalizer::new(spec)?, q)
}

fn normalize_first(q: &BoundaryForm) -> Result<BoundaryForm> {
    let m = q.size();
    let first = pairs(m)
        .map(|(a, b)| q.conductance[(a, b)])
        .find(|&v| v > 0.0)
        .ok_or_else(|| Error::InvalidArgument("boundary form has no positive conductance".into()))?;
    Ok(BoundaryForm { vertices: q.vertices.clone(), conductance: &q.conductance / first })
}

/// Iterates from a given start; see [`find_fixed_point`].
pub fn find_fixed_point_from(
    spec: &IfsSpec,
    start: &BoundaryForm,
    tol: f64,
    max_iter: usize,
) -> Result<RenormResult> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let ren = CellRenormalizer::new(spec)?;
    let m = ren.boundary_size();
    let mut q = normalize_first(start)?;
    let mut history = Vec::new();
    for it in 1..=max_iter {
        let out = map_with(&ren, &q)?;
        let next = normalize_first(&out)?;
        let residual = next.max_diff(&q);
        history.push(residual);
        if residual < tol {
            // At a scalar fixed point the previous normalized form is ρ times the raw output.
            let ratios: Vec<f64> = pairs(m)
                .filter(|&(a, b)| out.conductance[(a, b)] > 0.0)
                .map(|(a, b)| q.conductance[(a, b)] / out.conductance[(a, b)])
                .collect();
            let rho = ratios.iter().sum::<f64>() / ratios.len() as f64;
            let spread = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            if spread >= tol {
                // Converged normalized forms are proportional to their image, so a
                // large spread at a tiny residual means the iteration is degenerate.
                if residual < 1e-3 * tol {
                    return Err(Error::NonScalarFixedPoint { spread });
                }
                q = next;
                continue;
            }
            let mean_row = next.conductance.sum() / m as f64;
            let q_star = BoundaryForm {
                vertices: (0..m).collect(),
                conductance: &next.conductance / mean_row,
            };
            return Ok(RenormResult { q_star, rho, iterations: it, residual, residual_history: history });
        }
        q = next;
    }
    Err(Error::NoConvergence { iterations: max_iter, residual: history.last().copied().unwrap_or(f64::NAN) })
}

/// Fixed point of `q ↦ normalize(renorm_map(q))` started from the uniform form.
pub fn find_fixed_point(spec: &IfsSpec, tol: f64, max_iter: usize) -> Result<RenormResult> {
    let m = crate::ifs::essential_fixed_points(spec)?.len();
    find_fixed_point_from(spec, &BoundaryForm::uniform(m, 1.0), tol, max_iter)
}

/// Runs the iteration from `starts` random symmetric positive forms; each
/// entry is that start's outcome.
pub fn multi_start<R: Rng + ?Sized>(
    spec: &IfsSpec,
    starts: usize,
    tol: f64,
    max_iter: usize,
    rng: &mut R,
) -> Result<Vec<Result<RenormResult>>> {
    let m = crate::ifs::essential_fixed_points(spec)?.len();
    Ok((0..starts)
        .map(|_| {
            let mut c = nalgebra::DMatrix::zeros(m, m);
            for (a, b) in pairs(m) {
                let v = rng.random_range(0.2..5.0);
                c[(a, b)] = v;
                c[(b, a)] = v;
            }
            find_fixed_point_from(spec, &BoundaryForm { vertices: (0..m).collect(), conductance: c }, tol, max_iter)
        })
        .collect())
}

/// Conductance `ρⁿ q_{j,k}` on every level-`n` edge with boundary labels `(j, k)`.
pub fn deterministic_field(graph: &FractalGraph, result: &RenormResult) -> Result<ConductanceField> {
    let scale = result.rho.powi(graph.level() as i32);
    let q = &result.q_star.conductance;
    let weights = (0..graph.num_edges())
        .map(|e| {
            let (j, k) = graph.edge_label(e);
            scale * q[(j, k)]
        })
        .collect();
    ConductanceField::on_graph(graph, weights, FieldOrigin::Deterministic)
}

/// The deterministic resistance metric `R_n` on all of `V_n`.
pub fn deterministic_resistance(spec: &IfsSpec, n: usize, result: &RenormResult) -> Result<ResistanceKernel> {
    let graph = build_graph(spec, n)?;
    let field = deterministic_field(&graph, result)?;
    let all: Vec<usize> = (0..graph.num_vertices()).collect();
    pairwise_resistance(&field, &all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::{verify_symmetry, AffineMap};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn off_diagonal_spread(q: &BoundaryForm) -> f64 {
        let vals: Vec<f64> = pairs(q.size()).map(|(a, b)| q.conductance[(a, b)]).collect();
        vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - vals.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn gasket_uniform_form_scales_by_three_fifths() {
        let out = renorm_map(&IfsSpec::sierpinski_gasket(), &BoundaryForm::uniform(3, 1.0)).unwrap();
        for (a, b) in pairs(3) {
            assert!((out.conductance[(a, b)] - 0.6).abs() < 1e-14);
        }
    }

    #[test]
    fn vicsek_uniform_form_scales_by_one_third() {
        // Diagonal corners are joined by three K4 cells in series (R = 3/2 each way),
        // and a uniform K4 with conductance c has R = 1/(2c).
        let out = renorm_map(&IfsSpec::vicsek(), &BoundaryForm::uniform(4, 1.0)).unwrap();
        for (a, b) in pairs(4) {
            assert!((out.conductance[(a, b)] - 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn two_resistors_in_series() {
        let seg = IfsSpec {
            dim: 1,
            beta: 2.0,
            maps: vec![AffineMap::new(vec![1.0], vec![0.0]), AffineMap::new(vec![1.0], vec![0.5])],
            preset_name: None,
        };
        let out = renorm_map(&seg, &BoundaryForm::uniform(2, 1.0)).unwrap();
        assert!((out.conductance[(0, 1)] - 0.5).abs() < 1e-15);
        let r = find_fixed_point(&seg, DEFAULT_TOL, 10).unwrap();
        assert!((r.rho - 2.0).abs() < 1e-12);
    }

    #[test]
    fn preset_fixed_points() {
        let g = find_fixed_point(&IfsSpec::sierpinski_gasket(), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!((g.rho - 5.0 / 3.0).abs() < 1e-12);
        assert!(off_diagonal_spread(&g.q_star) < 1e-12);
        assert!((g.q_star.conductance[(0, 1)] - 0.5).abs() < 1e-12);
        let v = find_fixed_point(&IfsSpec::vicsek(), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!((v.rho - 3.0).abs() < 1e-12);
        assert!(off_diagonal_spread(&v.q_star) < 1e-12);
        for r in [&g, &v] {
            let p = r.transition_matrix();
            for i in 0..p.nrows() {
                assert!((p.row(i).sum() - 1.0).abs() < 1e-12);
                assert!((r.q_star.conductance.row(i).sum() - 1.0).abs() < 1e-12);
                assert_eq!(r.q_star.conductance[(i, i)], 0.0);
            }
            assert!(r.rho > 1.0);
        }
    }

    #[test]
    fn scalar_fixed_point_property() {
        for spec in [IfsSpec::sierpinski_gasket(), IfsSpec::vicsek()] {
            let r = find_fixed_point(&spec, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            let image = renorm_map(&spec, &r.q_star).unwrap();
            let diff = (&image.conductance * r.rho - &r.q_star.conductance).amax();
            assert!(diff < 10.0 * DEFAULT_TOL, "{diff}");
        }
    }

    #[test]
    fn fixed_point_is_invariant_under_reflections() {
        for spec in [IfsSpec::sierpinski_gasket(), IfsSpec::vicsek()] {
            assert!(verify_symmetry(&spec, 1).unwrap().passed());
            let r = find_fixed_point(&spec, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            let v0 = crate::ifs::essential_fixed_points(&spec).unwrap();
            let m = v0.len();
            for x in 0..m {
                for y in x + 1..m {
                    // Permutation of V₀ induced by the reflection swapping x and y.
                    let perm: Vec<usize> = (0..m)
                        .map(|k| {
                            let p = &v0[k];
                            let n: Vec<f64> = (0..spec.dim).map(|d| v0[y][d] - v0[x][d]).collect();
                            let len2: f64 = n.iter().map(|t| t * t).sum();
                            let s: f64 = (0..spec.dim).map(|d| (p[d] - 0.5 * (v0[x][d] + v0[y][d])) * n[d]).sum::<f64>() / len2;
                            let img: Vec<f64> = (0..spec.dim).map(|d| p[d] - 2.0 * s * n[d]).collect();
                            (0..m).find(|&j| crate::ifs::dist(&v0[j], &img) < 1e-9).unwrap()
                        })
                        .collect();
                    for a in 0..m {
                        for b in 0..m {
                            let q = &r.q_star.conductance;
                            assert!((q[(a, b)] - q[(perm[a], perm[b])]).abs() < 1e-10);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn residuals_decrease_after_first_iterate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let outcomes = multi_start(&IfsSpec::sierpinski_gasket(), 5, 1e-10, 10_000, &mut rng).unwrap();
        for o in outcomes {
            let r = o.unwrap();
            assert!((r.rho - 5.0 / 3.0).abs() < 1e-8);
            assert!(off_diagonal_spread(&r.q_star) < 1e-8);
            for w in r.residual_history.windows(2).skip(1) {
                assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-15, "{:?}", r.residual_history);
            }
        }
    }

    #[test]
    fn zero_tolerance_is_rejected() {
        let r = find_fixed_point(&IfsSpec::sierpinski_gasket(), 0.0, 10);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn level_zero_kernel_is_the_q_network() {
        let spec = IfsSpec::sierpinski_gasket();
        let r = find_fixed_point(&spec, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let k = deterministic_resistance(&spec, 0, &r).unwrap();
        // Uniform triangle with conductance 1/2: R = (2/3)/(1/2).
        assert!((k.get(0, 1).unwrap() - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn nesting_identity() {
        let spec = IfsSpec::sierpinski_gasket();
        let r = find_fixed_point(&spec, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let graphs: Vec<_> = (0..=4).map(|n| build_graph(&spec, n).unwrap()).collect();
        let kernels: Vec<_> = (0..=4).map(|n| deterministic_resistance(&spec, n, &r).unwrap()).collect();
        for m in 0..=4 {
            for n in 0..=m {
                let emb = graphs[m].embed(&graphs[n]).unwrap();
                let restricted = kernels[m].restrict(&emb).unwrap();
                let diff = (restricted.matrix() - kernels[n].matrix()).amax();
                assert!(diff < 1e-9, "m={m} n={n} diff={diff}");
            }
            let b = graphs[m].boundary();
            assert!((kernels[m].get(b[0], b[1]).unwrap() - 4.0 / 3.0).abs() < 1e-9);
        }
    }
}
