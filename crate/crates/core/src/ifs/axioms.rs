//! Finite-level checks of the nesting and symmetry axioms.
//!
//! Both checks are advisory: they inspect cells of one level only and report
//! violations as data. The open set condition is not checked.

use super::{boundary, dist, CellWord, IfsSpec};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct NestingViolation {
    pub a: CellWord,
    pub b: CellWord,
    /// A point of the hull intersection that is not a shared cell vertex.
    pub witness: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NestingReport {
    pub level: usize,
    pub pairs_checked: usize,
    /// `false` when the ambient dimension has no hull-intersection routine (d ≥ 3).
    pub supported: bool,
    pub violations: Vec<NestingViolation>,
}

impl NestingReport {
    pub fn passed(&self) -> bool {
        self.supported && self.violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryViolation {
    /// Boundary labels `(x, y)` whose bisecting reflection fails.
    pub pair: (usize, usize),
    pub cell: CellWord,
    /// `true` if the cell straddles the hyperplane but is not mapped to itself.
    pub straddling: bool,
}

#[derive(Debug, Clone)]
pub struct SymmetryReport {
    pub level: usize,
    pub pairs_checked: Vec<(usize, usize)>,
    pub violations: Vec<SymmetryViolation>,
}

impl SymmetryReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn failing_pairs(&self) -> Vec<(usize, usize)> {
        let mut p: Vec<_> = self.violations.iter().map(|v| v.pair).collect();
        p.dedup();
        p
    }
}

fn cells_at_level(spec: &IfsSpec, v0: &[Vec<f64>], n: usize) -> Vec<(CellWord, Vec<Vec<f64>>)> {
    let n_maps = spec.num_maps();
    (0..n_maps.pow(n as u32))
        .map(|r| {
            let w = CellWord::from_rank(r, n, n_maps);
            let pts = v0.iter().map(|p| spec.apply_word(&w, p)).collect();
            (w, pts)
        })
        .collect()
}

type P2 = [f64; 2];

fn cross(o: P2, a: P2, b: P2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
fn hull(points: &[Vec<f64>]) -> Vec<P2> {
    let mut pts: Vec<P2> = points.iter().map(|p| [p[0], p[1]]).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<P2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<P2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn seg_dist(p: P2, a: P2, b: P2) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
    };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

fn in_hull(p: P2, h: &[P2], tol: f64) -> bool {
    match h.len() {
        0 => false,
        1 => seg_dist(p, h[0], h[0]) <= tol,
        2 => seg_dist(p, h[0], h[1]) <= tol,
        n => (0..n).all(|i| {
            let a = h[i];
            let b = h[(i + 1) % n];
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            cross(a, b, p) >= -tol * len
        }),
    }
}

fn hull_edges(h: &[P2]) -> Vec<(P2, P2)> {
    match h.len() {
        0 | 1 => Vec::new(),
        2 => vec![(h[0], h[1])],
        n => (0..n).map(|i| (h[i], h[(i + 1) % n])).collect(),
    }
}

/// Points of `hull(a) ∩ hull(b)` that generate it: vertices of one inside the
/// other plus proper edge crossings.
fn intersection_generators(a: &[P2], b: &[P2], tol: f64) -> Vec<P2> {
    let mut out: Vec<P2> = a.iter().copied().filter(|&p| in_hull(p, b, tol)).collect();
    out.extend(b.iter().copied().filter(|&p| in_hull(p, a, tol)));
    for (p1, p2) in hull_edges(a) {
        for (q1, q2) in hull_edges(b) {
            let d1 = cross(q1, q2, p1);
            let d2 = cross(q1, q2, p2);
            let d3 = cross(p1, p2, q1);
            let d4 = cross(p1, p2, q2);
            if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
                let t = d1 / (d1 - d2);
                out.push([p1[0] + t * (p2[0] - p1[0]), p1[1] + t * (p2[1] - p1[1])]);
            }
        }
    }
    out
}

fn interval_generators(a: &[Vec<f64>], b: &[Vec<f64>], tol: f64) -> Vec<P2> {
    let span = |s: &[Vec<f64>]| {
        s.iter()
            .map(|p| p[0])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
    };
    let (a0, a1) = span(a);
    let (b0, b1) = span(b);
    let lo = a0.max(b0);
    let hi = a1.min(b1);
    if lo > hi + tol {
        Vec::new()
    } else {
        vec![[lo, 0.0], [hi, 0.0]]
    }
}

/// Checks that distinct `n`-cells meet only in shared images of `V₀`, using
/// the convex hulls of the cell vertices as stand-ins for the cells.
pub fn verify_nesting(spec: &IfsSpec, n: usize) -> Result<NestingReport> {
    let b = boundary(spec)?;
    let tol = super::MERGE_TOL * spec.beta.powi(-(n as i32));
    let cells = cells_at_level(spec, &b.points, n);
    let supported = spec.dim <= 2;
    let mut report = NestingReport { level: n, pairs_checked: 0, supported, violations: Vec::new() };
    if !supported {
        return Ok(report);
    }
    let hulls: Vec<Vec<P2>> = if spec.dim == 2 {
        cells.iter().map(|(_, pts)| hull(pts)).collect()
    } else {
        Vec::new()
    };
    for i in 0..cells.len() {
        for j in i + 1..cells.len() {
            report.pairs_checked += 1;
            let (wa, pa) = &cells[i];
            let (wb, pb) = &cells[j];
            let shared: Vec<&Vec<f64>> =
                pa.iter().filter(|p| pb.iter().any(|q| dist(p, q) <= tol)).collect();
            let gens = if spec.dim == 2 {
                intersection_generators(&hulls[i], &hulls[j], tol)
            } else {
                interval_generators(pa, pb, tol)
            };
            let bad = gens.into_iter().find(|g| {
                let g = &g[..spec.dim];
                !shared.iter().any(|s| dist(s, g) <= 10.0 * tol)
            });
            if let Some(w) = bad {
                report.violations.push(NestingViolation {
                    a: wa.clone(),
                    b: wb.clone(),
                    witness: w[..spec.dim].to_vec(),
                });
            }
        }
    }
    Ok(report)
}

fn same_point_set(a: &[Vec<f64>], b: &[Vec<f64>], tol: f64) -> bool {
    a.len() == b.len() && a.iter().all(|p| b.iter().any(|q| dist(p, q) <= tol))
}

/// For every pair `x ≠ y` in `V₀`, reflects the level-`n` cells across the
/// bisecting hyperplane `H_xy` and checks the image is again a cell, with
/// straddling cells mapped to themselves.
pub fn verify_symmetry(spec: &IfsSpec, n: usize) -> Result<SymmetryReport> {
    let b = boundary(spec)?;
    let v0 = &b.points;
    let scale = spec.beta.powi(-(n as i32));
    let tol = 1e-7 * scale;
    let cells = cells_at_level(spec, v0, n);
    let mut report = SymmetryReport { level: n, pairs_checked: Vec::new(), violations: Vec::new() };
    for x in 0..v0.len() {
        for y in x + 1..v0.len() {
            report.pairs_checked.push((x, y));
            let len = dist(&v0[x], &v0[y]);
            let normal: Vec<f64> = v0[y].iter().zip(&v0[x]).map(|(b, a)| (b - a) / len).collect();
            let mid: Vec<f64> = v0[y].iter().zip(&v0[x]).map(|(b, a)| 0.5 * (a + b)).collect();
            let side = |p: &[f64]| -> f64 {
                p.iter().zip(&mid).zip(&normal).map(|((p, m), u)| (p - m) * u).sum()
            };
            let reflect = |p: &[f64]| -> Vec<f64> {
                let s = side(p);
                p.iter().zip(&normal).map(|(p, u)| p - 2.0 * s * u).collect()
            };
            for (w, pts) in &cells {
                let image: Vec<Vec<f64>> = pts.iter().map(|p| reflect(p)).collect();
                let straddling = pts.iter().any(|p| side(p) > tol) && pts.iter().any(|p| side(p) < -tol);
                let ok = if straddling {
                    same_point_set(&image, pts, tol)
                } else {
                    cells.iter().any(|(_, other)| same_point_set(&image, other, tol))
                };
                if !ok {
                    report.violations.push(SymmetryViolation {
                        pair: (x, y),
                        cell: w.clone(),
                        straddling,
                    });
                }
            }
        }
    }
    Ok(report)
}
