//! Nested fractals given by iterated function systems `ψ_i(x) = β⁻¹U_i x + γ_i`.

mod axioms;
mod graph;
pub mod spec_file;

pub use axioms::{verify_nesting, verify_symmetry, NestingReport, NestingViolation, SymmetryReport, SymmetryViolation};
pub use graph::{build_graph, FractalGraph};

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

pub const ORTHOGONALITY_TOL: f64 = 1e-12;

/// Relative tolerance used when deciding that two points of level `n` coincide.
pub(crate) const MERGE_TOL: f64 = 1e-9;

pub const PRESET_NAMES: &[&str] = &["sierpinski-gasket", "vicsek-2d"];

/// One similitude `x ↦ β⁻¹ U x + γ` (the contraction ratio lives on [`IfsSpec`]).
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    /// Orthogonal matrix `U`, row-major `d×d`.
    pub linear: Vec<f64>,
    pub translation: Vec<f64>,
}

impl AffineMap {
    pub fn new(linear: Vec<f64>, translation: Vec<f64>) -> Self {
        Self { linear, translation }
    }

    pub fn identity_scaling(dim: usize, translation: Vec<f64>) -> Self {
        let mut linear = vec![0.0; dim * dim];
        for i in 0..dim {
            linear[i * dim + i] = 1.0;
        }
        Self { linear, translation }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IfsSpec {
    pub dim: usize,
    pub beta: f64,
    pub maps: Vec<AffineMap>,
    pub preset_name: Option<String>,
}

impl IfsSpec {
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "sierpinski-gasket" => Ok(Self::sierpinski_gasket()),
            "vicsek-2d" => Ok(Self::vicsek()),
            other => Err(Error::InvalidArgument(format!(
                "unknown preset '{other}' (known: {})",
                PRESET_NAMES.join(", ")
            ))),
        }
    }

    /// Sierpiński gasket on the unit equilateral triangle with corner 0 at the origin.
    pub fn sierpinski_gasket() -> Self {
        let h = 3f64.sqrt() / 4.0;
        Self {
            dim: 2,
            beta: 2.0,
            maps: vec![
                AffineMap::identity_scaling(2, vec![0.0, 0.0]),
                AffineMap::identity_scaling(2, vec![0.5, 0.0]),
                AffineMap::identity_scaling(2, vec![0.25, h]),
            ],
            preset_name: Some("sierpinski-gasket".into()),
        }
    }

    /// Vicsek set on the unit square: four corner copies and one central copy.
    pub fn vicsek() -> Self {
        let t = 2.0 / 3.0;
        let c = 1.0 / 3.0;
        Self {
            dim: 2,
            beta: 3.0,
            maps: vec![
                AffineMap::identity_scaling(2, vec![0.0, 0.0]),
                AffineMap::identity_scaling(2, vec![t, 0.0]),
                AffineMap::identity_scaling(2, vec![0.0, t]),
                AffineMap::identity_scaling(2, vec![t, t]),
                AffineMap::identity_scaling(2, vec![c, c]),
            ],
            preset_name: Some("vicsek-2d".into()),
        }
    }

    pub fn num_maps(&self) -> usize {
        self.maps.len()
    }

    pub fn name(&self) -> &str {
        self.preset_name.as_deref().unwrap_or("custom")
    }

    /// Structural checks: dimensions, `β > 1`, orthogonality, `N ≥ 2` and the
    /// normalization `ψ₁(x) = β⁻¹x`.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        if d == 0 {
            return Err(Error::InvalidFractal("ambient dimension must be positive".into()));
        }
        if !(self.beta.is_finite() && self.beta > 1.0) {
            return Err(Error::InvalidFractal(format!("beta must be > 1, got {}", self.beta)));
        }
        if self.maps.len() < 2 {
            return Err(Error::InvalidFractal(format!(
                "need at least 2 maps, got {}",
                self.maps.len()
            )));
        }
        for (i, m) in self.maps.iter().enumerate() {
            if m.linear.len() != d * d || m.translation.len() != d {
                return Err(Error::InvalidFractal(format!(
                    "map {} has wrong shape for dimension {d}",
                    i + 1
                )));
            }
            let u = DMatrix::from_row_slice(d, d, &m.linear);
            let gram = u.transpose() * &u;
            let dev = (gram - DMatrix::<f64>::identity(d, d)).amax();
            if dev > ORTHOGONALITY_TOL {
                return Err(Error::InvalidFractal(format!(
                    "map {} is not orthogonal (|UᵀU - I| = {dev:e})",
                    i + 1
                )));
            }
        }
        let first = &self.maps[0];
        let id = AffineMap::identity_scaling(d, vec![0.0; d]);
        let off = first
            .linear
            .iter()
            .zip(&id.linear)
            .chain(first.translation.iter().zip(&id.translation))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if off > ORTHOGONALITY_TOL {
            return Err(Error::InvalidFractal(
                "the first map must be x -> x/beta (U = I, gamma = 0)".into(),
            ));
        }
        Ok(())
    }

    pub fn apply(&self, map: usize, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let m = &self.maps[map];
        let inv = 1.0 / self.beta;
        (0..d)
            .map(|r| {
                let row = &m.linear[r * d..(r + 1) * d];
                inv * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + m.translation[r]
            })
            .collect()
    }

    /// `ψ_{i₁…i_n}(x) = ψ_{i₁}(…ψ_{i_n}(x))`.
    pub fn apply_word(&self, word: &CellWord, x: &[f64]) -> Vec<f64> {
        word.letters()
            .iter()
            .rev()
            .fold(x.to_vec(), |acc, &i| self.apply(i as usize, &acc))
    }

    pub fn fixed_point(&self, map: usize) -> Vec<f64> {
        let d = self.dim;
        let m = &self.maps[map];
        let u = DMatrix::from_row_slice(d, d, &m.linear);
        let a = DMatrix::<f64>::identity(d, d) - u / self.beta;
        let g = DVector::from_column_slice(&m.translation);
        // I − β⁻¹U is invertible because the map is a strict contraction.
        let x = a.lu().solve(&g).expect("contraction has a unique fixed point");
        x.iter().copied().collect()
    }
}

/// Address of an `n`-cell: the word `(i₁,…,i_n)` with 0-based letters.
///
/// Displays 1-based, dot separated (`1.3.2`); the empty word displays as `()`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct CellWord(Vec<u16>);

impl CellWord {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn from_letters(letters: Vec<u16>) -> Self {
        Self(letters)
    }

    pub fn letters(&self) -> &[u16] {
        &self.0
    }

    pub fn level(&self) -> usize {
        self.0.len()
    }

    pub fn concat(&self, other: &CellWord) -> CellWord {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        CellWord(v)
    }

    pub fn push(&self, letter: u16) -> CellWord {
        let mut v = self.0.clone();
        v.push(letter);
        CellWord(v)
    }

    pub fn prefix(&self, n: usize) -> CellWord {
        CellWord(self.0[..n.min(self.0.len())].to_vec())
    }

    /// Lexicographic rank among all words of the same length over `n_maps` letters.
    pub fn rank(&self, n_maps: usize) -> usize {
        self.0.iter().fold(0usize, |acc, &l| acc * n_maps + l as usize)
    }

    pub fn from_rank(mut rank: usize, level: usize, n_maps: usize) -> CellWord {
        let mut v = vec![0u16; level];
        for slot in v.iter_mut().rev() {
            *slot = (rank % n_maps) as u16;
            rank /= n_maps;
        }
        CellWord(v)
    }
}

impl fmt::Display for CellWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("()");
        }
        for (k, l) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(".")?;
            }
            write!(f, "{}", l + 1)?;
        }
        Ok(())
    }
}

impl FromStr for CellWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "()" {
            return Ok(CellWord::empty());
        }
        s.split('.')
            .map(|t| match t.parse::<u16>() {
                Ok(l) if l >= 1 => Ok(l - 1),
                _ => Err(Error::InvalidArgument(format!("bad cell word '{s}'"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(CellWord)
    }
}

/// The essential fixed points together with, for each of them, a map that fixes it.
#[derive(Debug, Clone)]
pub struct Boundary {
    pub points: Vec<Vec<f64>>,
    pub fixing_map: Vec<usize>,
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub(crate) fn boundary(spec: &IfsSpec) -> Result<Boundary> {
    spec.validate()?;
    let tol = MERGE_TOL;
    let mut fix: Vec<(Vec<f64>, usize)> = Vec::new();
    for i in 0..spec.num_maps() {
        let p = spec.fixed_point(i);
        if !fix.iter().any(|(q, _)| dist(q, &p) < tol) {
            fix.push((p, i));
        }
    }
    let mut points = Vec::new();
    let mut fixing_map = Vec::new();
    for (x, owner) in &fix {
        let essential = (0..spec.num_maps()).any(|i| {
            let xi = spec.apply(i, x);
            (0..spec.num_maps())
                .filter(|&j| j != i)
                .any(|j| fix.iter().any(|(y, _)| dist(&xi, &spec.apply(j, y)) < tol))
        });
        if essential {
            points.push(x.clone());
            fixing_map.push(*owner);
        }
    }
    if points.len() < 2 {
        return Err(Error::InvalidFractal(format!(
            "found {} essential fixed point(s); a nested fractal needs at least 2",
            points.len()
        )));
    }
    if dist(&points[0], &vec![0.0; spec.dim]) > tol {
        return Err(Error::InvalidFractal("0 is not an essential fixed point".into()));
    }
    Ok(Boundary { points, fixing_map })
}

/// The set `V₀` of essential fixed points, ordered by the index of the map
/// fixing them (so `0`, the fixed point of `ψ₁`, comes first).
pub fn essential_fixed_points(spec: &IfsSpec) -> Result<Vec<Vec<f64>>> {
    boundary(spec).map(|b| b.points)
}

/// A uniformly random word of the given length.
pub fn sample_word<R: Rng + ?Sized>(spec: &IfsSpec, depth: usize, rng: &mut R) -> CellWord {
    let n = spec.num_maps();
    CellWord((0..depth).map(|_| rng.random_range(0..n) as u16).collect())
}

/// `ψ_word(0)`.
pub fn apply_origin(spec: &IfsSpec, word: &CellWord) -> Vec<f64> {
    spec.apply_word(word, &vec![0.0; spec.dim])
}

/// `ψ_{i₁…i_m}(0)` for i.i.d. uniform letters; approximates the self-similar
/// measure to resolution `β^{-m}`.
pub fn sample_self_similar<R: Rng + ?Sized>(spec: &IfsSpec, depth: usize, rng: &mut R) -> Vec<f64> {
    let w = sample_word(spec, depth, rng);
    spec.apply_word(&w, &vec![0.0; spec.dim])
}
