//! Heavy-tailed random conductance environments and Poisson trap measures.
//!
//! All randomness flows through [`SeededStream`]: a master seed plus a
//! `(trial, purpose)` stream id, mapped onto independent ChaCha streams, so a
//! trial's draws never depend on which worker ran it or in what order.

use std::io::{BufRead, Write};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::ifs::{apply_origin, sample_word, CellWord, FractalGraph, IfsSpec};
use crate::network::{ConductanceField, FieldOrigin};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamPurpose {
    Environment,
    Jumps,
    Clock,
    Traps,
    Bootstrap,
    Other(u8),
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::Environment => 1,
            StreamPurpose::Jumps => 2,
            StreamPurpose::Clock => 3,
            StreamPurpose::Traps => 4,
            StreamPurpose::Bootstrap => 5,
            StreamPurpose::Other(t) => 16 + t as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeededStream {
    pub master_seed: u64,
    pub trial: u64,
    pub purpose: StreamPurpose,
}

impl SeededStream {
    pub fn new(master_seed: u64, trial: u64, purpose: StreamPurpose) -> Self {
        Self { master_seed, trial, purpose }
    }

    pub fn with_purpose(self, purpose: StreamPurpose) -> Self {
        Self { purpose, ..self }
    }

    /// Trial ids for experiments that loop over levels as well as trials.
    pub fn level_trial(level: usize, trial: usize) -> u64 {
        ((level as u64) << 32) | trial as u64
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(splitmix64(self.trial.wrapping_mul(64).wrapping_add(self.purpose.tag())));
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform on `(0, 1]`, safe to take logarithms and negative powers of.
pub(crate) fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Law of the conductances `ω⁰` of one cell.
///
/// Implementations fill one cell's edge weights at a time, so within-cell
/// dependence is representable; different cells always get independent draws.
pub trait CellLaw: Sync {
    fn sample_cell(&self, rng: &mut dyn RngCore, out: &mut [f64]);

    /// Deterministic `c > 0` with `ω ≥ c` almost surely.
    fn lower_bound(&self) -> f64;

    fn is_deterministic(&self) -> bool {
        false
    }

    /// Tail exponent `α` of the cell sum, when heavy tailed.
    fn tail_index(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConductanceLaw {
    /// I.i.d. per edge with `P(ω > u) = (u/c)^{-α}` for `u ≥ c`.
    Pareto { alpha: f64, lower_bound: f64 },
    /// Point mass.
    Constant(f64),
    /// The same weights on every cell, indexed by within-cell edge order.
    Pattern(Vec<f64>),
}

impl ConductanceLaw {
    pub fn pareto(alpha: f64, lower_bound: f64) -> Result<Self> {
        let law = ConductanceLaw::Pareto { alpha, lower_bound };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ConductanceLaw::Pareto { alpha, lower_bound } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
                }
                if !(lower_bound.is_finite() && *lower_bound > 0.0) {
                    return Err(Error::InvalidArgument(format!("lower bound must be > 0, got {lower_bound}")));
                }
            }
            ConductanceLaw::Constant(w) => {
                if !(w.is_finite() && *w > 0.0) {
                    return Err(Error::InvalidArgument(format!("constant conductance must be > 0, got {w}")));
                }
            }
            ConductanceLaw::Pattern(p) => {
                if p.is_empty() || p.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                    return Err(Error::InvalidArgument("pattern weights must be > 0".into()));
                }
            }
        }
        Ok(())
    }

    /// Tail exponent, if the law is heavy tailed.
    pub fn alpha(&self) -> Option<f64> {
        match self {
            ConductanceLaw::Pareto { alpha, .. } => Some(*alpha),
            _ => None,
        }
    }

    /// Constant `c` in `u^α P(Σ_{e∈E₀} ω_e > u) → c`. For i.i.d. Pareto edges the
    /// tail constants add up, giving `|E₀|·c_low^α`.
    pub fn tail_constant(&self, edges_per_cell: usize) -> Option<f64> {
        match self {
            ConductanceLaw::Pareto { alpha, lower_bound } => Some(edges_per_cell as f64 * lower_bound.powf(*alpha)),
            _ => None,
        }
    }
}

impl CellLaw for ConductanceLaw {
    fn sample_cell(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        match self {
            ConductanceLaw::Pareto { alpha, lower_bound } => {
                let inv = -1.0 / alpha;
                for w in out.iter_mut() {
                    *w = lower_bound * open_unit(rng).powf(inv);
                }
            }
            ConductanceLaw::Constant(c) => out.fill(*c),
            ConductanceLaw::Pattern(p) => {
                for (k, w) in out.iter_mut().enumerate() {
                    *w = p[k % p.len()];
                }
            }
        }
    }

    fn lower_bound(&self) -> f64 {
        match self {
            ConductanceLaw::Pareto { lower_bound, .. } => *lower_bound,
            ConductanceLaw::Constant(c) => *c,
            ConductanceLaw::Pattern(p) => p.iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }

    fn is_deterministic(&self) -> bool {
        !matches!(self, ConductanceLaw::Pareto { .. })
    }

    fn tail_index(&self) -> Option<f64> {
        self.alpha()
    }
}

/// One independent draw of the cell law per cell of `graph`, in cell order.
pub fn sample_environment(graph: &FractalGraph, law: &dyn CellLaw, stream: &SeededStream) -> Result<ConductanceField> {
    let per_cell = graph.edges_per_cell();
    let mut weights = vec![0.0; graph.num_edges()];
    let mut rng = stream.rng();
    for cell in weights.chunks_mut(per_cell) {
        law.sample_cell(&mut rng, cell);
    }
    let origin = if law.is_deterministic() { FieldOrigin::Deterministic } else { FieldOrigin::Random };
    ConductanceField::on_graph(graph, weights, origin)
}

/// `ν_n(x) = Σ_{e ∋ x} ω_e`.
pub fn nu_measure(field: &ConductanceField) -> Vec<f64> {
    field.vertex_measure()
}

/// Writes `cell,edge,weight` rows (cell word, within-cell edge index, weight).
pub fn write_environment_csv<W: Write>(graph: &FractalGraph, field: &ConductanceField, mut w: W) -> Result<()> {
    writeln!(w, "cell,edge,weight")?;
    let p = graph.edges_per_cell();
    for (e, weight) in field.weights().iter().enumerate() {
        writeln!(w, "{},{},{:?}", graph.cells()[e / p], e % p, weight)?;
    }
    Ok(())
}

pub fn read_environment_csv<R: BufRead>(graph: &FractalGraph, r: R) -> Result<ConductanceField> {
    let p = graph.edges_per_cell();
    let mut weights = vec![f64::NAN; graph.num_edges()];
    for (k, line) in r.lines().enumerate().skip(1) {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Csv { line: k + 1, msg };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(bad(format!("expected 3 columns, got {}", cols.len())));
        }
        let word: CellWord = cols[0].parse().map_err(|e: Error| bad(e.to_string()))?;
        if word.level() != graph.level() {
            return Err(bad(format!("cell {word} is not a level-{} cell", graph.level())));
        }
        let edge: usize = cols[1].parse().map_err(|_| bad(format!("bad edge index '{}'", cols[1])))?;
        if edge >= p {
            return Err(bad(format!("edge index {edge} out of range")));
        }
        let weight: f64 = cols[2].parse().map_err(|_| bad(format!("bad weight '{}'", cols[2])))?;
        weights[word.rank(graph.num_maps()) * p + edge] = weight;
    }
    if weights.iter().any(|w| w.is_nan()) {
        return Err(Error::Csv { line: 0, msg: "missing edges in environment file".into() });
    }
    ConductanceField::on_graph(graph, weights, FieldOrigin::Random)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrapAtom {
    pub mass: f64,
    /// Location `ψ_word(0)`, kept as an exact address.
    pub word: CellWord,
}

/// Finite truncation `Σ_{v_i ≥ ε} v_i δ_{x_i}` of the Poisson trap measure.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapMeasure {
    pub atoms: Vec<TrapAtom>,
    pub cutoff: f64,
    pub alpha: f64,
}

impl TrapMeasure {
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    pub fn location(&self, spec: &IfsSpec, atom: usize) -> Vec<f64> {
        apply_origin(spec, &self.atoms[atom].word)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "word,v")?;
        for a in &self.atoms {
            writeln!(w, "{},{:?}", a.word, a.mass)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, cutoff: f64, alpha: f64) -> Result<TrapMeasure> {
        let mut atoms = Vec::new();
        for (k, line) in r.lines().enumerate().skip(1) {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Csv { line: k + 1, msg };
            let (word, v) = line.split_once(',').ok_or_else(|| bad("expected 2 columns".into()))?;
            let word: CellWord = word.parse().map_err(|e: Error| bad(e.to_string()))?;
            let mass: f64 = v.trim().parse().map_err(|_| bad(format!("bad mass '{v}'")))?;
            if mass < cutoff {
                return Err(bad(format!("mass {mass} below cutoff {cutoff}")));
            }
            atoms.push(TrapAtom { mass, word });
        }
        Ok(TrapMeasure { atoms, cutoff, alpha })
    }
}

/// Atoms of the Poisson process with intensity `α v^{-1-α} dv μ(dx)` above `ε`:
/// `Poisson(ε^{-α})` many, sizes `ε·U^{-1/α}`, locations from depth-`m` words.
pub fn sample_trap_measure(
    spec: &IfsSpec,
    alpha: f64,
    cutoff: f64,
    depth: usize,
    stream: &SeededStream,
) -> Result<TrapMeasure> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(cutoff.is_finite() && cutoff > 0.0) {
        return Err(Error::InvalidArgument(format!("cutoff must be > 0, got {cutoff}")));
    }
    if depth == 0 {
        return Err(Error::InvalidArgument("trap depth must be at least 1".into()));
    }
    let mut rng = stream.rng();
    let poisson = Poisson::new(cutoff.powf(-alpha))
        .map_err(|e| Error::InvalidArgument(format!("atom intensity: {e}")))?;
    let count = poisson.sample(&mut rng) as usize;
    let inv = -1.0 / alpha;
    let atoms = (0..count)
        .map(|_| {
            let mass = cutoff * open_unit(&mut rng).powf(inv);
            TrapAtom { mass, word: sample_word(spec, depth, &mut rng) }
        })
        .collect();
    Ok(TrapMeasure { atoms, cutoff, alpha })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailEstimate {
    pub alpha_hat: f64,
    /// Naive standard error `α̂/√k`.
    pub std_err: f64,
    /// Set when the top order statistics are all equal (no tail information).
    pub degenerate: bool,
}

/// Hill estimator over the top `k` order statistics.
pub fn tail_estimate(samples: &[f64], k: usize) -> Result<TailEstimate> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need k >= 2 order statistics, got {k}")));
    }
    if k >= samples.len() {
        return Err(Error::InvalidArgument(format!("k = {k} must be below the sample count {}", samples.len())));
    }
    if samples.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::InvalidArgument("Hill estimator needs positive samples".into()));
    }
    let mut v = samples.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let threshold = v[k].ln();
    let h = v[..k].iter().map(|x| x.ln() - threshold).sum::<f64>() / k as f64;
    if h <= 0.0 {
        return Ok(TailEstimate { alpha_hat: f64::INFINITY, std_err: f64::INFINITY, degenerate: true });
    }
    let alpha_hat = 1.0 / h;
    Ok(TailEstimate { alpha_hat, std_err: alpha_hat / (k as f64).sqrt(), degenerate: false })
}
