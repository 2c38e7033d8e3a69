//! Concentration of random resistance metrics on the deterministic one.
//!
//! On level `n` the random network carries conductance `ρⁿ·ĉ·ω_e`, where the
//! cell weights `ω` are i.i.d. across cells and `ĉ` is the homogenised scale.
//! Its resistance metric `R_n^ω` is compared with the deterministic `R` on a
//! fixed small vertex set `V_k ⊂ V_n` (and on all of `V_n` for small `n`).

use rand::seq::index::sample;
use rayon::prelude::*;

use crate::environment::{sample_environment, CellLaw, ConductanceLaw, SeededStream, StreamPurpose};
use crate::error::{Error, Result};
use crate::ifs::{build_graph, FractalGraph, IfsSpec};
use crate::network::{pairwise_resistance, CellRenormalizer, ConductanceField, FieldOrigin, ResistanceKernel};
use crate::renorm::{deterministic_field, deterministic_resistance, RenormResult};
use crate::stats::{median, quantile, variance};

/// Minimum trials for estimating `ĉ`.
pub const MIN_C_TRIALS: usize = 100;

const BOOTSTRAP_ROUNDS: usize = 200;

/// Resistances of the network with conductance `ρⁿ·ĉ·ω_e` between all pairs
/// of `subset` (all of `V_n` when `None`).
pub fn random_resistance(
    graph: &FractalGraph,
    result: &RenormResult,
    field: &ConductanceField,
    c_hat: f64,
    subset: Option<&[usize]>,
) -> Result<ResistanceKernel> {
    if field.num_vertices() != graph.num_vertices() || field.edges().len() != graph.num_edges() {
        return Err(Error::DimensionMismatch { expected: graph.num_edges(), got: field.edges().len() });
    }
    if !(c_hat.is_finite() && c_hat > 0.0) {
        return Err(Error::InvalidArgument(format!("scale constant must be > 0, got {c_hat}")));
    }
    let scaled = field.scaled(result.rho.powi(graph.level() as i32) * c_hat)?;
    let all: Vec<usize>;
    let subset = match subset {
        Some(s) => s,
        None => {
            all = (0..graph.num_vertices()).collect();
            &all
        }
    };
    pairwise_resistance(&scaled, subset)
}

/// The deterministic pattern `ω_e = q_{label(e)}` as a cell law.
pub fn q_pattern_law(graph: &FractalGraph, result: &RenormResult) -> ConductanceLaw {
    let q = &result.q_star.conductance;
    ConductanceLaw::Pattern(graph.pairs().iter().map(|&(j, k)| q[(j, k)]).collect())
}

/// Upper constant `C` with `R_n^ω ≤ C·R_n` whenever `ω ≥ lower_bound`: every
/// random conductance dominates `ĉ·lower_bound / q_max` times its deterministic
/// counterpart, and resistance is monotone in conductance.
pub fn upper_bound_constant(result: &RenormResult, c_hat: f64, lower_bound: f64) -> f64 {
    result.q_range().1 / (c_hat * lower_bound)
}

/// Weights of the random network traced from level `n` down to level `to`,
/// with the `ρⁿ` factor applied and `ĉ = 1`.
fn traced_weights(renormalizer: &CellRenormalizer, field: &ConductanceField, n: usize, to: usize, rho: f64) -> Result<Vec<f64>> {
    let scale = rho.powi(n as i32);
    let w: Vec<f64> = field.weights().iter().map(|w| w * scale).collect();
    renormalizer.coarsen_to(&w, n, to)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CEstimate {
    pub c_hat: f64,
    /// Standard deviation of the median over bootstrap resamples of trials.
    pub bootstrap_se: f64,
    pub n_ref: usize,
    pub trials: usize,
    /// Per trial, per `V₀` pair: `R_n^{ω}(x,y) / R(x,y)` with `ĉ = 1`.
    pub ratios: Vec<Vec<f64>>,
}

/// `ĉ` as the median over trials and `V₀` pairs of `R_n^{raw}(x,y) / R(x,y)`,
/// so that scaling every conductance by `ĉ` brings the median ratio to one.
pub fn estimate_c(
    spec: &IfsSpec,
    result: &RenormResult,
    law: &dyn CellLaw,
    n_ref: usize,
    trials: usize,
    master_seed: u64,
) -> Result<CEstimate> {
    if n_ref < 2 {
        return Err(Error::InvalidArgument(format!("reference level must be >= 2, got {n_ref}")));
    }
    if trials < MIN_C_TRIALS {
        return Err(Error::InsufficientTrials { needed: MIN_C_TRIALS, got: trials });
    }
    let graph = build_graph(spec, n_ref)?;
    let g0 = build_graph(spec, 0)?;
    let renormalizer = CellRenormalizer::new(spec)?;
    let boundary: Vec<usize> = (0..g0.num_vertices()).collect();
    let reference = deterministic_resistance(spec, 0, result)?;
    let ratios: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let stream = SeededStream::new(master_seed, SeededStream::level_trial(n_ref, trial), StreamPurpose::Other(3));
            let field = sample_environment(&graph, law, &stream)?;
            let w = traced_weights(&renormalizer, &field, n_ref, 0, result.rho)?;
            let r = pairwise_resistance(&ConductanceField::on_graph(&g0, w, FieldOrigin::Random)?, &boundary)?;
            let mut out = Vec::new();
            for a in 0..boundary.len() {
                for b in a + 1..boundary.len() {
                    out.push(r.matrix()[(a, b)] / reference.matrix()[(a, b)]);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let pooled = |idx: &mut dyn Iterator<Item = usize>| -> f64 {
        let v: Vec<f64> = idx.flat_map(|t| ratios[t].iter().copied()).collect();
        median(&v)
    };
    let c_hat = pooled(&mut (0..trials));
    let mut rng = SeededStream::new(master_seed, n_ref as u64, StreamPurpose::Bootstrap).rng();
    let boots: Vec<f64> = (0..BOOTSTRAP_ROUNDS)
        .map(|_| {
            let picks: Vec<usize> = (0..trials).map(|_| rand::Rng::random_range(&mut rng, 0..trials)).collect();
            pooled(&mut picks.into_iter())
        })
        .collect();
    Ok(CEstimate { c_hat, bootstrap_se: variance(&boots).sqrt(), n_ref, trials, ratios })
}

/// How `ĉ` is obtained for a homogenisation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CSource {
    Fixed(f64),
    /// Estimated at this reference level with this many trials.
    Estimate { n_ref: usize, trials: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomogenizationConfig {
    pub levels: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
    /// Comparison set `V_k` with `k = min(n, compare_level)`.
    pub compare_level: usize,
    /// Largest level for which the sup over all of `V_n` is computed; above it
    /// the sup runs over a random vertex sample of size `sample_vertices`.
    pub full_sup_max_level: usize,
    pub sample_vertices: usize,
    pub c_source: CSource,
}

impl HomogenizationConfig {
    /// Defaults: `k = min(n, 2)`, full sups up to level 3, `ĉ` estimated at the
    /// top level with the same trial count (at least 100).
    pub fn new(levels: Vec<usize>, trials: usize, master_seed: u64) -> Self {
        let top = levels.iter().copied().max().unwrap_or(2).max(2);
        Self {
            levels,
            trials,
            master_seed,
            compare_level: 2,
            full_sup_max_level: 3,
            sample_vertices: 32,
            c_source: CSource::Estimate { n_ref: top, trials: trials.max(MIN_C_TRIALS) },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogenizationRow {
    pub level: usize,
    pub trial: usize,
    /// `sup_{x,y ∈ V_k} |R_n^ω − R|`.
    pub d: f64,
    /// The same sup over all of `V_n`, or over a random vertex sample.
    pub d_wide: f64,
    /// `R_n^ω` between the first two points of `V₀`.
    pub r01: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSummary {
    pub level: usize,
    pub compare_level: usize,
    pub median_d: f64,
    pub upper_quartile_d: f64,
    pub median_d_wide: f64,
    /// Whether `d_wide` is the sup over all of `V_n` (else a random sample).
    pub wide_is_full: bool,
    pub r01_variance: f64,
    /// Largest observed `R_n^ω / R_n` over `V_k` pairs, against the bound `C`.
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomogenizationReport {
    pub levels: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
    pub c_hat: f64,
    pub c_bootstrap_se: Option<f64>,
    /// `C` in `R_n^ω ≤ C·R_n`, when the law has a positive lower bound.
    pub upper_bound: f64,
    pub summaries: Vec<LevelSummary>,
    pub rows: Vec<HomogenizationRow>,
}

impl HomogenizationReport {
    /// Median `D_n` strictly decreasing and the last at most half the first.
    pub fn trend_holds(&self) -> bool {
        let m: Vec<f64> = self.summaries.iter().map(|s| s.median_d).collect();
        m.windows(2).all(|w| w[1] < w[0]) && m.last() <= m.first().map(|f| f * 0.5).as_ref()
    }

    pub fn bound_holds(&self) -> bool {
        self.summaries.iter().all(|s| s.max_ratio <= self.upper_bound * (1.0 + 1e-9))
    }
}

fn sup_diff(a: &ResistanceKernel, b: &ResistanceKernel) -> f64 {
    a.matrix().iter().zip(b.matrix().iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn run_homogenization(spec: &IfsSpec, result: &RenormResult, law: &dyn CellLaw, cfg: &HomogenizationConfig) -> Result<HomogenizationReport> {
    if cfg.levels.is_empty() {
        return Err(Error::InvalidArgument("no levels given".into()));
    }
    if cfg.trials == 0 {
        return Err(Error::InsufficientTrials { needed: 1, got: 0 });
    }
    let (c_hat, c_bootstrap_se) = match cfg.c_source {
        CSource::Fixed(c) => (c, None),
        CSource::Estimate { n_ref, trials } => {
            let est = estimate_c(spec, result, law, n_ref, trials, cfg.master_seed)?;
            (est.c_hat, Some(est.bootstrap_se))
        }
    };
    if !(c_hat.is_finite() && c_hat > 0.0) {
        return Err(Error::InvalidArgument(format!("scale constant must be > 0, got {c_hat}")));
    }
    let renormalizer = CellRenormalizer::new(spec)?;
    let upper_bound = upper_bound_constant(result, c_hat, law.lower_bound());
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for &n in &cfg.levels {
        let k = n.min(cfg.compare_level);
        let graph = build_graph(spec, n)?;
        let gk = build_graph(spec, k)?;
        let reference = deterministic_resistance(spec, k, result)?;
        let vk: Vec<usize> = (0..gk.num_vertices()).collect();
        let wide_is_full = n <= cfg.full_sup_max_level;
        let full_reference = if wide_is_full { Some(deterministic_resistance(spec, n, result)?) } else { None };
        let det_field = deterministic_field(&graph, result)?;
        let level_rows: Vec<(HomogenizationRow, f64)> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let id = SeededStream::level_trial(n, trial);
                let field = sample_environment(&graph, law, &SeededStream::new(cfg.master_seed, id, StreamPurpose::Environment))?;
                let w: Vec<f64> = traced_weights(&renormalizer, &field, n, k, result.rho)?.iter().map(|w| w * c_hat).collect();
                let rk = pairwise_resistance(&ConductanceField::on_graph(&gk, w, FieldOrigin::Random)?, &vk)?;
                let d = sup_diff(&rk, &reference);
                let max_ratio = (0..vk.len())
                    .flat_map(|a| (a + 1..vk.len()).map(move |b| (a, b)))
                    .map(|(a, b)| rk.matrix()[(a, b)] / reference.matrix()[(a, b)])
                    .fold(0.0, f64::max);
                let d_wide = match &full_reference {
                    Some(full) => sup_diff(&random_resistance(&graph, result, &field, c_hat, None)?, full),
                    None => {
                        let mut rng = SeededStream::new(cfg.master_seed, id, StreamPurpose::Other(4)).rng();
                        let m = cfg.sample_vertices.min(graph.num_vertices());
                        let mut picks = sample(&mut rng, graph.num_vertices(), m).into_vec();
                        picks.sort_unstable();
                        let r = random_resistance(&graph, result, &field, c_hat, Some(&picks))?;
                        sup_diff(&r, &pairwise_resistance(&det_field, &picks)?)
                    }
                };
                let r01 = rk.matrix()[(0, 1)];
                Ok((HomogenizationRow { level: n, trial, d, d_wide, r01 }, max_ratio))
            })
            .collect::<Result<_>>()?;
        let ds: Vec<f64> = level_rows.iter().map(|r| r.0.d).collect();
        let wides: Vec<f64> = level_rows.iter().map(|r| r.0.d_wide).collect();
        let r01: Vec<f64> = level_rows.iter().map(|r| r.0.r01).collect();
        summaries.push(LevelSummary {
            level: n,
            compare_level: k,
            median_d: median(&ds),
            upper_quartile_d: quantile(&ds, 0.75),
            median_d_wide: median(&wides),
            wide_is_full,
            r01_variance: if r01.len() > 1 { variance(&r01) } else { 0.0 },
            max_ratio: level_rows.iter().map(|r| r.1).fold(0.0, f64::max),
        });
        rows.extend(level_rows.into_iter().map(|r| r.0));
    }
    Ok(HomogenizationReport {
        levels: cfg.levels.clone(),
        trials: cfg.trials,
        master_seed: cfg.master_seed,
        c_hat,
        c_bootstrap_se,
        upper_bound,
        summaries,
        rows,
    })
}
