//! Continuous-time random walks on weighted graphs: the variable speed walk
//! (jump rate `ω_xy`), the constant speed walk (unit-mean holding, same jump
//! chain) and walks time-changed by a vertex mass `θ` (mean holding
//! `θ(x)/ν(x)`). All three share one event loop driven by two streams: one
//! for the jump chain and one for the clocks, so coupled runs visit identical
//! vertex sequences.
//!
//! Heavy-tailed conductances make the walk bounce across a strong edge many
//! times. When both endpoints of an edge send most of their jump probability
//! to each other, the loop replaces the whole burst by one exact draw: the
//! number of round trips is geometric, the holding times add up to Gamma
//! variables, and the exit edge is drawn from the remaining neighbours.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use crate::environment::{open_unit, sample_environment, CellLaw, SeededStream, StreamPurpose};
use crate::error::{Error, Result};
use crate::ifs::{build_graph, FractalGraph, IfsSpec};
use crate::network::{ConductanceField, GroundedSolver};
use crate::renorm::{find_fixed_point, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::stats::{fit_line, mean, quantile};

/// Round-trip probability above which a strong edge is crossed in one burst.
const BURST_THRESHOLD: f64 = 0.5;

/// Default cap on loop iterations; runs hitting it are reported as censored.
pub const DEFAULT_MAX_STEPS: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WalkMode {
    Vsrw,
    Csrw,
    /// Holding mean `θ(x)/ν(x)`; the masses `θ` come from the walk setup.
    TimeChanged,
}

impl fmt::Display for WalkMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WalkMode::Vsrw => "vsrw",
            WalkMode::Csrw => "csrw",
            WalkMode::TimeChanged => "time-changed",
        })
    }
}

impl FromStr for WalkMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vsrw" => Ok(WalkMode::Vsrw),
            "csrw" => Ok(WalkMode::Csrw),
            "time-changed" | "time_changed" => Ok(WalkMode::TimeChanged),
            _ => Err(Error::InvalidArgument(format!("unknown walk mode '{s}' (vsrw, csrw)"))),
        }
    }
}

/// When to stop; the first condition met wins.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StopRule {
    pub hit_set: Option<Vec<usize>>,
    pub time_horizon: Option<f64>,
    pub jump_budget: Option<u64>,
}

impl StopRule {
    pub fn hit(targets: Vec<usize>) -> Self {
        Self { hit_set: Some(targets), ..Self::default() }
    }

    pub fn horizon(t: f64) -> Self {
        Self { time_horizon: Some(t), ..Self::default() }
    }

    pub fn budget(jumps: u64) -> Self {
        Self { jump_budget: Some(jumps), ..Self::default() }
    }

    pub fn with_horizon(mut self, t: f64) -> Self {
        self.time_horizon = Some(t);
        self
    }

    pub fn with_budget(mut self, jumps: u64) -> Self {
        self.jump_budget = Some(jumps);
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.hit_set.is_none() && self.time_horizon.is_none() && self.jump_budget.is_none() {
            return Err(Error::InvalidArgument("stop rule has no condition".into()));
        }
        if let Some(set) = &self.hit_set {
            if set.is_empty() {
                return Err(Error::InvalidArgument("hit set is empty".into()));
            }
            if let Some(&v) = set.iter().find(|&&v| v >= n) {
                return Err(Error::InvalidArgument(format!("target {v} out of range")));
            }
        }
        if let Some(t) = self.time_horizon {
            if !(t >= 0.0) {
                return Err(Error::InvalidArgument(format!("time horizon must be >= 0, got {t}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Record {
    HittingTimeOnly,
    /// One `(time, vertex)` entry every `stride` events; a burst counts as
    /// one event.
    PathSkeleton { stride: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkConfig {
    pub mode: WalkMode,
    pub start: usize,
    pub stop: StopRule,
    pub record: Record,
    /// Collapse strong-edge bursts. Only used when the walk stops on hitting
    /// alone, since a burst cannot be cut at a time or jump limit.
    pub accelerate: bool,
    pub max_steps: u64,
}

impl WalkConfig {
    pub fn new(mode: WalkMode, start: usize, stop: StopRule) -> Self {
        Self { mode, start, stop, record: Record::HittingTimeOnly, accelerate: true, max_steps: DEFAULT_MAX_STEPS }
    }

    pub fn with_record(mut self, record: Record) -> Self {
        self.record = record;
        self
    }

    pub fn without_acceleration(mut self) -> Self {
        self.accelerate = false;
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.start >= n {
            return Err(Error::InvalidArgument(format!("start vertex {} out of range", self.start)));
        }
        if let Record::PathSkeleton { stride: 0 } = self.record {
            return Err(Error::InvalidArgument("skeleton stride must be >= 1".into()));
        }
        self.stop.validate(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Hit,
    Horizon,
    Budget,
    /// The iteration cap was reached first; the time is a lower bound.
    StepCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkResult {
    pub elapsed_time: f64,
    pub jumps: u64,
    pub exit_vertex: Option<usize>,
    pub position: usize,
    pub skeleton: Option<Vec<(f64, usize)>>,
    pub stopped_by: StopReason,
    /// The walk moved but no time passed (every visited vertex had zero mass).
    pub zero_time: bool,
}

impl WalkResult {
    pub fn censored(&self) -> bool {
        self.stopped_by == StopReason::StepCap
    }
}

/// The two random streams of one walk.
#[derive(Debug, Clone)]
pub struct WalkRng {
    pub jumps: ChaCha8Rng,
    pub clock: ChaCha8Rng,
}

impl WalkRng {
    pub fn new(jumps: ChaCha8Rng, clock: ChaCha8Rng) -> Self {
        Self { jumps, clock }
    }

    pub fn for_trial(master_seed: u64, trial: u64) -> Self {
        Self {
            jumps: SeededStream::new(master_seed, trial, StreamPurpose::Jumps).rng(),
            clock: SeededStream::new(master_seed, trial, StreamPurpose::Clock).rng(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Burst {
    partner: usize,
    /// `ln` of the round-trip probability.
    log_round_trip: f64,
    /// Probability that the burst ends by leaving from the near end.
    exit_near: f64,
    rest_near: f64,
    rest_far: f64,
}

/// The jump chain of a field in adjacency form (parallel edges merged).
pub(crate) struct JumpChain {
    offsets: Vec<usize>,
    nbrs: Vec<usize>,
    weights: Vec<f64>,
    nu: Vec<f64>,
    bursts: Vec<Option<Burst>>,
}

impl JumpChain {
    pub(crate) fn new(field: &ConductanceField) -> Self {
        let n = field.num_vertices();
        let mut lists: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (&(a, b), &w) in field.edges().iter().zip(field.weights()) {
            lists[a].push((b, w));
            lists[b].push((a, w));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut nbrs = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for list in &mut lists {
            list.sort_by_key(|&(v, _)| v);
            let mut k = 0;
            while k < list.len() {
                let v = list[k].0;
                let mut w = 0.0;
                while k < list.len() && list[k].0 == v {
                    w += list[k].1;
                    k += 1;
                }
                nbrs.push(v);
                weights.push(w);
            }
            offsets.push(nbrs.len());
        }
        let nu = field.vertex_measure();
        let mut chain = JumpChain { offsets, nbrs, weights, nu, bursts: vec![None; n] };
        for x in 0..n {
            chain.bursts[x] = chain.burst_at(x);
        }
        chain
    }

    fn neighbours(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[x]..self.offsets[x + 1];
        self.nbrs[r.clone()].iter().copied().zip(self.weights[r].iter().copied())
    }

    fn burst_at(&self, x: usize) -> Option<Burst> {
        let (y, w) = self.neighbours(x).fold((usize::MAX, 0.0), |best, (v, w)| if w > best.1 { (v, w) } else { best });
        if y == usize::MAX {
            return None;
        }
        let a: f64 = self.neighbours(x).filter(|&(v, _)| v != y).map(|(_, w)| w).sum();
        let b: f64 = self.neighbours(y).filter(|&(v, _)| v != x).map(|(_, w)| w).sum();
        let (nx, ny) = (w + a, w + b);
        // 1 − p·r with p = w/ν(x), r = w/ν(y), written without cancellation.
        let fail = (w * (a + b) + a * b) / (nx * ny);
        if 1.0 - fail < BURST_THRESHOLD || fail <= 0.0 {
            return None;
        }
        Some(Burst {
            partner: y,
            log_round_trip: (-fail).ln_1p(),
            exit_near: a * ny / (w * (a + b) + a * b),
            rest_near: a,
            rest_far: b,
        })
    }

    /// Neighbour of `x` at cumulative weight `u·total`, skipping `skip`.
    fn pick(&self, x: usize, skip: usize, total: f64, u: f64) -> usize {
        let target = u * total;
        let mut acc = 0.0;
        let mut last = usize::MAX;
        for (v, w) in self.neighbours(x) {
            if v == skip {
                continue;
            }
            acc += w;
            last = v;
            if target < acc {
                return v;
            }
        }
        last
    }
}

fn exp_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -open_unit(rng).ln()
}

/// Sum of `k` independent unit exponentials.
fn gamma_unit<R: Rng + ?Sized>(k: u64, rng: &mut R) -> f64 {
    match k {
        0 => 0.0,
        1 => exp_unit(rng),
        _ => Gamma::new(k as f64, 1.0).expect("positive shape").sample(rng),
    }
}

/// Mean holding time per unit exponential at each vertex.
fn holding_scales(mode: WalkMode, nu: &[f64], theta: Option<&[f64]>) -> Vec<f64> {
    match mode {
        WalkMode::Vsrw => nu.iter().map(|v| 1.0 / v).collect(),
        WalkMode::Csrw => vec![1.0; nu.len()],
        WalkMode::TimeChanged => {
            let theta = theta.expect("time-changed walk needs masses");
            theta.iter().zip(nu).map(|(t, v)| t / v).collect()
        }
    }
}

pub(crate) fn run_walk(
    field: &ConductanceField,
    theta: Option<&[f64]>,
    cfg: &WalkConfig,
    rng: &mut WalkRng,
) -> Result<WalkResult> {
    let n = field.num_vertices();
    cfg.validate(n)?;
    let chain = JumpChain::new(field);
    let scale = holding_scales(cfg.mode, &chain.nu, theta);
    let mut is_target = vec![false; n];
    if let Some(set) = &cfg.stop.hit_set {
        for &t in set {
            is_target[t] = true;
        }
        if cfg.stop.time_horizon.is_none() && cfg.stop.jump_budget.is_none() {
            let reach = field.reachable_from(&[cfg.start]);
            if !set.iter().any(|&t| reach[t]) {
                return Err(Error::Unreachable(format!("no target reachable from vertex {}", cfg.start)));
            }
        }
    }
    let accelerate = cfg.accelerate && cfg.stop.time_horizon.is_none() && cfg.stop.jump_budget.is_none();
    let stride = match cfg.record {
        Record::HittingTimeOnly => None,
        Record::PathSkeleton { stride } => Some(stride as u64),
    };

    let mut x = cfg.start;
    let mut elapsed = 0.0;
    let mut jumps: u64 = 0;
    let mut steps: u64 = 0;
    let mut skeleton = stride.map(|_| vec![(0.0, x)]);
    let stopped_by = loop {
        if is_target[x] {
            break StopReason::Hit;
        }
        if cfg.stop.jump_budget.is_some_and(|b| jumps >= b) {
            break StopReason::Budget;
        }
        if steps >= cfg.max_steps {
            break StopReason::StepCap;
        }
        steps += 1;
        match chain.bursts[x].filter(|b| accelerate && !is_target[b.partner]) {
            Some(b) => {
                let y = b.partner;
                let round_trips = (open_unit(&mut rng.jumps).ln() / b.log_round_trip).floor();
                let m = if round_trips < u64::MAX as f64 { round_trips as u64 } else { u64::MAX / 4 };
                let near = rng.jumps.random::<f64>() < b.exit_near;
                let (k_near, k_far, exit) = if near {
                    (m + 1, m, chain.pick(x, y, b.rest_near, rng.jumps.random()))
                } else {
                    (m + 1, m + 1, chain.pick(y, x, b.rest_far, rng.jumps.random()))
                };
                elapsed += scale[x] * gamma_unit(k_near, &mut rng.clock) + scale[y] * gamma_unit(k_far, &mut rng.clock);
                jumps = jumps.saturating_add(k_near.saturating_add(k_far));
                x = exit;
            }
            None => {
                let hold = scale[x] * exp_unit(&mut rng.clock);
                if let Some(t) = cfg.stop.time_horizon {
                    if elapsed + hold > t {
                        elapsed = t;
                        break StopReason::Horizon;
                    }
                }
                elapsed += hold;
                x = chain.pick(x, usize::MAX, chain.nu[x], rng.jumps.random());
                jumps += 1;
            }
        }
        if let (Some(s), Some(sk)) = (stride, skeleton.as_mut()) {
            if steps % s == 0 {
                sk.push((elapsed, x));
            }
        }
    };
    if let Some(sk) = skeleton.as_mut() {
        if sk.last() != Some(&(elapsed, x)) {
            sk.push((elapsed, x));
        }
    }
    Ok(WalkResult {
        elapsed_time: elapsed,
        jumps,
        exit_vertex: (stopped_by == StopReason::Hit).then_some(x),
        position: x,
        skeleton,
        stopped_by,
        zero_time: elapsed == 0.0 && jumps > 0,
    })
}

fn require_mode(cfg: &WalkConfig, mode: WalkMode) -> Result<()> {
    if cfg.mode != mode {
        return Err(Error::InvalidArgument(format!("walk config has mode {}, expected {mode}", cfg.mode)));
    }
    Ok(())
}

/// Jump rate `ω_xy` from `x` to `y`: holding Exponential(`ν(x)`).
pub fn simulate_vsrw(field: &ConductanceField, cfg: &WalkConfig, rng: &mut WalkRng) -> Result<WalkResult> {
    require_mode(cfg, WalkMode::Vsrw)?;
    run_walk(field, None, cfg, rng)
}

/// Same jump chain as the VSRW with unit-mean holding times.
pub fn simulate_csrw(field: &ConductanceField, cfg: &WalkConfig, rng: &mut WalkRng) -> Result<WalkResult> {
    require_mode(cfg, WalkMode::Csrw)?;
    run_walk(field, None, cfg, rng)
}

/// The speed measure `θ` for which the walk's mean holding is `θ(x)/ν(x)`:
/// all ones for the VSRW, `ν` for the CSRW.
pub fn speed_measure(field: &ConductanceField, mode: WalkMode) -> Result<Vec<f64>> {
    match mode {
        WalkMode::Vsrw => Ok(vec![1.0; field.num_vertices()]),
        WalkMode::Csrw => Ok(field.vertex_measure()),
        WalkMode::TimeChanged => Err(Error::InvalidArgument("a time-changed walk carries its own masses".into())),
    }
}

/// Exact expected time to reach `targets` from `start` for the walk with
/// speed measure `θ`: the solution of `L h = θ` off the targets, `h = 0` on them.
pub fn crossing_oracle(field: &ConductanceField, theta: &[f64], start: usize, targets: &[usize]) -> Result<f64> {
    let n = field.num_vertices();
    if theta.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: theta.len() });
    }
    if theta.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidArgument("speed measure must be finite and nonnegative".into()));
    }
    if targets.is_empty() {
        return Err(Error::InvalidArgument("target set is empty".into()));
    }
    if start >= n {
        return Err(Error::InvalidArgument(format!("start vertex {start} out of range")));
    }
    if targets.contains(&start) {
        return Ok(0.0);
    }
    let reach = field.reachable_from(&[start]);
    if !targets.iter().any(|&t| t < n && reach[t]) {
        return Err(Error::Unreachable(format!("no target reachable from vertex {start}")));
    }
    let solver = GroundedSolver::new(field, targets)?;
    Ok(solver.solve_vertex_rhs(theta)[start])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Statistic {
    Mean,
    Median,
    Quantile(f64),
}

impl Statistic {
    pub fn evaluate(&self, data: &[f64]) -> f64 {
        match self {
            Statistic::Mean => mean(data),
            Statistic::Median => quantile(data, 0.5),
            Statistic::Quantile(p) => quantile(data, *p),
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statistic::Mean => f.write_str("mean"),
            Statistic::Median => f.write_str("median"),
            Statistic::Quantile(p) => write!(f, "q:{p}"),
        }
    }
}

impl FromStr for Statistic {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Statistic::Mean),
            "median" => Ok(Statistic::Median),
            _ => {
                let p = s
                    .strip_prefix("q:")
                    .and_then(|p| p.parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown statistic '{s}' (mean, median, q:P)")))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidArgument(format!("quantile level {p} outside [0, 1]")));
                }
                Ok(Statistic::Quantile(p))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingConfig {
    pub levels: Vec<usize>,
    pub trials: usize,
    pub mode: WalkMode,
    pub statistic: Statistic,
    pub master_seed: u64,
    pub max_steps: u64,
    /// Use exact expected crossing times instead of sampling (deterministic
    /// laws only; the statistic is then the mean).
    pub oracle: bool,
}

impl ScalingConfig {
    pub fn new(levels: Vec<usize>, trials: usize, mode: WalkMode, statistic: Statistic, master_seed: u64) -> Self {
        Self { levels, trials, mode, statistic, master_seed, max_steps: DEFAULT_MAX_STEPS, oracle: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingSample {
    pub level: usize,
    pub trial: usize,
    pub time: f64,
    pub jumps: u64,
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub levels: Vec<usize>,
    pub mode: WalkMode,
    pub statistic: Statistic,
    /// Crossing-time statistic per level, censored runs counted as `+∞`.
    pub values: Vec<f64>,
    pub fitted_log_slope: f64,
    pub intercept: f64,
    pub predicted_log_slope: f64,
    /// `exp(intercept)` of the free fit.
    pub constant_estimate: f64,
    /// Geometric mean of `value_n / exp(n·predicted)`.
    pub constant_at_predicted: f64,
    pub rho: f64,
    pub alpha: Option<f64>,
    pub samples: Vec<CrossingSample>,
    pub censored: usize,
    pub monotone: bool,
}

impl ScalingReport {
    pub fn relative_slope_error(&self) -> f64 {
        (self.fitted_log_slope - self.predicted_log_slope).abs() / self.predicted_log_slope.abs()
    }
}

/// Start `0 ∈ V₀` and targets `V₀ \ {0}` of a level graph.
pub fn crossing_endpoints(graph: &FractalGraph) -> (usize, Vec<usize>) {
    let b = graph.boundary();
    (b[0], b[1..].to_vec())
}

/// Predicted growth rate per level of the crossing time: `ρN` for the VSRW
/// and for finite-mean laws, `ρN^{1/α}` for the CSRW under an `α`-stable tail.
pub fn predicted_log_slope(rho: f64, n_maps: usize, mode: WalkMode, alpha: Option<f64>) -> f64 {
    let n = n_maps as f64;
    match (mode, alpha) {
        (WalkMode::Csrw, Some(a)) => rho.ln() + n.ln() / a,
        _ => rho.ln() + n.ln(),
    }
}

/// Annealed crossing times from `0` to `V₀ \ {0}` across levels, with a fresh
/// environment per trial, and a least-squares fit of `log(statistic)` on `n`.
pub fn scaling_experiment(spec: &IfsSpec, law: &dyn CellLaw, cfg: &ScalingConfig) -> Result<ScalingReport> {
    if cfg.levels.len() < 3 {
        return Err(Error::DegenerateFit(format!("need at least 3 levels, got {}", cfg.levels.len())));
    }
    if cfg.mode == WalkMode::TimeChanged {
        return Err(Error::InvalidArgument("scaling experiments run the VSRW or the CSRW".into()));
    }
    if cfg.oracle && !law.is_deterministic() {
        return Err(Error::InvalidArgument("oracle mode needs a deterministic law".into()));
    }
    if !cfg.oracle && cfg.trials == 0 {
        return Err(Error::InsufficientTrials { needed: 1, got: 0 });
    }
    let renorm = find_fixed_point(spec, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let alpha = law.tail_index();
    let predicted = predicted_log_slope(renorm.rho, spec.num_maps(), cfg.mode, alpha);

    let mut values = Vec::with_capacity(cfg.levels.len());
    let mut samples = Vec::new();
    for &level in &cfg.levels {
        let graph = build_graph(spec, level)?;
        let (start, targets) = crossing_endpoints(&graph);
        if cfg.oracle {
            let stream = SeededStream::new(cfg.master_seed, SeededStream::level_trial(level, 0), StreamPurpose::Environment);
            let field = sample_environment(&graph, law, &stream)?;
            values.push(crossing_oracle(&field, &speed_measure(&field, cfg.mode)?, start, &targets)?);
            continue;
        }
        let walk = WalkConfig { max_steps: cfg.max_steps, ..WalkConfig::new(cfg.mode, start, StopRule::hit(targets)) };
        let level_samples: Vec<CrossingSample> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let id = SeededStream::level_trial(level, trial);
                let field = sample_environment(&graph, law, &SeededStream::new(cfg.master_seed, id, StreamPurpose::Environment))?;
                let res = run_walk(&field, None, &walk, &mut WalkRng::for_trial(cfg.master_seed, id))?;
                Ok(CrossingSample { level, trial, time: res.elapsed_time, jumps: res.jumps, censored: res.censored() })
            })
            .collect::<Result<_>>()?;
        let times: Vec<f64> =
            level_samples.iter().map(|s| if s.censored { f64::INFINITY } else { s.time }).collect();
        values.push(cfg.statistic.evaluate(&times));
        samples.extend(level_samples);
    }

    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::DegenerateFit(format!("crossing-time statistic {v} cannot be fitted on a log scale")));
    }
    let xs: Vec<f64> = cfg.levels.iter().map(|&n| n as f64).collect();
    let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let fit = fit_line(&xs, &logs)?;
    let offset = xs.iter().zip(&logs).map(|(n, l)| l - n * predicted).sum::<f64>() / xs.len() as f64;
    let monotone = values.windows(2).all(|w| w[1] > w[0]);
    let statistic = if cfg.oracle { Statistic::Mean } else { cfg.statistic };
    Ok(ScalingReport {
        levels: cfg.levels.clone(),
        mode: cfg.mode,
        statistic,
        values,
        fitted_log_slope: fit.slope,
        intercept: fit.intercept,
        predicted_log_slope: predicted,
        constant_estimate: fit.intercept.exp(),
        constant_at_predicted: offset.exp(),
        rho: renorm.rho,
        alpha,
        censored: samples.iter().filter(|s| s.censored).count(),
        samples,
        monotone,
    })
}
