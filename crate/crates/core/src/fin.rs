//! Finite-level stand-in for the trap-measure (FIN) time change.
//!
//! A sampled trap measure is pushed onto the vertices of `V_n`, and the walk
//! of a deterministic base field is slowed down by it: the holding mean at
//! `x` becomes `θ(x)/ν(x)`, so occupation time plays the role of local time.
//! [`fin_stabilization_check`] compares rescaled crossing-time laws across
//! levels and against the constant speed walk in a heavy-tailed environment.

use rayon::prelude::*;

use crate::environment::{sample_environment, sample_trap_measure, CellLaw, ConductanceLaw, SeededStream, StreamPurpose, TrapAtom, TrapMeasure};
use crate::error::{Error, Result};
use crate::ifs::{apply_origin, build_graph, dist, FractalGraph, IfsSpec};
use crate::network::{ConductanceField, FieldOrigin};
use crate::renorm::{find_fixed_point, RenormResult, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::stats::{ks_two_sample, median};
use crate::walk::{crossing_endpoints, predicted_log_slope, run_walk, StopRule, WalkConfig, WalkMode, WalkResult, WalkRng};

/// Minimum trials per level for a KS comparison to mean anything.
pub const MIN_FIN_TRIALS: usize = 100;

/// Vertex of the atom's level-`n` cell nearest to the atom (lowest index on ties).
pub(crate) fn assign_atom(spec: &IfsSpec, graph: &FractalGraph, atom: &TrapAtom) -> Result<usize> {
    let n = graph.level();
    if atom.word.level() < n {
        return Err(Error::InvalidArgument(format!(
            "atom word {} is shorter than the graph level {n}",
            atom.word
        )));
    }
    let cell = atom.word.prefix(n).rank(graph.num_maps());
    let at = apply_origin(spec, &atom.word);
    let mut best = (f64::INFINITY, usize::MAX);
    for &v in graph.cell_vertices(cell) {
        let d = dist(graph.coord(v), &at);
        if d < best.0 || (d == best.0 && v < best.1) {
            best = (d, v);
        }
    }
    Ok(best.1)
}

/// Vertex masses `θ` on `V_n` from a trap measure.
pub fn project_traps(spec: &IfsSpec, measure: &TrapMeasure, graph: &FractalGraph) -> Result<Vec<f64>> {
    let mut theta = vec![0.0; graph.num_vertices()];
    for atom in &measure.atoms {
        theta[assign_atom(spec, graph, atom)?] += atom.mass;
    }
    Ok(theta)
}

/// Conductance `q_{j,k}` on every edge with boundary labels `(j, k)`, without the
/// level factor `ρⁿ`.
pub fn base_field(graph: &FractalGraph, result: &RenormResult) -> Result<ConductanceField> {
    let q = &result.q_star.conductance;
    let weights = (0..graph.num_edges())
        .map(|e| {
            let (j, k) = graph.edge_label(e);
            q[(j, k)]
        })
        .collect();
    ConductanceField::on_graph(graph, weights, FieldOrigin::Deterministic)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeChangedWalkSetup {
    pub level: usize,
    pub base: ConductanceField,
    /// Vertex masses; zero-mass vertices are left instantly.
    pub theta: Vec<f64>,
}

impl TimeChangedWalkSetup {
    pub fn new(level: usize, base: ConductanceField, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != base.num_vertices() {
            return Err(Error::DimensionMismatch { expected: base.num_vertices(), got: theta.len() });
        }
        if theta.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidArgument("vertex masses must be finite and nonnegative".into()));
        }
        if theta.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidArgument("total vertex mass must be positive".into()));
        }
        Ok(Self { level, base, theta })
    }
}

/// The base walk run with holding mean `θ(x)/ν(x)`. A result with
/// `zero_time` set crossed through massless vertices only.
pub fn simulate_time_changed(setup: &TimeChangedWalkSetup, cfg: &WalkConfig, rng: &mut WalkRng) -> Result<WalkResult> {
    if cfg.mode != WalkMode::TimeChanged {
        return Err(Error::InvalidArgument(format!("walk config has mode {}, expected time-changed", cfg.mode)));
    }
    run_walk(&setup.base, Some(&setup.theta), cfg, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinConfig {
    pub levels: Vec<usize>,
    pub trials: usize,
    /// Tail index of the trap measure.
    pub alpha: f64,
    /// Atoms below this size are dropped.
    pub cutoff: f64,
    /// Word length for atom locations; at least the top level.
    pub trap_depth: usize,
    /// Environment law of the constant speed walk family.
    pub law: ConductanceLaw,
    pub master_seed: u64,
}

impl FinConfig {
    /// Pareto(`α`) conductances with lower bound 1 and atoms located three
    /// levels below the top graph.
    pub fn new(levels: Vec<usize>, trials: usize, alpha: f64, cutoff: f64, master_seed: u64) -> Self {
        let trap_depth = levels.iter().copied().max().unwrap_or(0) + 3;
        Self {
            levels,
            trials,
            alpha,
            cutoff,
            trap_depth,
            law: ConductanceLaw::Pareto { alpha, lower_bound: 1.0 },
            master_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinReport {
    pub levels: Vec<usize>,
    pub trials: usize,
    /// Per level: constant speed crossing times divided by `exp(n·csrw_log_scale)`.
    pub csrw: Vec<Vec<f64>>,
    /// Per level: time-changed crossing times divided by `ρⁿ`.
    pub time_changed: Vec<Vec<f64>>,
    pub csrw_log_scale: f64,
    pub rho: f64,
    /// KS distances between consecutive levels, `ks[i]` comparing `levels[i]`
    /// and `levels[i + 1]`.
    pub ks_csrw: Vec<f64>,
    pub ks_time_changed: Vec<f64>,
    /// KS distance between the two families at the top level, raw and after
    /// dividing each sample by its median.
    pub cross_ks: f64,
    pub cross_ks_normalized: f64,
    /// Time-changed runs that saw no mass at all.
    pub zero_time: usize,
    pub censored: usize,
    /// `2·|E₀|^{1/α}`, the normalisation turning `N^{-n/α} ν_n` into a measure
    /// with tail `v^{-α}` when `ω` has unit Pareto tail constant.
    pub c0: f64,
}

fn weakly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0])
}

impl FinReport {
    pub fn csrw_decreasing(&self) -> bool {
        weakly_decreasing(&self.ks_csrw)
    }

    pub fn time_changed_decreasing(&self) -> bool {
        weakly_decreasing(&self.ks_time_changed)
    }
}

fn consecutive_ks(samples: &[Vec<f64>]) -> Vec<f64> {
    samples.windows(2).map(|w| ks_two_sample(&w[0], &w[1])).collect()
}

fn normalized(xs: &[f64]) -> Vec<f64> {
    let m = median(xs);
    xs.iter().map(|x| x / m).collect()
}

/// Annealed crossing-time laws from `0` to `V₀ \ {0}` for the constant speed
/// walk in a random environment and for the base walk time-changed by an
/// independently sampled trap measure, both rescaled per level.
pub fn fin_stabilization_check(spec: &IfsSpec, cfg: &FinConfig) -> Result<FinReport> {
    if cfg.levels.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 levels, got {}", cfg.levels.len())));
    }
    if cfg.trials < MIN_FIN_TRIALS {
        return Err(Error::InsufficientTrials { needed: MIN_FIN_TRIALS, got: cfg.trials });
    }
    cfg.law.validate()?;
    let top = cfg.levels.iter().copied().max().unwrap_or(0);
    if cfg.trap_depth < top {
        return Err(Error::InvalidArgument(format!("trap depth {} is below the top level {top}", cfg.trap_depth)));
    }
    let renorm = find_fixed_point(spec, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let csrw_log_scale = predicted_log_slope(renorm.rho, spec.num_maps(), WalkMode::Csrw, cfg.law.tail_index());
    let seed = cfg.master_seed;

    let mut csrw = Vec::new();
    let mut time_changed = Vec::new();
    let mut zero_time = 0;
    let mut censored = 0;
    for &level in &cfg.levels {
        let graph = build_graph(spec, level)?;
        let (start, targets) = crossing_endpoints(&graph);
        let base = base_field(&graph, &renorm)?;
        let csrw_scale = (level as f64 * csrw_log_scale).exp();
        let tc_scale = renorm.rho.powi(level as i32);
        let runs: Vec<(WalkResult, WalkResult)> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let id = SeededStream::level_trial(level, trial);
                let env = sample_environment(&graph, &cfg.law, &SeededStream::new(seed, id, StreamPurpose::Environment))?;
                let walk = WalkConfig::new(WalkMode::Csrw, start, StopRule::hit(targets.clone()));
                let c = run_walk(&env, None, &walk, &mut WalkRng::for_trial(seed, id))?;

                let traps = sample_trap_measure(spec, cfg.alpha, cfg.cutoff, cfg.trap_depth, &SeededStream::new(seed, id, StreamPurpose::Traps))?;
                let theta = project_traps(spec, &traps, &graph)?;
                let walk = WalkConfig { mode: WalkMode::TimeChanged, ..walk };
                let mut rng = WalkRng::new(
                    SeededStream::new(seed, id, StreamPurpose::Other(1)).rng(),
                    SeededStream::new(seed, id, StreamPurpose::Other(2)).rng(),
                );
                // An empty trap sample is a legitimate draw: the crossing takes no time.
                let t = if theta.iter().any(|&m| m > 0.0) {
                    simulate_time_changed(&TimeChangedWalkSetup::new(level, base.clone(), theta)?, &walk, &mut rng)?
                } else {
                    run_walk(&base, Some(&theta), &walk, &mut rng)?
                };
                Ok((c, t))
            })
            .collect::<Result<_>>()?;
        censored += runs.iter().filter(|(c, t)| c.censored() || t.censored()).count();
        zero_time += runs.iter().filter(|(_, t)| t.elapsed_time == 0.0).count();
        let time = |r: &WalkResult| if r.censored() { f64::INFINITY } else { r.elapsed_time };
        csrw.push(runs.iter().map(|(c, _)| time(c) / csrw_scale).collect::<Vec<_>>());
        time_changed.push(runs.iter().map(|(_, t)| time(t) / tc_scale).collect::<Vec<_>>());
    }

    let top_c = csrw.last().expect("levels checked");
    let top_t = time_changed.last().expect("levels checked");
    let edges_per_cell = build_graph(spec, 0)?.num_edges() as f64;
    Ok(FinReport {
        levels: cfg.levels.clone(),
        trials: cfg.trials,
        ks_csrw: consecutive_ks(&csrw),
        ks_time_changed: consecutive_ks(&time_changed),
        cross_ks: ks_two_sample(top_c, top_t),
        cross_ks_normalized: ks_two_sample(&normalized(top_c), &normalized(top_t)),
        csrw,
        time_changed,
        csrw_log_scale,
        rho: renorm.rho,
        zero_time,
        censored,
        c0: 2.0 * edges_per_cell.powf(1.0 / cfg.alpha),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::ConductanceLaw;
    use crate::ifs::CellWord;
    use crate::walk::{crossing_oracle, simulate_csrw, Record};
    use rand::Rng;

    #[test]
    fn atom_on_a_vertex_lands_there() {
        let spec = IfsSpec::sierpinski_gasket();
        let g = build_graph(&spec, 2).unwrap();
        // ψ_{1,2,1,1}(0) = ψ_{1,2}(0), a level-2 vertex.
        let word = CellWord::from_letters(vec![0, 1, 0, 0]);
        let m = TrapMeasure { atoms: vec![TrapAtom { mass: 0.7, word: word.clone() }], cutoff: 0.1, alpha: 0.5 };
        let theta = project_traps(&spec, &m, &g).unwrap();
        let v = g.vertex_index(&apply_origin(&spec, &word)).unwrap();
        assert_eq!(theta[v], 0.7);
        assert_eq!(theta.iter().filter(|&&t| t > 0.0).count(), 1);
        let short = TrapMeasure { atoms: vec![TrapAtom { mass: 1.0, word: CellWord::from_letters(vec![0]) }], cutoff: 0.1, alpha: 0.5 };
        assert!(project_traps(&spec, &short, &g).is_err());
    }

    #[test]
    fn projection_conserves_mass() {
        for spec in [IfsSpec::sierpinski_gasket(), IfsSpec::vicsek()] {
            let g = build_graph(&spec, 3).unwrap();
            for t in 0..20 {
                let m = sample_trap_measure(&spec, 0.5, 0.001, 6, &SeededStream::new(4, t, StreamPurpose::Traps)).unwrap();
                let theta = project_traps(&spec, &m, &g).unwrap();
                let total = m.total_mass();
                assert!((theta.iter().sum::<f64>() - total).abs() <= 1e-12 * total.max(1.0));
            }
        }
    }

    #[test]
    fn projection_refines_consistently() {
        // Projecting to level n + 1 and then to the nearest vertex of the level-n
        // cell agrees with the direct projection unless that second step ties.
        let spec = IfsSpec::sierpinski_gasket();
        let (gn, gm) = (build_graph(&spec, 2).unwrap(), build_graph(&spec, 3).unwrap());
        let m = sample_trap_measure(&spec, 0.5, 1e-4, 7, &SeededStream::new(9, 0, StreamPurpose::Traps)).unwrap();
        assert!(m.atoms.len() > 50);
        for atom in &m.atoms {
            let direct = assign_atom(&spec, &gn, atom).unwrap();
            let fine = assign_atom(&spec, &gm, atom).unwrap();
            let cell = atom.word.prefix(2).rank(3);
            let dists: Vec<(f64, usize)> =
                gn.cell_vertices(cell).iter().map(|&v| (dist(gn.coord(v), gm.coord(fine)), v)).collect();
            let best = dists.iter().map(|d| d.0).fold(f64::INFINITY, f64::min);
            let tied: Vec<usize> = dists.iter().filter(|d| d.0 - best < 1e-12).map(|d| d.1).collect();
            assert!(tied.contains(&direct), "atom {} -> {direct}, refined via {fine}", atom.word);
        }
    }

    #[test]
    fn mass_equal_to_nu_reproduces_the_csrw() {
        let spec = IfsSpec::sierpinski_gasket();
        let g = build_graph(&spec, 3).unwrap();
        let (s, t) = crossing_endpoints(&g);
        let env = sample_environment(&g, &ConductanceLaw::pareto(0.5, 1.0).unwrap(), &SeededStream::new(6, 0, StreamPurpose::Environment)).unwrap();
        let setup = TimeChangedWalkSetup::new(3, env.clone(), env.vertex_measure()).unwrap();
        let record = Record::PathSkeleton { stride: 1 };
        for trial in 0..50 {
            let c = simulate_csrw(&env, &WalkConfig::new(WalkMode::Csrw, s, StopRule::hit(t.clone())).with_record(record), &mut WalkRng::for_trial(3, trial)).unwrap();
            let tc = simulate_time_changed(&setup, &WalkConfig::new(WalkMode::TimeChanged, s, StopRule::hit(t.clone())).with_record(record), &mut WalkRng::for_trial(3, trial)).unwrap();
            assert_eq!(c, tc);
        }
    }

    #[test]
    fn mass_at_start_of_single_edge() {
        let f = ConductanceField::new(2, vec![(0, 1)], vec![4.0], FieldOrigin::Deterministic).unwrap();
        let setup = TimeChangedWalkSetup::new(0, f, vec![2.0, 0.0]).unwrap();
        let cfg = WalkConfig::new(WalkMode::TimeChanged, 0, StopRule::hit(vec![1]));
        let xs: Vec<f64> = (0..50_000).map(|t| simulate_time_changed(&setup, &cfg, &mut WalkRng::for_trial(2, t)).unwrap().elapsed_time).collect();
        // Exponential with mean θ(a)/w = 0.5.
        let m = crate::stats::mean(&xs);
        assert!((m - 0.5).abs() < 3.0 * 0.5 / (xs.len() as f64).sqrt(), "{m}");
    }

    #[test]
    fn massless_path_takes_no_time() {
        let f = ConductanceField::new(3, vec![(0, 1), (1, 2)], vec![1.0, 1.0], FieldOrigin::Deterministic).unwrap();
        let setup = TimeChangedWalkSetup::new(0, f, vec![0.0, 0.0, 1.0]).unwrap();
        let r = simulate_time_changed(&setup, &WalkConfig::new(WalkMode::TimeChanged, 0, StopRule::hit(vec![2])), &mut WalkRng::for_trial(0, 0)).unwrap();
        assert_eq!(r.elapsed_time, 0.0);
        assert!(r.zero_time && r.jumps >= 2);
        assert!(TimeChangedWalkSetup::new(0, setup.base.clone(), vec![0.0; 3]).is_err());
        assert!(TimeChangedWalkSetup::new(0, setup.base.clone(), vec![-1.0, 1.0, 1.0]).is_err());
        let csrw_cfg = WalkConfig::new(WalkMode::Csrw, 0, StopRule::hit(vec![2]));
        assert!(simulate_time_changed(&setup, &csrw_cfg, &mut WalkRng::for_trial(0, 0)).is_err());
    }

    #[test]
    fn crossing_time_is_linear_in_mass() {
        let mut rng = SeededStream::new(12, 0, StreamPurpose::Other(0)).rng();
        for _ in 0..50 {
            let n = rng.random_range(3..10usize);
            let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.random_range(0..v), v)).collect();
            edges.push((0, n - 1));
            let w: Vec<f64> = edges.iter().map(|_| rng.random_range(0.1f64..10.0)).collect();
            let f = ConductanceField::new(n, edges, w, FieldOrigin::Random).unwrap();
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0f64..2.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.0f64..2.0)).collect();
            let (s, c) = (rng.random_range(0.1f64..3.0), rng.random_range(0.1f64..3.0));
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| s * x + c * y).collect();
            let t = |th: &[f64]| crossing_oracle(&f, th, 0, &[n - 1]).unwrap();
            let want = s * t(&a) + c * t(&b);
            assert!((t(&mix) - want).abs() <= 1e-8 * want.abs().max(1e-300));
            let doubled: Vec<f64> = a.iter().map(|x| 2.0 * x).collect();
            assert!((t(&doubled) - 2.0 * t(&a)).abs() <= 1e-12 * t(&a).max(1e-300));
        }
    }

    #[test]
    fn gasket_vertex_mass_scaling_closed_form() {
        for n in 0..=7 {
            let g = build_graph(&IfsSpec::sierpinski_gasket(), n).unwrap();
            let got = g.num_vertices() as f64 * 3f64.powi(-(n as i32));
            let want = (3.0 + 3.0 * 3f64.powi(-(n as i32))) / 2.0;
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn stabilization_check_arguments() {
        let spec = IfsSpec::sierpinski_gasket();
        assert!(fin_stabilization_check(&spec, &FinConfig::new(vec![2], 200, 0.5, 0.01, 0)).is_err());
        assert!(matches!(
            fin_stabilization_check(&spec, &FinConfig::new(vec![1, 2, 3], 99, 0.5, 0.01, 0)),
            Err(Error::InsufficientTrials { .. })
        ));
        let bad_depth = FinConfig { trap_depth: 2, ..FinConfig::new(vec![1, 2, 3], 100, 0.5, 0.01, 0) };
        assert!(fin_stabilization_check(&spec, &bad_depth).is_err());
    }

    #[test]
    fn unit_weight_control_stabilizes() {
        let spec = IfsSpec::sierpinski_gasket();
        let cfg = FinConfig { law: ConductanceLaw::Constant(1.0), ..FinConfig::new(vec![1, 2, 3, 4], 400, 0.5, 0.01, 8) };
        let rep = fin_stabilization_check(&spec, &cfg).unwrap();
        assert!((rep.csrw_log_scale - 5f64.ln()).abs() < 1e-12);
        assert!(rep.ks_csrw.last().unwrap() < rep.ks_csrw.first().unwrap(), "{:?}", rep.ks_csrw);
        assert_eq!(rep.censored, 0);
        assert!((rep.c0 - 18.0).abs() < 1e-12);
    }
}
