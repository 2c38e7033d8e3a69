//! The five experiments. Each computes in parallel through the core crate and
//! then writes its CSV/SVG artifacts from a single thread.

use std::fs::File;
use std::path::Path;

use anyhow::{Context, Result};
use nestwalk_core::environment::{CellLaw, ConductanceLaw, SeededStream, StreamPurpose};
use nestwalk_core::fin::{fin_stabilization_check, FinConfig};
use nestwalk_core::homogenization::{q_pattern_law, run_homogenization, CSource, HomogenizationConfig};
use nestwalk_core::ifs::{build_graph, verify_nesting, verify_symmetry, IfsSpec};
use nestwalk_core::renorm::{find_fixed_point, multi_start, RenormResult, DEFAULT_MAX_ITER, DEFAULT_TOL};
use nestwalk_core::stats::ks_critical_value;
use nestwalk_core::walk::{scaling_experiment, ScalingConfig};

use crate::config::{Experiment, ExperimentConfig, LawKind};
use crate::svg::{emit_svg, PlotSpec, Series, Style};

/// What a finished run produced.
#[derive(Debug, Default)]
pub struct Outcome {
    /// Human-readable summary printed to stdout.
    pub summary: String,
    /// Files written, relative to the output directory.
    pub artifacts: Vec<String>,
    /// Checked properties that failed; nonempty means exit code 2.
    pub property_failures: Vec<String>,
}

impl Outcome {
    fn line(&mut self, s: impl AsRef<str>) {
        self.summary.push_str(s.as_ref());
        self.summary.push('\n');
    }

    fn fail(&mut self, s: impl Into<String>) {
        self.property_failures.push(s.into());
    }
}

/// Floats are written with Rust's shortest round-trip formatting.
fn f(x: f64) -> String {
    format!("{x:?}")
}

struct CsvOut<'a> {
    out: &'a Path,
    outcome: &'a mut Outcome,
}

impl CsvOut<'_> {
    fn write(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let path = self.out.join(name);
        let mut w = csv::Writer::from_writer(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.outcome.artifacts.push(name.to_string());
        Ok(())
    }

    fn svg(&mut self, name: &str, series: &[Series], plot: &PlotSpec) -> Result<()> {
        emit_svg(&self.out.join(name), series, plot)?;
        self.outcome.artifacts.push(name.to_string());
        Ok(())
    }
}

fn cell_law(cfg: &ExperimentConfig, spec: &IfsSpec, renorm: &RenormResult) -> Result<ConductanceLaw> {
    Ok(match cfg.law {
        LawKind::Pareto => ConductanceLaw::pareto(cfg.alpha, cfg.lower_bound)?,
        LawKind::Constant => ConductanceLaw::Constant(cfg.lower_bound),
        LawKind::QPattern => q_pattern_law(&build_graph(spec, 0)?, renorm),
    })
}

pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let spec = cfg.spec()?;
    let mut outcome = Outcome::default();
    match cfg.experiment {
        Experiment::Build => build(cfg, &spec, out, &mut outcome)?,
        Experiment::Renorm => renorm(cfg, &spec, out, &mut outcome)?,
        Experiment::Homogenize => homogenize(cfg, &spec, out, &mut outcome)?,
        Experiment::Walk => walk(cfg, &spec, out, &mut outcome)?,
        Experiment::Fin => fin(cfg, &spec, out, &mut outcome)?,
    }
    Ok(outcome)
}

fn build(cfg: &ExperimentConfig, spec: &IfsSpec, out: &Path, outcome: &mut Outcome) -> Result<()> {
    let level = *cfg.levels.iter().max().expect("levels validated nonempty");
    let graph = build_graph(spec, level)?;
    let nesting = verify_nesting(spec, level)?;
    let symmetry = verify_symmetry(spec, level)?;
    outcome.line(format!("fractal   {}", spec.name()));
    outcome.line(format!("level     {level}"));
    outcome.line(format!("vertices  {}", graph.num_vertices()));
    outcome.line(format!("edges     {}", graph.num_edges()));
    outcome.line(format!("cells     {}", graph.num_cells()));
    outcome.line(format!("nesting   {}", if nesting.passed() { "ok" } else if nesting.supported { "VIOLATED" } else { "unchecked" }));
    outcome.line(format!("symmetry  {}", if symmetry.passed() { "ok" } else { "VIOLATED" }));
    if nesting.supported && !nesting.passed() {
        outcome.fail(format!("nesting fails on {} cell pairs", nesting.violations.len()));
    }
    if !symmetry.passed() {
        outcome.fail(format!("symmetry fails for boundary pairs {:?}", symmetry.failing_pairs()));
    }

    let mut w = CsvOut { out, outcome };
    let mut header = vec!["vertex".to_string()];
    header.extend((0..graph.dim()).map(|i| format!("x{i}")));
    header.push("boundary_label".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut labels = vec![String::new(); graph.num_vertices()];
    for (i, &v) in graph.boundary().iter().enumerate() {
        labels[v] = i.to_string();
    }
    w.write(
        "vertices.csv",
        &header,
        (0..graph.num_vertices()).map(|v| {
            let mut row = vec![v.to_string()];
            row.extend(graph.coord(v).iter().map(|&x| f(x)));
            row.push(labels[v].clone());
            row
        }),
    )?;
    w.write(
        "edges.csv",
        &["edge", "u", "v", "cell", "label_a", "label_b"],
        graph.edges().iter().enumerate().map(|(e, &(u, v))| {
            let (a, b) = graph.edge_label(e);
            vec![e.to_string(), u.to_string(), v.to_string(), graph.cells()[graph.edge_cell(e)].to_string(), a.to_string(), b.to_string()]
        }),
    )?;
    let mut rows = vec![vec![
        "nesting".into(),
        level.to_string(),
        nesting.pairs_checked.to_string(),
        if nesting.supported { nesting.passed().to_string() } else { "unchecked".into() },
        nesting.violations.iter().map(|v| format!("{}|{}", v.a, v.b)).collect::<Vec<_>>().join(" "),
    ]];
    rows.push(vec![
        "symmetry".into(),
        level.to_string(),
        symmetry.pairs_checked.len().to_string(),
        symmetry.passed().to_string(),
        symmetry.failing_pairs().iter().map(|(a, b)| format!("{a}-{b}")).collect::<Vec<_>>().join(" "),
    ]);
    w.write("axioms.csv", &["axiom", "level", "checked", "passed", "violations"], rows)
}

fn renorm(cfg: &ExperimentConfig, spec: &IfsSpec, out: &Path, outcome: &mut Outcome) -> Result<()> {
    let res = find_fixed_point(spec, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let (lo, hi) = res.q_range();
    outcome.line(format!("fractal     {}", spec.name()));
    outcome.line(format!("rho         {:.12}", res.rho));
    outcome.line(format!("q range     [{lo:.12}, {hi:.12}]"));
    outcome.line(format!("iterations  {}", res.iterations));
    outcome.line(format!("residual    {:.3e}", res.residual));

    let starts = if cfg.multi_start > 0 {
        let mut rng = SeededStream::new(cfg.seed, 0, StreamPurpose::Other(5)).rng();
        multi_start(spec, cfg.multi_start, DEFAULT_TOL, DEFAULT_MAX_ITER, &mut rng)?
    } else {
        Vec::new()
    };
    let mut rows = Vec::with_capacity(starts.len());
    let mut worst = 0.0f64;
    for (i, r) in starts.iter().enumerate() {
        match r {
            Ok(s) => {
                let diff = s.q_star.max_diff(&res.q_star).max((s.rho - res.rho).abs());
                worst = worst.max(diff);
                rows.push(vec![i.to_string(), "true".into(), f(s.rho), s.iterations.to_string(), f(diff), String::new()]);
            }
            Err(e) => rows.push(vec![i.to_string(), "false".into(), String::new(), String::new(), String::new(), e.to_string()]),
        }
    }
    if !starts.is_empty() {
        let failed = starts.iter().filter(|r| r.is_err()).count();
        outcome.line(format!("multi-start {} starts, {failed} failed, max deviation {worst:.3e}", starts.len()));
        if failed > 0 || worst > 1e-8 {
            outcome.fail(format!("multi-start: {failed} starts failed, max deviation {worst:.3e}"));
        }
    }

    let mut w = CsvOut { out, outcome };
    w.write("renorm_history.csv", &["iteration", "residual"], res.residual_history.iter().enumerate().map(|(i, r)| vec![(i + 1).to_string(), f(*r)]))?;
    let q = &res.q_star.conductance;
    w.write(
        "q_star.csv",
        &["x", "y", "q"],
        (0..q.nrows()).flat_map(|i| (0..q.ncols()).filter(move |&j| j != i).map(move |j| vec![i.to_string(), j.to_string(), f(q[(i, j)])])),
    )?;
    if !rows.is_empty() {
        w.write("multi_start.csv", &["start", "converged", "rho", "iterations", "max_deviation", "error"], rows)?;
    }
    Ok(())
}

fn homogenize(cfg: &ExperimentConfig, spec: &IfsSpec, out: &Path, outcome: &mut Outcome) -> Result<()> {
    let res = find_fixed_point(spec, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let law = cell_law(cfg, spec, &res)?;
    let mut hc = HomogenizationConfig::new(cfg.levels.clone(), cfg.trials, cfg.seed);
    if let Some(c) = cfg.c_hat {
        hc.c_source = CSource::Fixed(c);
    }
    let report = run_homogenization(spec, &res, &law, &hc)?;

    outcome.line(format!("fractal      {}", spec.name()));
    outcome.line(format!("c_hat        {:.6}{}", report.c_hat, report.c_bootstrap_se.map(|s| format!(" ± {s:.6}")).unwrap_or_default()));
    outcome.line(format!("bound C      {:.6}", report.upper_bound));
    outcome.line("level  k  median_D      q75_D         median_D_wide  max_ratio");
    for s in &report.summaries {
        outcome.line(format!(
            "{:>5}  {}  {:<12.6e}  {:<12.6e}  {:<13.6e}  {:.4}",
            s.level, s.compare_level, s.median_d, s.upper_quartile_d, s.median_d_wide, s.max_ratio
        ));
    }
    // A deterministic law has D_n = 0 up to rounding at every level, so there
    // is no trend to check.
    if law.is_deterministic() {
        outcome.line("trend        not applicable (deterministic law)");
    } else if report.trend_holds() {
        outcome.line("trend        ok");
    } else {
        outcome.line("trend        VIOLATED");
        outcome.fail("median D_n is not strictly decreasing with D_last <= D_first / 2");
    }
    if !report.bound_holds() {
        outcome.fail(format!("R_n^w <= C R_n violated (C = {})", report.upper_bound));
    }

    let mut w = CsvOut { out, outcome };
    w.write(
        "homog_report.csv",
        &["level", "trial", "D_n", "D_wide", "R01", "c_hat"],
        report.rows.iter().map(|r| vec![r.level.to_string(), r.trial.to_string(), f(r.d), f(r.d_wide), f(r.r01), f(report.c_hat)]),
    )?;
    w.write(
        "homog_summary.csv",
        &["level", "compare_level", "median_D", "upper_quartile_D", "median_D_wide", "wide_is_full", "R01_variance", "max_ratio", "upper_bound"],
        report.summaries.iter().map(|s| {
            vec![
                s.level.to_string(),
                s.compare_level.to_string(),
                f(s.median_d),
                f(s.upper_quartile_d),
                f(s.median_d_wide),
                s.wide_is_full.to_string(),
                f(s.r01_variance),
                f(s.max_ratio),
                f(report.upper_bound),
            ]
        }),
    )?;
    let pts = |g: fn(&nestwalk_core::homogenization::LevelSummary) -> f64| -> Vec<(f64, f64)> {
        report.summaries.iter().map(|s| (s.level as f64, g(s))).collect()
    };
    let series = [
        Series::new("median D_n", pts(|s| s.median_d), Style::Line),
        Series::new("upper quartile D_n", pts(|s| s.upper_quartile_d), Style::Dashed),
    ];
    let positive = report.summaries.iter().all(|s| s.median_d > 0.0 && s.upper_quartile_d > 0.0);
    let plot = PlotSpec::new("Resistance homogenization", "level n", "sup distance D_n");
    w.svg("homog.svg", &series, &if positive { plot.log_y() } else { plot })
}

fn walk(cfg: &ExperimentConfig, spec: &IfsSpec, out: &Path, outcome: &mut Outcome) -> Result<()> {
    let res = find_fixed_point(spec, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let law = cell_law(cfg, spec, &res)?;
    let mut sc = ScalingConfig::new(cfg.levels.clone(), cfg.trials, cfg.walk_mode()?, cfg.statistic()?, cfg.seed);
    sc.max_steps = cfg.max_steps;
    sc.oracle = cfg.oracle;
    let report = scaling_experiment(spec, &law, &sc)?;
    let err = report.relative_slope_error();

    outcome.line(format!("fractal          {}", spec.name()));
    outcome.line(format!("mode             {}", report.mode));
    outcome.line(format!("statistic        {}", report.statistic));
    for (n, v) in report.levels.iter().zip(&report.values) {
        outcome.line(format!("level {n:<3}        {v:.6e}"));
    }
    outcome.line(format!("fitted slope     {:.6}", report.fitted_log_slope));
    outcome.line(format!("predicted slope  {:.6}", report.predicted_log_slope));
    outcome.line(format!("relative error   {:.4} (tolerance {})", err, cfg.slope_tolerance));
    outcome.line(format!("censored runs    {}", report.censored));
    if err > cfg.slope_tolerance {
        outcome.fail(format!("relative slope error {err:.4} exceeds {}", cfg.slope_tolerance));
    }
    if !report.monotone {
        outcome.fail("crossing-time statistic is not increasing in the level");
    }

    let mut w = CsvOut { out, outcome };
    w.write(
        "crossing_times.csv",
        &["level", "trial", "time", "jumps", "censored"],
        report.samples.iter().map(|s| vec![s.level.to_string(), s.trial.to_string(), f(s.time), s.jumps.to_string(), s.censored.to_string()]),
    )?;
    let fitted = |n: f64| (report.intercept + report.fitted_log_slope * n).exp();
    let reference = |n: f64| report.constant_at_predicted * (report.predicted_log_slope * n).exp();
    w.write(
        "scaling_levels.csv",
        &["level", "value", "fitted", "predicted_reference"],
        report.levels.iter().zip(&report.values).map(|(&n, &v)| vec![n.to_string(), f(v), f(fitted(n as f64)), f(reference(n as f64))]),
    )?;
    let alpha = report.alpha.map(f).unwrap_or_default();
    let kv = [
        ("mode", report.mode.to_string()),
        ("statistic", report.statistic.to_string()),
        ("trials", cfg.trials.to_string()),
        ("rho", f(report.rho)),
        ("alpha", alpha),
        ("fitted_log_slope", f(report.fitted_log_slope)),
        ("intercept", f(report.intercept)),
        ("predicted_log_slope", f(report.predicted_log_slope)),
        ("relative_slope_error", f(err)),
        ("constant_estimate", f(report.constant_estimate)),
        ("constant_at_predicted", f(report.constant_at_predicted)),
        ("censored", report.censored.to_string()),
        ("monotone", report.monotone.to_string()),
    ];
    w.write("scaling_report.csv", &["key", "value"], kv.into_iter().map(|(k, v)| vec![k.to_string(), v]))?;

    let xs: Vec<f64> = report.levels.iter().map(|&n| n as f64).collect();
    let series = [
        Series::new(format!("{} crossing time", report.statistic), xs.iter().zip(&report.values).map(|(&x, &v)| (x, v)).collect(), Style::Scatter),
        Series::new("fitted", xs.iter().map(|&x| (x, fitted(x))).collect(), Style::Line),
        Series::new("predicted slope", xs.iter().map(|&x| (x, reference(x))).collect(), Style::Dashed),
    ];
    w.svg("scaling.svg", &series, &PlotSpec::new(format!("Crossing-time scaling ({})", report.mode), "level n", "crossing time").log_y())
}

fn fin(cfg: &ExperimentConfig, spec: &IfsSpec, out: &Path, outcome: &mut Outcome) -> Result<()> {
    let mut fc = FinConfig::new(cfg.levels.clone(), cfg.trials, cfg.alpha, cfg.cutoff, cfg.seed);
    fc.law = ConductanceLaw::pareto(cfg.alpha, cfg.lower_bound)?;
    let report = fin_stabilization_check(spec, &fc)?;
    let crit = ks_critical_value(cfg.trials / 2, 0.01);

    outcome.line(format!("fractal             {}", spec.name()));
    outcome.line(format!("alpha               {}", cfg.alpha));
    outcome.line(format!("csrw log scale      {:.6}", report.csrw_log_scale));
    for (i, w) in report.levels.windows(2).enumerate() {
        outcome.line(format!("KS {}->{}            csrw {:.4}  time-changed {:.4}", w[0], w[1], report.ks_csrw[i], report.ks_time_changed[i]));
    }
    outcome.line(format!("cross KS            raw {:.4}  median-normalized {:.4}", report.cross_ks, report.cross_ks_normalized));
    outcome.line(format!("KS 1% reference     {crit:.4}"));
    outcome.line(format!("zero-time runs      {}", report.zero_time));
    outcome.line(format!("censored runs       {}", report.censored));
    if !report.csrw_decreasing() {
        outcome.fail(format!("consecutive CSRW KS distances {:?} are not weakly decreasing", report.ks_csrw));
    }
    if report.cross_ks_normalized > cfg.ks_tolerance {
        outcome.fail(format!("normalized cross KS {:.4} exceeds {}", report.cross_ks_normalized, cfg.ks_tolerance));
    }

    let mut w = CsvOut { out, outcome };
    let mut rows = Vec::new();
    for (li, &n) in report.levels.iter().enumerate() {
        for (family, data) in [("csrw", &report.csrw[li]), ("time-changed", &report.time_changed[li])] {
            rows.extend(data.iter().enumerate().map(|(t, &x)| vec![n.to_string(), t.to_string(), family.to_string(), f(x)]));
        }
    }
    w.write("fin_distributions.csv", &["level", "trial", "family", "rescaled_time"], rows)?;
    let mut ks = Vec::new();
    for (i, l) in report.levels.windows(2).enumerate() {
        ks.push(vec!["csrw".into(), l[0].to_string(), l[1].to_string(), f(report.ks_csrw[i]), f(crit)]);
        ks.push(vec!["time-changed".into(), l[0].to_string(), l[1].to_string(), f(report.ks_time_changed[i]), f(crit)]);
    }
    let top = report.levels.last().expect("levels validated").to_string();
    ks.push(vec!["cross-raw".into(), top.clone(), top.clone(), f(report.cross_ks), f(crit)]);
    ks.push(vec!["cross-normalized".into(), top.clone(), top, f(report.cross_ks_normalized), f(crit)]);
    w.write("ks_report.csv", &["comparison", "level_a", "level_b", "ks", "critical_1pct"], ks)?;

    let xs: Vec<f64> = report.levels.windows(2).map(|l| l[1] as f64).collect();
    let series = [
        Series::new("CSRW", xs.iter().zip(&report.ks_csrw).map(|(&x, &k)| (x, k)).collect(), Style::Line),
        Series::new("time-changed", xs.iter().zip(&report.ks_time_changed).map(|(&x, &k)| (x, k)).collect(), Style::Line),
        Series::new("KS 1% reference", xs.iter().map(|&x| (x, crit)).collect(), Style::Dashed),
    ];
    w.svg("fin_ks.svg", &series, &PlotSpec::new("KS distance between consecutive levels", "level n", "KS(n-1, n)"))
}
