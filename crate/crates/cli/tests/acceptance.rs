//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Run with `cargo test -p nestwalk-cli --test acceptance`.

use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use nestwalk_cli::manifest::{RunManifest, MANIFEST_NAME};
use nestwalk_core::environment::{sample_trap_measure, SeededStream, StreamPurpose};
use nestwalk_core::ifs::{build_graph, IfsSpec};
use nestwalk_core::network::{effective_resistance, expected_hitting_time, ConductanceField, FieldOrigin};
use nestwalk_core::renorm::{deterministic_resistance, find_fixed_point, DEFAULT_MAX_ITER, DEFAULT_TOL};
use nestwalk_core::stats::{ks_critical_value, ks_one_sample, mean, variance};
use nestwalk_core::walk::{crossing_endpoints, crossing_oracle, speed_measure, WalkMode};
use rand::Rng;
use tempfile::TempDir;

type Check = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: fn(&Path) -> Check,
}

fn nestwalk(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nestwalk")).args(args).current_dir(dir).output().expect("binary runs")
}

fn exit_code(o: &Output) -> Result<i32, String> {
    match o.status.code() {
        Some(1) | None => Err(format!("run failed: {}", String::from_utf8_lossy(&o.stderr).trim())),
        Some(c) => Ok(c),
    }
}

fn csv_column(path: &Path, column: &str) -> Result<Vec<String>, String> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let idx = rdr.headers().map_err(|e| e.to_string())?.iter().position(|h| h == column).ok_or(format!("no column {column}"))?;
    rdr.records().map(|r| r.map(|r| r[idx].to_string()).map_err(|e| e.to_string())).collect()
}

fn report_value(path: &Path, key: &str) -> Result<String, String> {
    let keys = csv_column(path, "key")?;
    let values = csv_column(path, "value")?;
    keys.iter().position(|k| k == key).map(|i| values[i].clone()).ok_or(format!("no key {key}"))
}

fn floats(v: Vec<String>) -> Vec<f64> {
    v.iter().map(|s| s.parse().expect("float")).collect()
}

fn verdict(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn renorm_fixed_point(_: &Path) -> Check {
    let res = find_fixed_point(&IfsSpec::sierpinski_gasket(), DEFAULT_TOL, DEFAULT_MAX_ITER).map_err(|e| e.to_string())?;
    let (lo, hi) = res.q_range();
    let err = (res.rho - 5.0 / 3.0).abs();
    verdict(err < 1e-8 && hi - lo < 1e-8, format!("|rho - 5/3| = {err:.2e} (tol 1e-8), q spread = {:.2e} (tol 1e-8)", hi - lo))
}

fn nesting_identity(_: &Path) -> Check {
    let spec = IfsSpec::sierpinski_gasket();
    let res = find_fixed_point(&spec, DEFAULT_TOL, DEFAULT_MAX_ITER).map_err(|e| e.to_string())?;
    let graphs: Vec<_> = (0..=4).map(|n| build_graph(&spec, n)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let kernels: Vec<_> = (0..=4).map(|n| deterministic_resistance(&spec, n, &res)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for m in 0..=4 {
        for n in 0..=m {
            let embed = graphs[m].embed(&graphs[n]).map_err(|e| e.to_string())?;
            let coarse = kernels[n].matrix();
            let fine = kernels[m].restrict(&embed).map_err(|e| e.to_string())?;
            for (a, b) in coarse.iter().zip(fine.matrix().iter()) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    verdict(worst < 1e-9, format!("max |R_m|V_n - R_n| over 0 <= n <= m <= 4 = {worst:.2e} (tol 1e-9)"))
}

fn exact_decimation(_: &Path) -> Check {
    let spec = IfsSpec::sierpinski_gasket();
    let mut times = Vec::new();
    for n in 0..=6 {
        let graph = build_graph(&spec, n).map_err(|e| e.to_string())?;
        let field = ConductanceField::uniform(&graph, 1.0).map_err(|e| e.to_string())?;
        let (start, targets) = crossing_endpoints(&graph);
        let theta = speed_measure(&field, WalkMode::Csrw).map_err(|e| e.to_string())?;
        times.push(crossing_oracle(&field, &theta, start, &targets).map_err(|e| e.to_string())?);
    }
    let worst = times.windows(2).map(|w| (w[1] / w[0] - 5.0).abs()).fold(0.0, f64::max);
    verdict(worst < 1e-9, format!("max |T_(n+1)/T_n - 5| for n <= 5 = {worst:.2e} (tol 1e-9)"))
}

fn green_occupation(_: &Path) -> Check {
    let mut rng = SeededStream::new(0, 0, StreamPurpose::Other(9)).rng();
    let (mut green_gap, mut commute_gap) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = rng.random_range(2..=12usize);
        let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.random_range(0..v), v)).collect();
        for _ in 0..rng.random_range(0..=n) {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            if a != b && !edges.contains(&(a.min(b), a.max(b))) {
                edges.push((a.min(b), a.max(b)));
            }
        }
        let weights = edges.iter().map(|_| rng.random_range(0.1..10.0)).collect();
        let field = ConductanceField::new(n, edges, weights, FieldOrigin::Random).map_err(|e| e.to_string())?;
        let theta: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
        let (x, y) = (rng.random_range(0..n), rng.random_range(0..n));
        if x == y {
            continue;
        }
        let there = expected_hitting_time(&field, &theta, x, y).map_err(|e| e.to_string())?;
        let back = expected_hitting_time(&field, &theta, y, x).map_err(|e| e.to_string())?;
        green_gap = green_gap.max(there.relative_gap()).max(back.relative_gap());
        let commute = effective_resistance(&field, x, y).map_err(|e| e.to_string())? * theta.iter().sum::<f64>();
        commute_gap = commute_gap.max((there.via_solve + back.via_solve - commute).abs() / commute);
    }
    verdict(
        green_gap < 1e-8 && commute_gap < 1e-8,
        format!("green vs solve rel gap {green_gap:.2e}, commute identity rel gap {commute_gap:.2e} (tol 1e-8, 100 networks)"),
    )
}

fn homogenization_trend(dir: &Path) -> Check {
    let o = nestwalk(&["homogenize", "--alpha", "0.5", "--trials", "200", "--levels", "1-5", "--seed", "0", "--out", "homog"], dir);
    let code = exit_code(&o)?;
    let medians = floats(csv_column(&dir.join("homog/homog_summary.csv"), "median_D")?);
    let strict = medians.windows(2).all(|w| w[1] < w[0]);
    let half = medians[4] <= 0.5 * medians[0];
    let shown: Vec<String> = medians.iter().map(|m| format!("{m:.4}")).collect();
    verdict(
        code == 0 && strict && half,
        format!("median D_n = [{}], D5/D1 = {:.3} (need strictly decreasing, <= 0.5), exit {code}", shown.join(", "), medians[4] / medians[0]),
    )
}

fn walk_scaling(dir: &Path, mode: &str) -> Check {
    let out = format!("walk-{mode}");
    let args = ["walk", "--mode", mode, "--alpha", "0.5", "--stat", "median", "--levels", "1-5", "--trials", "500", "--seed", "0", "--slope-tolerance", "0.1", "--out", &out];
    let o = nestwalk(&args, dir);
    let code = exit_code(&o)?;
    let report = dir.join(&out).join("scaling_report.csv");
    let fitted: f64 = report_value(&report, "fitted_log_slope")?.parse().unwrap();
    let predicted: f64 = report_value(&report, "predicted_log_slope")?.parse().unwrap();
    let err = (fitted - predicted).abs() / predicted;
    verdict(err <= 0.1 && code == 0, format!("slope {fitted:.4} vs {predicted:.4}, relative error {:.2}% (tol 10%), exit {code}", 100.0 * err))
}

fn vsrw_scaling(dir: &Path) -> Check {
    walk_scaling(dir, "vsrw")
}

fn csrw_scaling(dir: &Path) -> Check {
    walk_scaling(dir, "csrw")
}

fn trap_sampler(_: &Path) -> Check {
    let spec = IfsSpec::sierpinski_gasket();
    let (eps, alpha) = (0.01, 0.5);
    let mut counts = Vec::with_capacity(10_000);
    let mut sizes = Vec::new();
    for r in 0..10_000u64 {
        let m = sample_trap_measure(&spec, alpha, eps, 3, &SeededStream::new(0, r, StreamPurpose::Traps)).map_err(|e| e.to_string())?;
        counts.push(m.atoms.len() as f64);
        sizes.extend(m.atoms.iter().map(|a| a.mass));
    }
    let expected = eps.powf(-alpha);
    let sigma = (expected / counts.len() as f64).sqrt();
    let z = (mean(&counts) - expected) / sigma;
    let ks = ks_one_sample(&sizes, |v| if v < eps { 0.0 } else { 1.0 - (v / eps).powf(-alpha) });
    let crit = ks_critical_value(sizes.len(), 0.01);
    verdict(
        z.abs() <= 3.0 && ks < crit,
        format!(
            "mean count {:.4} (target 10, z = {z:.2}, count variance {:.3}), size KS {ks:.4} < {crit:.4} (1%)",
            mean(&counts),
            variance(&counts)
        ),
    )
}

fn fin_stabilization(dir: &Path) -> Check {
    let o = nestwalk(&["fin", "--alpha", "0.5", "--levels", "2-5", "--trials", "1000", "--seed", "0", "--out", "fin"], dir);
    let code = exit_code(&o)?;
    let path = dir.join("fin/ks_report.csv");
    let kind = csv_column(&path, "comparison")?;
    let ks = floats(csv_column(&path, "ks")?);
    let csrw: Vec<f64> = kind.iter().zip(&ks).filter(|(k, _)| *k == "csrw").map(|(_, v)| *v).collect();
    let cross = kind.iter().zip(&ks).find(|(k, _)| *k == "cross-normalized").map(|(_, v)| *v).ok_or("no cross KS")?;
    let decreasing = csrw.windows(2).all(|w| w[1] <= w[0]);
    let shown: Vec<String> = csrw.iter().map(|m| format!("{m:.4}")).collect();
    verdict(
        decreasing && cross <= 0.1 && code == 0,
        format!("CSRW consecutive KS [{}] (weakly decreasing), cross KS {cross:.4} (tol 0.1), exit {code}", shown.join(", ")),
    )
}

fn artifacts(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let m = RunManifest::read(&dir.join(MANIFEST_NAME)).map_err(|e| format!("{e:#}"))?;
    m.artifacts.iter().map(|a| std::fs::read(dir.join(&a.path)).map(|b| (a.path.clone(), b)).map_err(|e| e.to_string())).collect()
}

fn determinism(dir: &Path) -> Check {
    let runs: [&[&str]; 5] = [
        &["build", "--level", "3"],
        &["renorm", "--multi-start", "3"],
        &["homogenize", "--levels", "1-3", "--trials", "20"],
        &["walk", "--levels", "1-4", "--trials", "50", "--mode", "csrw"],
        &["fin", "--levels", "2-4", "--trials", "100"],
    ];
    let mut files = 0;
    for args in runs {
        let name = args[0];
        let mut outs = Vec::new();
        for threads in ["1", "4"] {
            let out = format!("det-{name}-{threads}");
            let o = nestwalk(&[args, &["--seed", "3", "--threads", threads, "--out", &out]].concat(), dir);
            exit_code(&o)?;
            outs.push(out);
        }
        let manifest = format!("{}/{MANIFEST_NAME}", outs[1]);
        let o = nestwalk(&["--from-manifest", &manifest, "--threads", "2", "--out", &format!("det-{name}-rerun")], dir);
        exit_code(&o)?;
        outs.push(format!("det-{name}-rerun"));
        let first = artifacts(&dir.join(&outs[0]))?;
        for other in &outs[1..] {
            if artifacts(&dir.join(other))? != first {
                return Err(format!("{name}: artifacts of {} differ from {}", other, outs[0]));
            }
        }
        files += first.len();
    }
    Ok(format!("{files} CSV/SVG files byte-identical across --threads 1/4 and manifest reruns (5 experiments)"))
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "renormalization fixed point", limit: Duration::from_secs(1), run: renorm_fixed_point },
        Criterion { id: 2, name: "nesting identity", limit: Duration::from_secs(30), run: nesting_identity },
        Criterion { id: 3, name: "exact decimation", limit: Duration::from_secs(10), run: exact_decimation },
        Criterion { id: 4, name: "green kernel / occupation", limit: Duration::from_secs(60), run: green_occupation },
        Criterion { id: 5, name: "homogenization trend", limit: Duration::from_secs(600), run: homogenization_trend },
        Criterion { id: 6, name: "VSRW scaling", limit: Duration::from_secs(600), run: vsrw_scaling },
        Criterion { id: 7, name: "CSRW anomalous scaling", limit: Duration::from_secs(900), run: csrw_scaling },
        Criterion { id: 8, name: "trap-measure sampler", limit: Duration::from_secs(60), run: trap_sampler },
        Criterion { id: 9, name: "FIN stabilization", limit: Duration::from_secs(600), run: fin_stabilization },
        Criterion { id: 10, name: "determinism", limit: Duration::from_secs(600), run: determinism },
    ];
    let tmp = TempDir::new().expect("temp dir");
    let mut failed = 0;
    for c in &criteria {
        let t = Instant::now();
        let result = (c.run)(tmp.path());
        let elapsed = t.elapsed();
        let (ok, detail) = match result {
            Ok(d) if elapsed <= c.limit => (true, d),
            Ok(d) => (false, format!("{d}; too slow")),
            Err(d) => (false, d),
        };
        failed += usize::from(!ok);
        println!(
            "criterion {:>2} {} {:<28} {} [{:.2}s, limit {}s]",
            c.id,
            if ok { "PASS" } else { "FAIL" },
            c.name,
            detail,
            elapsed.as_secs_f64(),
            c.limit.as_secs()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
