//! Command-line front end for the nested-fractal random conductance
//! experiments.

pub mod config;
pub mod experiments;
pub mod manifest;
pub mod svg;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use chrono::{SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand};

use config::{parse_levels, Experiment, ExperimentConfig, FractalDef, LawKind, Settings};
use manifest::{collect_artifacts, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "nestwalk", version, about = "Random walks in random conductances on nested fractals")]
#[command(after_help = "Flags may be given before or after the subcommand and override keys of --config.\n\
Exit codes: 0 success, 1 error, 2 the run finished but a checked property failed.")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Build G_n and check the nesting and symmetry axioms.
    Build,
    /// Find the invariant boundary conductances and the resistance scale factor.
    Renorm,
    /// Measure the concentration of random resistances on the deterministic metric.
    Homogenize,
    /// Crossing-time scaling of the VSRW or CSRW across levels.
    Walk,
    /// Stabilization of crossing times under the trap-measure time change.
    Fin,
}

impl From<Command> for Experiment {
    fn from(c: Command) -> Self {
        match c {
            Command::Build => Experiment::Build,
            Command::Renorm => Experiment::Renorm,
            Command::Homogenize => Experiment::Homogenize,
            Command::Walk => Experiment::Walk,
            Command::Fin => Experiment::Fin,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Config file: fractal definition plus `key = value` experiment keys.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Re-run the configuration recorded in a manifest.json.
    #[arg(long, global = true, value_name = "FILE", conflicts_with = "config")]
    pub from_manifest: Option<PathBuf>,
    /// Experiment to run when no subcommand is given.
    #[arg(long, global = true, value_enum)]
    pub experiment: Option<Experiment>,
    /// Preset name (sierpinski-gasket, vicsek-2d) or a fractal spec file.
    #[arg(long, global = true)]
    pub fractal: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub law: Option<LawKind>,
    /// Pareto tail index, in (0, 1).
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Lower bound of the conductances (the value itself for --law constant).
    #[arg(long, global = true)]
    pub lower_bound: Option<f64>,
    /// Levels: `1-5`, `2..4` or `1,3,5`.
    #[arg(long, global = true, conflicts_with = "level")]
    pub levels: Option<String>,
    /// Top level: levels 1..=N (the single level N for `build`).
    #[arg(long, global = true)]
    pub level: Option<usize>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Statistic of crossing times: mean, median or q:P.
    #[arg(long, global = true)]
    pub stat: Option<String>,
    /// Walk speed: vsrw or csrw.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// Trap-mass cutoff of the Poisson trap measure.
    #[arg(long, global = true)]
    pub cutoff: Option<f64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Random starts for the renormalization fixed point uniqueness probe.
    #[arg(long, global = true)]
    pub multi_start: Option<usize>,
    /// Exact expected crossing times instead of simulation (deterministic laws).
    #[arg(long, global = true)]
    pub oracle: bool,
    /// Allowed relative error of the fitted walk exponent.
    #[arg(long, global = true)]
    pub slope_tolerance: Option<f64>,
    /// Allowed median-normalized KS distance between the two fin families.
    #[arg(long, global = true)]
    pub ks_tolerance: Option<f64>,
    /// Jump cap per walk; capped runs are censored.
    #[arg(long, global = true)]
    pub max_steps: Option<u64>,
    /// Fixed resistance multiplier instead of estimating it.
    #[arg(long, global = true)]
    pub c_hat: Option<f64>,
}

impl Flags {
    pub fn to_settings(&self, command: Option<Command>) -> Result<Settings> {
        let experiment = match (command, self.experiment) {
            (Some(c), Some(e)) if Experiment::from(c) != e => bail!("subcommand {} conflicts with --experiment {e}", Experiment::from(c)),
            (Some(c), _) => Some(c.into()),
            (None, e) => e,
        };
        let levels = match (&self.levels, self.level) {
            (Some(s), _) => Some(parse_levels(s).context("--levels")?),
            (None, Some(n)) if experiment == Some(Experiment::Build) => Some(vec![n]),
            (None, Some(n)) => Some((1..=n).collect()),
            (None, None) => None,
        };
        Ok(Settings {
            experiment,
            fractal: self.fractal.as_deref().map(FractalDef::from_arg).transpose().context("--fractal")?,
            law: self.law,
            alpha: self.alpha,
            lower_bound: self.lower_bound,
            levels,
            trials: self.trials,
            seed: self.seed,
            statistic: self.stat.clone(),
            mode: self.mode.clone(),
            cutoff: self.cutoff,
            threads: self.threads,
            out: self.out.clone(),
            multi_start: self.multi_start,
            oracle: self.oracle.then_some(true),
            slope_tolerance: self.slope_tolerance,
            ks_tolerance: self.ks_tolerance,
            max_steps: self.max_steps,
            c_hat: self.c_hat,
        })
    }
}

/// Parses, validates, runs and writes the manifest. Returns the exit code.
pub fn run(cli: Cli) -> Result<i32> {
    let flag_settings = cli.flags.to_settings(cli.command)?;
    let file_settings = match (&cli.flags.config, &cli.flags.from_manifest) {
        (Some(path), _) => Settings::from_config_file(path)?,
        (None, Some(path)) => RunManifest::read(path)?.config.to_settings(),
        (None, None) => Settings::default(),
    };
    let (merged, overrides) = file_settings.overlay(&flag_settings)?;
    let cfg = ExperimentConfig::resolve(&merged)?;

    if let Some(t) = cfg.threads {
        // Fails only if a global pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;

    let started = Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true);
    let outcome = experiments::run(&cfg, &cfg.out).with_context(|| format!("{} experiment", cfg.experiment))?;
    let exit_code = if outcome.property_failures.is_empty() { 0 } else { 2 };
    print!("{}", outcome.summary);
    for failure in &outcome.property_failures {
        println!("PROPERTY FAILED: {failure}");
    }

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        threads: rayon::current_num_threads(),
        artifacts: collect_artifacts(&cfg.out, &outcome.artifacts)?,
        config: cfg.clone(),
        file_settings,
        flag_settings,
        overrides,
        started,
        finished: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
        exit_code,
        property_failures: outcome.property_failures,
    };
    manifest.write(&cfg.out)?;
    Ok(exit_code)
}
