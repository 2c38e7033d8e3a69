//! Experiment configuration: a config file and command-line flags, each read
//! into a [`Settings`] layer, merged (flags win) and resolved against
//! per-experiment defaults into an [`ExperimentConfig`].

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::ValueEnum;
use nestwalk_core::ifs::spec_file::{parse_spec, parse_spec_with_extras};
use nestwalk_core::ifs::PRESET_NAMES;
use nestwalk_core::{AffineMap, IfsSpec, Statistic, WalkMode};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Build,
    Renorm,
    Homogenize,
    Walk,
    Fin,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
    }
}

/// Law of the cell conductances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LawKind {
    /// I.i.d. Pareto(alpha) above `lower-bound`.
    Pareto,
    /// Every conductance equal to `lower-bound`.
    Constant,
    /// The invariant boundary conductances on every cell.
    QPattern,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapDef {
    pub linear: Vec<f64>,
    pub translation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FractalDef {
    Preset { name: String },
    Custom { name: Option<String>, dim: usize, beta: f64, maps: Vec<MapDef> },
}

impl FractalDef {
    pub fn from_spec(spec: &IfsSpec) -> Self {
        if let Some(name) = &spec.preset_name {
            if IfsSpec::preset(name).ok().as_ref() == Some(spec) {
                return FractalDef::Preset { name: name.clone() };
            }
        }
        FractalDef::Custom {
            name: spec.preset_name.clone(),
            dim: spec.dim,
            beta: spec.beta,
            maps: spec.maps.iter().map(|m| MapDef { linear: m.linear.clone(), translation: m.translation.clone() }).collect(),
        }
    }

    pub fn to_spec(&self) -> Result<IfsSpec> {
        let spec = match self {
            FractalDef::Preset { name } => IfsSpec::preset(name)?,
            FractalDef::Custom { name, dim, beta, maps } => IfsSpec {
                dim: *dim,
                beta: *beta,
                maps: maps.iter().map(|m| AffineMap::new(m.linear.clone(), m.translation.clone())).collect(),
                preset_name: name.clone(),
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    /// A preset name, or the path of a fractal spec file.
    pub fn from_arg(arg: &str) -> Result<Self> {
        if PRESET_NAMES.contains(&arg) {
            return Ok(FractalDef::Preset { name: arg.to_string() });
        }
        let path = Path::new(arg);
        if !path.exists() {
            bail!("'{arg}' is neither a preset ({}) nor a readable spec file", PRESET_NAMES.join(", "));
        }
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {arg}"))?;
        let spec = parse_spec(&text).with_context(|| format!("in {arg}"))?;
        Ok(FractalDef::from_spec(&spec))
    }
}

/// One layer of optional settings (config file, flags, or a manifest).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fractal: Option<FractalDef>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub law: Option<LawKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multi_start: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope_tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks_tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_hat: Option<f64>,
}

/// A key set by both the config file and a flag; the flag wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Override {
    pub key: String,
    pub file: serde_json::Value,
    pub flag: serde_json::Value,
}

/// `"3"`, `"1-5"`, `"1..5"` or `"1,2,4"`.
pub fn parse_levels(s: &str) -> Result<Vec<usize>> {
    let s = s.trim();
    let range = s.split_once("..").or_else(|| s.split_once('-'));
    let levels: Vec<usize> = if let Some((a, b)) = range {
        let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
        if a > b {
            bail!("empty level range {s}");
        }
        (a..=b).collect()
    } else {
        s.split(',').map(|t| t.trim().parse::<usize>()).collect::<std::result::Result<_, _>>()?
    };
    if levels.is_empty() {
        bail!("no levels in '{s}'");
    }
    Ok(levels)
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| anyhow!("bad value '{value}' for {key}: {e}"))
}

fn parse_enum<T: ValueEnum>(key: &str, value: &str) -> Result<T> {
    T::from_str(value, true).map_err(|_| anyhow!("bad value '{value}' for {key}"))
}

impl Settings {
    /// Reads a config file: the fractal grammar plus experiment keys. Keys must
    /// precede any `[map]` section.
    pub fn from_config_text(text: &str) -> Result<Settings> {
        let (spec, extras) = parse_spec_with_extras(text)?;
        let mut s = Settings { fractal: spec.as_ref().map(FractalDef::from_spec), ..Settings::default() };
        for x in extras {
            let v = x.value.as_str();
            let at = |e: anyhow::Error| e.context(format!("line {}", x.line));
            match x.key.replace('-', "_").as_str() {
                "experiment" => s.experiment = Some(parse_enum("experiment", v).map_err(at)?),
                "fractal" => {
                    if s.fractal.is_some() {
                        return Err(at(anyhow!("`fractal` given together with an inline fractal definition")));
                    }
                    s.fractal = Some(FractalDef::from_arg(v).map_err(at)?);
                }
                "law" => s.law = Some(parse_enum("law", v).map_err(at)?),
                "alpha" => s.alpha = Some(parse_value("alpha", v).map_err(at)?),
                "lower_bound" => s.lower_bound = Some(parse_value("lower_bound", v).map_err(at)?),
                "levels" => s.levels = Some(parse_levels(v).map_err(at)?),
                "level" => s.levels = Some((1..=parse_value::<usize>("level", v).map_err(at)?).collect()),
                "trials" => s.trials = Some(parse_value("trials", v).map_err(at)?),
                "seed" => s.seed = Some(parse_value("seed", v).map_err(at)?),
                "statistic" | "stat" => s.statistic = Some(v.to_string()),
                "mode" => s.mode = Some(v.to_string()),
                "cutoff" => s.cutoff = Some(parse_value("cutoff", v).map_err(at)?),
                "threads" => s.threads = Some(parse_value("threads", v).map_err(at)?),
                "out" => s.out = Some(PathBuf::from(v)),
                "multi_start" => s.multi_start = Some(parse_value("multi_start", v).map_err(at)?),
                "oracle" => s.oracle = Some(parse_value("oracle", v).map_err(at)?),
                "slope_tolerance" => s.slope_tolerance = Some(parse_value("slope_tolerance", v).map_err(at)?),
                "ks_tolerance" => s.ks_tolerance = Some(parse_value("ks_tolerance", v).map_err(at)?),
                "max_steps" => s.max_steps = Some(parse_value("max_steps", v).map_err(at)?),
                "c_hat" => s.c_hat = Some(parse_value("c_hat", v).map_err(at)?),
                other => return Err(at(anyhow!("unknown key '{other}'"))),
            }
        }
        Ok(s)
    }

    pub fn from_config_file(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Settings::from_config_text(&text).with_context(|| format!("in {}", path.display()))
    }

    /// `self` overlaid with every key `top` sets, plus the list of keys both set.
    pub fn overlay(&self, top: &Settings) -> Result<(Settings, Vec<Override>)> {
        let base = serde_json::to_value(self)?;
        let over = serde_json::to_value(top)?;
        let (mut merged, mut overrides) = (base.clone(), Vec::new());
        for (key, flag) in over.as_object().expect("struct").iter().filter(|(_, v)| !v.is_null()) {
            let file = &base[key];
            if !file.is_null() {
                overrides.push(Override { key: key.clone(), file: file.clone(), flag: flag.clone() });
            }
            merged[key] = flag.clone();
        }
        Ok((serde_json::from_value(merged)?, overrides))
    }
}

/// A fully resolved, validated experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub fractal: FractalDef,
    pub law: LawKind,
    pub alpha: f64,
    pub lower_bound: f64,
    pub levels: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub statistic: String,
    pub mode: String,
    pub cutoff: f64,
    pub threads: Option<usize>,
    pub out: PathBuf,
    pub multi_start: usize,
    pub oracle: bool,
    pub slope_tolerance: f64,
    pub ks_tolerance: f64,
    pub max_steps: u64,
    pub c_hat: Option<f64>,
}

impl ExperimentConfig {
    pub fn resolve(s: &Settings) -> Result<ExperimentConfig> {
        let experiment = s.experiment.ok_or_else(|| anyhow!("no experiment given (use a subcommand or `experiment = ...`)"))?;
        let (levels, trials) = match experiment {
            Experiment::Build => (vec![3], 1),
            Experiment::Renorm => (vec![0], 1),
            Experiment::Homogenize => ((1..=5).collect(), 200),
            Experiment::Walk => ((1..=5).collect(), 500),
            Experiment::Fin => ((2..=5).collect(), 1000),
        };
        let cfg = ExperimentConfig {
            experiment,
            fractal: s.fractal.clone().unwrap_or(FractalDef::Preset { name: "sierpinski-gasket".into() }),
            law: s.law.unwrap_or(LawKind::Pareto),
            alpha: s.alpha.unwrap_or(0.5),
            lower_bound: s.lower_bound.unwrap_or(1.0),
            levels: s.levels.clone().unwrap_or(levels),
            trials: s.trials.unwrap_or(trials),
            seed: s.seed.unwrap_or(0),
            statistic: s.statistic.clone().unwrap_or_else(|| "median".into()),
            mode: s.mode.clone().unwrap_or_else(|| "vsrw".into()),
            cutoff: s.cutoff.unwrap_or(1e-3),
            threads: s.threads,
            out: s.out.clone().unwrap_or_else(|| PathBuf::from("out")),
            multi_start: s.multi_start.unwrap_or(0),
            oracle: s.oracle.unwrap_or(false),
            slope_tolerance: s.slope_tolerance.unwrap_or(0.1),
            ks_tolerance: s.ks_tolerance.unwrap_or(0.1),
            max_steps: s.max_steps.unwrap_or(nestwalk_core::walk::DEFAULT_MAX_STEPS),
            c_hat: s.c_hat,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_settings(&self) -> Settings {
        Settings {
            experiment: Some(self.experiment),
            fractal: Some(self.fractal.clone()),
            law: Some(self.law),
            alpha: Some(self.alpha),
            lower_bound: Some(self.lower_bound),
            levels: Some(self.levels.clone()),
            trials: Some(self.trials),
            seed: Some(self.seed),
            statistic: Some(self.statistic.clone()),
            mode: Some(self.mode.clone()),
            cutoff: Some(self.cutoff),
            threads: self.threads,
            out: Some(self.out.clone()),
            multi_start: Some(self.multi_start),
            oracle: Some(self.oracle),
            slope_tolerance: Some(self.slope_tolerance),
            ks_tolerance: Some(self.ks_tolerance),
            max_steps: Some(self.max_steps),
            c_hat: self.c_hat,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail!("alpha must lie in (0, 1), got {}", self.alpha);
        }
        if !(self.lower_bound.is_finite() && self.lower_bound > 0.0) {
            bail!("lower_bound must be > 0, got {}", self.lower_bound);
        }
        if !(self.cutoff.is_finite() && self.cutoff > 0.0) {
            bail!("cutoff must be > 0, got {}", self.cutoff);
        }
        if self.threads == Some(0) {
            bail!("threads must be at least 1");
        }
        if let Some(c) = self.c_hat {
            if !(c.is_finite() && c > 0.0) {
                bail!("c_hat must be > 0, got {c}");
            }
        }
        if self.levels.is_empty() {
            bail!("no levels given");
        }
        self.fractal.to_spec().context("fractal definition")?;
        self.statistic()?;
        self.walk_mode()?;
        let needs_trials = matches!(self.experiment, Experiment::Homogenize | Experiment::Walk | Experiment::Fin);
        if needs_trials && self.trials == 0 && !(self.experiment == Experiment::Walk && self.oracle) {
            bail!("trials must be at least 1");
        }
        if matches!(self.experiment, Experiment::Walk | Experiment::Fin) && self.levels.len() < 3 {
            bail!("{} needs at least 3 levels, got {:?}", self.experiment, self.levels);
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<IfsSpec> {
        self.fractal.to_spec()
    }

    pub fn statistic(&self) -> Result<Statistic> {
        Ok(self.statistic.parse::<Statistic>()?)
    }

    pub fn walk_mode(&self) -> Result<WalkMode> {
        match self.mode.parse::<WalkMode>()? {
            WalkMode::TimeChanged => bail!("mode must be vsrw or csrw"),
            m => Ok(m),
        }
    }
}
