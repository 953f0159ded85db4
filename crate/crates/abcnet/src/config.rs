//! Experiment configuration: a strict sectioned text format, override
//! application, and a canonical echo whose hash provides run provenance.
//!
//! Unknown sections or keys are hard errors with line numbers — a typo never
//! silently falls back to a default. The canonical echo is self-contained
//! (observed values are inlined, defaults materialized) so that re-running
//! from an artifact's `config.echo` reproduces the run exactly.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::distributions::{DistributionSpec, Value};
use crate::error::{AbcError, Result};
use crate::inference::{EngineKind, EpsilonSchedule, ExperimentConfig};
use crate::ingest::read_observed_summary;
use crate::kernels::KernelSpec;
use crate::network::{GaussianSummary, ModelKind, Simulator};
use crate::params::{ParamBlock, ParamLayout};
use crate::summaries::{DistanceKind, SummaryVector};

/// Default per-particle attempt budget before an SMC population stalls.
pub const DEFAULT_MAX_ATTEMPTS: u64 = 10_000;
/// Default sweep grid-size budget (the brute-force blow-up guard).
pub const DEFAULT_SWEEP_BUDGET: f64 = 1e6;

const SECTIONS: [&str; 9] = [
    "experiment",
    "simulator",
    "priors",
    "fixed",
    "kernel",
    "observed",
    "sweep",
    "data",
    "aliases",
];

fn known_keys(section: &str) -> Option<&'static [&'static str]> {
    match section {
        "experiment" => Some(&[
            "model",
            "engine",
            "particles",
            "populations",
            "epsilon0",
            "schedule",
            "distance",
            "standardize",
            "max_attempts",
            "keep_fraction",
            "seed",
            "workers",
        ]),
        "simulator" => Some(&["n_samples", "summary", "ticks", "entry_weights"]),
        "kernel" => Some(&["spec"]),
        "observed" => Some(&["values", "file"]),
        "sweep" => Some(&["points", "replicates", "budget"]),
        "data" => Some(&[
            "counts_file",
            "hour",
            "weekdays_only",
            "node1_value",
            "output",
        ]),
        // priors, fixed, and aliases take parameter names as keys.
        "priors" | "fixed" | "aliases" => None,
        _ => unreachable!("section validated before key lookup"),
    }
}

/// Parsed-but-uninterpreted config text: ordered sections of ordered
/// key/value pairs with source line numbers.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    sections: Vec<(String, Vec<(String, String, usize)>)>,
}

impl RawConfig {
    /// Parse the sectioned `key = value` format. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        let mut current: Option<usize> = None;
        for (idx, line_raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = line_raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(name) = body.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or(AbcError::Parse {
                    line,
                    msg: format!("unterminated section header `{body}`"),
                })?;
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return Err(AbcError::Parse {
                        line,
                        msg: format!(
                            "unknown section `[{name}]` (known: {})",
                            SECTIONS.join(", ")
                        ),
                    });
                }
                if raw.sections.iter().any(|(s, _)| s == name) {
                    return Err(AbcError::Parse {
                        line,
                        msg: format!("duplicate section `[{name}]`"),
                    });
                }
                raw.sections.push((name.to_string(), Vec::new()));
                current = Some(raw.sections.len() - 1);
                continue;
            }
            let (key, value) = body.split_once('=').ok_or(AbcError::Parse {
                line,
                msg: format!("expected `key = value`, got `{body}`"),
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            let Some(section_idx) = current else {
                return Err(AbcError::Parse {
                    line,
                    msg: format!("key `{key}` appears before any [section]"),
                });
            };
            let (section_name, entries) = &mut raw.sections[section_idx];
            if let Some(keys) = known_keys(section_name) {
                if !keys.contains(&key.as_str()) {
                    return Err(AbcError::Parse {
                        line,
                        msg: format!(
                            "unknown key `{key}` in [{section_name}] (known: {})",
                            keys.join(", ")
                        ),
                    });
                }
            }
            if entries.iter().any(|(k, _, _)| *k == key) {
                return Err(AbcError::Parse {
                    line,
                    msg: format!("duplicate key `{key}` in [{section_name}]"),
                });
            }
            entries.push((key, value, line));
        }
        Ok(raw)
    }

    /// Apply one `section.key=value` override (inserting the key — and the
    /// section — if absent). Key validity is checked like in `parse`.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (path, value) = spec.split_once('=').ok_or_else(|| {
            AbcError::Config(format!("override `{spec}` must look like section.key=value"))
        })?;
        let (section, key) = path.trim().split_once('.').ok_or_else(|| {
            AbcError::Config(format!("override `{spec}` must look like section.key=value"))
        })?;
        let (section, key, value) = (section.trim(), key.trim(), value.trim());
        if !SECTIONS.contains(&section) {
            return Err(AbcError::Config(format!(
                "override targets unknown section `[{section}]`"
            )));
        }
        if let Some(keys) = known_keys(section) {
            if !keys.contains(&key) {
                return Err(AbcError::Config(format!(
                    "override targets unknown key `{key}` in [{section}] (known: {})",
                    keys.join(", ")
                )));
            }
        }
        let idx = match self.sections.iter().position(|(s, _)| s == section) {
            Some(i) => i,
            None => {
                self.sections.push((section.to_string(), Vec::new()));
                self.sections.len() - 1
            }
        };
        let entries = &mut self.sections[idx].1;
        match entries.iter_mut().find(|(k, _, _)| k == key) {
            Some(entry) => entry.1 = value.to_string(),
            None => entries.push((key.to_string(), value.to_string(), 0)),
        }
        Ok(())
    }

    fn section(&self, name: &str) -> Option<&[(String, String, usize)]> {
        self.sections
            .iter()
            .find(|(s, _)| s == name)
            .map(|(_, e)| e.as_slice())
    }

    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.section(section)?
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, _)| v.as_str())
    }
}

fn require<'a>(raw: &'a RawConfig, section: &str, key: &str) -> Result<&'a str> {
    raw.get(section, key).ok_or_else(|| {
        AbcError::Config(format!("missing required key `{key}` in [{section}]"))
    })
}

fn parse_num<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| {
        AbcError::Config(format!("[{section}] {key} = `{value}` is not a valid number"))
    })
}

fn parse_bool(section: &str, key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(AbcError::Config(format!(
            "[{section}] {key} = `{value}` is not a boolean"
        ))),
    }
}

fn parse_f64_list(section: &str, key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| parse_num::<f64>(section, key, v.trim()))
        .collect()
}

/// Brute-force sweep settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    /// Grid points per parameter column.
    pub points: usize,
    /// Simulations averaged per grid point.
    pub replicates: usize,
    /// Maximum allowed grid size (points^columns).
    pub budget: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            points: 10,
            replicates: 1,
            budget: DEFAULT_SWEEP_BUDGET,
        }
    }
}

/// Counter-ingestion settings (paths are resolved against the config file's
/// directory).
#[derive(Debug, Clone, PartialEq)]
pub struct DataSettings {
    pub counts_file: PathBuf,
    pub hour: u32,
    pub weekdays_only: bool,
    pub node1_value: f64,
    pub output: PathBuf,
}

/// A fully interpreted configuration plus its canonical echo and hash.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub experiment: ExperimentConfig,
    pub sweep: SweepSettings,
    pub data: Option<DataSettings>,
    /// Report aliases: (alias, parameter column name).
    pub aliases: Vec<(String, String)>,
    /// Canonical self-contained config text.
    pub echo: String,
    /// Hex SHA-256 of the echo.
    pub hash: String,
}

pub fn model_id(kind: &ModelKind) -> &'static str {
    match kind {
        ModelKind::Gaussian { .. } => "gaussian",
        ModelKind::Fork { .. } => "fork",
        ModelKind::Cbd { .. } => "cbd",
        ModelKind::Network { .. } => "network",
    }
}

/// Load a config file, then apply `--override`, `--seed`, and `--workers` in
/// that order before interpretation.
pub fn load_config(
    path: impl AsRef<Path>,
    overrides: &[String],
    seed: Option<u64>,
    workers: Option<usize>,
) -> Result<LoadedConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| AbcError::io(path.display().to_string(), e))?;
    let base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    config_from_text(&text, &base_dir, overrides, seed, workers)
}

/// Interpret config text; relative file references resolve against
/// `base_dir`.
pub fn config_from_text(
    text: &str,
    base_dir: &Path,
    overrides: &[String],
    seed: Option<u64>,
    workers: Option<usize>,
) -> Result<LoadedConfig> {
    let mut raw = RawConfig::parse(text)?;
    for o in overrides {
        raw.apply_override(o)?;
    }
    if let Some(s) = seed {
        raw.apply_override(&format!("experiment.seed={s}"))?;
    }
    if let Some(w) = workers {
        raw.apply_override(&format!("experiment.workers={w}"))?;
    }
    build(&raw, base_dir)
}

fn build_data(raw: &RawConfig, base_dir: &Path) -> Result<Option<DataSettings>> {
    Ok(match raw.section("data") {
        None => None,
        Some(_) => Some(DataSettings {
            counts_file: base_dir.join(require(raw, "data", "counts_file")?),
            hour: match raw.get("data", "hour") {
                Some(v) => parse_num("data", "hour", v)?,
                None => 12,
            },
            weekdays_only: match raw.get("data", "weekdays_only") {
                Some(v) => parse_bool("data", "weekdays_only", v)?,
                None => true,
            },
            node1_value: match raw.get("data", "node1_value") {
                Some(v) => parse_num("data", "node1_value", v)?,
                None => 380.0,
            },
            output: base_dir.join(require(raw, "data", "output")?),
        }),
    })
}

/// Parse only the `[data]` section of a config (syntax and key whitelists
/// still fully enforced). Lets `ingest` produce the observed-summary file a
/// config's `[observed] file` entry points at before that file exists.
pub fn load_data_settings(
    path: impl AsRef<Path>,
    overrides: &[String],
) -> Result<Option<DataSettings>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| AbcError::io(path.display().to_string(), e))?;
    let mut raw = RawConfig::parse(&text)?;
    for o in overrides {
        raw.apply_override(o)?;
    }
    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
    build_data(&raw, base_dir)
}

fn build(raw: &RawConfig, base_dir: &Path) -> Result<LoadedConfig> {
    // Simulator.
    let model = require(raw, "experiment", "model")?.to_ascii_lowercase();
    let n_samples = match raw.get("simulator", "n_samples") {
        Some(v) => parse_num("simulator", "n_samples", v)?,
        None => 100usize,
    };
    let summary = match raw.get("simulator", "summary") {
        Some(v) => GaussianSummary::parse(v)?,
        None => GaussianSummary::MeanSd,
    };
    let ticks = match raw.get("simulator", "ticks") {
        Some(v) => parse_num("simulator", "ticks", v)?,
        None => 100usize,
    };
    let entry_weights = match raw.get("simulator", "entry_weights") {
        Some(v) => parse_f64_list("simulator", "entry_weights", v)?,
        None => Vec::new(),
    };
    if model == "cbd" && entry_weights.is_empty() {
        return Err(AbcError::Config(
            "[simulator] entry_weights is required for the cbd model".into(),
        ));
    }
    let simulator = Simulator::builtin(&model, n_samples, summary, ticks, entry_weights)?;

    // Engine selection and loop controls.
    let engine = EngineKind::parse(require(raw, "experiment", "engine")?)?;
    let particles = parse_num("experiment", "particles", require(raw, "experiment", "particles")?)?;
    let populations =
        parse_num("experiment", "populations", require(raw, "experiment", "populations")?)?;
    let epsilon0: f64 = {
        let v = require(raw, "experiment", "epsilon0")?;
        if v.eq_ignore_ascii_case("inf") {
            f64::INFINITY
        } else {
            parse_num("experiment", "epsilon0", v)?
        }
    };
    let schedule = EpsilonSchedule::parse(require(raw, "experiment", "schedule")?)?;
    let distance = DistanceKind::parse(require(raw, "experiment", "distance")?)?;
    let standardize = match raw.get("experiment", "standardize") {
        Some(v) => parse_bool("experiment", "standardize", v)?,
        None => false,
    };
    let max_attempts = match raw.get("experiment", "max_attempts") {
        Some(v) => parse_num("experiment", "max_attempts", v)?,
        None => DEFAULT_MAX_ATTEMPTS,
    };
    let keep_fraction = match raw.get("experiment", "keep_fraction") {
        Some(v) => parse_num("experiment", "keep_fraction", v)?,
        None if engine == EngineKind::RejectionTopQuantile => {
            return Err(AbcError::Config(
                "engine rejection_top_quantile requires [experiment] keep_fraction".into(),
            ))
        }
        None => 0.01,
    };
    let seed = parse_num("experiment", "seed", require(raw, "experiment", "seed")?)?;
    let workers = match raw.get("experiment", "workers") {
        Some(v) => parse_num("experiment", "workers", v)?,
        None => 1usize,
    };

    // Priors, in declaration order, with layout blocks cloned from the
    // simulator so component naming always agrees.
    let prior_entries = raw
        .section("priors")
        .ok_or_else(|| AbcError::Config("missing [priors] section".into()))?;
    if prior_entries.is_empty() {
        return Err(AbcError::Config("[priors] section declares no parameters".into()));
    }
    let mut blocks = Vec::new();
    let mut priors = Vec::new();
    for (name, spec, line) in prior_entries {
        let (_, block) = simulator.layout().block_by_name(name).ok_or_else(|| {
            AbcError::Parse {
                line: *line,
                msg: format!("prior for `{name}`, which the {model} model does not take"),
            }
        })?;
        blocks.push(block.clone());
        priors.push(DistributionSpec::parse(spec)?);
    }
    let inferred = ParamLayout::new(blocks)?;

    // Fixed values.
    let mut fixed = Vec::new();
    if let Some(entries) = raw.section("fixed") {
        for (name, value, line) in entries {
            let (_, block) = simulator.layout().block_by_name(name).ok_or_else(|| {
                AbcError::Parse {
                    line: *line,
                    msg: format!("fixed value for `{name}`, which the {model} model does not take"),
                }
            })?;
            let v = match block {
                ParamBlock::Scalar { .. } => {
                    Value::Scalar(parse_num("fixed", name, value)?)
                }
                ParamBlock::Simplex { .. } => {
                    Value::Simplex(parse_f64_list("fixed", name, value)?)
                }
            };
            fixed.push((name.clone(), v));
        }
    }

    // Kernel.
    let kernel = KernelSpec::parse(require(raw, "kernel", "spec")?)?;

    // Observed summary: inline values or a named-pairs file.
    let observed = match (raw.get("observed", "values"), raw.get("observed", "file")) {
        (Some(values), None) => {
            let vals = parse_f64_list("observed", "values", values)?;
            let names = simulator.summary_names();
            if vals.len() != names.len() {
                return Err(AbcError::Config(format!(
                    "[observed] values has {} entries but the {model} model produces {} summaries ({})",
                    vals.len(),
                    names.len(),
                    names.join(", ")
                )));
            }
            SummaryVector::new(names, vals)?
        }
        (None, Some(file)) => {
            let path = base_dir.join(file);
            let loaded = read_observed_summary(&path)?;
            let names = simulator.summary_names();
            let mut vals = Vec::with_capacity(names.len());
            for name in &names {
                let idx = loaded.names.iter().position(|n| n == name).ok_or_else(|| {
                    AbcError::Config(format!(
                        "observed-summary file {} lacks counter `{name}`",
                        path.display()
                    ))
                })?;
                vals.push(loaded.values[idx]);
            }
            if loaded.names.len() != names.len() {
                return Err(AbcError::Config(format!(
                    "observed-summary file {} has {} counters but the {model} model produces {}",
                    path.display(),
                    loaded.names.len(),
                    names.len()
                )));
            }
            SummaryVector::new(names, vals)?
        }
        (Some(_), Some(_)) => {
            return Err(AbcError::Config(
                "[observed] must set either `values` or `file`, not both".into(),
            ))
        }
        (None, None) => {
            return Err(AbcError::Config(
                "missing [observed] section with `values` or `file`".into(),
            ))
        }
    };

    // Sweep settings.
    let mut sweep = SweepSettings::default();
    if let Some(v) = raw.get("sweep", "points") {
        sweep.points = parse_num("sweep", "points", v)?;
    }
    if let Some(v) = raw.get("sweep", "replicates") {
        sweep.replicates = parse_num("sweep", "replicates", v)?;
    }
    if let Some(v) = raw.get("sweep", "budget") {
        sweep.budget = parse_num("sweep", "budget", v)?;
    }
    if sweep.points < 1 || sweep.replicates < 1 || !(sweep.budget >= 1.0) {
        return Err(AbcError::Config(
            "[sweep] points and replicates must be >= 1 and budget >= 1".into(),
        ));
    }

    // Ingestion settings.
    let data = build_data(raw, base_dir)?;

    // Aliases must point at real parameter columns.
    let mut aliases = Vec::new();
    if let Some(entries) = raw.section("aliases") {
        let columns = inferred.column_names();
        for (alias, column, line) in entries {
            if !columns.iter().any(|c| c == column) {
                return Err(AbcError::Parse {
                    line: *line,
                    msg: format!("alias `{alias}` targets unknown parameter `{column}`"),
                });
            }
            aliases.push((alias.clone(), column.clone()));
        }
    }

    let mut experiment = ExperimentConfig {
        simulator,
        inferred,
        priors,
        fixed,
        kernel,
        distance,
        standardize,
        observed,
        engine,
        particles,
        populations,
        epsilon0,
        schedule,
        keep_fraction,
        max_attempts,
        seed,
        workers,
        config_hash: String::new(),
    };
    experiment.validate()?;

    let echo = canonical_echo(&experiment, &sweep, data.as_ref(), &aliases);
    let hash = hex_sha256(&echo);
    experiment.config_hash = hash.clone();

    Ok(LoadedConfig {
        experiment,
        sweep,
        data,
        aliases,
        echo,
        hash,
    })
}

fn fmt_f64(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}

/// Render the effective configuration as canonical, self-contained config
/// text (defaults materialized, observed values inlined, fixed key order).
pub fn canonical_echo(
    experiment: &ExperimentConfig,
    sweep: &SweepSettings,
    data: Option<&DataSettings>,
    aliases: &[(String, String)],
) -> String {
    let mut out = String::new();
    out.push_str("[experiment]\n");
    out.push_str(&format!("model = {}\n", model_id(experiment.simulator.kind())));
    out.push_str(&format!("engine = {}\n", experiment.engine));
    out.push_str(&format!("particles = {}\n", experiment.particles));
    out.push_str(&format!("populations = {}\n", experiment.populations));
    out.push_str(&format!("epsilon0 = {}\n", fmt_f64(experiment.epsilon0)));
    out.push_str(&format!("schedule = {}\n", experiment.schedule));
    out.push_str(&format!("distance = {}\n", experiment.distance));
    out.push_str(&format!("standardize = {}\n", experiment.standardize));
    out.push_str(&format!("max_attempts = {}\n", experiment.max_attempts));
    out.push_str(&format!("keep_fraction = {}\n", fmt_f64(experiment.keep_fraction)));
    out.push_str(&format!("seed = {}\n", experiment.seed));
    out.push_str(&format!("workers = {}\n", experiment.workers));
    out.push_str("\n[simulator]\n");
    match experiment.simulator.kind() {
        ModelKind::Gaussian { n_samples, summary } => {
            out.push_str(&format!("n_samples = {n_samples}\n"));
            out.push_str(&format!("summary = {summary}\n"));
        }
        ModelKind::Fork { ticks } => {
            out.push_str(&format!("ticks = {ticks}\n"));
        }
        ModelKind::Cbd { ticks, entry_weights } | ModelKind::Network { ticks, entry_weights, .. } => {
            out.push_str(&format!("ticks = {ticks}\n"));
            let list = entry_weights
                .iter()
                .map(|w| fmt_f64(*w))
                .collect::<Vec<_>>()
                .join(", ");
            out.push_str(&format!("entry_weights = {list}\n"));
        }
    }
    out.push_str("\n[priors]\n");
    for (block, prior) in experiment.inferred.blocks().iter().zip(&experiment.priors) {
        out.push_str(&format!("{} = {prior}\n", block.name()));
    }
    if !experiment.fixed.is_empty() {
        out.push_str("\n[fixed]\n");
        for (name, value) in &experiment.fixed {
            let v = match value {
                Value::Scalar(x) => fmt_f64(*x),
                Value::Simplex(xs) => xs
                    .iter()
                    .map(|x| fmt_f64(*x))
                    .collect::<Vec<_>>()
                    .join(", "),
            };
            out.push_str(&format!("{name} = {v}\n"));
        }
    }
    out.push_str("\n[kernel]\n");
    out.push_str(&format!("spec = {}\n", experiment.kernel));
    out.push_str("\n[observed]\n");
    let values = experiment
        .observed
        .values
        .iter()
        .map(|v| fmt_f64(*v))
        .collect::<Vec<_>>()
        .join(", ");
    out.push_str(&format!("values = {values}\n"));
    out.push_str("\n[sweep]\n");
    out.push_str(&format!("points = {}\n", sweep.points));
    out.push_str(&format!("replicates = {}\n", sweep.replicates));
    out.push_str(&format!("budget = {}\n", fmt_f64(sweep.budget)));
    if let Some(d) = data {
        out.push_str("\n[data]\n");
        out.push_str(&format!("counts_file = {}\n", d.counts_file.display()));
        out.push_str(&format!("hour = {}\n", d.hour));
        out.push_str(&format!("weekdays_only = {}\n", d.weekdays_only));
        out.push_str(&format!("node1_value = {}\n", fmt_f64(d.node1_value)));
        out.push_str(&format!("output = {}\n", d.output.display()));
    }
    if !aliases.is_empty() {
        out.push_str("\n[aliases]\n");
        for (alias, column) in aliases {
            out.push_str(&format!("{alias} = {column}\n"));
        }
    }
    out
}

pub fn hex_sha256(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
