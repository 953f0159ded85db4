//! Durable run artifacts: particle tables, diagnostics metadata, posterior
//! summaries, and plot-ready data files.
//!
//! Layout under an output directory:
//! `config.echo`, `meta.json`, `populations/pop_001.csv…`,
//! `posterior_summary.csv`, `plots/*.csv`. All files are ASCII and
//! newline-terminated; floats are written with 17 significant digits so a
//! read-back is bit-exact, and a rerun from `config.echo` + seed reproduces
//! the particle tables byte-for-byte.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{hex_sha256, LoadedConfig};
use crate::error::{AbcError, Result};
use crate::inference::{EngineKind, RunRecord};
use crate::kernels::{Diagnostics, Particle, Population};
use crate::params::ParamLayout;
use crate::posterior::{credible_interval, weighted_mean, weighted_variance, PosteriorSample};

/// 17-significant-digit float rendering (lossless for 64-bit values).
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_float(text: &str, path: &Path, line: usize) -> Result<f64> {
    text.trim().parse().map_err(|_| AbcError::Parse {
        line,
        msg: format!("`{}` is not a number in {}", text.trim(), path.display()),
    })
}

fn write_file(path: &Path, contents: &str) -> Result<PathBuf> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| AbcError::io(parent.display().to_string(), e))?;
    }
    std::fs::write(path, contents).map_err(|e| AbcError::io(path.display().to_string(), e))?;
    Ok(path.to_path_buf())
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| AbcError::io(path.display().to_string(), e))
}

/// Store the canonical config text as `<out>/config.echo`.
pub fn write_config_echo(out_dir: &Path, echo: &str) -> Result<PathBuf> {
    write_file(&out_dir.join("config.echo"), echo)
}

/// Write one population as `<out>/populations/pop_<ttt>.csv` with columns
/// `particle_id`, one per parameter column, `weight`, `distance`,
/// `sim_attempts`; rows ordered by particle id.
pub fn write_population(
    out_dir: &Path,
    layout: &ParamLayout,
    pop: &Population,
) -> Result<PathBuf> {
    let mut out = String::from("particle_id");
    for name in layout.column_names() {
        out.push(',');
        out.push_str(&name);
    }
    out.push_str(",weight,distance,sim_attempts\n");
    for (i, p) in pop.particles.iter().enumerate() {
        out.push_str(&format!("{}", i + 1));
        for v in &p.params {
            out.push(',');
            out.push_str(&fmt_float(*v));
        }
        out.push_str(&format!(
            ",{},{},{}\n",
            fmt_float(p.weight),
            fmt_float(p.distance),
            p.sim_attempts
        ));
    }
    write_file(&population_path(out_dir, pop.t), &out)
}

pub fn population_path(out_dir: &Path, t: usize) -> PathBuf {
    out_dir.join("populations").join(format!("pop_{t:03}.csv"))
}

/// Read a population table back: the 1-based population index (from the file
/// name) and its particles. Simulated summaries are not stored in the table,
/// so loaded particles carry an empty summary.
pub fn read_population(path: &Path) -> Result<(usize, Vec<Particle>)> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default();
    let t: usize = stem
        .strip_prefix("pop_")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| {
            AbcError::Config(format!(
                "population file name `{}` is not pop_<index>.csv",
                path.display()
            ))
        })?;
    let text = read_file(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(AbcError::Parse {
        line: 1,
        msg: format!("{} is empty", path.display()),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 4
        || cols.first() != Some(&"particle_id")
        || cols[cols.len() - 3..] != ["weight", "distance", "sim_attempts"]
    {
        return Err(AbcError::Parse {
            line: 1,
            msg: format!("{} has an unexpected header", path.display()),
        });
    }
    let n_params = cols.len() - 4;
    let mut particles = Vec::new();
    for (idx, row) in lines {
        let line = idx + 1;
        if row.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != cols.len() {
            return Err(AbcError::Parse {
                line,
                msg: format!(
                    "expected {} fields, got {} in {}",
                    cols.len(),
                    fields.len(),
                    path.display()
                ),
            });
        }
        let params = fields[1..1 + n_params]
            .iter()
            .map(|f| parse_float(f, path, line))
            .collect::<Result<Vec<f64>>>()?;
        let weight = parse_float(fields[1 + n_params], path, line)?;
        let distance = parse_float(fields[2 + n_params], path, line)?;
        let sim_attempts: u64 = fields[3 + n_params].trim().parse().map_err(|_| {
            AbcError::Parse {
                line,
                msg: format!("bad sim_attempts in {}", path.display()),
            }
        })?;
        particles.push(Particle {
            params,
            weight,
            distance,
            sim_attempts,
            summary: Vec::new(),
        });
    }
    Ok((t, particles))
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaPopDoc {
    t: usize,
    epsilon: String,
    acceptance_rate: String,
    iterations: u64,
    simulations: u64,
    mean_distance: String,
    mean_attempts: String,
    wall_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    data_kernel_scale: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaDoc {
    version: String,
    engine: String,
    seed: u64,
    config_echo: String,
    config_hash: String,
    populations: Vec<MetaPopDoc>,
}

fn meta_float(text: &str) -> Result<f64> {
    text.parse()
        .map_err(|_| AbcError::Config(format!("metadata value `{text}` is not a number")))
}

/// Write `<out>/meta.json`: provenance (engine version, seed, config echo
/// and hash) plus per-population diagnostics. Floats are stored as lossless
/// strings so non-finite epsilons survive the JSON round trip.
pub fn write_metadata(out_dir: &Path, run: &RunRecord, echo: &str) -> Result<PathBuf> {
    let populations = run
        .populations
        .iter()
        .enumerate()
        .map(|(i, pop)| {
            let n = pop.particles.len().max(1) as f64;
            let mean_distance = pop.particles.iter().map(|p| p.distance).sum::<f64>() / n;
            let mean_attempts = pop.diagnostics.iterations as f64 / n;
            MetaPopDoc {
                t: pop.t,
                epsilon: fmt_float(pop.epsilon),
                acceptance_rate: fmt_float(pop.diagnostics.acceptance_rate),
                iterations: pop.diagnostics.iterations,
                simulations: pop.diagnostics.simulations,
                mean_distance: fmt_float(mean_distance),
                mean_attempts: fmt_float(mean_attempts),
                wall_ms: pop.diagnostics.wall_ms,
                data_kernel_scale: run
                    .data_kernel_scales
                    .get(i)
                    .and_then(|s| s.as_ref())
                    .map(|s| s.iter().map(|v| fmt_float(*v)).collect()),
            }
        })
        .collect();
    let doc = MetaDoc {
        version: env!("CARGO_PKG_VERSION").to_string(),
        engine: run.engine.to_string(),
        seed: run.seed,
        config_echo: echo.to_string(),
        config_hash: run.config_hash.clone(),
        populations,
    };
    let json = serde_json::to_string_pretty(&doc)
        .map_err(|e| AbcError::Config(format!("metadata serialization failed: {e}")))?;
    write_file(&out_dir.join("meta.json"), &format!("{json}\n"))
}

/// Write `<out>/posterior_summary.csv`: parameter, alias, mean, variance,
/// and the equal-tailed credible interval at `mass`.
pub fn write_posterior_summary(
    out_dir: &Path,
    ps: &PosteriorSample,
    aliases: &[(String, String)],
    mass: f64,
) -> Result<PathBuf> {
    let mut out = String::from("parameter,alias,mean,variance,ci_lo,ci_hi\n");
    for name in ps.column_names() {
        let alias = aliases
            .iter()
            .find(|(_, col)| *col == name)
            .map(|(a, _)| a.as_str())
            .unwrap_or("");
        let mean = weighted_mean(ps, &name)?;
        let var = weighted_variance(ps, &name)?;
        let (lo, hi) = match credible_interval(ps, &name, mass) {
            Ok(ci) => ci,
            // A constant column has a zero-width interval.
            Err(AbcError::DegeneratePopulation(_)) => (mean, mean),
            Err(e) => return Err(e),
        };
        out.push_str(&format!(
            "{name},{alias},{},{},{},{}\n",
            fmt_float(mean),
            fmt_float(var),
            fmt_float(lo),
            fmt_float(hi)
        ));
    }
    write_file(&out_dir.join("posterior_summary.csv"), &out)
}

/// Plot-data flavors emitted as tidy long-format tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    PosteriorHist,
    MeanTrajectory,
    VarianceTrajectory,
    AcceptanceEpsilon,
    DistanceVsParam,
}

impl PlotKind {
    pub const ALL: [PlotKind; 5] = [
        PlotKind::PosteriorHist,
        PlotKind::MeanTrajectory,
        PlotKind::VarianceTrajectory,
        PlotKind::AcceptanceEpsilon,
        PlotKind::DistanceVsParam,
    ];

    pub fn parse(text: &str) -> Result<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "posterior_hist" => Ok(PlotKind::PosteriorHist),
            "mean_trajectory" => Ok(PlotKind::MeanTrajectory),
            "variance_trajectory" => Ok(PlotKind::VarianceTrajectory),
            "acceptance_epsilon" => Ok(PlotKind::AcceptanceEpsilon),
            "distance_vs_param" => Ok(PlotKind::DistanceVsParam),
            other => Err(AbcError::UnknownName(format!("unknown plot kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for PlotKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PlotKind::PosteriorHist => "posterior_hist",
            PlotKind::MeanTrajectory => "mean_trajectory",
            PlotKind::VarianceTrajectory => "variance_trajectory",
            PlotKind::AcceptanceEpsilon => "acceptance_epsilon",
            PlotKind::DistanceVsParam => "distance_vs_param",
        })
    }
}

fn weighted_column_mean(pop: &Population, col: usize) -> f64 {
    pop.particles.iter().map(|p| p.weight * p.params[col]).sum()
}

/// Emit one plot-data table as `<out>/plots/<kind>.csv`.
pub fn emit_plot_data(
    out_dir: &Path,
    layout: &ParamLayout,
    run: &RunRecord,
    kind: PlotKind,
) -> Result<PathBuf> {
    let columns = layout.column_names();
    let mut out = String::new();
    match kind {
        PlotKind::PosteriorHist => {
            out.push_str("population,parameter,value,weight\n");
            if let Some(pop) = run.populations.last() {
                for p in &pop.particles {
                    for (c, name) in columns.iter().enumerate() {
                        out.push_str(&format!(
                            "{},{name},{},{}\n",
                            pop.t,
                            fmt_float(p.params[c]),
                            fmt_float(p.weight)
                        ));
                    }
                }
            }
        }
        PlotKind::MeanTrajectory => {
            out.push_str("population,parameter,mean\n");
            for pop in &run.populations {
                for (c, name) in columns.iter().enumerate() {
                    out.push_str(&format!(
                        "{},{name},{}\n",
                        pop.t,
                        fmt_float(weighted_column_mean(pop, c))
                    ));
                }
            }
        }
        PlotKind::VarianceTrajectory => {
            out.push_str("population,parameter,variance\n");
            for pop in &run.populations {
                for (c, name) in columns.iter().enumerate() {
                    let mean = weighted_column_mean(pop, c);
                    let var: f64 = pop
                        .particles
                        .iter()
                        .map(|p| p.weight * (p.params[c] - mean) * (p.params[c] - mean))
                        .sum();
                    out.push_str(&format!("{},{name},{}\n", pop.t, fmt_float(var)));
                }
            }
        }
        PlotKind::AcceptanceEpsilon => {
            out.push_str("population,epsilon,acceptance_rate,iterations,simulations,mean_distance\n");
            for pop in &run.populations {
                let n = pop.particles.len().max(1) as f64;
                let mean_distance = pop.particles.iter().map(|p| p.distance).sum::<f64>() / n;
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    pop.t,
                    fmt_float(pop.epsilon),
                    fmt_float(pop.diagnostics.acceptance_rate),
                    pop.diagnostics.iterations,
                    pop.diagnostics.simulations,
                    fmt_float(mean_distance)
                ));
            }
        }
        PlotKind::DistanceVsParam => {
            out.push_str("population,parameter,value,distance\n");
            if let Some(pop) = run.populations.last() {
                for p in &pop.particles {
                    for (c, name) in columns.iter().enumerate() {
                        out.push_str(&format!(
                            "{},{name},{},{}\n",
                            pop.t,
                            fmt_float(p.params[c]),
                            fmt_float(p.distance)
                        ));
                    }
                }
            }
        }
    }
    write_file(&out_dir.join("plots").join(format!("{kind}.csv")), &out)
}

/// Write the complete artifact for a finished run: config echo, metadata,
/// per-population tables, posterior summary, and every plot table.
pub fn write_run_artifact(
    out_dir: &Path,
    loaded: &LoadedConfig,
    run: &RunRecord,
) -> Result<()> {
    write_config_echo(out_dir, &loaded.echo)?;
    write_metadata(out_dir, run, &loaded.echo)?;
    let layout = &loaded.experiment.inferred;
    for pop in &run.populations {
        write_population(out_dir, layout, pop)?;
    }
    let ps = PosteriorSample::from_record(run, layout)?;
    write_posterior_summary(out_dir, &ps, &loaded.aliases, 0.95)?;
    for kind in PlotKind::ALL {
        emit_plot_data(out_dir, layout, run, kind)?;
    }
    Ok(())
}

/// A re-loaded artifact: the interpreted stored config plus the run record
/// reconstructed from metadata and particle tables.
#[derive(Debug)]
pub struct RunArtifact {
    pub config: LoadedConfig,
    pub record: RunRecord,
}

impl RunArtifact {
    pub fn load(out_dir: &Path) -> Result<Self> {
        let echo = read_file(&out_dir.join("config.echo"))?;
        let config = crate::config::config_from_text(&echo, out_dir, &[], None, None)?;
        let meta_text = read_file(&out_dir.join("meta.json"))?;
        let meta: MetaDoc = serde_json::from_str(&meta_text)
            .map_err(|e| AbcError::Config(format!("meta.json does not parse: {e}")))?;
        if meta.config_hash != hex_sha256(&echo) || meta.config_echo != echo {
            return Err(AbcError::Config(format!(
                "artifact {} is inconsistent: meta.json config copy does not match config.echo",
                out_dir.display()
            )));
        }
        if meta.seed != config.experiment.seed {
            return Err(AbcError::Config(
                "artifact is inconsistent: meta.json seed differs from config.echo".into(),
            ));
        }
        let engine = EngineKind::parse(&meta.engine)?;
        let mut populations = Vec::with_capacity(meta.populations.len());
        let mut data_kernel_scales = Vec::with_capacity(meta.populations.len());
        for mp in &meta.populations {
            let path = population_path(out_dir, mp.t);
            let (t, particles) = read_population(&path)?;
            if t != mp.t {
                return Err(AbcError::Config(format!(
                    "artifact population file {} disagrees with metadata index {}",
                    path.display(),
                    mp.t
                )));
            }
            populations.push(Population {
                t,
                epsilon: meta_float(&mp.epsilon)?,
                particles,
                diagnostics: Diagnostics {
                    acceptance_rate: meta_float(&mp.acceptance_rate)?,
                    iterations: mp.iterations,
                    simulations: mp.simulations,
                    wall_ms: mp.wall_ms,
                },
            });
            data_kernel_scales.push(match &mp.data_kernel_scale {
                None => None,
                Some(vs) => Some(vs.iter().map(|v| meta_float(v)).collect::<Result<_>>()?),
            });
        }
        // Every stored population table must be accounted for in metadata.
        let pop_dir = out_dir.join("populations");
        if pop_dir.is_dir() {
            let stored = std::fs::read_dir(&pop_dir)
                .map_err(|e| AbcError::io(pop_dir.display().to_string(), e))?
                .count();
            if stored != meta.populations.len() {
                return Err(AbcError::Config(format!(
                    "artifact has {stored} population tables but metadata lists {}",
                    meta.populations.len()
                )));
            }
        }
        let record = RunRecord {
            engine,
            seed: meta.seed,
            config_hash: meta.config_hash,
            populations,
            data_kernel_scales,
        };
        Ok(RunArtifact { config, record })
    }
}
