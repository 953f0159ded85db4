//! Command-line front end: config-driven inference runs, grid sweeps,
//! posterior post-processing, and counter-data ingestion.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use abcnet::config::{load_config, LoadedConfig};
use abcnet::distributions::{gk_quantile, standard_normal_quantile, DistributionSpec};
use abcnet::error::{AbcError, Result};
use abcnet::inference::{self, RunRecord};
use abcnet::ingest;
use abcnet::params::ParamBlock;
use abcnet::persistence::{self, fmt_float, RunArtifact};
use abcnet::posterior::{
    credible_interval, prediction_intervals, regression_adjust, weighted_mean, weighted_variance,
    AdjustRegressor, PosteriorSample,
};
use abcnet::rng::{child_rng, Domain};
use abcnet::summaries::summary_distance;

/// Resimulation draws behind `predict`.
const PREDICT_DRAWS: usize = 1000;
/// Credible / prediction interval mass used in reports.
const REPORT_MASS: f64 = 0.95;

#[derive(Parser)]
#[command(
    name = "abcnet",
    version,
    about = "Likelihood-free Bayesian inference for seeded network simulators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config file
    #[arg(long)]
    config: PathBuf,
    /// Directory for run artifacts
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Replace the config's RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the config's worker count
    #[arg(long)]
    workers: Option<usize>,
    /// Config override as section.key=value (repeatable)
    #[arg(long = "override", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct ArtifactArgs {
    /// Directory holding a completed run artifact
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Replace the stored seed for post-processing draws
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the stored worker count
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured inference engine and write the artifact
    Run(ConfigArgs),
    /// Evaluate the simulator over a parameter grid, reporting distances
    Sweep(ConfigArgs),
    /// Regression-adjust the final population of a stored run
    Adjust(ArtifactArgs),
    /// Posterior predictive intervals from a stored run
    Predict(ArtifactArgs),
    /// Build an observed-summary file from raw counter data
    Ingest(ConfigArgs),
    /// Parse, validate, and echo a config
    ValidateConfig(ConfigArgs),
}

fn main() -> ExitCode {
    // Rust turns EPIPE into a panic by default; restore the conventional
    // die-quietly behavior for pipelines like `abcnet run … | head`.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Adjust(a) => cmd_adjust(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Ingest(a) => cmd_ingest(&a),
        Command::ValidateConfig(a) => cmd_validate_config(&a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load(args: &ConfigArgs) -> Result<LoadedConfig> {
    load_config(&args.config, &args.overrides, args.seed, args.workers)
}

fn print_posterior_table(
    ps: &PosteriorSample,
    aliases: &[(String, String)],
    title: &str,
) -> Result<()> {
    println!("{title}");
    println!(
        "{:<14} {:<6} {:>12} {:>12} {:>12} {:>12}",
        "parameter", "alias", "mean", "variance", "2.5%", "97.5%"
    );
    for name in ps.column_names() {
        let alias = aliases
            .iter()
            .find(|(_, col)| *col == name)
            .map(|(a, _)| a.as_str())
            .unwrap_or("");
        let mean = weighted_mean(ps, &name)?;
        let var = weighted_variance(ps, &name)?;
        let (lo, hi) = match credible_interval(ps, &name, REPORT_MASS) {
            Ok(ci) => ci,
            Err(AbcError::DegeneratePopulation(_)) => (mean, mean),
            Err(e) => return Err(e),
        };
        println!("{name:<14} {alias:<6} {mean:>12.6} {var:>12.6} {lo:>12.6} {hi:>12.6}");
    }
    Ok(())
}

fn print_diagnostics(run: &RunRecord) {
    println!(
        "{:<5} {:>12} {:>10} {:>12} {:>12} {:>12} {:>9}",
        "pop", "epsilon", "accept", "iterations", "simulations", "mean_dist", "wall_ms"
    );
    for pop in &run.populations {
        let n = pop.particles.len().max(1) as f64;
        let mean_distance = pop.particles.iter().map(|p| p.distance).sum::<f64>() / n;
        println!(
            "{:<5} {:>12.6} {:>10.4} {:>12} {:>12} {:>12.6} {:>9}",
            pop.t,
            pop.epsilon,
            pop.diagnostics.acceptance_rate,
            pop.diagnostics.iterations,
            pop.diagnostics.simulations,
            mean_distance,
            pop.diagnostics.wall_ms
        );
    }
}

fn cmd_run(args: &ConfigArgs) -> Result<()> {
    let cfg = load(args)?;
    let record = inference::run(&cfg.experiment)?;
    persistence::write_run_artifact(&args.out_dir, &cfg, &record)?;
    let ps = PosteriorSample::from_record(&record, &cfg.experiment.inferred)?;
    print_posterior_table(&ps, &cfg.aliases, "posterior summary (final population)")?;
    println!();
    print_diagnostics(&record);
    println!("\nartifact written to {}", args.out_dir.display());
    Ok(())
}

/// Per-parameter sweep grid: `points` representative values spanning the
/// prior. Quantile-backed families use the mid-point probability grid
/// (i + 1/2)/points; beta uses that grid directly on its (0, 1) support and
/// gamma an even grid on (0, mean + 4 sd].
fn scalar_grid(prior: &DistributionSpec, points: usize) -> Result<Vec<f64>> {
    let probs: Vec<f64> = (0..points).map(|i| (i as f64 + 0.5) / points as f64).collect();
    match prior {
        DistributionSpec::Uniform { lo, hi } => {
            Ok(probs.iter().map(|p| lo + (hi - lo) * p).collect())
        }
        DistributionSpec::Normal { mean, sd } => probs
            .iter()
            .map(|p| Ok(mean + sd * standard_normal_quantile(*p)?))
            .collect(),
        DistributionSpec::GandK { a, b, c, g, k } => probs
            .iter()
            .map(|p| gk_quantile(*p, *a, *b, *c, *g, *k))
            .collect(),
        DistributionSpec::Beta { .. } => Ok(probs),
        DistributionSpec::Gamma { .. } => {
            let (mean, var) = prior.moments().expect("gamma has closed-form moments");
            let hi = mean + 4.0 * var.sqrt();
            Ok(probs.iter().map(|p| p * hi).collect())
        }
        DistributionSpec::Categorical { probs } => {
            // Index-valued support: up to `points` distinct category indices.
            Ok((0..probs.len().min(points)).map(|i| i as f64).collect())
        }
        DistributionSpec::Dirichlet { .. } => Err(AbcError::Config(
            "sweep grids need scalar priors; simplex parameters have no 1-D grid".into(),
        )),
    }
}

fn cmd_sweep(args: &ConfigArgs) -> Result<()> {
    let cfg = load(args)?;
    let exp = &cfg.experiment;
    let points = cfg.sweep.points;
    let flat_len = exp.inferred.flat_len();
    // Refuse combinatorial blow-up before building anything: the grid has
    // points^P rows for P parameters.
    let grid_size = (points as f64).powi(flat_len as i32);
    if grid_size > cfg.sweep.budget {
        return Err(AbcError::BudgetExceeded {
            points: grid_size,
            budget: cfg.sweep.budget,
        });
    }
    let assembler = exp.validate()?;
    let grids = exp
        .priors
        .iter()
        .zip(exp.inferred.blocks())
        .map(|(prior, block)| match block {
            ParamBlock::Scalar { .. } => scalar_grid(prior, points),
            ParamBlock::Simplex { name, .. } => Err(AbcError::Config(format!(
                "sweep grids need scalar priors; `{name}` is a simplex"
            ))),
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let total = grids.iter().map(Vec::len).product::<usize>();
    let replicates = cfg.sweep.replicates;

    let mut out = String::new();
    for b in exp.inferred.blocks() {
        out.push_str(b.name());
        out.push(',');
    }
    out.push_str("distance\n");

    let mut best: Option<(Vec<f64>, f64)> = None;
    for g in 0..total {
        // Row-major decode: the last parameter varies fastest.
        let mut rem = g;
        let mut point = Vec::with_capacity(flat_len);
        for grid in grids.iter().rev() {
            point.push(grid[rem % grid.len()]);
            rem /= grid.len();
        }
        point.reverse();
        let full = assembler.assemble(&point);
        let mut total_d = 0.0;
        for r in 0..replicates {
            let mut rng = child_rng(exp.seed, Domain::Sweep, r as u64, g as u64);
            let sim = exp.simulator.simulate(&full, &mut rng)?;
            total_d += summary_distance(exp.distance, &sim, &exp.observed, exp.standardize)?;
        }
        let mean_d = total_d / replicates as f64;
        for v in &point {
            out.push_str(&fmt_float(*v));
            out.push(',');
        }
        out.push_str(&fmt_float(mean_d));
        out.push('\n');
        if best.as_ref().map_or(true, |(_, d)| mean_d < *d) {
            best = Some((point, mean_d));
        }
    }

    let path = args.out_dir.join("sweep.csv");
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| AbcError::io(parent.display().to_string(), e))?;
    }
    std::fs::write(&path, &out).map_err(|e| AbcError::io(path.display().to_string(), e))?;
    println!(
        "swept {total} grid points x {replicates} replicate(s); table written to {}",
        path.display()
    );
    if let Some((point, d)) = best {
        let rendered: Vec<String> = exp
            .inferred
            .blocks()
            .iter()
            .zip(&point)
            .map(|(b, v)| format!("{} = {v:.6}", b.name()))
            .collect();
        println!("minimum mean distance {d:.6} at {}", rendered.join(", "));
    }
    Ok(())
}

fn cmd_adjust(args: &ArtifactArgs) -> Result<()> {
    let art = RunArtifact::load(&args.out_dir)?;
    let exp = &art.config.experiment;
    let ps = PosteriorSample::from_record(&art.record, &exp.inferred)?;
    let adjusted = regression_adjust(&ps, &exp.observed.values, AdjustRegressor::Distance)?;
    let path = persistence::write_posterior_summary(
        &args.out_dir,
        &adjusted,
        &art.config.aliases,
        REPORT_MASS,
    )?;
    let adjusted_path = args.out_dir.join("posterior_summary_adjusted.csv");
    std::fs::rename(&path, &adjusted_path)
        .map_err(|e| AbcError::io(adjusted_path.display().to_string(), e))?;
    // Restore the unadjusted table alongside the new one.
    persistence::write_posterior_summary(&args.out_dir, &ps, &art.config.aliases, REPORT_MASS)?;
    print_posterior_table(&ps, &art.config.aliases, "posterior summary (unadjusted)")?;
    println!();
    print_posterior_table(&adjusted, &art.config.aliases, "posterior summary (regression-adjusted)")?;
    println!("\nadjusted table written to {}", adjusted_path.display());
    Ok(())
}

fn cmd_predict(args: &ArtifactArgs) -> Result<()> {
    let art = RunArtifact::load(&args.out_dir)?;
    let mut exp = art.config.experiment.clone();
    if let Some(w) = args.workers {
        exp.workers = w;
    }
    let seed = args.seed.unwrap_or(exp.seed);
    let ps = PosteriorSample::from_record(&art.record, &exp.inferred)?;
    let intervals = prediction_intervals(&ps, &exp, PREDICT_DRAWS, REPORT_MASS, seed)?;

    let mut out = String::from("counter,lo,hi,observed,covered\n");
    println!(
        "{:<10} {:>12} {:>12} {:>12}  covered",
        "counter", "2.5%", "97.5%", "observed"
    );
    let mut covered_all = true;
    for (pi, obs) in intervals.iter().zip(&exp.observed.values) {
        let covered = pi.lo <= *obs && *obs <= pi.hi;
        covered_all &= covered;
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            pi.name,
            fmt_float(pi.lo),
            fmt_float(pi.hi),
            fmt_float(*obs),
            covered
        ));
        println!(
            "{:<10} {:>12.4} {:>12.4} {:>12.4}  {covered}",
            pi.name, pi.lo, pi.hi, obs
        );
    }
    let path = args.out_dir.join("predictions.csv");
    std::fs::write(&path, &out).map_err(|e| AbcError::io(path.display().to_string(), e))?;
    println!(
        "\n{} ({PREDICT_DRAWS} draws); table written to {}",
        if covered_all {
            "all observed counts fall inside their 95% prediction intervals"
        } else {
            "some observed counts fall outside their 95% prediction intervals"
        },
        path.display()
    );
    Ok(())
}

fn cmd_ingest(args: &ConfigArgs) -> Result<()> {
    // Only the [data] section is needed (and the observed-summary file this
    // command produces may not exist yet), so skip the full experiment build.
    let data = abcnet::config::load_data_settings(&args.config, &args.overrides)?
        .ok_or_else(|| {
            AbcError::Config("ingest needs a [data] section with counts_file and output".into())
        })?;
    let data = &data;
    let records = ingest::load_counts(&data.counts_file)?;
    let kept = ingest::filter_counts(&records, data.weekdays_only, data.hour)?;
    let means = ingest::mean_by_location(&kept);
    let summary = ingest::synthesize_mock_counters(&means, data.node1_value)?;
    ingest::write_observed_summary(&data.output, &summary)?;
    println!(
        "read {} rows, kept {} ({}hour {})",
        records.len(),
        kept.len(),
        if data.weekdays_only { "weekdays, " } else { "" },
        data.hour
    );
    for (loc, mean) in &means {
        println!("  {loc}: mean count {mean:.4}");
    }
    println!("observed summary:");
    for (name, value) in summary.names.iter().zip(&summary.values) {
        println!("  {name} = {value}");
    }
    println!("written to {}", data.output.display());
    Ok(())
}

fn cmd_validate_config(args: &ConfigArgs) -> Result<()> {
    let cfg = load(args)?;
    println!("ok: {} (sha256 {})", args.config.display(), cfg.hash);
    print!("{}", cfg.echo);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_grids_span_the_prior() {
        let g = scalar_grid(&DistributionSpec::Uniform { lo: 2.0, hi: 4.0 }, 4).unwrap();
        assert_eq!(g, vec![2.25, 2.75, 3.25, 3.75]);

        let g = scalar_grid(&DistributionSpec::Normal { mean: 1.0, sd: 2.0 }, 3).unwrap();
        assert_eq!(g.len(), 3);
        assert!((g[1] - 1.0).abs() < 1e-12, "median of the grid is the mean");
        assert!((g[0] + g[2] - 2.0).abs() < 1e-9, "grid symmetric about the mean");

        let g = scalar_grid(
            &DistributionSpec::Beta { alpha: 2.0, beta: 2.0 },
            10,
        )
        .unwrap();
        assert_eq!(g[0], 0.05);
        assert_eq!(g[9], 0.95);

        let g = scalar_grid(
            &DistributionSpec::Gamma { shape: 4.0, scale: 1.0 },
            8,
        )
        .unwrap();
        assert!(g.iter().all(|v| *v > 0.0));
        assert!((g[7] - (4.0 + 4.0 * 2.0) * (7.5 / 8.0)).abs() < 1e-12);

        assert!(scalar_grid(
            &DistributionSpec::Dirichlet { alpha: vec![1.0, 1.0] },
            4
        )
        .is_err());
    }
}
