//! The ABC engines: rejection sampling (plain and top-quantile), sequential
//! Monte Carlo with and without adaptive data-driven resampling weights,
//! epsilon schedules, and a Bayesian synthetic-likelihood estimator.
//!
//! Determinism contract: every proposal k in population t draws from
//! dedicated child streams keyed by (root seed, domain, t, k). Proposals are
//! generated in index order and evaluated in fixed-size batches whose results
//! merge back by index, so runs are byte-identical for any worker count.

use std::collections::HashSet;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::distributions::{DistributionSpec, Value};
use crate::error::{AbcError, Result};
use crate::kernels::{
    adaptive_data_weights, joint_log_prior, kernel_log_density, log_sum_exp, perturb,
    population_scale, smc_log_weight, Diagnostics, KernelSpec, Particle, Population, Scales,
    VARIANCE_FLOOR,
};
use crate::linalg::SymMatrix;
use crate::network::Simulator;
use crate::params::{ParamBlock, ParamLayout};
use crate::rng::{child_rng, Domain};
use crate::summaries::{distance, DistanceKind, SummaryVector};

/// Proposals evaluated per scheduling batch; fixed so that worker count never
/// changes which proposals exist.
const PROPOSAL_BATCH: usize = 128;

/// Inference engine selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineKind {
    Rejection,
    RejectionTopQuantile,
    Smc,
    SmcAw,
}

impl EngineKind {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "rejection" => Ok(EngineKind::Rejection),
            "rejection_top_quantile" => Ok(EngineKind::RejectionTopQuantile),
            "smc" => Ok(EngineKind::Smc),
            "smc_aw" => Ok(EngineKind::SmcAw),
            other => Err(AbcError::Config(format!("unknown engine `{other}`"))),
        }
    }
}

impl std::fmt::Display for EngineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EngineKind::Rejection => "rejection",
            EngineKind::RejectionTopQuantile => "rejection_top_quantile",
            EngineKind::Smc => "smc",
            EngineKind::SmcAw => "smc_aw",
        })
    }
}

/// Rule producing each population's threshold from the previous population's
/// raw (unweighted) distances.
#[derive(Debug, Clone, PartialEq)]
pub enum EpsilonSchedule {
    /// fraction · mean(distances).
    MeanFraction(f64),
    /// Unweighted alpha-quantile (linear interpolation).
    Quantile(f64),
    /// Explicit thresholds for populations 2..T.
    Fixed(Vec<f64>),
}

impl EpsilonSchedule {
    pub fn parse(text: &str) -> Result<Self> {
        let s = text.trim();
        let open = s
            .find('(')
            .ok_or_else(|| AbcError::Config(format!("schedule `{s}` missing `(`")))?;
        if !s.ends_with(')') {
            return Err(AbcError::Config(format!("schedule `{s}` missing `)`")));
        }
        let name = s[..open].trim().to_ascii_lowercase();
        let args: Vec<f64> = s[open + 1..s.len() - 1]
            .split(',')
            .map(|a| {
                a.trim().parse::<f64>().map_err(|_| {
                    AbcError::Config(format!("bad schedule argument `{}` in `{s}`", a.trim()))
                })
            })
            .collect::<Result<_>>()?;
        match name.as_str() {
            "mean_fraction" => {
                if args.len() != 1 || !(args[0] > 0.0 && args[0] < 1.0) {
                    return Err(AbcError::Config(
                        "mean_fraction takes one argument in (0, 1)".into(),
                    ));
                }
                Ok(EpsilonSchedule::MeanFraction(args[0]))
            }
            "quantile" => {
                if args.len() != 1 || !(args[0] > 0.0 && args[0] < 1.0) {
                    return Err(AbcError::Config(
                        "quantile takes one argument in (0, 1)".into(),
                    ));
                }
                Ok(EpsilonSchedule::Quantile(args[0]))
            }
            "fixed" => {
                if args.is_empty() {
                    return Err(AbcError::Config("fixed schedule needs thresholds".into()));
                }
                Ok(EpsilonSchedule::Fixed(args))
            }
            other => Err(AbcError::Config(format!("unknown schedule `{other}`"))),
        }
    }
}

impl std::fmt::Display for EpsilonSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EpsilonSchedule::MeanFraction(x) => write!(f, "mean_fraction({x})"),
            EpsilonSchedule::Quantile(x) => write!(f, "quantile({x})"),
            EpsilonSchedule::Fixed(xs) => {
                let list = xs
                    .iter()
                    .map(|v| format!("{v}"))
                    .collect::<Vec<_>>()
                    .join(",");
                write!(f, "fixed({list})")
            }
        }
    }
}

/// Everything an engine needs to run one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub simulator: Simulator,
    /// Inferred parameter blocks, in prior-declaration order.
    pub inferred: ParamLayout,
    /// Priors aligned with `inferred` blocks.
    pub priors: Vec<DistributionSpec>,
    /// Fixed simulator parameters by block name.
    pub fixed: Vec<(String, Value)>,
    pub kernel: KernelSpec,
    pub distance: DistanceKind,
    pub standardize: bool,
    pub observed: SummaryVector,
    pub engine: EngineKind,
    /// Particles per population (total prior draws for rejection engines).
    pub particles: usize,
    /// Population count (ignored by rejection engines).
    pub populations: usize,
    pub epsilon0: f64,
    pub schedule: EpsilonSchedule,
    /// Kept fraction for the top-quantile engine.
    pub keep_fraction: f64,
    pub max_attempts: u64,
    pub seed: u64,
    pub workers: usize,
    /// Provenance hash of the canonical config text (empty when constructed
    /// programmatically).
    pub config_hash: String,
}

/// Maps an inferred-parameter vector into the simulator's full layout,
/// splicing in fixed values.
#[derive(Debug, Clone)]
pub struct ParamAssembler {
    sources: Vec<AssemblySource>,
    total_len: usize,
}

#[derive(Debug, Clone)]
enum AssemblySource {
    Inferred { from: usize, len: usize },
    Fixed(Vec<f64>),
}

impl ParamAssembler {
    pub fn assemble(&self, inferred_flat: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_len);
        for src in &self.sources {
            match src {
                AssemblySource::Inferred { from, len } => {
                    out.extend_from_slice(&inferred_flat[*from..*from + *len])
                }
                AssemblySource::Fixed(vs) => out.extend_from_slice(vs),
            }
        }
        out
    }
}

impl ExperimentConfig {
    /// Validate the configuration and build the parameter assembler.
    pub fn validate(&self) -> Result<ParamAssembler> {
        if self.particles < 1 {
            return Err(AbcError::Config("particles must be >= 1".into()));
        }
        if self.populations < 1 {
            return Err(AbcError::Config("populations must be >= 1".into()));
        }
        if !(self.epsilon0 > 0.0) {
            return Err(AbcError::Config(format!(
                "epsilon0 must be positive, got {}",
                self.epsilon0
            )));
        }
        if self.max_attempts < 1 {
            return Err(AbcError::Config("max_attempts must be >= 1".into()));
        }
        if self.workers < 1 {
            return Err(AbcError::Config("workers must be >= 1".into()));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(AbcError::Config(format!(
                "keep_fraction must lie in (0, 1], got {}",
                self.keep_fraction
            )));
        }
        if let EpsilonSchedule::Fixed(list) = &self.schedule {
            if list.len() + 1 < self.populations {
                return Err(AbcError::Config(format!(
                    "fixed schedule provides {} thresholds but {} populations need {}",
                    list.len(),
                    self.populations,
                    self.populations - 1
                )));
            }
        }
        if self.priors.len() != self.inferred.blocks().len() {
            return Err(AbcError::Config(format!(
                "{} priors for {} inferred parameters",
                self.priors.len(),
                self.inferred.blocks().len()
            )));
        }
        for (block, prior) in self.inferred.blocks().iter().zip(&self.priors) {
            prior.validate()?;
            match block {
                ParamBlock::Scalar { name } => {
                    if prior.is_simplex() {
                        return Err(AbcError::Config(format!(
                            "scalar parameter `{name}` cannot take a dirichlet prior"
                        )));
                    }
                }
                ParamBlock::Simplex { name, components } => {
                    if prior.dim() != components.len() {
                        return Err(AbcError::Config(format!(
                            "simplex parameter `{name}` has {} components but prior `{prior}` has dimension {}",
                            components.len(),
                            prior.dim()
                        )));
                    }
                }
            }
        }
        // Observed summary must match the simulator's output.
        let names = self.simulator.summary_names();
        if self.observed.names != names {
            return Err(AbcError::Config(format!(
                "observed summary names {:?} do not match simulator output {:?}",
                self.observed.names, names
            )));
        }
        if self.observed.values.iter().any(|v| !v.is_finite()) {
            return Err(AbcError::Config("observed summary must be finite".into()));
        }
        self.build_assembler()
    }

    fn build_assembler(&self) -> Result<ParamAssembler> {
        let sim_layout = self.simulator.layout();
        let mut used_inferred: HashSet<&str> = HashSet::new();
        let mut used_fixed: HashSet<&str> = HashSet::new();
        let mut sources = Vec::new();
        for block in sim_layout.blocks() {
            if let Some((idx, inf_block)) = self.inferred.block_by_name(block.name()) {
                if inf_block != block {
                    return Err(AbcError::Config(format!(
                        "inferred parameter `{}` does not match the simulator's block shape",
                        block.name()
                    )));
                }
                sources.push(AssemblySource::Inferred {
                    from: self.inferred.block_offset(idx),
                    len: block.len(),
                });
                used_inferred.insert(inf_block.name());
            } else if let Some((_, value)) =
                self.fixed.iter().find(|(n, _)| n == block.name())
            {
                let flat = match (block, value) {
                    (ParamBlock::Scalar { .. }, Value::Scalar(x)) => vec![*x],
                    (ParamBlock::Simplex { components, .. }, Value::Simplex(xs)) => {
                        if xs.len() != components.len() {
                            return Err(AbcError::Config(format!(
                                "fixed simplex `{}` has wrong dimension",
                                block.name()
                            )));
                        }
                        xs.clone()
                    }
                    _ => {
                        return Err(AbcError::Config(format!(
                            "fixed value for `{}` has the wrong kind",
                            block.name()
                        )))
                    }
                };
                sources.push(AssemblySource::Fixed(flat));
                used_fixed.insert(block.name());
            } else {
                return Err(AbcError::Config(format!(
                    "simulator parameter `{}` is neither inferred nor fixed",
                    block.name()
                )));
            }
        }
        for block in self.inferred.blocks() {
            if !used_inferred.contains(block.name()) {
                return Err(AbcError::Config(format!(
                    "inferred parameter `{}` is unknown to the simulator",
                    block.name()
                )));
            }
        }
        for (name, _) in &self.fixed {
            if !used_fixed.contains(name.as_str()) {
                return Err(AbcError::Config(format!(
                    "fixed parameter `{name}` is unknown to the simulator"
                )));
            }
        }
        Ok(ParamAssembler {
            sources,
            total_len: sim_layout.flat_len(),
        })
    }
}

/// Full inference output: the population sequence plus provenance.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub engine: EngineKind,
    pub seed: u64,
    pub config_hash: String,
    pub populations: Vec<Population>,
    /// Data-kernel variances used by the adaptive engine, per population
    /// (None for population 1 and non-adaptive engines).
    pub data_kernel_scales: Vec<Option<Vec<f64>>>,
}

/// R-7 quantile (linear interpolation) of an unsorted sample.
pub fn quantile_r7(values: &[f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(AbcError::Shape("quantile of empty sample".into()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(AbcError::Domain(format!("quantile level {alpha} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 1 {
        return Ok(sorted[0]);
    }
    let h = (n as f64 - 1.0) * alpha;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Next threshold from the previous population's raw distances. Must fall
/// strictly below `prev_epsilon`, otherwise the schedule has stalled.
pub fn next_epsilon(
    schedule: &EpsilonSchedule,
    prev_distances: &[f64],
    step: usize,
    prev_epsilon: f64,
    population: usize,
) -> Result<f64> {
    if prev_distances.is_empty() {
        return Err(AbcError::Shape("epsilon schedule needs distances".into()));
    }
    let next = match schedule {
        EpsilonSchedule::MeanFraction(f) => {
            f * prev_distances.iter().sum::<f64>() / prev_distances.len() as f64
        }
        EpsilonSchedule::Quantile(alpha) => quantile_r7(prev_distances, *alpha)?,
        EpsilonSchedule::Fixed(list) => *list.get(step).ok_or_else(|| {
            AbcError::Config(format!("fixed schedule exhausted at step {step}"))
        })?,
    };
    if !(next < prev_epsilon) {
        return Err(AbcError::ScheduleStall {
            population,
            prev: prev_epsilon,
            next,
        });
    }
    Ok(next)
}

/// Run simulations for pre-seeded proposals, in parallel when a pool is
/// given; results return in proposal order regardless of worker count.
pub fn parallel_map_simulations(
    simulator: &Simulator,
    jobs: Vec<(Vec<f64>, ChaCha20Rng)>,
    pool: Option<&rayon::ThreadPool>,
) -> Vec<Result<SummaryVector>> {
    match pool {
        Some(pool) => pool.install(|| {
            use rayon::prelude::*;
            jobs.into_par_iter()
                .map(|(flat, mut rng)| simulator.simulate(&flat, &mut rng))
                .collect()
        }),
        None => jobs
            .into_iter()
            .map(|(flat, mut rng)| simulator.simulate(&flat, &mut rng))
            .collect(),
    }
}

/// Run the configured engine.
pub fn run(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let assembler = cfg.validate()?;
    let pool = build_pool(cfg.workers)?;
    match cfg.engine {
        EngineKind::Rejection => {
            let pop = rejection_population(cfg, &assembler, pool.as_ref(), None)?;
            Ok(RunRecord {
                engine: cfg.engine,
                seed: cfg.seed,
                config_hash: cfg.config_hash.clone(),
                populations: vec![pop],
                data_kernel_scales: vec![None],
            })
        }
        EngineKind::RejectionTopQuantile => {
            let pop =
                rejection_population(cfg, &assembler, pool.as_ref(), Some(cfg.keep_fraction))?;
            Ok(RunRecord {
                engine: cfg.engine,
                seed: cfg.seed,
                config_hash: cfg.config_hash.clone(),
                populations: vec![pop],
                data_kernel_scales: vec![None],
            })
        }
        EngineKind::Smc | EngineKind::SmcAw => smc(cfg, &assembler, pool.as_ref()),
    }
}

fn build_pool(workers: usize) -> Result<Option<rayon::ThreadPool>> {
    if workers <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map(Some)
        .map_err(|e| AbcError::Config(format!("cannot build worker pool: {e}")))
}

fn distance_to_observed(cfg: &ExperimentConfig, sim: &SummaryVector) -> Result<f64> {
    distance(cfg.distance, &sim.values, &cfg.observed.values, cfg.standardize)
}

/// Draw one prior sample as a flat inferred-parameter vector.
fn draw_prior(cfg: &ExperimentConfig, rng: &mut ChaCha20Rng) -> Vec<f64> {
    let mut flat = Vec::with_capacity(cfg.inferred.flat_len());
    for prior in &cfg.priors {
        match prior.sample(rng) {
            Value::Scalar(x) => flat.push(x),
            Value::Simplex(xs) => flat.extend(xs),
        }
    }
    flat
}

/// Plain and top-quantile rejection: evaluate exactly `particles` prior draws.
fn rejection_population(
    cfg: &ExperimentConfig,
    assembler: &ParamAssembler,
    pool: Option<&rayon::ThreadPool>,
    keep_fraction: Option<f64>,
) -> Result<Population> {
    let start = Instant::now();
    let n_total = cfg.particles;
    let mut evaluated: Vec<(Vec<f64>, f64, Vec<f64>)> = Vec::with_capacity(n_total);
    let mut k0 = 0usize;
    while k0 < n_total {
        let batch_end = (k0 + PROPOSAL_BATCH).min(n_total);
        let mut proposals = Vec::with_capacity(batch_end - k0);
        let mut jobs = Vec::with_capacity(batch_end - k0);
        for k in k0..batch_end {
            let mut prior_rng = child_rng(cfg.seed, Domain::Prior, 1, k as u64);
            let flat = draw_prior(cfg, &mut prior_rng);
            jobs.push((
                assembler.assemble(&flat),
                child_rng(cfg.seed, Domain::Simulate, 1, k as u64),
            ));
            proposals.push(flat);
        }
        let results = parallel_map_simulations(&cfg.simulator, jobs, pool);
        for (offset, (flat, result)) in proposals.into_iter().zip(results).enumerate() {
            let summary = result.map_err(|e| {
                AbcError::Domain(format!("simulation {} failed: {e}", k0 + offset))
            })?;
            let d = distance_to_observed(cfg, &summary)?;
            evaluated.push((flat, d, summary.values));
        }
        k0 = batch_end;
    }

    let particles: Vec<Particle> = match keep_fraction {
        None => {
            let accepted: Vec<&(Vec<f64>, f64, Vec<f64>)> = evaluated
                .iter()
                .filter(|(_, d, _)| *d < cfg.epsilon0)
                .collect();
            if accepted.is_empty() {
                return Err(AbcError::EmptyPosterior { epsilon: cfg.epsilon0 });
            }
            let w = 1.0 / accepted.len() as f64;
            accepted
                .into_iter()
                .map(|(flat, d, summary)| Particle {
                    params: flat.clone(),
                    weight: w,
                    distance: *d,
                    sim_attempts: 1,
                    summary: summary.clone(),
                })
                .collect()
        }
        Some(q) => {
            // Stable sort keeps draw order among tied distances.
            let mut order: Vec<usize> = (0..evaluated.len()).collect();
            order.sort_by(|a, b| evaluated[*a].1.total_cmp(&evaluated[*b].1));
            let keep = ((q * n_total as f64).ceil() as usize).clamp(1, n_total);
            let w = 1.0 / keep as f64;
            order[..keep]
                .iter()
                .map(|&i| {
                    let (flat, d, summary) = &evaluated[i];
                    Particle {
                        params: flat.clone(),
                        weight: w,
                        distance: *d,
                        sim_attempts: 1,
                        summary: summary.clone(),
                    }
                })
                .collect()
        }
    };

    let epsilon = match keep_fraction {
        None => cfg.epsilon0,
        Some(_) => particles
            .iter()
            .map(|p| p.distance)
            .fold(f64::NEG_INFINITY, f64::max),
    };
    let accepted = particles.len();
    let pop = Population {
        t: 1,
        epsilon,
        particles,
        diagnostics: Diagnostics {
            acceptance_rate: accepted as f64 / n_total as f64,
            iterations: n_total as u64,
            simulations: n_total as u64,
            wall_ms: start.elapsed().as_millis() as u64,
        },
    };
    log::info!(
        "rejection: kept {accepted}/{n_total} (epsilon {epsilon}, acceptance {:.4})",
        pop.diagnostics.acceptance_rate
    );
    Ok(pop)
}

/// One accepted proposal during an SMC population sweep.
struct Accepted {
    params: Vec<f64>,
    distance: f64,
    summary: Vec<f64>,
    /// Proposals consumed since the previous acceptance (including this one).
    sim_attempts: u64,
    /// Simulator calls consumed since the previous acceptance (excludes
    /// zero-prior skips).
    sims: u64,
    log_weight: f64,
}

/// Sequential Monte Carlo (Algorithm engines `smc` and `smc_aw`).
fn smc(
    cfg: &ExperimentConfig,
    assembler: &ParamAssembler,
    pool: Option<&rayon::ThreadPool>,
) -> Result<RunRecord> {
    let mut populations: Vec<Population> = Vec::with_capacity(cfg.populations);
    let mut data_kernel_scales: Vec<Option<Vec<f64>>> = Vec::with_capacity(cfg.populations);
    let mut epsilon = cfg.epsilon0;

    for t in 1..=cfg.populations {
        let start = Instant::now();
        let prev = populations.last();
        // Adaptive resampling weights and kernel scales from the previous
        // population.
        let (resample_weights, scales, dk_scale) = match prev {
            None => (None, None, None),
            Some(prev) => {
                epsilon = next_epsilon(
                    &cfg.schedule,
                    &prev.distances(),
                    t - 2,
                    prev.epsilon,
                    t,
                )?;
                let scales = population_scale(prev, &cfg.inferred, &cfg.kernel)?;
                let (v, dk) = if cfg.engine == EngineKind::SmcAw {
                    let dk = summary_kernel_vars(prev, &cfg.observed.values);
                    let v = adaptive_data_weights(prev, &cfg.observed.values, &dk)?;
                    (v, Some(dk))
                } else {
                    (prev.weights(), None)
                };
                (Some(v), Some(scales), dk)
            }
        };

        let sweep = sweep_population(cfg, assembler, pool, t, epsilon, prev, resample_weights.as_deref(), scales.as_ref())?;

        // Normalize weights in log space.
        let log_weights: Vec<f64> = sweep.iter().map(|a| a.log_weight).collect();
        let total = log_sum_exp(&log_weights);
        if total == f64::NEG_INFINITY || total.is_nan() {
            return Err(AbcError::NumericalDegeneracy(format!(
                "population {t}: all particle weights underflowed"
            )));
        }
        let iterations = sweep.iter().map(|a| a.sim_attempts).sum::<u64>();
        let simulations = sweep.iter().map(|a| a.simulations()).sum::<u64>();
        let particles: Vec<Particle> = sweep
            .iter()
            .map(|a| Particle {
                params: a.params.clone(),
                weight: (a.log_weight - total).exp(),
                distance: a.distance,
                sim_attempts: a.sim_attempts,
                summary: a.summary.clone(),
            })
            .collect();

        // Spot-check the log-sum-exp weight path against a brute-force loop.
        if let (Some(prev), Some(v), Some(scales)) =
            (prev, resample_weights.as_deref(), scales.as_ref())
        {
            spot_check_weights(cfg, prev, v, scales, &particles, t)?;
        }

        let accepted = particles.len();
        let pop = Population {
            t,
            epsilon,
            particles,
            diagnostics: Diagnostics {
                acceptance_rate: accepted as f64 / iterations as f64,
                iterations,
                simulations,
                wall_ms: start.elapsed().as_millis() as u64,
            },
        };
        log::info!(
            "population {t}: epsilon {epsilon:.6}, acceptance {:.4}, {} simulations, ess {:.1}",
            pop.diagnostics.acceptance_rate,
            pop.diagnostics.simulations,
            pop.ess()
        );
        populations.push(pop);
        data_kernel_scales.push(dk_scale);
    }

    Ok(RunRecord {
        engine: cfg.engine,
        seed: cfg.seed,
        config_hash: cfg.config_hash.clone(),
        populations,
        data_kernel_scales,
    })
}

impl Accepted {
    /// Simulator calls attributable to this particle: attempts minus
    /// zero-prior skips (tracked during the sweep).
    fn simulations(&self) -> u64 {
        self.sims
    }
}

/// Collect N accepted particles for population `t` at threshold `epsilon`.
#[allow(clippy::too_many_arguments)]
fn sweep_population(
    cfg: &ExperimentConfig,
    assembler: &ParamAssembler,
    pool: Option<&rayon::ThreadPool>,
    t: usize,
    epsilon: f64,
    prev: Option<&Population>,
    resample_weights: Option<&[f64]>,
    scales: Option<&Scales>,
) -> Result<Vec<Accepted>> {
    let n = cfg.particles;
    let mut accepted: Vec<Accepted> = Vec::with_capacity(n);
    let mut last_accept_k: i64 = -1;
    let mut sims_since_accept: u64 = 0;
    let mut k0: u64 = 0;

    'outer: loop {
        // Generate one batch of proposals (sequential; cheap next to simulation).
        let mut batch: Vec<(u64, Option<Vec<f64>>)> = Vec::with_capacity(PROPOSAL_BATCH);
        for k in k0..k0 + PROPOSAL_BATCH as u64 {
            let proposal = match (prev, resample_weights, scales) {
                (None, _, _) => {
                    let mut rng = child_rng(cfg.seed, Domain::Prior, t as u64, k);
                    Some(draw_prior(cfg, &mut rng))
                }
                (Some(prev), Some(v), Some(scales)) => {
                    let mut rng = child_rng(cfg.seed, Domain::Perturb, t as u64, k);
                    let j = categorical_index(v, &mut rng);
                    let cand =
                        perturb(&cfg.inferred, &prev.particles[j].params, scales, &mut rng)?;
                    // Zero-prior proposals are rejected without simulating.
                    if joint_log_prior(&cfg.inferred, &cfg.priors, &cand)?
                        == f64::NEG_INFINITY
                    {
                        None
                    } else {
                        Some(cand)
                    }
                }
                _ => unreachable!("SMC sweep invariants"),
            };
            batch.push((k, proposal));
        }

        // Simulate the viable proposals in parallel.
        let jobs: Vec<(Vec<f64>, ChaCha20Rng)> = batch
            .iter()
            .filter_map(|(k, p)| {
                p.as_ref().map(|flat| {
                    (
                        assembler.assemble(flat),
                        child_rng(cfg.seed, Domain::Simulate, t as u64, *k),
                    )
                })
            })
            .collect();
        let results = parallel_map_simulations(&cfg.simulator, jobs, pool);

        // Scan the batch in proposal order.
        let mut result_iter = results.into_iter();
        for (k, proposal) in batch {
            let verdict: Option<(Vec<f64>, f64, Vec<f64>)> = match proposal {
                None => None,
                Some(flat) => {
                    let summary = result_iter
                        .next()
                        .expect("one result per simulated proposal")
                        .map_err(|e| {
                            AbcError::Domain(format!("simulation {k} failed: {e}"))
                        })?;
                    sims_since_accept += 1;
                    let d = distance_to_observed(cfg, &summary)?;
                    if d < epsilon {
                        Some((flat, d, summary.values))
                    } else {
                        None
                    }
                }
            };
            match verdict {
                Some((flat, d, summary)) => {
                    let attempts = (k as i64 - last_accept_k) as u64;
                    let log_weight = match (prev, resample_weights, scales) {
                        (None, _, _) => 0.0, // population 1: equal weights
                        (Some(prev), Some(v), Some(scales)) => smc_log_weight(
                            &cfg.inferred,
                            &cfg.priors,
                            &flat,
                            prev,
                            v,
                            scales,
                        )?,
                        _ => unreachable!(),
                    };
                    accepted.push(Accepted {
                        params: flat,
                        distance: d,
                        summary,
                        sim_attempts: attempts,
                        log_weight,
                        sims: sims_since_accept,
                    });
                    last_accept_k = k as i64;
                    sims_since_accept = 0;
                    if accepted.len() == n {
                        break 'outer;
                    }
                }
                None => {
                    let gap = k as i64 - last_accept_k;
                    if gap as u64 > cfg.max_attempts {
                        return Err(AbcError::Stall {
                            population: t,
                            epsilon,
                            max_attempts: cfg.max_attempts,
                        });
                    }
                }
            }
        }
        k0 += PROPOSAL_BATCH as u64;
    }
    Ok(accepted)
}

/// Twice the weighted empirical variance of each summary component, floored.
fn summary_kernel_vars(prev: &Population, observed: &[f64]) -> Vec<f64> {
    let d = observed.len();
    (0..d)
        .map(|c| {
            let mean: f64 = prev
                .particles
                .iter()
                .map(|p| p.weight * p.summary[c])
                .sum();
            let var: f64 = prev
                .particles
                .iter()
                .map(|p| p.weight * (p.summary[c] - mean) * (p.summary[c] - mean))
                .sum();
            (2.0 * var).max(VARIANCE_FLOOR)
        })
        .collect()
}

pub(crate) fn categorical_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Compare the engine's log-space weights against a brute-force linear-space
/// evaluation on up to 10 evenly spaced particles.
fn spot_check_weights(
    cfg: &ExperimentConfig,
    prev: &Population,
    v: &[f64],
    scales: &Scales,
    particles: &[Particle],
    t: usize,
) -> Result<()> {
    let n = particles.len();
    let step = (n / 10).max(1);
    let mut checked = 0usize;
    for idx in (0..n).step_by(step) {
        let p = &particles[idx];
        let log_w = smc_log_weight(&cfg.inferred, &cfg.priors, &p.params, prev, v, scales)?;
        // Brute force in linear space.
        let prior = joint_log_prior(&cfg.inferred, &cfg.priors, &p.params)?.exp();
        let mut denom = 0.0;
        for (q, vj) in prev.particles.iter().zip(v) {
            if *vj <= 0.0 {
                continue;
            }
            denom += vj
                * kernel_log_density(&cfg.inferred, &p.params, &q.params, scales)?.exp();
        }
        if denom == 0.0 || !denom.is_finite() || prior == 0.0 {
            continue; // linear-space evaluation out of range; skip
        }
        let brute = prior / denom;
        let rel = ((log_w.exp() - brute) / brute).abs();
        if rel > 1e-10 {
            return Err(AbcError::NumericalDegeneracy(format!(
                "population {t}: weight spot-check failed at particle {idx} (relative error {rel:e})"
            )));
        }
        checked += 1;
    }
    log::debug!("population {t}: weight spot-check passed on {checked} particles");
    Ok(())
}

/// Log synthetic likelihood from precomputed summary replicates: fits a
/// Gaussian (sample mean, n−1 covariance) and evaluates the observed summary.
pub fn bsl_from_summaries(summaries: &[Vec<f64>], observed: &[f64]) -> Result<f64> {
    let n = summaries.len();
    if n < 2 {
        return Err(AbcError::Shape(
            "synthetic likelihood needs at least 2 replicates".into(),
        ));
    }
    let d = observed.len();
    for s in summaries {
        if s.len() != d {
            return Err(AbcError::Shape(format!(
                "summary replicate has {} components, observed has {d}",
                s.len()
            )));
        }
    }
    let mean: Vec<f64> = (0..d)
        .map(|c| summaries.iter().map(|s| s[c]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = SymMatrix::zeros(d);
    for i in 0..d {
        for j in i..d {
            let c: f64 = summaries
                .iter()
                .map(|s| (s[i] - mean[i]) * (s[j] - mean[j]))
                .sum::<f64>()
                / (n as f64 - 1.0);
            *cov.at_mut(i, j) = c;
            if i != j {
                *cov.at_mut(j, i) = c;
            }
        }
    }
    let chol = cov.cholesky()?;
    Ok(crate::linalg::mvn_log_density(observed, &mean, &chol))
}

/// Bayesian synthetic likelihood: simulate `n` summaries at `flat_params` and
/// evaluate log N(observed; mean, covariance).
pub fn bsl_log_likelihood(
    simulator: &Simulator,
    flat_params: &[f64],
    n: usize,
    observed: &[f64],
    seed: u64,
) -> Result<f64> {
    if n < 2 {
        return Err(AbcError::Domain(
            "synthetic likelihood needs n >= 2 replicates".into(),
        ));
    }
    let mut summaries = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = child_rng(seed, Domain::Simulate, 0, i as u64);
        summaries.push(simulator.simulate(flat_params, &mut rng)?.values);
    }
    bsl_from_summaries(&summaries, observed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::ScaleRule;
    use crate::network::{GaussianSummary, ModelKind};

    fn gaussian_cfg(engine: EngineKind) -> ExperimentConfig {
        let simulator = Simulator::new(ModelKind::Gaussian {
            n_samples: 100,
            summary: GaussianSummary::MeanSd,
        })
        .unwrap();
        ExperimentConfig {
            simulator,
            inferred: ParamLayout::new(vec![
                ParamBlock::Scalar { name: "mu".into() },
                ParamBlock::Scalar { name: "sigma".into() },
            ])
            .unwrap(),
            priors: vec![
                DistributionSpec::Normal { mean: 2.0, sd: 3.0 },
                DistributionSpec::Gamma { shape: 1.0, scale: 3.0 },
            ],
            fixed: vec![],
            kernel: KernelSpec::ComponentGaussian(ScaleRule::TwiceWeightedEmpirical),
            distance: DistanceKind::Squared,
            standardize: false,
            observed: SummaryVector::new(
                vec!["mean".into(), "sd".into()],
                vec![4.0, 1.5],
            )
            .unwrap(),
            engine,
            particles: 500,
            populations: 1,
            epsilon0: 1.0,
            schedule: EpsilonSchedule::Quantile(0.75),
            keep_fraction: 0.01,
            max_attempts: 10_000,
            seed: 7,
            workers: 1,
            config_hash: String::new(),
        }
    }

    fn mean_only_cfg() -> ExperimentConfig {
        let simulator = Simulator::new(ModelKind::Gaussian {
            n_samples: 100,
            summary: GaussianSummary::Mean,
        })
        .unwrap();
        ExperimentConfig {
            simulator,
            inferred: ParamLayout::new(vec![ParamBlock::Scalar { name: "mu".into() }])
                .unwrap(),
            priors: vec![DistributionSpec::Normal { mean: 0.0, sd: 10.0 }],
            fixed: vec![("sigma".into(), Value::Scalar(1.0))],
            kernel: KernelSpec::ComponentGaussian(ScaleRule::TwiceWeightedEmpirical),
            distance: DistanceKind::AbsMean,
            standardize: false,
            observed: SummaryVector::new(vec!["mean".into()], vec![0.0]).unwrap(),
            engine: EngineKind::Smc,
            particles: 100,
            populations: 3,
            epsilon0: 1.0,
            schedule: EpsilonSchedule::Quantile(0.75),
            keep_fraction: 0.01,
            max_attempts: 10_000,
            seed: 11,
            workers: 1,
            config_hash: String::new(),
        }
    }

    #[test]
    fn engine_and_schedule_parsing() {
        assert_eq!(EngineKind::parse("SMC_AW").unwrap(), EngineKind::SmcAw);
        assert_eq!(EngineKind::parse("rejection").unwrap(), EngineKind::Rejection);
        assert!(EngineKind::parse("mcmc").is_err());
        for text in ["mean_fraction(0.75)", "quantile(0.5)", "fixed(10,5,2.5)"] {
            let s = EpsilonSchedule::parse(text).unwrap();
            assert_eq!(EpsilonSchedule::parse(&s.to_string()).unwrap(), s);
        }
        assert!(EpsilonSchedule::parse("quantile(1.5)").is_err());
        assert!(EpsilonSchedule::parse("mean_fraction(0)").is_err());
    }

    #[test]
    fn next_epsilon_examples() {
        let d = [1.0, 2.0, 3.0, 4.0];
        let e = next_epsilon(&EpsilonSchedule::MeanFraction(0.75), &d, 0, 10.0, 2).unwrap();
        assert!((e - 1.875).abs() < 1e-14);
        let e = next_epsilon(&EpsilonSchedule::Quantile(0.5), &d, 0, 10.0, 2).unwrap();
        assert!((e - 2.5).abs() < 1e-14);
        let e = next_epsilon(&EpsilonSchedule::Fixed(vec![5.0, 2.0]), &d, 1, 5.0, 3).unwrap();
        assert!((e - 2.0).abs() < 1e-14);
        // Stalled schedule: next epsilon not strictly below the previous.
        let err = next_epsilon(&EpsilonSchedule::MeanFraction(0.75), &d, 0, 1.8, 2).unwrap_err();
        assert!(matches!(err, AbcError::ScheduleStall { population: 2, .. }));
    }

    #[test]
    fn quantile_r7_interpolation() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((quantile_r7(&xs, 0.5).unwrap() - 2.5).abs() < 1e-14);
        assert!((quantile_r7(&xs, 0.25).unwrap() - 1.75).abs() < 1e-14);
        assert_eq!(quantile_r7(&xs, 0.0).unwrap(), 1.0);
        assert_eq!(quantile_r7(&xs, 1.0).unwrap(), 4.0);
        // Order-independence.
        let shuffled = [3.0, 1.0, 4.0, 2.0];
        assert!((quantile_r7(&shuffled, 0.5).unwrap() - 2.5).abs() < 1e-14);
    }

    #[test]
    fn rejection_infinite_epsilon_recovers_prior() {
        let mut cfg = gaussian_cfg(EngineKind::Rejection);
        cfg.particles = 2000;
        cfg.epsilon0 = f64::INFINITY;
        let rec = run(&cfg).unwrap();
        let pop = &rec.populations[0];
        assert_eq!(pop.particles.len(), 2000);
        assert!((pop.diagnostics.acceptance_rate - 1.0).abs() < 1e-12);
        // Two-sample KS test on mu against direct prior draws at the 1% level.
        let sample_a: Vec<f64> = pop.particles.iter().map(|p| p.params[0]).collect();
        let mut rng = child_rng(999, Domain::Prior, 0, 0);
        let prior = DistributionSpec::Normal { mean: 2.0, sd: 3.0 };
        let sample_b: Vec<f64> = (0..2000)
            .map(|_| prior.sample(&mut rng).as_scalar().unwrap())
            .collect();
        let d = ks_statistic(&sample_a, &sample_b);
        let crit = 1.628 * ((2.0f64) / 2000.0).sqrt();
        assert!(d < crit, "KS statistic {d} above 1% critical value {crit}");
    }

    fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            let fa = i as f64 / a.len() as f64;
            let fb = j as f64 / b.len() as f64;
            d = d.max((fa - fb).abs());
        }
        d
    }

    #[test]
    fn rejection_empty_posterior_error() {
        let mut cfg = gaussian_cfg(EngineKind::Rejection);
        cfg.particles = 50;
        cfg.epsilon0 = 1e-12;
        let err = run(&cfg).unwrap_err();
        assert!(matches!(err, AbcError::EmptyPosterior { .. }));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn deterministic_simulator_accepts_everything() {
        // Point-mass prior at the observed parameters and a near-zero-noise
        // simulator: every draw is accepted.
        let mut cfg = mean_only_cfg();
        cfg.engine = EngineKind::Rejection;
        cfg.priors = vec![DistributionSpec::Uniform { lo: 4.0, hi: 4.0 }];
        cfg.fixed = vec![("sigma".into(), Value::Scalar(1e-12))];
        cfg.observed = SummaryVector::new(vec!["mean".into()], vec![4.0]).unwrap();
        cfg.distance = DistanceKind::Squared;
        cfg.particles = 40;
        cfg.epsilon0 = 1e-6;
        let rec = run(&cfg).unwrap();
        assert_eq!(rec.populations[0].particles.len(), 40);
        assert!((rec.populations[0].diagnostics.acceptance_rate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn top_quantile_keeps_smallest() {
        let mut cfg = gaussian_cfg(EngineKind::RejectionTopQuantile);
        cfg.particles = 10;
        cfg.keep_fraction = 0.3;
        cfg.epsilon0 = f64::INFINITY;
        let rec = run(&cfg).unwrap();
        let kept = &rec.populations[0].particles;
        assert_eq!(kept.len(), 3); // ceil(0.3 * 10)

        // The same proposals under plain rejection at infinite epsilon.
        let mut all_cfg = gaussian_cfg(EngineKind::Rejection);
        all_cfg.particles = 10;
        all_cfg.epsilon0 = f64::INFINITY;
        let all = run(&all_cfg).unwrap();
        let mut distances: Vec<f64> =
            all.populations[0].particles.iter().map(|p| p.distance).collect();
        distances.sort_by(f64::total_cmp);
        let kept_distances: Vec<f64> = kept.iter().map(|p| p.distance).collect();
        assert_eq!(kept_distances, distances[..3].to_vec());
        // Population epsilon is the largest kept distance.
        assert_eq!(rec.populations[0].epsilon, distances[2]);
    }

    #[test]
    fn top_quantile_full_fraction_is_prior_sample() {
        let mut cfg = gaussian_cfg(EngineKind::RejectionTopQuantile);
        cfg.particles = 50;
        cfg.keep_fraction = 1.0;
        let rec = run(&cfg).unwrap();
        assert_eq!(rec.populations[0].particles.len(), 50);
        assert!((rec.populations[0].diagnostics.acceptance_rate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn smc_single_population_matches_rejection_prefix() {
        // With T = 1, SMC keeps the first N acceptances of the same proposal
        // stream that rejection scans.
        let mut smc_cfg = gaussian_cfg(EngineKind::Smc);
        smc_cfg.particles = 20;
        smc_cfg.populations = 1;
        smc_cfg.epsilon0 = 2.0;
        let smc_rec = run(&smc_cfg).unwrap();

        let mut rej_cfg = gaussian_cfg(EngineKind::Rejection);
        rej_cfg.particles = 5000;
        rej_cfg.epsilon0 = 2.0;
        let rej_rec = run(&rej_cfg).unwrap();

        let smc_params: Vec<&Vec<f64>> =
            smc_rec.populations[0].particles.iter().map(|p| &p.params).collect();
        let rej_params: Vec<&Vec<f64>> = rej_rec.populations[0]
            .particles
            .iter()
            .take(20)
            .map(|p| &p.params)
            .collect();
        assert_eq!(smc_params, rej_params);
        // Equal weights in population 1.
        for p in &smc_rec.populations[0].particles {
            assert!((p.weight - 0.05).abs() < 1e-12);
        }
    }

    #[test]
    fn smc_invariants_hold() {
        let mut cfg = mean_only_cfg();
        cfg.populations = 4;
        let rec = run(&cfg).unwrap();
        assert_eq!(rec.populations.len(), 4);
        let mut prev_eps = f64::INFINITY;
        for pop in &rec.populations {
            assert!(pop.epsilon < prev_eps, "epsilons must strictly decrease");
            prev_eps = pop.epsilon;
            let wsum: f64 = pop.particles.iter().map(|p| p.weight).sum();
            assert!((wsum - 1.0).abs() < 1e-9);
            for p in &pop.particles {
                assert!(p.distance < pop.epsilon);
                assert!(p.sim_attempts >= 1);
            }
            assert!(pop.ess() <= cfg.particles as f64 + 1e-9);
            assert!(
                pop.diagnostics.simulations <= pop.diagnostics.iterations,
                "zero-prior skips never reach the simulator"
            );
        }
        // Posterior concentrates near the observed mean.
        let last = rec.populations.last().unwrap();
        let mean: f64 = last.particles.iter().map(|p| p.weight * p.params[0]).sum();
        assert!(mean.abs() < 0.5, "posterior mean {mean} too far from 0");
    }

    #[test]
    fn smc_aw_runs_and_records_data_kernel() {
        let mut cfg = mean_only_cfg();
        cfg.engine = EngineKind::SmcAw;
        cfg.populations = 3;
        let rec = run(&cfg).unwrap();
        assert_eq!(rec.data_kernel_scales.len(), 3);
        assert!(rec.data_kernel_scales[0].is_none());
        assert!(rec.data_kernel_scales[1].as_ref().is_some_and(|v| v.len() == 1));
        let last = rec.populations.last().unwrap();
        let mean: f64 = last.particles.iter().map(|p| p.weight * p.params[0]).sum();
        assert!(mean.abs() < 0.5);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut cfg = mean_only_cfg();
        cfg.populations = 3;
        cfg.particles = 60;
        let a = run(&cfg).unwrap();
        cfg.workers = 4;
        let b = run(&cfg).unwrap();
        assert_eq!(a.populations.len(), b.populations.len());
        for (pa, pb) in a.populations.iter().zip(&b.populations) {
            assert_eq!(pa.epsilon.to_bits(), pb.epsilon.to_bits());
            assert_eq!(pa.particles.len(), pb.particles.len());
            for (x, y) in pa.particles.iter().zip(&pb.particles) {
                assert_eq!(x.params, y.params);
                assert_eq!(x.weight.to_bits(), y.weight.to_bits());
                assert_eq!(x.distance.to_bits(), y.distance.to_bits());
                assert_eq!(x.sim_attempts, y.sim_attempts);
            }
            assert_eq!(pa.diagnostics.iterations, pb.diagnostics.iterations);
            assert_eq!(pa.diagnostics.simulations, pb.diagnostics.simulations);
        }
    }

    #[test]
    fn stall_error_names_population_and_epsilon() {
        let mut cfg = mean_only_cfg();
        cfg.engine = EngineKind::Smc;
        cfg.populations = 1;
        cfg.epsilon0 = 1e-9;
        cfg.max_attempts = 64;
        let err = run(&cfg).unwrap_err();
        match err {
            AbcError::Stall { population, epsilon, max_attempts } => {
                assert_eq!(population, 1);
                assert_eq!(epsilon, 1e-9);
                assert_eq!(max_attempts, 64);
            }
            other => panic!("expected stall, got {other}"),
        }
    }

    #[test]
    fn parallel_map_contract() {
        let sim = Simulator::new(ModelKind::Gaussian {
            n_samples: 10,
            summary: GaussianSummary::Mean,
        })
        .unwrap();
        // Empty input -> empty output.
        assert!(parallel_map_simulations(&sim, vec![], None).is_empty());
        // Sequential and pooled runs produce identical results by index.
        let jobs = |n: usize| -> Vec<(Vec<f64>, ChaCha20Rng)> {
            (0..n)
                .map(|k| {
                    (
                        vec![k as f64, 1.0],
                        child_rng(3, Domain::Simulate, 1, k as u64),
                    )
                })
                .collect()
        };
        let seq: Vec<_> = parallel_map_simulations(&sim, jobs(40), None)
            .into_iter()
            .map(|r| r.unwrap().values)
            .collect();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let par: Vec<_> = parallel_map_simulations(&sim, jobs(40), Some(&pool))
            .into_iter()
            .map(|r| r.unwrap().values)
            .collect();
        assert_eq!(seq, par);
    }

    #[test]
    fn parallel_speedup_smoke() {
        let cores = std::thread::available_parallelism().map(|c| c.get()).unwrap_or(1);
        if cores < 4 {
            eprintln!(
                "skipping parallel speedup smoke test: only {cores} core(s) available"
            );
            return;
        }
        let sim = Simulator::new(ModelKind::Fork { ticks: 100 }).unwrap();
        let jobs = |n: usize| -> Vec<(Vec<f64>, ChaCha20Rng)> {
            (0..n)
                .map(|k| (vec![0.9, 15.0], child_rng(5, Domain::Simulate, 1, k as u64)))
                .collect()
        };
        let t0 = Instant::now();
        let _ = parallel_map_simulations(&sim, jobs(1000), None);
        let sequential = t0.elapsed();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
        let t0 = Instant::now();
        let _ = parallel_map_simulations(&sim, jobs(1000), Some(&pool));
        let parallel = t0.elapsed();
        assert!(
            parallel.as_secs_f64() < 0.5 * sequential.as_secs_f64(),
            "8 workers: {parallel:?} vs sequential {sequential:?}"
        );
    }

    #[test]
    fn bsl_frozen_scalar_example() {
        // Replicates {-1, +1}, observed 0: mean 0, variance 2, log density
        // -0.5 ln(4 pi).
        let ll = bsl_from_summaries(&[vec![-1.0], vec![1.0]], &[0.0]).unwrap();
        let want = -0.5 * (4.0 * std::f64::consts::PI).ln();
        assert!((ll - want).abs() < 1e-12, "{ll} vs {want}");
        assert!((ll + 1.265_512_123_484_645_4).abs() < 1e-12);
        // Observed at the fitted mean: exactly the mode value.
        let ll = bsl_from_summaries(&[vec![1.0], vec![3.0]], &[2.0]).unwrap();
        let mode = -0.5 * (2.0 * std::f64::consts::PI * 2.0).ln();
        assert!((ll - mode).abs() < 1e-12);
        // Degenerate replicates -> singular covariance.
        assert!(matches!(
            bsl_from_summaries(&[vec![1.0], vec![1.0]], &[1.0]),
            Err(AbcError::DegenerateCovariance(_))
        ));
        assert!(bsl_from_summaries(&[vec![1.0]], &[1.0]).is_err());
    }

    #[test]
    fn bsl_estimates_concentrate_with_replicates() {
        let sim = Simulator::new(ModelKind::Gaussian {
            n_samples: 50,
            summary: GaussianSummary::Mean,
        })
        .unwrap();
        let spread = |n: usize, tag: u64| -> f64 {
            let lls: Vec<f64> = (0..24)
                .map(|r| {
                    bsl_log_likelihood(&sim, &[0.0, 1.0], n, &[0.0], 1000 * tag + r).unwrap()
                })
                .collect();
            let m = lls.iter().sum::<f64>() / lls.len() as f64;
            lls.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (lls.len() - 1) as f64
        };
        let small = spread(10, 1);
        let large = spread(320, 2);
        assert!(
            large < small,
            "variance should shrink with replicates: {small} -> {large}"
        );
    }

    #[test]
    fn config_validation_errors() {
        let mut cfg = gaussian_cfg(EngineKind::Rejection);
        cfg.particles = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = gaussian_cfg(EngineKind::Rejection);
        cfg.priors.pop();
        assert!(cfg.validate().is_err());

        // Simplex prior on a scalar block.
        let mut cfg = gaussian_cfg(EngineKind::Rejection);
        cfg.priors[0] = DistributionSpec::Dirichlet { alpha: vec![1.0, 1.0] };
        assert!(cfg.validate().is_err());

        // Unknown fixed parameter.
        let mut cfg = gaussian_cfg(EngineKind::Rejection);
        cfg.fixed.push(("nonexistent".into(), Value::Scalar(1.0)));
        assert!(cfg.validate().is_err());

        // Missing parameter (neither inferred nor fixed).
        let mut cfg = gaussian_cfg(EngineKind::Rejection);
        cfg.inferred = ParamLayout::new(vec![ParamBlock::Scalar { name: "mu".into() }]).unwrap();
        cfg.priors = vec![DistributionSpec::Normal { mean: 2.0, sd: 3.0 }];
        assert!(cfg.validate().is_err());

        // Observed names mismatch.
        let mut cfg = gaussian_cfg(EngineKind::Rejection);
        cfg.observed = SummaryVector::new(vec!["x".into(), "y".into()], vec![1.0, 2.0]).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn assembler_splices_fixed_values() {
        let cfg = mean_only_cfg();
        let asm = cfg.validate().unwrap();
        assert_eq!(asm.assemble(&[3.5]), vec![3.5, 1.0]);
    }
}
