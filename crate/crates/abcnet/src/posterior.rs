//! Posterior post-processing: weighted point estimates, credible intervals,
//! resimulation prediction intervals, and linear regression adjustment.

use crate::error::{AbcError, Result};
use crate::inference::{
    categorical_index, parallel_map_simulations, ExperimentConfig, RunRecord,
};
use crate::kernels::Particle;
use crate::linalg::SymMatrix;
use crate::params::{ParamBlock, ParamLayout};
use crate::rng::{child_rng, Domain};
use rand_chacha::ChaCha20Rng;

/// A weighted particle set approximating the posterior, with provenance.
#[derive(Debug, Clone)]
pub struct PosteriorSample {
    pub layout: ParamLayout,
    pub particles: Vec<Particle>,
    /// 1-based index of the source population.
    pub population: usize,
    pub seed: u64,
    pub config_hash: String,
}

impl PosteriorSample {
    /// Take the final population of a run as the posterior approximation.
    pub fn from_record(record: &RunRecord, layout: &ParamLayout) -> Result<Self> {
        let pop = record
            .populations
            .last()
            .ok_or_else(|| AbcError::DegeneratePopulation("run has no populations".into()))?;
        let ps = PosteriorSample {
            layout: layout.clone(),
            particles: pop.particles.clone(),
            population: pop.t,
            seed: record.seed,
            config_hash: record.config_hash.clone(),
        };
        ps.validate()?;
        Ok(ps)
    }

    /// Check the weight-normalization invariant and parameter shapes.
    pub fn validate(&self) -> Result<()> {
        if self.particles.is_empty() {
            return Err(AbcError::DegeneratePopulation("empty posterior sample".into()));
        }
        let flat_len = self.layout.flat_len();
        for p in &self.particles {
            if p.params.len() != flat_len {
                return Err(AbcError::Shape(format!(
                    "particle has {} coordinates, layout expects {flat_len}",
                    p.params.len()
                )));
            }
        }
        let total: f64 = self.particles.iter().map(|p| p.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(AbcError::NumericalDegeneracy(format!(
                "posterior weights sum to {total}, expected 1"
            )));
        }
        Ok(())
    }

    /// Flat column index of a parameter name (scalar block or simplex
    /// component).
    pub fn column_index(&self, param: &str) -> Result<usize> {
        self.layout
            .column_names()
            .iter()
            .position(|n| n == param)
            .ok_or_else(|| AbcError::UnknownName(format!("unknown parameter `{param}`")))
    }

    /// All parameter column names in flat order.
    pub fn column_names(&self) -> Vec<String> {
        self.layout.column_names()
    }

    fn column(&self, idx: usize) -> Vec<f64> {
        self.particles.iter().map(|p| p.params[idx]).collect()
    }

    fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }
}

/// Posterior mean Σ wᵢ·θᵢ of one parameter.
pub fn weighted_mean(ps: &PosteriorSample, param: &str) -> Result<f64> {
    let idx = ps.column_index(param)?;
    Ok(ps
        .particles
        .iter()
        .map(|p| p.weight * p.params[idx])
        .sum())
}

/// Posterior variance Σ wᵢ·(θᵢ − mean)² of one parameter.
pub fn weighted_variance(ps: &PosteriorSample, param: &str) -> Result<f64> {
    let idx = ps.column_index(param)?;
    let mean = weighted_mean(ps, param)?;
    Ok(ps
        .particles
        .iter()
        .map(|p| p.weight * (p.params[idx] - mean) * (p.params[idx] - mean))
        .sum())
}

/// Weighted empirical quantile with cumulative-weight linear interpolation.
/// Zero-weight values carry no mass and are ignored.
pub fn weighted_quantile(values: &[f64], weights: &[f64], q: f64) -> Result<f64> {
    if values.len() != weights.len() || values.is_empty() {
        return Err(AbcError::Shape("quantile needs matching nonempty inputs".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(AbcError::Domain(format!("quantile level {q} outside [0, 1]")));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(AbcError::NumericalDegeneracy(format!(
            "quantile weights sum to {total}"
        )));
    }
    let mut pairs: Vec<(f64, f64)> = values
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(v, w)| (*v, *w / total))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = 0.0;
    let mut prev_acc;
    let mut prev_v = pairs[0].0;
    for (v, w) in &pairs {
        prev_acc = acc;
        acc += w;
        if q <= acc {
            if prev_acc == 0.0 || (acc - prev_acc) == 0.0 {
                return Ok(*v);
            }
            let frac = (q - prev_acc) / (acc - prev_acc);
            return Ok(prev_v + frac * (v - prev_v));
        }
        prev_v = *v;
    }
    Ok(pairs.last().unwrap().0)
}

/// Equal-tailed credible interval at `mass` (e.g. 0.95 → 2.5% and 97.5%
/// weighted quantiles).
pub fn credible_interval(ps: &PosteriorSample, param: &str, mass: f64) -> Result<(f64, f64)> {
    if !(mass > 0.0 && mass < 1.0) {
        return Err(AbcError::Domain(format!(
            "credible mass must lie in (0, 1), got {mass}"
        )));
    }
    let idx = ps.column_index(param)?;
    let values = ps.column(idx);
    let first = values[0];
    if values.iter().all(|v| *v == first) {
        return Err(AbcError::DegeneratePopulation(format!(
            "parameter `{param}` is constant across the sample"
        )));
    }
    let weights = ps.weights();
    let tail = (1.0 - mass) / 2.0;
    let lo = weighted_quantile(&values, &weights, tail)?;
    let hi = weighted_quantile(&values, &weights, 1.0 - tail)?;
    Ok((lo, hi))
}

/// One credible-interval row of the posterior-summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionInterval {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

/// Posterior predictive intervals: draw `n_draws` parameter vectors by
/// weight, simulate each once, and take per-component equal-tailed quantile
/// intervals of the simulated summaries.
pub fn prediction_intervals(
    ps: &PosteriorSample,
    cfg: &ExperimentConfig,
    n_draws: usize,
    mass: f64,
    seed: u64,
) -> Result<Vec<PredictionInterval>> {
    if n_draws < 2 {
        return Err(AbcError::Domain("prediction intervals need n_draws >= 2".into()));
    }
    if !(mass > 0.0 && mass < 1.0) {
        return Err(AbcError::Domain(format!(
            "predictive mass must lie in (0, 1), got {mass}"
        )));
    }
    ps.validate()?;
    let assembler = cfg.validate()?;
    let weights = ps.weights();
    let jobs: Vec<(Vec<f64>, ChaCha20Rng)> = (0..n_draws)
        .map(|k| {
            let mut pick = child_rng(seed, Domain::Predict, 0, k as u64);
            let j = categorical_index(&weights, &mut pick);
            (
                assembler.assemble(&ps.particles[j].params),
                child_rng(seed, Domain::Predict, 1, k as u64),
            )
        })
        .collect();
    let pool = if cfg.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.workers)
                .build()
                .map_err(|e| AbcError::Config(format!("cannot build worker pool: {e}")))?,
        )
    } else {
        None
    };
    let results = parallel_map_simulations(&cfg.simulator, jobs, pool.as_ref());
    let mut sims = Vec::with_capacity(n_draws);
    for (k, r) in results.into_iter().enumerate() {
        sims.push(r.map_err(|e| AbcError::Domain(format!("resimulation {k} failed: {e}")))?);
    }
    let names = cfg.simulator.summary_names();
    let equal = vec![1.0; n_draws];
    let tail = (1.0 - mass) / 2.0;
    names
        .into_iter()
        .enumerate()
        .map(|(c, name)| {
            let col: Vec<f64> = sims.iter().map(|s| s.values[c]).collect();
            Ok(PredictionInterval {
                name,
                lo: weighted_quantile(&col, &equal, tail)?,
                hi: weighted_quantile(&col, &equal, 1.0 - tail)?,
            })
        })
        .collect()
}

/// Mean simulated summary over `reps` fresh runs at one inferred-parameter
/// point (posterior-mean resimulation).
pub fn mean_resimulated_summary(
    cfg: &ExperimentConfig,
    inferred_flat: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if reps == 0 {
        return Err(AbcError::Domain("resimulation needs reps >= 1".into()));
    }
    let assembler = cfg.validate()?;
    let full = assembler.assemble(inferred_flat);
    let jobs: Vec<(Vec<f64>, ChaCha20Rng)> = (0..reps)
        .map(|k| (full.clone(), child_rng(seed, Domain::Predict, 2, k as u64)))
        .collect();
    let results = parallel_map_simulations(&cfg.simulator, jobs, None);
    let d = cfg.simulator.summary_names().len();
    let mut mean = vec![0.0; d];
    for (k, r) in results.into_iter().enumerate() {
        let s = r.map_err(|e| AbcError::Domain(format!("resimulation {k} failed: {e}")))?;
        for (m, v) in mean.iter_mut().zip(&s.values) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= reps as f64;
    }
    Ok(mean)
}

/// Regressor choice for the linear adjustment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjustRegressor {
    /// Scalar distance to the observed summary (default).
    Distance,
    /// Full summary-discrepancy vector (simulated − observed).
    Summary,
}

const ADJUST_RANK_TOL: f64 = 1e-12;
/// Lower clamp applied to simplex components before renormalization.
const SIMPLEX_CLAMP: f64 = 1e-9;

/// Linear regression adjustment: per parameter, fit ordinary least squares of
/// the parameter value on the discrepancy regressor and move each particle to
/// the fit's prediction at zero discrepancy plus its own residual
/// (θ* = θ − β̂ᵀx). Weights are unchanged; simplex blocks are clamped at 1e-9
/// and renormalized. A rank-deficient design skips the adjustment with a
/// warning and returns the sample unchanged.
pub fn regression_adjust(
    ps: &PosteriorSample,
    observed: &[f64],
    regressor: AdjustRegressor,
) -> Result<PosteriorSample> {
    ps.validate()?;
    let n = ps.particles.len();
    let regressors: Vec<Vec<f64>> = match regressor {
        AdjustRegressor::Distance => {
            ps.particles.iter().map(|p| vec![p.distance]).collect()
        }
        AdjustRegressor::Summary => {
            for p in &ps.particles {
                if p.summary.len() != observed.len() {
                    return Err(AbcError::Shape(format!(
                        "particle summary has {} components, observed has {}",
                        p.summary.len(),
                        observed.len()
                    )));
                }
            }
            ps.particles
                .iter()
                .map(|p| p.summary.iter().zip(observed).map(|(s, o)| s - o).collect())
                .collect()
        }
    };
    let d = regressors[0].len();

    // Centered design; the intercept drops out of θ* = θ − β̂ᵀx.
    let x_mean: Vec<f64> = (0..d)
        .map(|c| regressors.iter().map(|x| x[c]).sum::<f64>() / n as f64)
        .collect();
    let mut xtx = SymMatrix::zeros(d);
    for i in 0..d {
        for j in i..d {
            let s: f64 = regressors
                .iter()
                .map(|x| (x[i] - x_mean[i]) * (x[j] - x_mean[j]))
                .sum();
            *xtx.at_mut(i, j) = s;
            if i != j {
                *xtx.at_mut(j, i) = s;
            }
        }
    }
    let scale = (0..d).map(|i| xtx.at(i, i)).fold(0.0f64, f64::max);
    if scale <= ADJUST_RANK_TOL {
        log::warn!("regression adjustment skipped: regressor has no variation");
        return Ok(ps.clone());
    }
    let chol = match xtx.cholesky() {
        Ok(c) => c,
        Err(_) => {
            log::warn!("regression adjustment skipped: rank-deficient design");
            return Ok(ps.clone());
        }
    };

    // Solve the normal equations once per parameter column.
    let flat_len = ps.layout.flat_len();
    let mut adjusted: Vec<Vec<f64>> = ps.particles.iter().map(|p| p.params.clone()).collect();
    for col in 0..flat_len {
        let theta_mean: f64 =
            ps.particles.iter().map(|p| p.params[col]).sum::<f64>() / n as f64;
        let xty: Vec<f64> = (0..d)
            .map(|c| {
                ps.particles
                    .iter()
                    .zip(&regressors)
                    .map(|(p, x)| (x[c] - x_mean[c]) * (p.params[col] - theta_mean))
                    .sum()
            })
            .collect();
        let beta = chol.solve(&xty);
        for (row, x) in adjusted.iter_mut().zip(&regressors) {
            let shift: f64 = beta.iter().zip(x).map(|(b, xi)| b * xi).sum();
            row[col] -= shift;
        }
    }

    // Restore simplex validity blockwise.
    let mut off = 0;
    for block in ps.layout.blocks() {
        if let ParamBlock::Simplex { components, .. } = block {
            let k = components.len();
            for row in &mut adjusted {
                let mut total = 0.0;
                for c in &mut row[off..off + k] {
                    *c = c.max(SIMPLEX_CLAMP);
                    total += *c;
                }
                for c in &mut row[off..off + k] {
                    *c /= total;
                }
            }
        }
        off += block.len();
    }

    let particles = ps
        .particles
        .iter()
        .zip(adjusted)
        .map(|(p, params)| Particle { params, ..p.clone() })
        .collect();
    Ok(PosteriorSample {
        layout: ps.layout.clone(),
        particles,
        population: ps.population,
        seed: ps.seed,
        config_hash: ps.config_hash.clone(),
    })
}
