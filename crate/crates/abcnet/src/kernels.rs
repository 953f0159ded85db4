//! Perturbation kernels and importance weights for sequential Monte Carlo.
//!
//! Particles move between populations through Gaussian kernels whose scales
//! derive from the previous population (component-wise variances or a full
//! covariance over the free coordinates). Weights follow
//! `w_i ∝ p(θ_i) / Σ_j v_j·K(θ_i|θ_j)` with all arithmetic in log space;
//! the adaptive variant replaces the resampling weights `v` by data-driven
//! ones that favor particles whose simulated summaries sit close to the
//! observed summary.

use rand::Rng;
use rand_distr::Distribution;

use crate::distributions::DistributionSpec;
use crate::error::{AbcError, Result};
use crate::linalg::{mvn_log_density, Cholesky, SymMatrix};
use crate::params::{ParamBlock, ParamLayout};

/// Variance floor preventing zero-width kernels on collapsed populations.
pub const VARIANCE_FLOOR: f64 = 1e-8;

/// How kernel scales are derived from the previous population.
#[derive(Debug, Clone, PartialEq)]
pub enum ScaleRule {
    /// Twice the weighted empirical variance/covariance (default).
    TwiceWeightedEmpirical,
    /// The weighted empirical variance/covariance unscaled.
    WeightedEmpirical,
    /// Fixed variances: per flat coordinate for the component kernel, the
    /// diagonal of the covariance for the multivariate kernel.
    Fixed(Vec<f64>),
}

/// Perturbation kernel specification.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    ComponentGaussian(ScaleRule),
    MultivariateGaussian(ScaleRule),
}

impl KernelSpec {
    /// Parse the textual form, e.g. `component_gaussian(x2_empirical)`,
    /// `mvn(x1_empirical)`, or `component_gaussian(fixed:0.1,0.1)`.
    pub fn parse(text: &str) -> Result<Self> {
        let s = text.trim();
        let open = s
            .find('(')
            .ok_or_else(|| AbcError::Config(format!("kernel `{s}` missing `(`")))?;
        if !s.ends_with(')') {
            return Err(AbcError::Config(format!("kernel `{s}` missing `)`")));
        }
        let name = s[..open].trim().to_ascii_lowercase();
        let arg = s[open + 1..s.len() - 1].trim().to_ascii_lowercase();
        let rule = if arg == "x2_empirical" {
            ScaleRule::TwiceWeightedEmpirical
        } else if arg == "x1_empirical" {
            ScaleRule::WeightedEmpirical
        } else if let Some(rest) = arg.strip_prefix("fixed:") {
            let values: Vec<f64> = rest
                .split(',')
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|_| {
                        AbcError::Config(format!("bad fixed scale `{}` in `{s}`", v.trim()))
                    })
                })
                .collect::<Result<_>>()?;
            if values.is_empty() || values.iter().any(|v| !(*v > 0.0)) {
                return Err(AbcError::Config(format!(
                    "fixed kernel scales must be positive in `{s}`"
                )));
            }
            ScaleRule::Fixed(values)
        } else {
            return Err(AbcError::Config(format!("unknown scale rule `{arg}`")));
        };
        match name.as_str() {
            "component_gaussian" => Ok(KernelSpec::ComponentGaussian(rule)),
            "mvn" => Ok(KernelSpec::MultivariateGaussian(rule)),
            other => Err(AbcError::Config(format!("unknown kernel `{other}`"))),
        }
    }
}

impl std::fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (name, rule) = match self {
            KernelSpec::ComponentGaussian(r) => ("component_gaussian", r),
            KernelSpec::MultivariateGaussian(r) => ("mvn", r),
        };
        match rule {
            ScaleRule::TwiceWeightedEmpirical => write!(f, "{name}(x2_empirical)"),
            ScaleRule::WeightedEmpirical => write!(f, "{name}(x1_empirical)"),
            ScaleRule::Fixed(vs) => {
                let list = vs
                    .iter()
                    .map(|v| format!("{v}"))
                    .collect::<Vec<_>>()
                    .join(",");
                write!(f, "{name}(fixed:{list})")
            }
        }
    }
}

/// One weighted particle. `params` is flat in layout order; `summary` is the
/// simulated summary that earned the acceptance (used by the adaptive data
/// kernel, regression adjustment, and plots).
#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub params: Vec<f64>,
    pub weight: f64,
    pub distance: f64,
    pub sim_attempts: u64,
    pub summary: Vec<f64>,
}

/// Per-population run diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// Accepted / proposals (proposals include zero-prior skips).
    pub acceptance_rate: f64,
    /// Proposal draws up to and including the final acceptance.
    pub iterations: u64,
    /// Simulator invocations (zero-prior skips never reach the simulator).
    pub simulations: u64,
    /// Wall-clock milliseconds; excluded from reproducibility comparisons.
    pub wall_ms: u64,
}

/// One SMC population (or a rejection-sampling result treated as t = 1).
#[derive(Debug, Clone)]
pub struct Population {
    /// 1-based population index.
    pub t: usize,
    pub epsilon: f64,
    pub particles: Vec<Particle>,
    pub diagnostics: Diagnostics,
}

impl Population {
    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }

    pub fn distances(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.distance).collect()
    }

    /// Effective sample size 1/Σw².
    pub fn ess(&self) -> f64 {
        1.0 / self.particles.iter().map(|p| p.weight * p.weight).sum::<f64>()
    }
}

/// Normalize a positive weight vector to sum 1. Invariant under positive
/// rescaling of the inputs.
pub fn normalize_weights(weights: &mut [f64]) -> Result<()> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(AbcError::NumericalDegeneracy(format!(
            "weight normalization with total {total}"
        )));
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(())
}

/// log(Σ exp(x_i)) computed stably; -inf for an all-(-inf) input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Kernel scales computed from a population.
#[derive(Debug, Clone)]
pub enum Scales {
    /// Variance per flat coordinate.
    Component(Vec<f64>),
    /// Covariance over the free coordinates with its Cholesky factor.
    Covariance { matrix: SymMatrix, chol: Cholesky },
}

fn weighted_mean(values: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    values.map(|(x, w)| x * w).sum()
}

/// Derive perturbation scales from the previous population's weighted spread.
pub fn population_scale(
    pop: &Population,
    layout: &ParamLayout,
    kernel: &KernelSpec,
) -> Result<Scales> {
    if pop.particles.len() < 2 {
        return Err(AbcError::DegeneratePopulation(
            "kernel scales need at least 2 particles".into(),
        ));
    }
    let flat_len = layout.flat_len();
    for p in &pop.particles {
        if p.params.len() != flat_len {
            return Err(AbcError::Shape(format!(
                "particle has {} coordinates, layout expects {flat_len}",
                p.params.len()
            )));
        }
    }
    match kernel {
        KernelSpec::ComponentGaussian(rule) => {
            let vars = match rule {
                ScaleRule::Fixed(vs) => {
                    if vs.len() != flat_len {
                        return Err(AbcError::Shape(format!(
                            "{} fixed scales for {} coordinates",
                            vs.len(),
                            flat_len
                        )));
                    }
                    vs.clone()
                }
                ScaleRule::TwiceWeightedEmpirical | ScaleRule::WeightedEmpirical => {
                    let mult = if *rule == ScaleRule::TwiceWeightedEmpirical { 2.0 } else { 1.0 };
                    (0..flat_len)
                        .map(|c| {
                            let pairs = pop.particles.iter().map(|p| (p.params[c], p.weight));
                            let mean = weighted_mean(pairs.clone());
                            let var: f64 = pairs
                                .map(|(x, w)| w * (x - mean) * (x - mean))
                                .sum();
                            (mult * var).max(VARIANCE_FLOOR)
                        })
                        .collect()
                }
            };
            Ok(Scales::Component(vars))
        }
        KernelSpec::MultivariateGaussian(rule) => {
            let free_len = layout.free_len();
            let matrix = match rule {
                ScaleRule::Fixed(vs) => {
                    if vs.len() != free_len {
                        return Err(AbcError::Shape(format!(
                            "{} fixed scales for {} free coordinates",
                            vs.len(),
                            free_len
                        )));
                    }
                    let mut m = SymMatrix::zeros(free_len);
                    for (i, v) in vs.iter().enumerate() {
                        *m.at_mut(i, i) = *v;
                    }
                    m
                }
                ScaleRule::TwiceWeightedEmpirical | ScaleRule::WeightedEmpirical => {
                    let mult = if *rule == ScaleRule::TwiceWeightedEmpirical { 2.0 } else { 1.0 };
                    let frees: Vec<Vec<f64>> = pop
                        .particles
                        .iter()
                        .map(|p| layout.free_coordinates(&p.params))
                        .collect();
                    let means: Vec<f64> = (0..free_len)
                        .map(|c| {
                            weighted_mean(
                                frees
                                    .iter()
                                    .zip(&pop.particles)
                                    .map(|(f, p)| (f[c], p.weight)),
                            )
                        })
                        .collect();
                    let mut m = SymMatrix::zeros(free_len);
                    for i in 0..free_len {
                        for j in i..free_len {
                            let cov: f64 = frees
                                .iter()
                                .zip(&pop.particles)
                                .map(|(f, p)| {
                                    p.weight * (f[i] - means[i]) * (f[j] - means[j])
                                })
                                .sum();
                            let v = mult * cov;
                            *m.at_mut(i, j) = v;
                            if i != j {
                                *m.at_mut(j, i) = v;
                            }
                        }
                    }
                    for i in 0..free_len {
                        if m.at(i, i) < VARIANCE_FLOOR {
                            *m.at_mut(i, i) = VARIANCE_FLOOR;
                        }
                    }
                    m
                }
            };
            let chol = matrix.cholesky()?;
            Ok(Scales::Covariance { matrix, chol })
        }
    }
}

const SIMPLEX_REDRAW_LIMIT: usize = 100;

/// Perturb a particle. Scalar coordinates receive additive Gaussian noise;
/// simplex blocks are perturbed on all components and renormalized, redrawing
/// up to 100 times until every component is positive, falling back to the
/// original block (component kernel) or original particle (multivariate
/// kernel, which draws all free coordinates jointly).
pub fn perturb<R: Rng + ?Sized>(
    layout: &ParamLayout,
    flat: &[f64],
    scales: &Scales,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if flat.len() != layout.flat_len() {
        return Err(AbcError::Shape(format!(
            "particle has {} coordinates, layout expects {}",
            flat.len(),
            layout.flat_len()
        )));
    }
    let normal = rand_distr::StandardNormal;
    match scales {
        Scales::Component(vars) => {
            if vars.len() != flat.len() {
                return Err(AbcError::Shape(format!(
                    "{} scales for {} coordinates",
                    vars.len(),
                    flat.len()
                )));
            }
            let mut out = flat.to_vec();
            let mut off = 0;
            for block in layout.blocks() {
                match block {
                    ParamBlock::Scalar { .. } => {
                        let z: f64 = normal.sample(rng);
                        out[off] += z * vars[off].sqrt();
                        off += 1;
                    }
                    ParamBlock::Simplex { components, .. } => {
                        let k = components.len();
                        let mut accepted = false;
                        for _ in 0..SIMPLEX_REDRAW_LIMIT {
                            let cand: Vec<f64> = (0..k)
                                .map(|c| {
                                    let z: f64 = normal.sample(rng);
                                    flat[off + c] + z * vars[off + c].sqrt()
                                })
                                .collect();
                            if cand.iter().all(|x| *x > 0.0) {
                                let sum: f64 = cand.iter().sum();
                                for c in 0..k {
                                    out[off + c] = cand[c] / sum;
                                }
                                accepted = true;
                                break;
                            }
                        }
                        if !accepted {
                            out[off..off + k].copy_from_slice(&flat[off..off + k]);
                        }
                        off += k;
                    }
                }
            }
            Ok(out)
        }
        Scales::Covariance { chol, .. } => {
            let free_len = layout.free_len();
            for _ in 0..SIMPLEX_REDRAW_LIMIT {
                let z: Vec<f64> = (0..free_len).map(|_| normal.sample(rng)).collect();
                let delta = chol.lower_times(&z);
                let mut out = Vec::with_capacity(flat.len());
                let mut off = 0;
                let mut free_off = 0;
                let mut valid = true;
                for block in layout.blocks() {
                    match block {
                        ParamBlock::Scalar { .. } => {
                            out.push(flat[off] + delta[free_off]);
                            off += 1;
                            free_off += 1;
                        }
                        ParamBlock::Simplex { components, .. } => {
                            let k = components.len();
                            let mut partial = 0.0;
                            let mut comps = Vec::with_capacity(k);
                            for c in 0..k - 1 {
                                let x = flat[off + c] + delta[free_off + c];
                                partial += x;
                                comps.push(x);
                            }
                            comps.push(1.0 - partial);
                            if comps.iter().any(|x| !(*x > 0.0)) {
                                valid = false;
                            }
                            let sum: f64 = comps.iter().sum();
                            out.extend(comps.into_iter().map(|x| x / sum));
                            off += k;
                            free_off += k - 1;
                        }
                    }
                }
                if valid {
                    return Ok(out);
                }
            }
            Ok(flat.to_vec())
        }
    }
}

fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    if !(var > 0.0) {
        return if x == mean { f64::INFINITY } else { f64::NEG_INFINITY };
    }
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean) * (x - mean) / var)
}

/// Log-density of moving from `old` to `new` under the kernel. The component
/// rule multiplies per-coordinate Gaussians over the free coordinates (for a
/// simplex, the first K−1 components — the Kth is determined); the
/// multivariate rule evaluates one Gaussian over all free coordinates.
pub fn kernel_log_density(
    layout: &ParamLayout,
    new: &[f64],
    old: &[f64],
    scales: &Scales,
) -> Result<f64> {
    if new.len() != layout.flat_len() || old.len() != layout.flat_len() {
        return Err(AbcError::Shape(
            "kernel density over mismatched parameter vectors".into(),
        ));
    }
    match scales {
        Scales::Component(vars) => {
            let mut total = 0.0;
            let mut off = 0;
            for block in layout.blocks() {
                let density_coords = block.free_len();
                for c in 0..density_coords {
                    total += log_normal_pdf(new[off + c], old[off + c], vars[off + c]);
                }
                off += block.len();
            }
            Ok(total)
        }
        Scales::Covariance { chol, .. } => {
            let nf = layout.free_coordinates(new);
            let of = layout.free_coordinates(old);
            Ok(mvn_log_density(&nf, &of, chol))
        }
    }
}

/// Log of the unnormalized SMC weight: log prior(proposal) − log Σ_j v_j·K(proposal|θ_j).
///
/// `denominator_weights` are the resampling weights v (the previous particle
/// weights in plain SMC, the adaptive data weights otherwise), normalized.
pub fn smc_log_weight(
    layout: &ParamLayout,
    priors: &[DistributionSpec],
    proposal: &[f64],
    prev: &Population,
    denominator_weights: &[f64],
    scales: &Scales,
) -> Result<f64> {
    let log_prior = joint_log_prior(layout, priors, proposal)?;
    if log_prior == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if denominator_weights.len() != prev.particles.len() {
        return Err(AbcError::Shape(format!(
            "{} denominator weights for {} particles",
            denominator_weights.len(),
            prev.particles.len()
        )));
    }
    let mut terms = Vec::with_capacity(prev.particles.len());
    for (p, v) in prev.particles.iter().zip(denominator_weights) {
        if *v <= 0.0 {
            continue;
        }
        terms.push(v.ln() + kernel_log_density(layout, proposal, &p.params, scales)?);
    }
    let log_denom = log_sum_exp(&terms);
    if log_denom == f64::NEG_INFINITY {
        return Err(AbcError::NumericalDegeneracy(
            "SMC weight denominator underflowed to zero".into(),
        ));
    }
    Ok(log_prior - log_denom)
}

/// Unnormalized SMC weight in linear space (nonnegative; 0 outside the prior).
pub fn smc_weight(
    layout: &ParamLayout,
    priors: &[DistributionSpec],
    proposal: &[f64],
    prev: &Population,
    denominator_weights: &[f64],
    scales: &Scales,
) -> Result<f64> {
    let lw = smc_log_weight(layout, priors, proposal, prev, denominator_weights, scales)?;
    Ok(lw.exp())
}

/// Joint log prior density of a flat parameter vector under per-block priors.
pub fn joint_log_prior(
    layout: &ParamLayout,
    priors: &[DistributionSpec],
    flat: &[f64],
) -> Result<f64> {
    if priors.len() != layout.blocks().len() {
        return Err(AbcError::Shape(format!(
            "{} priors for {} parameter blocks",
            priors.len(),
            layout.blocks().len()
        )));
    }
    if flat.len() != layout.flat_len() {
        return Err(AbcError::Shape(format!(
            "parameter vector length {} but layout expects {}",
            flat.len(),
            layout.flat_len()
        )));
    }
    let mut total = 0.0;
    let mut off = 0;
    for (block, prior) in layout.blocks().iter().zip(priors) {
        let value = match block {
            ParamBlock::Scalar { .. } => {
                crate::distributions::Value::Scalar(flat[off])
            }
            ParamBlock::Simplex { components, .. } => crate::distributions::Value::Simplex(
                flat[off..off + components.len()].to_vec(),
            ),
        };
        let ld = prior.log_density(&value)?;
        if ld == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        total += ld;
        off += block.len();
    }
    Ok(total)
}

/// Data-driven resampling weights: v_i ∝ w_i · Π_c N(observed_c; summary_ic, scale_c),
/// normalized to sum 1. If every data-kernel evaluation underflows, falls back
/// to v = w with a logged warning.
pub fn adaptive_data_weights(
    prev: &Population,
    observed: &[f64],
    data_kernel_vars: &[f64],
) -> Result<Vec<f64>> {
    if data_kernel_vars.len() != observed.len() {
        return Err(AbcError::Shape(format!(
            "{} data-kernel scales for {} summary components",
            data_kernel_vars.len(),
            observed.len()
        )));
    }
    let mut logs = Vec::with_capacity(prev.particles.len());
    for p in &prev.particles {
        if p.summary.len() != observed.len() {
            return Err(AbcError::Shape(format!(
                "particle summary has {} components, observed has {}",
                p.summary.len(),
                observed.len()
            )));
        }
        if p.weight <= 0.0 {
            logs.push(f64::NEG_INFINITY);
            continue;
        }
        let mut l = p.weight.ln();
        for ((s, o), var) in p.summary.iter().zip(observed).zip(data_kernel_vars) {
            l += log_normal_pdf(*o, *s, *var);
        }
        logs.push(l);
    }
    let total = log_sum_exp(&logs);
    if total == f64::NEG_INFINITY || total.is_nan() {
        log::warn!("all data-kernel evaluations underflowed; falling back to parameter weights");
        return Ok(prev.weights());
    }
    Ok(logs.iter().map(|l| (l - total).exp()).collect())
}
