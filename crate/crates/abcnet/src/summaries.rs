//! Summary statistics of simulator output and the distance functions that
//! compare them to observed data.

use crate::error::{AbcError, Result};

/// Named vector of summary statistics produced by one simulator run.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl SummaryVector {
    pub fn new(names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if names.len() != values.len() {
            return Err(AbcError::Shape(format!(
                "{} summary names but {} values",
                names.len(),
                values.len()
            )));
        }
        if names.is_empty() {
            return Err(AbcError::Shape("summary vector must be non-empty".into()));
        }
        Ok(SummaryVector { names, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Component-wise mean of replicate summaries. All replicates must share the
/// same names in the same order.
pub fn mean_summary(replicates: &[SummaryVector]) -> Result<SummaryVector> {
    let first = replicates
        .first()
        .ok_or_else(|| AbcError::Shape("mean of zero summary replicates".into()))?;
    let mut acc = vec![0.0; first.len()];
    for r in replicates {
        if r.names != first.names {
            return Err(AbcError::Shape(
                "summary replicates disagree on statistic names".into(),
            ));
        }
        for (a, v) in acc.iter_mut().zip(&r.values) {
            *a += v;
        }
    }
    let n = replicates.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    SummaryVector::new(first.names.clone(), acc)
}

/// Distance functions on summary vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceKind {
    /// sqrt of the sum of squared component differences.
    Euclidean,
    /// Mean absolute component difference.
    AbsMean,
    /// Sum of squared component differences; for scalars this is (a - b)^2.
    Squared,
}

impl DistanceKind {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "euclidean" => Ok(DistanceKind::Euclidean),
            "abs_mean" => Ok(DistanceKind::AbsMean),
            "squared" => Ok(DistanceKind::Squared),
            other => Err(AbcError::Config(format!("unknown distance `{other}`"))),
        }
    }
}

impl std::fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DistanceKind::Euclidean => "euclidean",
            DistanceKind::AbsMean => "abs_mean",
            DistanceKind::Squared => "squared",
        })
    }
}

const STANDARDIZE_FLOOR: f64 = 1e-12;

/// Distance between a simulated and an observed summary vector.
///
/// With `standardize` each component difference is divided by
/// `max(|observed_i|, 1e-12)` before the distance formula is applied, putting
/// counter-scale components on a common footing; the default pipelines leave
/// it off.
pub fn distance(
    kind: DistanceKind,
    simulated: &[f64],
    observed: &[f64],
    standardize: bool,
) -> Result<f64> {
    if simulated.len() != observed.len() {
        return Err(AbcError::Shape(format!(
            "distance between vectors of length {} and {}",
            simulated.len(),
            observed.len()
        )));
    }
    if simulated.is_empty() {
        return Err(AbcError::Shape("distance of empty vectors".into()));
    }
    let diffs = simulated.iter().zip(observed).map(|(s, o)| {
        let d = s - o;
        if standardize {
            d / o.abs().max(STANDARDIZE_FLOOR)
        } else {
            d
        }
    });
    Ok(match kind {
        DistanceKind::Euclidean => diffs.map(|d| d * d).sum::<f64>().sqrt(),
        DistanceKind::AbsMean => {
            diffs.map(|d| d.abs()).sum::<f64>() / simulated.len() as f64
        }
        DistanceKind::Squared => diffs.map(|d| d * d).sum::<f64>(),
    })
}

/// Distance between two named summaries, verifying the names agree.
pub fn summary_distance(
    kind: DistanceKind,
    simulated: &SummaryVector,
    observed: &SummaryVector,
    standardize: bool,
) -> Result<f64> {
    if simulated.names != observed.names {
        return Err(AbcError::Shape(
            "simulated and observed summaries disagree on statistic names".into(),
        ));
    }
    distance(kind, &simulated.values, &observed.values, standardize)
}
