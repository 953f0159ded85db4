//! Distribution families used as priors, kernels, and simulator noise:
//! sampling, log-densities, moments, and the g-and-k quantile function.
//!
//! All densities are returned in log space; queries outside a family's support
//! return negative infinity rather than an error so that importance-weight code
//! can treat out-of-prior proposals as zero weight.

use crate::error::{AbcError, Result};
use rand::Rng;
use rand_distr::Distribution;

/// A sampled or evaluated value: scalar or probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Scalar(f64),
    Simplex(Vec<f64>),
}

impl Value {
    pub fn as_scalar(&self) -> Result<f64> {
        match self {
            Value::Scalar(x) => Ok(*x),
            Value::Simplex(_) => Err(AbcError::Shape("expected scalar, got simplex".into())),
        }
    }

    pub fn as_simplex(&self) -> Result<&[f64]> {
        match self {
            Value::Simplex(v) => Ok(v),
            Value::Scalar(_) => Err(AbcError::Shape("expected simplex, got scalar".into())),
        }
    }
}

/// Declarative distribution specification with a canonical textual form.
#[derive(Debug, Clone, PartialEq)]
pub enum DistributionSpec {
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
    Beta { alpha: f64, beta: f64 },
    /// Shape/scale parameterization.
    Gamma { shape: f64, scale: f64 },
    Dirichlet { alpha: Vec<f64> },
    Categorical { probs: Vec<f64> },
    GandK { a: f64, b: f64, c: f64, g: f64, k: f64 },
}

impl DistributionSpec {
    /// Validate the family's parameter invariants.
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(AbcError::Domain(m));
        match self {
            DistributionSpec::Normal { sd, .. } => {
                if !sd.is_finite() || *sd <= 0.0 {
                    return err(format!("normal sd must be positive, got {sd}"));
                }
            }
            DistributionSpec::Uniform { lo, hi } => {
                // hi == lo is tolerated as a degenerate point mass.
                if !(lo.is_finite() && hi.is_finite()) || hi < lo {
                    return err(format!("uniform requires hi >= lo, got ({lo}, {hi})"));
                }
            }
            DistributionSpec::Beta { alpha, beta } => {
                if *alpha <= 0.0 || *beta <= 0.0 {
                    return err(format!("beta parameters must be positive, got ({alpha}, {beta})"));
                }
            }
            DistributionSpec::Gamma { shape, scale } => {
                if *shape <= 0.0 || *scale <= 0.0 {
                    return err(format!("gamma parameters must be positive, got ({shape}, {scale})"));
                }
            }
            DistributionSpec::Dirichlet { alpha } => {
                if alpha.len() < 2 {
                    return err("dirichlet needs dimension >= 2".into());
                }
                if alpha.iter().any(|a| *a <= 0.0) {
                    return err("dirichlet alphas must all be positive".into());
                }
            }
            DistributionSpec::Categorical { probs } => {
                if probs.is_empty() || probs.iter().any(|p| *p < 0.0) {
                    return err("categorical probabilities must be nonnegative".into());
                }
                let s: f64 = probs.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return err(format!("categorical probabilities must sum to 1, got {s}"));
                }
            }
            DistributionSpec::GandK { b, k, .. } => {
                if *b <= 0.0 {
                    return err(format!("g-and-k b must be positive, got {b}"));
                }
                if *k <= -0.5 {
                    return err(format!("g-and-k k must exceed -0.5, got {k}"));
                }
            }
        }
        Ok(())
    }

    /// Dimension of sampled values: 1 for scalars, K for simplexes.
    pub fn dim(&self) -> usize {
        match self {
            DistributionSpec::Dirichlet { alpha } => alpha.len(),
            _ => 1,
        }
    }

    pub fn is_simplex(&self) -> bool {
        matches!(self, DistributionSpec::Dirichlet { .. })
    }

    /// Draw one value. Pure in (self, rng state).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Value {
        match self {
            DistributionSpec::Normal { mean, sd } => {
                let d = rand_distr::Normal::new(*mean, *sd).expect("validated");
                Value::Scalar(d.sample(rng))
            }
            DistributionSpec::Uniform { lo, hi } => {
                if hi == lo {
                    Value::Scalar(*lo)
                } else {
                    Value::Scalar(rng.gen_range(*lo..*hi))
                }
            }
            DistributionSpec::Beta { alpha, beta } => {
                let d = rand_distr::Beta::new(*alpha, *beta).expect("validated");
                Value::Scalar(d.sample(rng))
            }
            DistributionSpec::Gamma { shape, scale } => {
                let d = rand_distr::Gamma::new(*shape, *scale).expect("validated");
                Value::Scalar(d.sample(rng))
            }
            DistributionSpec::Dirichlet { alpha } => {
                // Normalized Gamma(alpha_i, 1) draws.
                let mut g: Vec<f64> = alpha
                    .iter()
                    .map(|a| {
                        rand_distr::Gamma::new(*a, 1.0)
                            .expect("validated")
                            .sample(rng)
                    })
                    .collect();
                let mut total: f64 = g.iter().sum();
                while total <= 0.0 {
                    // Astronomically unlikely; redraw rather than divide by zero.
                    for (gi, a) in g.iter_mut().zip(alpha) {
                        *gi = rand_distr::Gamma::new(*a, 1.0)
                            .expect("validated")
                            .sample(rng);
                    }
                    total = g.iter().sum();
                }
                for gi in &mut g {
                    *gi /= total;
                }
                Value::Simplex(g)
            }
            DistributionSpec::Categorical { probs } => {
                let u: f64 = rng.gen();
                let mut cum = 0.0;
                let mut idx = probs.len() - 1;
                for (i, p) in probs.iter().enumerate() {
                    cum += p;
                    if u < cum {
                        idx = i;
                        break;
                    }
                }
                Value::Scalar(idx as f64)
            }
            DistributionSpec::GandK { a, b, c, g, k } => {
                let z: f64 = rand_distr::StandardNormal.sample(rng);
                Value::Scalar(gk_transform(z, *a, *b, *c, *g, *k))
            }
        }
    }

    /// Log-density at `value`; -infinity outside the support.
    pub fn log_density(&self, value: &Value) -> Result<f64> {
        match self {
            DistributionSpec::Normal { mean, sd } => {
                let x = value.as_scalar()?;
                let z = (x - mean) / sd;
                Ok(-0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln())
            }
            DistributionSpec::Uniform { lo, hi } => {
                let x = value.as_scalar()?;
                if hi == lo {
                    // Degenerate point mass: no density; report -inf off the point
                    // and 0 at it so repeated-value checks stay well-defined.
                    return Ok(if x == *lo { 0.0 } else { f64::NEG_INFINITY });
                }
                if x < *lo || x > *hi {
                    Ok(f64::NEG_INFINITY)
                } else {
                    Ok(-(hi - lo).ln())
                }
            }
            DistributionSpec::Beta { alpha, beta } => {
                let x = value.as_scalar()?;
                if x <= 0.0 || x >= 1.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                Ok((alpha - 1.0) * x.ln() + (beta - 1.0) * (1.0 - x).ln()
                    - ln_beta(*alpha, *beta))
            }
            DistributionSpec::Gamma { shape, scale } => {
                let x = value.as_scalar()?;
                if x <= 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                Ok((shape - 1.0) * x.ln() - x / scale - shape * scale.ln() - ln_gamma(*shape))
            }
            DistributionSpec::Dirichlet { alpha } => {
                let x = value.as_simplex()?;
                if x.len() != alpha.len() {
                    return Err(AbcError::Shape(format!(
                        "dirichlet dimension {} but value dimension {}",
                        alpha.len(),
                        x.len()
                    )));
                }
                let sum: f64 = x.iter().sum();
                if (sum - 1.0).abs() > 1e-9 || x.iter().any(|v| *v <= 0.0 || *v >= 1.0) {
                    return Ok(f64::NEG_INFINITY);
                }
                let a0: f64 = alpha.iter().sum();
                let mut ld = ln_gamma(a0);
                for (xi, ai) in x.iter().zip(alpha) {
                    ld += (ai - 1.0) * xi.ln() - ln_gamma(*ai);
                }
                Ok(ld)
            }
            DistributionSpec::Categorical { probs } => {
                let x = value.as_scalar()?;
                let idx = x.round();
                if (x - idx).abs() > 1e-9 || idx < 0.0 || idx as usize >= probs.len() {
                    return Ok(f64::NEG_INFINITY);
                }
                let p = probs[idx as usize];
                Ok(if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
            }
            DistributionSpec::GandK { a, b, c, g, k } => {
                let x = value.as_scalar()?;
                Ok(gk_log_density(x, *a, *b, *c, *g, *k))
            }
        }
    }

    /// Closed-form (mean, variance) for scalar families; None when no closed
    /// form applies (g-and-k) or the value is vector-valued (Dirichlet).
    pub fn moments(&self) -> Option<(f64, f64)> {
        match self {
            DistributionSpec::Normal { mean, sd } => Some((*mean, sd * sd)),
            DistributionSpec::Uniform { lo, hi } => {
                Some(((lo + hi) / 2.0, (hi - lo) * (hi - lo) / 12.0))
            }
            DistributionSpec::Beta { alpha, beta } => {
                let s = alpha + beta;
                Some((alpha / s, alpha * beta / (s * s * (s + 1.0))))
            }
            DistributionSpec::Gamma { shape, scale } => {
                Some((shape * scale, shape * scale * scale))
            }
            DistributionSpec::Categorical { probs } => {
                let mean: f64 = probs.iter().enumerate().map(|(i, p)| i as f64 * p).sum();
                let m2: f64 = probs
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i as f64) * (i as f64) * p)
                    .sum();
                Some((mean, m2 - mean * mean))
            }
            DistributionSpec::Dirichlet { .. } | DistributionSpec::GandK { .. } => None,
        }
    }

    /// Per-component (mean, variance) for the Dirichlet family.
    pub fn dirichlet_moments(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            DistributionSpec::Dirichlet { alpha } => {
                let a0: f64 = alpha.iter().sum();
                Some(
                    alpha
                        .iter()
                        .map(|ai| (ai / a0, ai * (a0 - ai) / (a0 * a0 * (a0 + 1.0))))
                        .collect(),
                )
            }
            _ => None,
        }
    }

    /// Parse the canonical textual form, e.g. `normal(2,3)` or
    /// `dirichlet(3,3,3)`. Case-insensitive and whitespace-tolerant.
    pub fn parse(text: &str) -> Result<Self> {
        let s = text.trim();
        let open = s
            .find('(')
            .ok_or_else(|| AbcError::Config(format!("distribution `{s}` missing `(`")))?;
        if !s.ends_with(')') {
            return Err(AbcError::Config(format!("distribution `{s}` missing `)`")));
        }
        let name = s[..open].trim().to_ascii_lowercase();
        let args: Vec<f64> = s[open + 1..s.len() - 1]
            .split(',')
            .map(|a| {
                a.trim()
                    .parse::<f64>()
                    .map_err(|_| AbcError::Config(format!("bad numeric argument `{}` in `{s}`", a.trim())))
            })
            .collect::<Result<_>>()?;
        let expect = |n: usize| -> Result<()> {
            if args.len() != n {
                Err(AbcError::Config(format!(
                    "`{name}` takes {n} arguments, got {}",
                    args.len()
                )))
            } else {
                Ok(())
            }
        };
        let spec = match name.as_str() {
            "normal" => {
                expect(2)?;
                DistributionSpec::Normal { mean: args[0], sd: args[1] }
            }
            "uniform" => {
                expect(2)?;
                DistributionSpec::Uniform { lo: args[0], hi: args[1] }
            }
            "beta" => {
                expect(2)?;
                DistributionSpec::Beta { alpha: args[0], beta: args[1] }
            }
            "gamma" => {
                expect(2)?;
                DistributionSpec::Gamma { shape: args[0], scale: args[1] }
            }
            "dirichlet" => DistributionSpec::Dirichlet { alpha: args.clone() },
            "categorical" => DistributionSpec::Categorical { probs: args.clone() },
            "gk" => {
                expect(5)?;
                DistributionSpec::GandK {
                    a: args[0],
                    b: args[1],
                    c: args[2],
                    g: args[3],
                    k: args[4],
                }
            }
            other => {
                return Err(AbcError::Config(format!("unknown distribution family `{other}`")))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl std::fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fn list(xs: &[f64]) -> String {
            xs.iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(",")
        }
        match self {
            DistributionSpec::Normal { mean, sd } => write!(f, "normal({mean},{sd})"),
            DistributionSpec::Uniform { lo, hi } => write!(f, "uniform({lo},{hi})"),
            DistributionSpec::Beta { alpha, beta } => write!(f, "beta({alpha},{beta})"),
            DistributionSpec::Gamma { shape, scale } => write!(f, "gamma({shape},{scale})"),
            DistributionSpec::Dirichlet { alpha } => write!(f, "dirichlet({})", list(alpha)),
            DistributionSpec::Categorical { probs } => write!(f, "categorical({})", list(probs)),
            DistributionSpec::GandK { a, b, c, g, k } => write!(f, "gk({a},{b},{c},{g},{k})"),
        }
    }
}

/// g-and-k quantile value at standard-normal deviate `z`.
fn gk_transform(z: f64, a: f64, b: f64, c: f64, g: f64, k: f64) -> f64 {
    // (1 - exp(-g z)) / (1 + exp(-g z)) == tanh(g z / 2), including g = 0.
    let t = (0.5 * g * z).tanh();
    a + b * (1.0 + c * t) * (1.0 + z * z).powf(k) * z
}

/// Derivative dQ/dz of the g-and-k quantile function.
fn gk_transform_dz(z: f64, b: f64, c: f64, g: f64, k: f64) -> f64 {
    let t = (0.5 * g * z).tanh();
    let tp = 0.5 * g * (1.0 - t * t);
    let w = (1.0 + z * z).powf(k);
    let wp = if k == 0.0 {
        0.0
    } else {
        k * (1.0 + z * z).powf(k - 1.0) * 2.0 * z
    };
    b * (c * tp * w * z + (1.0 + c * t) * (w + z * wp))
}

/// g-and-k quantile function at probability `p`.
pub fn gk_quantile(p: f64, a: f64, b: f64, c: f64, g: f64, k: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(AbcError::Domain(format!("gk quantile requires 0 < p < 1, got {p}")));
    }
    Ok(gk_transform(standard_normal_quantile(p)?, a, b, c, g, k))
}

/// g-and-k log-density via numeric inversion of the quantile function.
pub fn gk_log_density(x: f64, a: f64, b: f64, c: f64, g: f64, k: f64) -> f64 {
    // Q(z) is monotone increasing for valid parameters; bisect for Q(z) = x.
    let (mut lo, mut hi) = (-38.0f64, 38.0f64);
    if x <= gk_transform(lo, a, b, c, g, k) || x >= gk_transform(hi, a, b, c, g, k) {
        return f64::NEG_INFINITY;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gk_transform(mid, a, b, c, g, k) < x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let z = 0.5 * (lo + hi);
    // f(x) = phi(z) / Q'(z)
    let log_phi = -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln();
    let dq = gk_transform_dz(z, b, c, g, k);
    if dq <= 0.0 {
        return f64::NEG_INFINITY;
    }
    log_phi - dq.ln()
}

/// Posterior mean of a Dirichlet-Categorical update: (c_i + alpha_i) / (N + sum alpha).
pub fn dirichlet_posterior_mean(counts: &[u64], alpha: &[f64]) -> Result<Vec<f64>> {
    if counts.len() != alpha.len() {
        return Err(AbcError::Shape(format!(
            "counts dimension {} but alpha dimension {}",
            counts.len(),
            alpha.len()
        )));
    }
    let n: f64 = counts.iter().map(|c| *c as f64).sum();
    let a0: f64 = alpha.iter().sum();
    Ok(counts
        .iter()
        .zip(alpha)
        .map(|(c, a)| (*c as f64 + a) / (n + a0))
        .collect())
}

/// Inverse standard-normal CDF (Wichura's PPND16 rational approximation),
/// absolute error below 1e-9 across (0, 1).
pub fn standard_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(AbcError::Domain(format!(
            "normal quantile requires 0 < p < 1, got {p}"
        )));
    }
    const A: [f64; 8] = [
        3.387_132_872_796_366_608e0,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34e0,
        4.630_337_846_156_545_295_9e0,
        5.769_497_221_460_691_405_5e0,
        3.647_848_324_763_204_605_04e0,
        1.270_458_252_452_368_382_58e0,
        2.417_807_251_774_506_117_7e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87e0,
        1.676_384_830_183_803_849_4e0,
        6.897_673_349_851_000_045_5e-1,
        1.481_039_764_274_800_745_9e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2e0,
        5.463_784_911_164_114_369_9e0,
        1.784_826_539_917_291_335_8e0,
        2.965_605_718_285_048_912_3e-1,
        2.653_218_952_657_612_309_3e-2,
        1.242_660_947_388_078_438_6e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_9e-1,
        1.369_298_809_227_358_053_1e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];
    fn poly(c: &[f64; 8], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, ci| acc * x + ci)
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return Ok(q * poly(&A, r) / poly(&B, r));
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let s = (-r.ln()).sqrt();
    let val = if s <= 5.0 {
        let t = s - 1.6;
        poly(&C, t) / poly(&D, t)
    } else {
        let t = s - 5.0;
        poly(&E, t) / poly(&F, t)
    };
    Ok(if q < 0.0 { -val } else { val })
}

/// Natural log of the Gamma function (Lanczos, g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut sum = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        sum += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}

/// Natural log of the Beta function.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{child_rng, Domain};

    fn spec(text: &str) -> DistributionSpec {
        DistributionSpec::parse(text).unwrap()
    }

    #[test]
    fn parse_round_trips_canonical_forms() {
        for text in [
            "normal(2,3)",
            "uniform(40,60)",
            "beta(2,2)",
            "gamma(1,3)",
            "dirichlet(3,3,3)",
            "categorical(0.25,0.75)",
            "gk(3,1,0.8,2,0.5)",
        ] {
            let s = spec(text);
            assert_eq!(s, spec(&s.to_string()));
        }
        // Case-insensitive and whitespace-tolerant.
        assert_eq!(spec(" Normal ( 2 , 3 ) "), spec("normal(2,3)"));
        assert!(DistributionSpec::parse("cauchy(0,1)").is_err());
        assert!(DistributionSpec::parse("normal(2)").is_err());
        assert!(DistributionSpec::parse("beta(-1,2)").is_err());
    }

    #[test]
    fn normal_quantile_reference_table() {
        // Reference values computed with an independent high-precision
        // evaluation before the implementation was written.
        let table = [
            (0.5, 0.0),
            (0.975, 1.959_963_984_540_054_24),
            (0.9, 1.281_551_565_544_600_47),
            (0.99, 2.326_347_874_040_841_1),
            (0.999, 3.090_232_306_167_813_54),
            (0.025, -1.959_963_984_540_054_24),
            (0.001_349_898_031_630_093_3, -3.0),
            (1e-9, -5.997_807_015_007_686_87),
            (0.841_344_746_068_542_93, 1.0),
        ];
        for (p, want) in table {
            let got = standard_normal_quantile(p).unwrap();
            assert!(
                (got - want).abs() <= 1e-9,
                "quantile({p}) = {got}, want {want}"
            );
        }
        assert!(standard_normal_quantile(0.0).is_err());
        assert!(standard_normal_quantile(1.0).is_err());
    }

    #[test]
    fn normal_quantile_symmetry() {
        for p in [0.01, 0.2, 0.37, 0.499, 0.7] {
            let a = standard_normal_quantile(p).unwrap();
            let b = standard_normal_quantile(1.0 - p).unwrap();
            assert!((a + b).abs() < 1e-12, "asymmetry at {p}");
        }
    }

    #[test]
    fn gk_quantile_contract() {
        // Median returns the location parameter for any shape.
        let q = gk_quantile(0.5, 3.0, 1.0, 0.8, 2.0, 0.5).unwrap();
        assert!((q - 3.0).abs() < 1e-12);

        // g = k = 0 reduces to the Normal(a, b) quantile.
        for p in [0.01, 0.1, 0.33, 0.5, 0.77, 0.999] {
            let gk = gk_quantile(p, 1.5, 2.0, 0.8, 0.0, 0.0).unwrap();
            let norm = 1.5 + 2.0 * standard_normal_quantile(p).unwrap();
            assert!((gk - norm).abs() < 1e-9, "mismatch at p={p}");
        }

        // Frozen oracle: z = 1 (p = Phi(1)), params (3, 1, 0.8, 2, 0.5).
        let p = 0.841_344_746_068_542_948_59;
        let got = gk_quantile(p, 3.0, 1.0, 0.8, 2.0, 0.5).unwrap();
        assert!(
            (got - 5.275_858_989_874_481_277_3).abs() < 1e-9,
            "gk oracle mismatch: {got}"
        );

        assert!(gk_quantile(0.0, 3.0, 1.0, 0.8, 2.0, 0.5).is_err());
    }

    #[test]
    fn gk_quantile_monotone() {
        let mut prev = f64::NEG_INFINITY;
        for i in 1..200 {
            let p = i as f64 / 200.0;
            let q = gk_quantile(p, 3.0, 1.0, 0.8, 2.0, 0.5).unwrap();
            assert!(q >= prev);
            prev = q;
        }
    }

    #[test]
    fn gk_density_matches_normal_reduction() {
        // With g = k = 0 the density must equal Normal(a, b).
        let n = DistributionSpec::Normal { mean: 1.5, sd: 2.0 };
        for x in [-3.0, 0.0, 1.5, 4.2] {
            let gk = gk_log_density(x, 1.5, 2.0, 0.8, 0.0, 0.0);
            let norm = n.log_density(&Value::Scalar(x)).unwrap();
            assert!((gk - norm).abs() < 1e-7, "x={x}: {gk} vs {norm}");
        }
    }

    #[test]
    fn log_density_spot_values() {
        assert_eq!(
            spec("uniform(0,1)")
                .log_density(&Value::Scalar(0.5))
                .unwrap(),
            0.0
        );
        let beta = spec("beta(2,2)").log_density(&Value::Scalar(0.5)).unwrap();
        assert!((beta - 1.5f64.ln()).abs() < 1e-12);
        let norm = spec("normal(0,1)").log_density(&Value::Scalar(0.0)).unwrap();
        assert!((norm + 0.918_938_533_204_672_7).abs() < 1e-12);
        // Outside support.
        assert_eq!(
            spec("beta(2,2)").log_density(&Value::Scalar(1.5)).unwrap(),
            f64::NEG_INFINITY
        );
        assert_eq!(
            spec("uniform(40,60)")
                .log_density(&Value::Scalar(10.0))
                .unwrap(),
            f64::NEG_INFINITY
        );
        assert_eq!(
            spec("gamma(1,3)").log_density(&Value::Scalar(-1.0)).unwrap(),
            f64::NEG_INFINITY
        );
        // Gamma(1,3) is Exponential(scale 3): at x=3, ln(exp(-1)/3).
        let g = spec("gamma(1,3)").log_density(&Value::Scalar(3.0)).unwrap();
        assert!((g - (-1.0 - 3.0f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn dirichlet_density_and_shape_errors() {
        let d = spec("dirichlet(1,1,1)");
        // Flat Dirichlet density is Gamma(3) = 2 everywhere on the simplex.
        let ld = d
            .log_density(&Value::Simplex(vec![0.2, 0.3, 0.5]))
            .unwrap();
        assert!((ld - 2.0f64.ln()).abs() < 1e-10);
        assert_eq!(
            d.log_density(&Value::Simplex(vec![0.2, 0.2, 0.2])).unwrap(),
            f64::NEG_INFINITY
        );
        assert!(d.log_density(&Value::Simplex(vec![0.5, 0.5])).is_err());
    }

    #[test]
    fn scalar_quadrature_integrates_to_one() {
        // Trapezoid quadrature of exp(log_density) over the support.
        let cases: Vec<(DistributionSpec, f64, f64)> = vec![
            (spec("normal(2,3)"), -28.0, 32.0),
            (spec("beta(2,2)"), 1e-9, 1.0 - 1e-9),
            (spec("gamma(2,3)"), 1e-9, 120.0),
            (spec("uniform(40,60)"), 40.0, 60.0),
            (spec("gk(3,1,0.8,2,0.5)"), -40.0, 220.0),
        ];
        for (s, lo, hi) in cases {
            let n = 20_000;
            let h = (hi - lo) / n as f64;
            let mut total = 0.0;
            for i in 0..=n {
                let x = lo + h * i as f64;
                let f = s.log_density(&Value::Scalar(x)).unwrap().exp();
                total += if i == 0 || i == n { 0.5 * f } else { f };
            }
            total *= h;
            assert!((total - 1.0).abs() < 1e-4, "{s}: integral {total}");
        }
    }

    #[test]
    fn sampling_matches_moments_within_five_se() {
        let n = 100_000usize;
        for text in [
            "normal(2,3)",
            "uniform(40,60)",
            "beta(2,2)",
            "gamma(1,3)",
            "categorical(0.2,0.5,0.3)",
        ] {
            let s = spec(text);
            let (mean, var) = s.moments().unwrap();
            let mut rng = child_rng(12345, Domain::Prior, 0, 0);
            let xs: Vec<f64> = (0..n)
                .map(|_| s.sample(&mut rng).as_scalar().unwrap())
                .collect();
            let m = xs.iter().sum::<f64>() / n as f64;
            let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
            let se_mean = (var / n as f64).sqrt();
            assert!(
                (m - mean).abs() < 5.0 * se_mean,
                "{text}: mean {m} vs {mean}"
            );
            // Crude but sufficient bound for the variance check.
            let se_var = var * (2.0 / n as f64).sqrt() * 3.0;
            assert!(
                (v - var).abs() < 5.0 * se_var.max(1e-6),
                "{text}: var {v} vs {var}"
            );
        }
    }

    #[test]
    fn beta22_sampling_matches_paper_moments() {
        // E = 0.5, Var = 0.05.
        let s = spec("beta(2,2)");
        let mut rng = child_rng(7, Domain::Prior, 0, 0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| s.sample(&mut rng).as_scalar().unwrap())
            .collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
        assert!((m - 0.5).abs() < 0.005);
        assert!((v - 0.05).abs() < 0.005);
    }

    #[test]
    fn dirichlet_sampling_matches_componentwise_moments() {
        // Dirichlet(2,2,2): per-component variance 2*4/(36*7) = 0.031746.
        let s = spec("dirichlet(2,2,2)");
        let want = s.dirichlet_moments().unwrap();
        let mut rng = child_rng(99, Domain::Prior, 0, 0);
        let n = 100_000;
        let mut sums = vec![0.0; 3];
        let mut sq = vec![0.0; 3];
        for _ in 0..n {
            let v = s.sample(&mut rng);
            let x = v.as_simplex().unwrap();
            let total: f64 = x.iter().sum();
            assert!((total - 1.0).abs() <= 1e-9);
            for i in 0..3 {
                sums[i] += x[i];
                sq[i] += x[i] * x[i];
            }
        }
        for i in 0..3 {
            let m = sums[i] / n as f64;
            let v = sq[i] / n as f64 - m * m;
            assert!((m - want[i].0).abs() < 0.003, "component {i} mean");
            assert!((v - 0.031_746).abs() < 0.003, "component {i} var {v}");
        }
    }

    #[test]
    fn degenerate_uniform_is_a_point() {
        let s = spec("uniform(5,5)");
        let mut rng = child_rng(1, Domain::Prior, 0, 0);
        for _ in 0..10 {
            assert_eq!(s.sample(&mut rng).as_scalar().unwrap(), 5.0);
        }
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let s = spec("gk(3,1,0.8,2,0.5)");
        let a: Vec<f64> = {
            let mut rng = child_rng(11, Domain::Prior, 4, 2);
            (0..8).map(|_| s.sample(&mut rng).as_scalar().unwrap()).collect()
        };
        let b: Vec<f64> = {
            let mut rng = child_rng(11, Domain::Prior, 4, 2);
            (0..8).map(|_| s.sample(&mut rng).as_scalar().unwrap()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn dirichlet_posterior_mean_examples() {
        let m = dirichlet_posterior_mean(&[0, 0, 0], &[2.0, 2.0, 2.0]).unwrap();
        for c in &m {
            assert!((c - 1.0 / 3.0).abs() < 1e-15);
        }
        let m = dirichlet_posterior_mean(&[10, 0, 0], &[1.0, 1.0, 1.0]).unwrap();
        assert!((m[0] - 11.0 / 13.0).abs() < 1e-15);
        assert!((m[1] - 1.0 / 13.0).abs() < 1e-15);
        let m = dirichlet_posterior_mean(&[1, 1], &[1.0, 1.0]).unwrap();
        assert_eq!(m, vec![0.5, 0.5]);
        assert!(dirichlet_posterior_mean(&[1], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn ln_gamma_reference_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-12);
        assert!((ln_gamma(5.0) - 24.0f64.ln()).abs() < 1e-11);
        assert!((ln_gamma(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-11);
        // B(2,2) = 1/6.
        assert!((ln_beta(2.0, 2.0) + 6.0f64.ln()).abs() < 1e-11);
    }
}
