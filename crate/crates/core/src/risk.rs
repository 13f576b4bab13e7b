//! Risk factor `κ(ε)`, the standard normal distribution, demand covariance
//! calibration and the support function of the demand ellipsoid
//! `𝓔(d̄, Γ, κ) = { d : (d − d̄)ᵀ Γ⁻¹ (d − d̄) ≤ κ² }`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::scenario::ScenarioTree;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum RiskError {
    #[error("probability {0} outside the open interval (0, 1)")]
    Probability(f64),
    #[error("calibration needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("samples must be finite and >= 0")]
    BadSample,
    #[error("covariance: {0}")]
    Covariance(String),
    #[error("unknown kappa mode `{0}` (expected gaussian or general)")]
    UnknownMode(String),
}

/// Distribution assumption behind `κ(ε)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KappaMode {
    /// `κ = Φ⁻¹(1 − ε)`.
    #[default]
    Gaussian,
    /// Chebyshev-type bound `κ = sqrt((1 − ε) / ε)`.
    General,
}

impl fmt::Display for KappaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KappaMode::Gaussian => "gaussian",
            KappaMode::General => "general",
        })
    }
}

impl FromStr for KappaMode {
    type Err = RiskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(KappaMode::Gaussian),
            "general" => Ok(KappaMode::General),
            _ => Err(RiskError::UnknownMode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskConfig {
    /// Confidence level of the demand robustification.
    pub eps1: f64,
    /// Confidence level of the thermal availability robustification.
    pub eps2: f64,
    pub kappa_mode: KappaMode,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self {
            eps1: 0.05,
            eps2: 0.05,
            kappa_mode: KappaMode::Gaussian,
        }
    }
}

impl RiskConfig {
    pub fn validate(&self) -> Result<(), RiskError> {
        check_probability(self.eps1)?;
        check_probability(self.eps2)
    }

    pub fn kappa1(&self) -> Result<f64, RiskError> {
        kappa(self.eps1, self.kappa_mode)
    }

    pub fn kappa2(&self) -> Result<f64, RiskError> {
        kappa(self.eps2, self.kappa_mode)
    }
}

fn check_probability(p: f64) -> Result<(), RiskError> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(RiskError::Probability(p))
    }
}

/// Risk factor `κ(ε)`. Negative in gaussian mode when `ε > 0.5`.
pub fn kappa(eps: f64, mode: KappaMode) -> Result<f64, RiskError> {
    check_probability(eps)?;
    Ok(match mode {
        // `+ 0.0` turns a negative zero at ε = 0.5 into +0.
        KappaMode::Gaussian => -inverse_normal_cdf(eps)? + 0.0,
        KappaMode::General => ((1.0 - eps) / eps).sqrt(),
    })
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Upper tail `1 − Φ(x)` for `x > 0` by the Laplace continued fraction,
/// evaluated with the modified Lentz algorithm.
fn upper_tail_cf(x: f64) -> f64 {
    let tiny = 1e-300;
    // Q(x) = φ(x) / (x + 1/(x + 2/(x + 3/(x + ...))))
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    normal_pdf(x) / f
}

/// Standard normal CDF.
///
/// Taylor series `Φ(x) = 1/2 + φ(x) (x + x³/3 + x⁵/15 + ...)` for
/// `|x| < 5`, continued fraction in the tails.
pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x.abs() >= 5.0 {
        let q = if x.abs() > 40.0 {
            0.0
        } else {
            upper_tail_cf(x.abs())
        };
        return if x > 0.0 { 1.0 - q } else { q };
    }
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut k = 1.0;
    loop {
        k += 2.0;
        term *= x2 / k;
        let next = sum + term;
        if next == sum {
            break;
        }
        sum = next;
    }
    (0.5 + normal_pdf(x) * sum).clamp(0.0, 1.0)
}

/// Rational initial guess for `Φ⁻¹` (relative error about 1e-9).
fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let p_low = 0.02425;
    if p < p_low {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - p_low {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Inverse standard normal CDF with `|Φ(x) − p| ≤ 1e-9`.
///
/// Newton iterations on [`normal_cdf`] from a rational guess, kept inside
/// a shrinking bracket.
pub fn inverse_normal_cdf(p: f64) -> Result<f64, RiskError> {
    check_probability(p)?;
    if p == 0.5 {
        return Ok(0.0);
    }
    let mut x = acklam(p);
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..100 {
        let f = normal_cdf(x) - p;
        if f == 0.0 {
            break;
        }
        if f < 0.0 {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        let step = f / normal_pdf(x);
        let mut next = x - step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs().max(1.0) {
            x = next;
            break;
        }
        x = next;
    }
    Ok(x)
}

/// Half-gap standard deviations of a demand sample.
///
/// With the sample sorted as `d(1) ≤ … ≤ d(m)`, `d(0) = 0` and
/// `d(m+1) = 2 d(m) − d(m−1)`, returns
/// `σ(i) = min(d(i) − d(i−1), d(i+1) − d(i)) / 2` in sorted order.
pub fn calibrate_sigma(samples: &[f64]) -> Result<Vec<f64>, RiskError> {
    let m = samples.len();
    if m < 2 {
        return Err(RiskError::TooFewSamples(m));
    }
    if samples.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(RiskError::BadSample);
    }
    let mut d = Vec::with_capacity(m + 2);
    d.push(0.0);
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    d.extend(sorted);
    d.push(2.0 * d[m] - d[m - 1]);
    Ok((1..=m)
        .map(|i| (0.5 * (d[i] - d[i - 1]).min(d[i + 1] - d[i])).max(0.0))
        .collect())
}

/// Per-cell σ for a tree: node-file values when every node has them,
/// otherwise calibrated per `(time step, post)` over the nodes of that time
/// step. Time steps with a single node get σ = 0.
pub fn tree_sigma(tree: &ScenarioTree) -> Vec<f64> {
    let l = tree.num_posts();
    let mut out = vec![0.0; tree.dual_dim()];
    if tree.nodes().iter().all(|n| n.sigma.is_some()) {
        for (i, n) in tree.nodes().iter().enumerate() {
            out[i * l..(i + 1) * l].copy_from_slice(n.sigma.as_ref().expect("checked"));
        }
        return out;
    }
    for t in 0..=tree.horizon() {
        let idx = tree.nodes_at(t);
        if idx.len() < 2 {
            continue;
        }
        for p in 0..l {
            let sample: Vec<f64> = idx.iter().map(|&i| tree.node(i).demand[p]).collect();
            let Ok(sigma) = calibrate_sigma(&sample) else {
                continue;
            };
            let mut sorted = sample.clone();
            sorted.sort_by(f64::total_cmp);
            for &i in idx {
                let v = tree.node(i).demand[p];
                let rank = sorted.partition_point(|&s| s < v);
                out[tree.offset(i, p)] = sigma[rank];
            }
        }
    }
    out
}

/// Demand mean and covariance `Γ`, diagonal by default.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    mean: Vec<f64>,
    variances: Vec<f64>,
    dense: Option<Vec<f64>>,
}

impl CovarianceModel {
    /// `Γ = diag(σ²)`.
    pub fn diagonal(mean: Vec<f64>, sigma: &[f64]) -> Result<Self, RiskError> {
        if mean.len() != sigma.len() {
            return Err(RiskError::Covariance(format!(
                "mean has dimension {}, sigma {}",
                mean.len(),
                sigma.len()
            )));
        }
        if sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(RiskError::Covariance(
                "sigma must be finite and >= 0".into(),
            ));
        }
        Ok(Self {
            mean,
            variances: sigma.iter().map(|s| s * s).collect(),
            dense: None,
        })
    }

    /// Full symmetric `Γ`, row-major `D × D`.
    pub fn dense(mean: Vec<f64>, gamma: Vec<f64>) -> Result<Self, RiskError> {
        let n = mean.len();
        if gamma.len() != n * n {
            return Err(RiskError::Covariance(format!(
                "expected {} entries, got {}",
                n * n,
                gamma.len()
            )));
        }
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (gamma[i * n + j], gamma[j * n + i]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(RiskError::Covariance(format!(
                        "not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let variances = (0..n).map(|i| gamma[i * n + i]).collect();
        Ok(Self {
            mean,
            variances,
            dense: Some(gamma),
        })
    }

    /// Mean demand of the tree with calibrated diagonal covariance.
    pub fn from_tree(tree: &ScenarioTree) -> Self {
        Self::diagonal(tree.demand_vector(), &tree_sigma(tree)).expect("calibrated sigma is valid")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn is_dense(&self) -> bool {
        self.dense.is_some()
    }

    /// `Γλ`.
    pub fn apply(&self, lambda: &[f64]) -> Vec<f64> {
        match &self.dense {
            None => lambda
                .iter()
                .zip(&self.variances)
                .map(|(l, v)| l * v)
                .collect(),
            Some(g) => {
                let n = self.dim();
                (0..n)
                    .map(|i| {
                        g[i * n..(i + 1) * n]
                            .iter()
                            .zip(lambda)
                            .map(|(a, b)| a * b)
                            .sum()
                    })
                    .collect()
            }
        }
    }

    /// `λᵀΓλ`, clamped at 0 against rounding.
    pub fn quadratic_form(&self, lambda: &[f64]) -> f64 {
        let q: f64 = match &self.dense {
            None => lambda
                .iter()
                .zip(&self.variances)
                .map(|(l, v)| l * l * v)
                .sum(),
            Some(_) => self
                .apply(lambda)
                .iter()
                .zip(lambda)
                .map(|(a, b)| a * b)
                .sum(),
        };
        q.max(0.0)
    }
}

/// Support value `φ(λ) = min_{d∈𝓔} λᵀd = λᵀd̄ − κ sqrt(λᵀΓλ)` and the
/// supergradient `d̄ − κ Γλ / sqrt(λᵀΓλ)` (`d̄` when the form vanishes).
pub fn ellipsoid_support(lambda: &[f64], cov: &CovarianceModel, kappa: f64) -> (f64, Vec<f64>) {
    assert_eq!(
        lambda.len(),
        cov.dim(),
        "multiplier and covariance dimensions differ"
    );
    let lin: f64 = lambda.iter().zip(cov.mean()).map(|(l, d)| l * d).sum();
    let q = cov.quadratic_form(lambda);
    if q <= 0.0 || kappa == 0.0 {
        return (lin, cov.mean().to_vec());
    }
    let root = q.sqrt();
    let g = cov.apply(lambda);
    let grad = cov
        .mean()
        .iter()
        .zip(&g)
        .map(|(d, gl)| d - kappa * gl / root)
        .collect();
    (lin - kappa * root, grad)
}
