//! Entropic utility `μ^γ(Z) = (1/γ) ln E[exp(γZ)]` and its companions.
//!
//! All evaluations pivot on the sample that maximises `γ·z`, so every
//! exponent is non-positive and large `|γ|·range` cannot overflow. The
//! `γ = 0` case is a separate branch returning the plain mean.

use crate::error::{Error, Result};

/// Default `|γ|` below which the expectation branch is used.
pub const DEFAULT_ZERO_TOLERANCE: f64 = 1e-12;

/// Weight sums must equal one within this tolerance.
const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

/// Risk aversion parameter together with the `γ = 0` switch-over threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskParams {
    pub gamma: f64,
    pub zero_tolerance: f64,
}

impl RiskParams {
    pub fn new(gamma: f64) -> Result<Self> {
        Self::with_zero_tolerance(gamma, DEFAULT_ZERO_TOLERANCE)
    }

    pub fn with_zero_tolerance(gamma: f64, zero_tolerance: f64) -> Result<Self> {
        if !gamma.is_finite() {
            return Err(Error::domain(format!("gamma must be finite, got {gamma}")));
        }
        if !(zero_tolerance > 0.0 && zero_tolerance.is_finite()) {
            return Err(Error::domain(format!(
                "zero_tolerance must be positive, got {zero_tolerance}"
            )));
        }
        Ok(Self {
            gamma,
            zero_tolerance,
        })
    }

    /// True when the expectation branch applies.
    pub fn is_neutral(&self) -> bool {
        self.gamma.abs() <= self.zero_tolerance
    }

    /// Same zero tolerance, different `γ`.
    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self { gamma, ..*self }
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::domain(format!(
            "{what}[{i}] is not finite ({})",
            values[i]
        ))),
        None => Ok(()),
    }
}

fn check_weights(values: &[f64], weights: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::domain("empty value set"));
    }
    if values.len() != weights.len() {
        return Err(Error::domain(format!(
            "{} values but {} weights",
            values.len(),
            weights.len()
        )));
    }
    check_finite(values, "values")?;
    if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::domain(format!(
            "weight[{i}] = {} is negative or non-finite",
            weights[i]
        )));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::domain(format!("weights sum to {total}, expected 1")));
    }
    Ok(())
}

/// Sample maximising `γ·z`: the minimum for `γ < 0`, the maximum otherwise.
fn pivot<'a>(values: impl Iterator<Item = &'a f64>, gamma: f64) -> f64 {
    if gamma < 0.0 {
        values.fold(f64::INFINITY, |m, &v| m.min(v))
    } else {
        values.fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }
}

fn min_max<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}

/// Entropic utility of the empirical law of `samples`.
pub fn entropic_utility(samples: &[f64], params: RiskParams) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::domain("entropic utility of an empty sample"));
    }
    check_finite(samples, "samples")?;
    let (lo, hi) = min_max(samples.iter());
    let n = samples.len() as f64;
    let value = if params.is_neutral() {
        samples.iter().sum::<f64>() / n
    } else {
        let gamma = params.gamma;
        let z_star = pivot(samples.iter(), gamma);
        let mean_exp = samples
            .iter()
            .map(|&z| (gamma * (z - z_star)).exp())
            .sum::<f64>()
            / n;
        z_star + mean_exp.ln() / gamma
    };
    Ok(value.clamp(lo, hi))
}

/// Entropic utility of the discrete law `Σ w_i δ_{v_i}`.
pub fn entropic_utility_weighted(values: &[f64], weights: &[f64], params: RiskParams) -> Result<f64> {
    check_weights(values, weights)?;
    let support = || {
        values
            .iter()
            .zip(weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(v, _)| v)
    };
    let (lo, hi) = min_max(support());
    let value = if params.is_neutral() {
        values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>()
    } else {
        let gamma = params.gamma;
        let z_star = pivot(support(), gamma);
        let total: f64 = values
            .iter()
            .zip(weights)
            .map(|(&v, &w)| w * (gamma * (v - z_star)).exp())
            .sum();
        z_star + total.ln() / gamma
    };
    Ok(value.clamp(lo, hi))
}

/// Esscher-tilted weights `w_i e^{γ v_i} / Σ_j w_j e^{γ v_j}`.
pub fn esscher_weights(values: &[f64], weights: &[f64], gamma: f64) -> Result<Vec<f64>> {
    check_weights(values, weights)?;
    if !gamma.is_finite() {
        return Err(Error::domain("gamma must be finite"));
    }
    if gamma == 0.0 {
        return Ok(weights.to_vec());
    }
    let z_star = pivot(
        values.iter().zip(weights).filter(|(_, &w)| w > 0.0).map(|(v, _)| v),
        gamma,
    );
    let mut tilted: Vec<f64> = values
        .iter()
        .zip(weights)
        .map(|(&v, &w)| w * (gamma * (v - z_star)).exp())
        .collect();
    let total: f64 = tilted.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Numerical(format!(
            "Esscher normaliser is {total}; values must be rescaled"
        )));
    }
    for t in &mut tilted {
        *t /= total;
    }
    Ok(tilted)
}

/// Both sides of the entropic Hölder inequalities on one paired sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderSplit {
    /// `μ^γ(X + Y)`.
    pub lhs: f64,
    /// `μ^{pγ}(X) + μ^{qγ}(Y)`, a lower bound for `lhs` when `γ < 0`.
    pub superadditive_bound: f64,
    /// `μ^{γ/p}(X) + μ^{-qγ/p}(Y)`, an upper bound for `lhs` when `γ < 0`.
    pub subadditive_bound: f64,
}

impl HolderSplit {
    pub fn tolerance(&self) -> f64 {
        1e-9 * (1.0 + self.lhs.abs())
    }

    pub fn superadditive_holds(&self) -> bool {
        self.lhs >= self.superadditive_bound - self.tolerance()
    }

    pub fn subadditive_holds(&self) -> bool {
        self.lhs <= self.subadditive_bound + self.tolerance()
    }

    pub fn holds(&self) -> bool {
        self.superadditive_holds() && self.subadditive_holds()
    }
}

/// Evaluate the entropic Hölder split of `X + Y` for `γ < 0` and exponent `p > 1`.
///
/// `x_samples[i]` and `y_samples[i]` are one joint draw.
pub fn holder_split(x_samples: &[f64], y_samples: &[f64], gamma: f64, p: f64) -> Result<HolderSplit> {
    if x_samples.is_empty() || x_samples.len() != y_samples.len() {
        return Err(Error::domain(format!(
            "paired samples must be nonempty and equal length ({} vs {})",
            x_samples.len(),
            y_samples.len()
        )));
    }
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::domain(format!("Hölder exponent must exceed 1, got {p}")));
    }
    if !(gamma < 0.0 && gamma.is_finite()) {
        return Err(Error::domain(format!("gamma must be negative, got {gamma}")));
    }
    let q = p / (p - 1.0);
    let at = |g: f64| RiskParams::new(g);
    let sum: Vec<f64> = x_samples.iter().zip(y_samples).map(|(x, y)| x + y).collect();
    let lhs = entropic_utility(&sum, at(gamma)?)?;
    let superadditive_bound =
        entropic_utility(x_samples, at(p * gamma)?)? + entropic_utility(y_samples, at(q * gamma)?)?;
    let subadditive_bound = entropic_utility(x_samples, at(gamma / p)?)?
        + entropic_utility(y_samples, at(-q * gamma / p)?)?;
    Ok(HolderSplit {
        lhs,
        superadditive_bound,
        subadditive_bound,
    })
}
