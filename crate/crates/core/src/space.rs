//! Exact finite probability spaces and the validity oracles.
//!
//! Every probability mass in this module is accumulated by a plain left-to-right
//! sum in outcome order. A p-variable whose values are themselves masses of
//! outcome sets computed this way (the Cournot p-embedding, Neyman–Pearson
//! p-variables, grid p-variables) therefore reproduces its own value bit for
//! bit inside [`is_p_variable`], and passes with `tol = 0`. Such masses are
//! capped at 1, where rounding can overshoot; values of 1 are never checked.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::{serde_ext, EvalError, Result};

/// Allowed deviation of `Σ probs` from 1.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace")]
pub struct FiniteSpace {
    outcomes: Vec<String>,
    probs: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSpace {
    outcomes: Vec<String>,
    probs: Vec<f64>,
}

impl TryFrom<RawSpace> for FiniteSpace {
    type Error = EvalError;

    fn try_from(raw: RawSpace) -> Result<Self> {
        FiniteSpace::new(raw.outcomes, raw.probs)
    }
}

impl FiniteSpace {
    pub fn new(outcomes: Vec<String>, probs: Vec<f64>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(EvalError::InvalidSpace("no outcomes".into()));
        }
        if outcomes.len() != probs.len() {
            return Err(EvalError::Dimension {
                expected: outcomes.len(),
                got: probs.len(),
            });
        }
        if let Some(p) = probs.iter().find(|p| !(**p >= 0.0 && **p <= 1.0)) {
            return Err(EvalError::InvalidSpace(format!("probability {p} outside [0, 1]")));
        }
        let mut seen = HashSet::with_capacity(outcomes.len());
        if let Some(dup) = outcomes.iter().find(|o| !seen.insert(o.as_str())) {
            return Err(EvalError::InvalidSpace(format!("duplicate outcome `{dup}`")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(EvalError::InvalidSpace(format!("probabilities sum to {total}")));
        }
        Ok(FiniteSpace { outcomes, probs })
    }

    /// Space with outcomes labelled by position.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        let outcomes = (0..probs.len()).map(|i| i.to_string()).collect();
        FiniteSpace::new(outcomes, probs)
    }

    /// Uniform space on `n` outcomes labelled `"0"`, …, `"n-1"`.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(EvalError::InvalidSpace("no outcomes".into()));
        }
        FiniteSpace::from_probs(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.outcomes
            .iter()
            .position(|o| o == label)
            .ok_or_else(|| EvalError::UnknownOutcome(label.to_owned()))
    }

    /// Probability of the outcomes selected by `pred`, summed in outcome order.
    pub fn mass_where(&self, mut pred: impl FnMut(usize) -> bool) -> f64 {
        let mut total = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            if pred(i) {
                total += p;
            }
        }
        total
    }

    fn check_dims(&self, rv: &RandomVariable) -> Result<()> {
        if rv.len() != self.len() {
            return Err(EvalError::Dimension {
                expected: self.len(),
                got: rv.len(),
            });
        }
        Ok(())
    }
}

/// Values of a random variable, one per outcome of the space it is paired with.
/// Values are nonnegative; `+∞` is allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVariable")]
pub struct RandomVariable {
    #[serde(with = "serde_ext::vec")]
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawVariable {
    #[serde(with = "serde_ext::vec")]
    values: Vec<f64>,
}

impl TryFrom<RawVariable> for RandomVariable {
    type Error = EvalError;

    fn try_from(raw: RawVariable) -> Result<Self> {
        RandomVariable::new(raw.values)
    }
}

impl RandomVariable {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(EvalError::InvalidVariable(format!("value {v} is not a nonnegative number")));
        }
        Ok(RandomVariable { values })
    }

    pub fn constant(value: f64, len: usize) -> Result<Self> {
        RandomVariable::new(vec![value; len])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Pointwise transform; the result must again be nonnegative.
    pub fn try_map(&self, f: impl FnMut(f64) -> Result<f64>) -> Result<Self> {
        let values = self.values.iter().copied().map(f).collect::<Result<Vec<_>>>()?;
        RandomVariable::new(values)
    }
}

/// `E_P[rv]`. Infinite values on null outcomes contribute nothing; on outcomes
/// of positive probability they make the expectation infinite.
pub fn expectation(space: &FiniteSpace, rv: &RandomVariable) -> Result<f64> {
    space.check_dims(rv)?;
    let mut total = 0.0;
    for (&p, &v) in space.probs.iter().zip(&rv.values) {
        if p > 0.0 {
            total += p * v;
        }
    }
    Ok(total)
}

pub fn is_e_variable(space: &FiniteSpace, rv: &RandomVariable, tol: f64) -> Result<bool> {
    Ok(expectation(space, rv)? <= 1.0 + tol)
}

/// Largest `P(rv ≤ v) − v` over the achieved values `v < 1`; `None` when every
/// value is at least 1.
///
/// `P(rv ≤ α)` is a right-continuous step function that only jumps at
/// achieved values, so this is the worst case over all `α ∈ (0, 1)`.
pub fn max_p_excess(space: &FiniteSpace, rv: &RandomVariable) -> Result<Option<f64>> {
    space.check_dims(rv)?;
    let mut levels: Vec<f64> = rv.values.iter().copied().filter(|&v| v < 1.0).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let worst = levels
        .iter()
        .map(|&v| space.mass_where(|i| rv.values[i] <= v) - v)
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))));
    Ok(worst)
}

pub fn is_p_variable(space: &FiniteSpace, rv: &RandomVariable, tol: f64) -> Result<bool> {
    Ok(max_p_excess(space, rv)?.is_none_or(|excess| excess <= tol))
}

/// The grid p-variable `p(i) = i/N` on the uniform space of `N` outcomes
/// labelled `"1"`, …, `"N"`. Each value is the mass of outcomes `1..=i`.
pub fn grid_p_variable(n: usize) -> Result<(FiniteSpace, RandomVariable)> {
    if n == 0 {
        return Err(EvalError::domain("grid size must be positive"));
    }
    let outcomes = (1..=n).map(|i| i.to_string()).collect();
    let space = FiniteSpace::new(outcomes, vec![1.0 / n as f64; n])?;
    let values = (0..n).map(|i| space.mass_where(|j| j <= i).min(1.0)).collect();
    Ok((space, RandomVariable::new(values)?))
}

/// A rejection region `E` chosen before seeing data, with `α = P(E)`.
#[derive(Debug, Clone)]
pub struct RejectionRegion<'s> {
    space: &'s FiniteSpace,
    members: Vec<usize>,
    alpha: f64,
}

impl<'s> RejectionRegion<'s> {
    pub fn new<S: AsRef<str>>(space: &'s FiniteSpace, labels: &[S]) -> Result<Self> {
        let indices = labels
            .iter()
            .map(|l| space.index_of(l.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        RejectionRegion::from_indices(space, indices)
    }

    pub fn from_indices(space: &'s FiniteSpace, mut members: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = members.iter().find(|&&i| i >= space.len()) {
            return Err(EvalError::domain(format!(
                "outcome index {bad} out of range for a space of {} outcomes",
                space.len()
            )));
        }
        members.sort_unstable();
        members.dedup();
        let alpha = space.mass_where(|i| members.binary_search(&i).is_ok()).min(1.0);
        Ok(RejectionRegion { space, members, alpha })
    }

    pub fn space(&self) -> &'s FiniteSpace {
        self.space
    }

    /// Member indices, ascending.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn contains(&self, index: usize) -> bool {
        self.members.binary_search(&index).is_ok()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}
