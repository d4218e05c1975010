//! Combining evidence: averages of e-variables stay e-variables, running
//! products of sequentially valid e-values form a test martingale, and
//! averages of p-variables need not be p-variables.

use serde::Serialize;

use crate::calibration::e_to_p;
use crate::space::{expectation, is_e_variable, is_p_variable, max_p_excess, FiniteSpace, RandomVariable};
use crate::{EvalError, Result, DEFAULT_TOL};

/// Largest number of outcome paths [`expected_wealth_by_enumeration`] walks.
pub const MAX_PATHS: u128 = 1 << 24;

fn check_evars(space: &FiniteSpace, evars: &[RandomVariable]) -> Result<()> {
    if evars.is_empty() {
        return Err(EvalError::EmptyInput("no e-variables to combine"));
    }
    for (k, e) in evars.iter().enumerate() {
        if !is_e_variable(space, e, DEFAULT_TOL)? {
            return Err(EvalError::domain(format!(
                "input {k} is not an e-variable (expectation {})",
                expectation(space, e)?
            )));
        }
    }
    Ok(())
}

fn pointwise_mean(len: usize, vars: &[RandomVariable], weights: &[f64]) -> Result<RandomVariable> {
    let values = (0..len)
        .map(|i| {
            vars.iter()
                .zip(weights)
                .map(|(v, &w)| if w == 0.0 { 0.0 } else { w * v.values()[i] })
                .sum()
        })
        .collect();
    RandomVariable::new(values)
}

/// Pointwise arithmetic mean of valid e-variables.
pub fn average_e(space: &FiniteSpace, evars: &[RandomVariable]) -> Result<RandomVariable> {
    check_evars(space, evars)?;
    let k = evars.len() as f64;
    let values = (0..space.len())
        .map(|i| evars.iter().map(|e| e.values()[i]).sum::<f64>() / k)
        .collect();
    RandomVariable::new(values)
}

/// Convex combination of valid e-variables with fixed weights.
pub fn weighted_average_e(space: &FiniteSpace, evars: &[RandomVariable], weights: &[f64]) -> Result<RandomVariable> {
    check_evars(space, evars)?;
    if weights.len() != evars.len() {
        return Err(EvalError::Dimension {
            expected: evars.len(),
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(EvalError::domain("weights must be nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(EvalError::domain(format!("weights sum to {total}, not 1")));
    }
    pointwise_mean(space.len(), evars, weights)
}

/// Running products of per-round e-values; `wealth[0] = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleTrace {
    #[serde(with = "crate::serde_ext::vec")]
    pub factors: Vec<f64>,
    #[serde(with = "crate::serde_ext::vec")]
    pub wealth: Vec<f64>,
}

impl MartingaleTrace {
    pub fn final_wealth(&self) -> f64 {
        *self.wealth.last().expect("wealth starts at 1")
    }

    /// `round,factor,wealth` with round 0 holding the initial unit wealth.
    pub fn to_csv(&self, fmt_num: impl Fn(f64) -> String) -> String {
        let mut out = String::from("round,factor,wealth\n");
        out.push_str(&format!("0,,{}\n", fmt_num(self.wealth[0])));
        for (k, (f, w)) in self.factors.iter().zip(&self.wealth[1..]).enumerate() {
            out.push_str(&format!("{},{},{}\n", k + 1, fmt_num(*f), fmt_num(*w)));
        }
        out
    }
}

pub fn sequential_product(factors: &[f64]) -> Result<MartingaleTrace> {
    if let Some(f) = factors.iter().find(|f| !(**f >= 0.0)) {
        return Err(EvalError::domain(format!("factor {f} is negative")));
    }
    let mut wealth = Vec::with_capacity(factors.len() + 1);
    wealth.push(1.0);
    for &f in factors {
        let last = *wealth.last().unwrap();
        // 0·∞ stays at 0: a bankrupt bettor cannot recover.
        wealth.push(if last == 0.0 { 0.0 } else { last * f });
    }
    Ok(MartingaleTrace {
        factors: factors.to_vec(),
        wealth,
    })
}

/// Exact `E[wealth_k]`, `k = 0..=rounds`, over all outcome sequences of
/// i.i.d. draws from `null`. Before each round `strategy` sees the outcome
/// indices so far and returns that round's factor as a random variable on
/// `null`; every such factor must be an e-variable.
pub fn expected_wealth_by_enumeration<F>(null: &FiniteSpace, rounds: usize, strategy: F) -> Result<Vec<f64>>
where
    F: Fn(&[usize]) -> Result<RandomVariable>,
{
    let paths = (null.len() as u128).checked_pow(rounds as u32).unwrap_or(u128::MAX);
    if paths > MAX_PATHS {
        return Err(EvalError::EnumerationGuard {
            count: paths,
            limit: MAX_PATHS,
        });
    }
    let mut expected = vec![0.0; rounds + 1];
    let mut history = Vec::with_capacity(rounds);
    walk(null, rounds, &strategy, &mut history, 1.0, 1.0, &mut expected)?;
    Ok(expected)
}

fn walk<F>(
    null: &FiniteSpace,
    rounds: usize,
    strategy: &F,
    history: &mut Vec<usize>,
    path_prob: f64,
    wealth: f64,
    expected: &mut [f64],
) -> Result<()>
where
    F: Fn(&[usize]) -> Result<RandomVariable>,
{
    expected[history.len()] += path_prob * wealth;
    if history.len() == rounds {
        return Ok(());
    }
    let factor = strategy(history)?;
    if !is_e_variable(null, &factor, DEFAULT_TOL)? {
        return Err(EvalError::domain(format!(
            "factor after history {history:?} is not an e-variable"
        )));
    }
    for (y, &p) in null.probs().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        history.push(y);
        let next = if wealth == 0.0 { 0.0 } else { wealth * factor.values()[y] };
        walk(null, rounds, strategy, history, path_prob * p, next, expected)?;
        history.pop();
    }
    Ok(())
}

/// Two valid p-variables whose average is not a p-variable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleCertificate {
    pub space: FiniteSpace,
    pub p_vars: Vec<RandomVariable>,
    pub threshold: f64,
    /// `P(mean ≤ threshold) − threshold`.
    pub violation: f64,
}

impl CounterexampleCertificate {
    /// Recomputes everything from the space and the inputs.
    pub fn verify(&self) -> Result<bool> {
        for p in &self.p_vars {
            if !is_p_variable(&self.space, p, 0.0)? {
                return Ok(false);
            }
        }
        let mean = mean_of(&self.space, &self.p_vars)?;
        let mass = self.space.mass_where(|i| mean.values()[i] <= self.threshold);
        let violation = mass - self.threshold;
        Ok(violation > 0.0 && violation == self.violation)
    }
}

fn mean_of(space: &FiniteSpace, vars: &[RandomVariable]) -> Result<RandomVariable> {
    if vars.is_empty() {
        return Err(EvalError::EmptyInput("no random variables"));
    }
    for v in vars {
        if v.len() != space.len() {
            return Err(EvalError::Dimension {
                expected: space.len(),
                got: v.len(),
            });
        }
    }
    let k = vars.len() as f64;
    let values = (0..space.len())
        .map(|i| vars.iter().map(|v| v.values()[i]).sum::<f64>() / k)
        .collect();
    RandomVariable::new(values)
}

/// On the uniform space `{1, …, N}`, `p₁(i) = i/N` and `p₂(i) = (N+1−i)/N`
/// are both exact p-variables, but their mean is the constant
/// `(N+1)/(2N) < 1`, which it does not exceed with probability 1.
pub fn p_average_counterexample(grid_size: usize) -> Result<CounterexampleCertificate> {
    if grid_size < 2 {
        return Err(EvalError::domain(format!("grid size {grid_size} < 2")));
    }
    let n = grid_size;
    let outcomes = (1..=n).map(|i| i.to_string()).collect();
    let space = FiniteSpace::new(outcomes, vec![1.0 / n as f64; n])?;
    let up = RandomVariable::new((0..n).map(|i| space.mass_where(|j| j <= i).min(1.0)).collect())?;
    let down = RandomVariable::new((0..n).map(|i| space.mass_where(|j| j >= i).min(1.0)).collect())?;
    let p_vars = vec![up, down];
    let mean = mean_of(&space, &p_vars)?;
    // the mean is (N+1)/(2N) up to rounding; its largest value bounds all of it
    let threshold = mean.values().iter().copied().fold(0.0, f64::max);
    let violation = space.mass_where(|i| mean.values()[i] <= threshold) - threshold;
    Ok(CounterexampleCertificate {
        space,
        p_vars,
        threshold,
        violation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CombineReport {
    pub n_evars: usize,
    pub e_mean: RandomVariable,
    pub e_mean_expectation: f64,
    pub e_mean_valid: bool,
    /// `e_to_p` of the averaged e-variable, outcome by outcome.
    pub e_mean_as_p: RandomVariable,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_mean: Option<RandomVariable>,
    /// `max(0, P(mean ≤ v) − v)` over achieved values of the p-average.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_violation: Option<f64>,
}

/// Averages the e-variables and, when p-variables are given, measures how far
/// their average is from being a p-variable.
pub fn combine_report(space: &FiniteSpace, evars: &[RandomVariable], p_vars: &[RandomVariable]) -> Result<CombineReport> {
    let e_mean = average_e(space, evars)?;
    let e_mean_expectation = expectation(space, &e_mean)?;
    let e_mean_valid = is_e_variable(space, &e_mean, DEFAULT_TOL)?;
    let e_mean_as_p = e_mean.try_map(e_to_p)?;
    let (p_mean, p_violation) = if p_vars.is_empty() {
        (None, None)
    } else {
        let mean = mean_of(space, p_vars)?;
        let excess = max_p_excess(space, &mean)?.unwrap_or(0.0).max(0.0);
        (Some(mean), Some(excess))
    };
    Ok(CombineReport {
        n_evars: evars.len(),
        e_mean,
        e_mean_expectation,
        e_mean_valid,
        e_mean_as_p,
        p_mean,
        p_violation,
    })
}
