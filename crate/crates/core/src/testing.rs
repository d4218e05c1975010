//! Binary Cournot tests, their p- and e-embeddings, and the likelihood-ratio
//! e-variable / Neyman–Pearson p-variable of a simple hypothesis pair.

use serde::{Deserialize, Serialize};

use crate::rng::SeededRng;
use crate::space::{expectation, FiniteSpace, RandomVariable, RejectionRegion};
use crate::{EvalError, Result, DEFAULT_TOL};

/// Simple null `P` and simple alternative `Q` on the same outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPair", into = "RawPair")]
pub struct HypothesisPair {
    null: FiniteSpace,
    alt: FiniteSpace,
}

#[derive(Serialize, Deserialize)]
struct RawPair {
    outcomes: Vec<String>,
    null: Vec<f64>,
    alt: Vec<f64>,
}

impl TryFrom<RawPair> for HypothesisPair {
    type Error = EvalError;

    fn try_from(raw: RawPair) -> Result<Self> {
        HypothesisPair::new(raw.outcomes, raw.null, raw.alt)
    }
}

impl From<HypothesisPair> for RawPair {
    fn from(pair: HypothesisPair) -> Self {
        RawPair {
            outcomes: pair.null.outcomes().to_vec(),
            null: pair.null.probs().to_vec(),
            alt: pair.alt.probs().to_vec(),
        }
    }
}

impl HypothesisPair {
    pub fn new(outcomes: Vec<String>, null: Vec<f64>, alt: Vec<f64>) -> Result<Self> {
        let alt = FiniteSpace::new(outcomes.clone(), alt)?;
        let null = FiniteSpace::new(outcomes, null)?;
        Ok(HypothesisPair { null, alt })
    }

    pub fn from_probs(null: Vec<f64>, alt: Vec<f64>) -> Result<Self> {
        let outcomes = (0..null.len()).map(|i| i.to_string()).collect();
        HypothesisPair::new(outcomes, null, alt)
    }

    /// The null `P` as a probability space.
    pub fn null(&self) -> &FiniteSpace {
        &self.null
    }

    /// The alternative `Q` on the same outcomes.
    pub fn alt(&self) -> &FiniteSpace {
        &self.alt
    }

    pub fn shares_support(&self) -> bool {
        self.null
            .probs()
            .iter()
            .zip(self.alt.probs())
            .all(|(&p, &q)| (p > 0.0) == (q > 0.0))
    }

    /// `Q(y)/P(y)` per outcome. Outcomes with `P = 0` get `+∞` when `Q > 0`
    /// and 1 when both vanish.
    pub fn likelihood_ratios(&self) -> Vec<f64> {
        self.null
            .probs()
            .iter()
            .zip(self.alt.probs())
            .map(|(&p, &q)| match (p > 0.0, q > 0.0) {
                (true, _) => q / p,
                (false, true) => f64::INFINITY,
                (false, false) => 1.0,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Reject,
    NoEvidence,
}

/// Cournot's binary test: reject iff the outcome lands in a region fixed in
/// advance.
#[derive(Debug, Clone)]
pub struct CournotTest<'s> {
    region: RejectionRegion<'s>,
}

impl<'s> CournotTest<'s> {
    pub fn new(region: RejectionRegion<'s>) -> Self {
        CournotTest { region }
    }

    pub fn region(&self) -> &RejectionRegion<'s> {
        &self.region
    }

    pub fn alpha(&self) -> f64 {
        self.region.alpha()
    }

    fn nondegenerate_alpha(&self) -> Result<f64> {
        let alpha = self.alpha();
        if alpha > 0.0 {
            Ok(alpha)
        } else {
            Err(EvalError::DegenerateRegion)
        }
    }
}

pub fn cournot_decide(test: &CournotTest<'_>, outcome: &str) -> Result<Decision> {
    let index = test.region.space().index_of(outcome)?;
    Ok(if test.region.contains(index) {
        Decision::Reject
    } else {
        Decision::NoEvidence
    })
}

/// `α` on the region, 1 elsewhere.
pub fn embed_p(test: &CournotTest<'_>) -> Result<RandomVariable> {
    let alpha = test.nondegenerate_alpha()?;
    let n = test.region.space().len();
    RandomVariable::new(
        (0..n)
            .map(|i| if test.region.contains(i) { alpha } else { 1.0 })
            .collect(),
    )
}

/// `1/α` on the region, 0 elsewhere.
pub fn embed_e(test: &CournotTest<'_>) -> Result<RandomVariable> {
    let alpha = test.nondegenerate_alpha()?;
    let n = test.region.space().len();
    RandomVariable::new(
        (0..n)
            .map(|i| if test.region.contains(i) { 1.0 / alpha } else { 0.0 })
            .collect(),
    )
}

pub fn likelihood_ratio_e(pair: &HypothesisPair) -> RandomVariable {
    RandomVariable::new(pair.likelihood_ratios()).expect("likelihood ratios are nonnegative")
}

/// `p(y) = P(LR ≥ LR(y))`, ties grouped.
pub fn np_p_variable(pair: &HypothesisPair) -> RandomVariable {
    let lr = pair.likelihood_ratios();
    let values = lr
        .iter()
        .map(|&at| pair.null.mass_where(|z| lr[z] >= at).min(1.0))
        .collect();
    RandomVariable::new(values).expect("masses are nonnegative")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogOptimalityReport {
    pub n_trials: usize,
    pub seed: u64,
    /// `E_Q[log(Q/P)]`, the growth rate of the likelihood ratio.
    pub lr_growth: f64,
    /// Best `E_Q[log e]` among the random competitors.
    pub best_competitor_growth: f64,
    /// `max(0, best competitor − lr_growth)`.
    pub max_violation: f64,
    pub violations: usize,
    pub tol: f64,
}

pub fn log_optimality_check(pair: &HypothesisPair, n_trials: usize, seed: u64) -> Result<LogOptimalityReport> {
    log_optimality_check_with(pair, n_trials, seed, DEFAULT_TOL)
}

/// Pits the likelihood ratio against `n_trials` random e-variables, each
/// drawn with i.i.d. uniform values and rescaled to `E_P = 1`, on expected
/// log-growth under `Q`.
pub fn log_optimality_check_with(
    pair: &HypothesisPair,
    n_trials: usize,
    seed: u64,
    tol: f64,
) -> Result<LogOptimalityReport> {
    if n_trials == 0 {
        return Err(EvalError::domain("need at least one trial"));
    }
    if !pair.shares_support() {
        return Err(EvalError::domain("null and alternative must share support"));
    }
    let alt = pair.alt.probs();
    let growth = |values: &[f64]| -> f64 {
        alt.iter()
            .zip(values)
            .filter(|(&q, _)| q > 0.0)
            .map(|(&q, &e)| q * e.ln())
            .sum()
    };
    let lr_growth = growth(&pair.likelihood_ratios());

    let mut rng = SeededRng::new(seed);
    let n = pair.null.len();
    let mut best = f64::NEG_INFINITY;
    let mut violations = 0;
    let mut trials = 0;
    while trials < n_trials {
        let raw = RandomVariable::new((0..n).map(|_| rng.uniform()).collect())?;
        let scale = expectation(&pair.null, &raw)?;
        if scale <= 0.0 {
            continue;
        }
        let candidate: Vec<f64> = raw.values().iter().map(|v| v / scale).collect();
        let g = growth(&candidate);
        if g > lr_growth + tol {
            violations += 1;
        }
        best = best.max(g);
        trials += 1;
    }
    Ok(LogOptimalityReport {
        n_trials,
        seed,
        lr_growth,
        best_competitor_growth: best,
        max_violation: (best - lr_growth).max(0.0),
        violations,
        tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformityReport {
    /// `max (P(p ≤ v) − v)` over achieved values `v`.
    pub max_excess: f64,
    /// `max |P(p ≤ v) − v|` over achieved values `v`.
    pub max_abs_deviation: f64,
    pub superuniform: bool,
    pub uniform_on_achieved: bool,
    /// Null mass of `p` in `n_bins` equal-width bins `(k/n, (k+1)/n]`, the
    /// first one also holding 0.
    pub bins: Vec<f64>,
}

/// Exact null distribution of a p-variable compared with the uniform law.
pub fn p_uniformity_check(space: &FiniteSpace, p: &RandomVariable, n_bins: usize) -> Result<UniformityReport> {
    p_uniformity_check_with(space, p, n_bins, DEFAULT_TOL)
}

pub fn p_uniformity_check_with(
    space: &FiniteSpace,
    p: &RandomVariable,
    n_bins: usize,
    tol: f64,
) -> Result<UniformityReport> {
    if p.len() != space.len() {
        return Err(EvalError::Dimension {
            expected: space.len(),
            got: p.len(),
        });
    }
    if n_bins == 0 {
        return Err(EvalError::domain("need at least one bin"));
    }
    let values = p.values();
    let mut levels = values.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut max_excess = f64::NEG_INFINITY;
    let mut max_abs_deviation: f64 = 0.0;
    for &v in &levels {
        let gap = space.mass_where(|i| values[i] <= v) - v.min(1.0);
        max_excess = max_excess.max(gap);
        max_abs_deviation = max_abs_deviation.max(gap.abs());
    }

    let mut bins = vec![0.0; n_bins];
    for (&prob, &v) in space.probs().iter().zip(values) {
        // right-closed bins (a, b]; values within 1e-9 of an edge stay below it
        let k = ((v.min(1.0) * n_bins as f64 - 1e-9).ceil().max(1.0) as usize - 1).min(n_bins - 1);
        bins[k] += prob;
    }
    Ok(UniformityReport {
        max_excess,
        max_abs_deviation,
        superuniform: max_excess <= tol,
        uniform_on_achieved: max_abs_deviation <= tol,
        bins,
    })
}

/// [`p_uniformity_check`] for the Neyman–Pearson p-variable of `pair`.
pub fn np_uniformity_check(pair: &HypothesisPair, n_bins: usize) -> Result<UniformityReport> {
    p_uniformity_check(&pair.null, &np_p_variable(pair), n_bins)
}
