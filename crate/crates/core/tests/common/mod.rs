//! Random generators shared by the integration suites.
#![allow(dead_code)]

use evaltk::rng::SeededRng;
use evaltk::space::{expectation, FiniteSpace, RandomVariable};
use evaltk::testing::HypothesisPair;

/// Normalized random weights; roughly one in eight is exactly zero when
/// `allow_zero` is set, but never all of them.
pub fn random_probs(rng: &mut SeededRng, n: usize, allow_zero: bool) -> Vec<f64> {
    loop {
        let raw: Vec<f64> = (0..n)
            .map(|_| {
                if allow_zero && rng.below(8) == 0 {
                    0.0
                } else {
                    rng.uniform() + 1e-3
                }
            })
            .collect();
        let total: f64 = raw.iter().sum();
        if total > 0.0 {
            return raw.iter().map(|x| x / total).collect();
        }
    }
}

pub fn random_space(rng: &mut SeededRng, max_outcomes: usize) -> FiniteSpace {
    let n = 1 + rng.below(max_outcomes as u64) as usize;
    FiniteSpace::from_probs(random_probs(rng, n, true)).unwrap()
}

/// Nonempty subset with positive probability.
pub fn random_region(rng: &mut SeededRng, space: &FiniteSpace) -> Vec<usize> {
    loop {
        let members: Vec<usize> = (0..space.len()).filter(|_| rng.below(3) == 0).collect();
        if space.mass_where(|i| members.contains(&i)) > 0.0 {
            return members;
        }
    }
}

/// `p(y) = P(score ≥ score(y))` for a random score with ties, then some
/// values pushed up towards 1 (which keeps validity).
pub fn random_exact_p_variable(rng: &mut SeededRng, space: &FiniteSpace) -> RandomVariable {
    let levels = 1 + rng.below(space.len() as u64 + 1);
    let score: Vec<u64> = (0..space.len()).map(|_| rng.below(levels)).collect();
    let values = (0..space.len())
        .map(|y| {
            let p = space.mass_where(|z| score[z] >= score[y]).min(1.0);
            if rng.below(4) == 0 {
                p + rng.uniform() * (1.0 - p)
            } else {
                p
            }
        })
        .collect();
    RandomVariable::new(values).unwrap()
}

/// Nonnegative values rescaled to `E_P ≤ c` (equal up to rounding) for a
/// random `c ∈ (0, 1]`; sometimes sparse.
pub fn random_e_variable(rng: &mut SeededRng, space: &FiniteSpace) -> RandomVariable {
    loop {
        let sparse = rng.below(3) == 0;
        let raw: Vec<f64> = (0..space.len())
            .map(|_| if sparse && rng.below(2) == 0 { 0.0 } else { rng.uniform() * 10.0 })
            .collect();
        let raw = RandomVariable::new(raw).unwrap();
        let mean = expectation(space, &raw).unwrap();
        if mean > 0.0 {
            let target = 1.0 - 0.5 * rng.uniform();
            let target = if rng.below(2) == 0 { 1.0 } else { target };
            let mut scale = target / mean;
            loop {
                let rv = RandomVariable::new(raw.values().iter().map(|v| v * scale).collect()).unwrap();
                // Rounding can leave the mean an ulp above target; step down until it isn't.
                if expectation(space, &rv).unwrap() <= target {
                    return rv;
                }
                scale *= 1.0 - f64::EPSILON;
            }
        }
    }
}

pub fn random_pair(rng: &mut SeededRng, n: usize) -> HypothesisPair {
    HypothesisPair::from_probs(random_probs(rng, n, false), random_probs(rng, n, false)).unwrap()
}
