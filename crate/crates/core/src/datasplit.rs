//! Testing a Bernoulli null by random data splitting.
//!
//! One half of the data fits an alternative, the other half is scored by the
//! likelihood ratio of that alternative against the null. Given the split and
//! the training half, the score is an exact e-value under the null, so the
//! average over many splits (or over all of them) is an e-value too. The
//! all-splits average depends on the data alone: every analyst gets the same
//! number.

use std::str::FromStr;

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::rng::SeededRng;
use crate::{EvalError, Result};

/// Largest number of splits exhaustive mode will enumerate.
pub const MAX_SPLITS: u128 = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawDataset")]
pub struct BernoulliDataset {
    bits: Vec<u8>,
}

#[derive(Deserialize)]
struct RawDataset {
    bits: Vec<u8>,
}

impl TryFrom<RawDataset> for BernoulliDataset {
    type Error = EvalError;

    fn try_from(raw: RawDataset) -> Result<Self> {
        BernoulliDataset::new(raw.bits)
    }
}

impl BernoulliDataset {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.len() < 2 {
            return Err(EvalError::domain(format!("need at least 2 observations, got {}", bits.len())));
        }
        if let Some(b) = bits.iter().find(|b| **b > 1) {
            return Err(EvalError::domain(format!("observation {b} is not 0 or 1")));
        }
        Ok(BernoulliDataset { bits })
    }

    /// `k` ones followed by `n − k` zeros.
    pub fn with_ones(n: usize, k: usize) -> Result<Self> {
        if k > n {
            return Err(EvalError::domain(format!("{k} ones in {n} observations")));
        }
        BernoulliDataset::new((0..n).map(|i| u8::from(i < k)).collect())
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }
}

impl FromStr for BernoulliDataset {
    type Err = EvalError;

    /// JSON `{"bits": [...]}`, a bare JSON array, or one `0`/`1` per line.
    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim_start();
        if trimmed.starts_with('{') {
            return Ok(serde_json::from_str(trimmed)?);
        }
        if trimmed.starts_with('[') {
            let bits: Vec<u8> = serde_json::from_str(trimmed)?;
            return BernoulliDataset::new(bits);
        }
        let bits = s
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| match l {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(EvalError::Parse(format!("expected 0 or 1, got `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        BernoulliDataset::new(bits)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub null_theta: f64,
    pub smoothing: f64,
    /// Worker threads for per-split work; `None` uses the global pool.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.5,
            null_theta: 0.5,
            smoothing: 1.0,
            threads: None,
        }
    }
}

impl SplitConfig {
    fn validate(&self) -> Result<()> {
        if !(self.null_theta > 0.0 && self.null_theta < 1.0) {
            return Err(EvalError::domain(format!("null theta {} outside (0, 1)", self.null_theta)));
        }
        if !(self.smoothing > 0.0) {
            return Err(EvalError::domain(format!("smoothing {} must be positive", self.smoothing)));
        }
        if self.threads == Some(0) {
            return Err(EvalError::domain("thread count must be positive"));
        }
        Ok(())
    }
}

/// Train and test indices, each ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    fn from_train(n: usize, train: Vec<usize>) -> Self {
        let test = (0..n).filter(|i| train.binary_search(i).is_err()).collect();
        Split { train, test }
    }
}

/// `round(n · fraction)`, required to leave both halves nonempty.
pub fn train_size(n: usize, train_fraction: f64) -> Result<usize> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(EvalError::domain(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let size = (n as f64 * train_fraction).round() as usize;
    if size == 0 || size >= n {
        return Err(EvalError::domain(format!(
            "train fraction {train_fraction} of {n} observations leaves an empty half"
        )));
    }
    Ok(size)
}

/// Random split: shuffle the indices with the seeded generator and take the
/// first `round(n · fraction)` as the training half.
pub fn split(data: &BernoulliDataset, seed: u64, train_fraction: f64) -> Result<Split> {
    let n = data.len();
    let size = train_size(n, train_fraction)?;
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut order);
    let mut train = order[..size].to_vec();
    train.sort_unstable();
    Ok(Split::from_train(n, train))
}

pub fn binomial_coefficient(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

fn check_enumerable(n: usize, size: usize) -> Result<u128> {
    let count = binomial_coefficient(n, size);
    if count > MAX_SPLITS {
        return Err(EvalError::EnumerationGuard {
            count,
            limit: MAX_SPLITS,
        });
    }
    Ok(count)
}

/// Every split with a training half of `round(n · fraction)`, in
/// lexicographic order of the training indices.
pub fn all_splits(n: usize, train_fraction: f64) -> Result<Vec<Split>> {
    let size = train_size(n, train_fraction)?;
    check_enumerable(n, size)?;
    Ok((0..n)
        .combinations(size)
        .map(|train| Split::from_train(n, train))
        .collect())
}

/// The split of lexicographic rank `rank` among [`all_splits`].
pub fn split_exhaustive(data: &BernoulliDataset, rank: u64, train_fraction: f64) -> Result<Split> {
    let n = data.len();
    let size = train_size(n, train_fraction)?;
    let count = check_enumerable(n, size)?;
    if rank as u128 >= count {
        return Err(EvalError::domain(format!("split rank {rank} out of {count}")));
    }
    let train = (0..n)
        .combinations(size)
        .nth(rank as usize)
        .expect("rank below count");
    Ok(Split::from_train(n, train))
}

/// Smoothed frequency `(k + s) / (n + 2s)` on the training half.
pub fn fitted_theta(data: &BernoulliDataset, split: &Split, smoothing: f64) -> f64 {
    let ones = split.train.iter().filter(|&&i| data.bits[i] == 1).count() as f64;
    (ones + smoothing) / (split.train.len() as f64 + 2.0 * smoothing)
}

fn check_split(data: &BernoulliDataset, split: &Split) -> Result<()> {
    if split.train.is_empty() || split.test.is_empty() {
        return Err(EvalError::domain("split has an empty half"));
    }
    if split.train.iter().chain(&split.test).any(|&i| i >= data.len()) {
        return Err(EvalError::domain("split index out of range"));
    }
    Ok(())
}

/// Likelihood ratio of `Bernoulli(θ̂)` to `Bernoulli(θ₀)` on the test half,
/// with `θ̂` fitted on the training half.
pub fn split_e_value(data: &BernoulliDataset, split: &Split, null_theta: f64, smoothing: f64) -> Result<f64> {
    SplitConfig {
        null_theta,
        smoothing,
        ..SplitConfig::default()
    }
    .validate()?;
    check_split(data, split)?;
    let theta = fitted_theta(data, split, smoothing);
    let ones = split.test.iter().filter(|&&i| data.bits[i] == 1).count() as f64;
    let zeros = split.test.len() as f64 - ones;
    let log_e = ones * (theta / null_theta).ln() + zeros * ((1.0 - theta) / (1.0 - null_theta)).ln();
    Ok(log_e.exp())
}

/// Neyman–Pearson p-value of the test half against the train-fitted
/// alternative: `P₀(LR ≥ observed LR)` for the count of ones.
pub fn split_p_value(data: &BernoulliDataset, split: &Split, null_theta: f64, smoothing: f64) -> Result<f64> {
    SplitConfig {
        null_theta,
        smoothing,
        ..SplitConfig::default()
    }
    .validate()?;
    check_split(data, split)?;
    let theta = fitted_theta(data, split, smoothing);
    let m = split.test.len() as u64;
    let ones = split.test.iter().filter(|&&i| data.bits[i] == 1).count() as u64;
    let null = Binomial::new(null_theta, m).map_err(|e| EvalError::domain(e.to_string()))?;
    // the likelihood ratio is monotone in the count of ones
    let p = if theta > null_theta {
        if ones == 0 {
            1.0
        } else {
            null.sf(ones - 1)
        }
    } else if theta < null_theta {
        null.cdf(ones)
    } else {
        1.0
    };
    Ok(p.min(1.0))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitMode {
    /// All splits, indexed by lexicographic rank.
    Exhaustive,
    /// One random split per seed.
    Seeds(Vec<u64>),
}

impl SplitMode {
    fn name(&self) -> &'static str {
        match self {
            SplitMode::Exhaustive => "exhaustive",
            SplitMode::Seeds(_) => "seeds",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeedOutcome {
    /// Seed in seeds mode, split rank in exhaustive mode.
    pub seed: u64,
    pub e_value: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitReport {
    pub mode: &'static str,
    pub n: usize,
    pub n_train: usize,
    pub config: SplitConfig,
    pub per_seed: Vec<SeedOutcome>,
    /// Arithmetic mean of the per-split e-values.
    pub derandomized_e: f64,
    /// Sample standard deviation of `ln e` across splits.
    pub e_spread: Option<f64>,
    /// Sample standard deviation of the per-split p-values.
    pub p_spread: Option<f64>,
}

impl SplitReport {
    pub fn to_csv(&self, fmt_num: impl Fn(f64) -> String) -> String {
        let mut out = String::from("seed,e_value,p_value\n");
        for row in &self.per_seed {
            out.push_str(&format!("{},{},{}\n", row.seed, fmt_num(row.e_value), fmt_num(row.p_value)));
        }
        out
    }
}

/// Sample standard deviation, summed in input order; `None` below two values.
pub fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Some((ss / (n - 1.0)).sqrt())
}

fn run_in_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(job()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| EvalError::domain(e.to_string()))?;
            Ok(pool.install(job))
        }
    }
}

/// Per-split e- and p-values and their average. Splits are evaluated in
/// parallel but aggregated in seed (or rank) order, so the result does not
/// depend on the thread count.
pub fn derandomized_e(data: &BernoulliDataset, mode: &SplitMode, config: &SplitConfig) -> Result<SplitReport> {
    config.validate()?;
    let n = data.len();
    let n_train = train_size(n, config.train_fraction)?;
    let labelled: Vec<(u64, Split)> = match mode {
        SplitMode::Exhaustive => all_splits(n, config.train_fraction)?
            .into_iter()
            .enumerate()
            .map(|(rank, s)| (rank as u64, s))
            .collect(),
        SplitMode::Seeds(seeds) => {
            if seeds.is_empty() {
                return Err(EvalError::EmptyInput("no seeds"));
            }
            seeds
                .iter()
                .map(|&seed| Ok((seed, split(data, seed, config.train_fraction)?)))
                .collect::<Result<_>>()?
        }
    };

    let evaluate = |(seed, s): &(u64, Split)| -> Result<SeedOutcome> {
        Ok(SeedOutcome {
            seed: *seed,
            e_value: split_e_value(data, s, config.null_theta, config.smoothing)?,
            p_value: split_p_value(data, s, config.null_theta, config.smoothing)?,
        })
    };
    let per_seed = run_in_pool(config.threads, || {
        labelled.par_iter().map(evaluate).collect::<Result<Vec<_>>>()
    })??;

    let derandomized_e = per_seed.iter().map(|r| r.e_value).sum::<f64>() / per_seed.len() as f64;
    let log_e: Vec<f64> = per_seed.iter().map(|r| r.e_value.ln()).collect();
    let p: Vec<f64> = per_seed.iter().map(|r| r.p_value).collect();
    Ok(SplitReport {
        mode: mode.name(),
        n,
        n_train,
        config: config.clone(),
        e_spread: sample_std(&log_e),
        p_spread: sample_std(&p),
        per_seed,
        derandomized_e,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSpread {
    pub batch_size: usize,
    pub n_batches: usize,
    /// Sample standard deviation of the batch-mean e-values.
    pub spread: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExhaustiveSpread {
    pub runs: usize,
    pub derandomized_e: f64,
    /// Sample standard deviation across independent exhaustive runs.
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReproducibilityReport {
    pub n_seeds: usize,
    pub first_seed: u64,
    /// Spread of `ln e` from one random split per analyst.
    pub single_split_log_e_spread: Option<f64>,
    /// Spread of the p-value from one random split per analyst.
    pub single_split_p_spread: Option<f64>,
    pub batches: Vec<BatchSpread>,
    /// Absent when the split count exceeds [`MAX_SPLITS`].
    pub exhaustive: Option<ExhaustiveSpread>,
}

/// How much the conclusion depends on the analyst's seeds.
///
/// Seeds `first_seed..first_seed + n_seeds` each give one random split. The
/// seeds are then cut into disjoint consecutive batches of each requested
/// size, and the spread of the batch-averaged e-values is reported. Finally
/// the exhaustive average is recomputed on 1, 2 and 4 threads.
pub fn reproducibility_report(
    data: &BernoulliDataset,
    n_seeds: usize,
    first_seed: u64,
    batch_sizes: &[usize],
    config: &SplitConfig,
) -> Result<ReproducibilityReport> {
    if n_seeds == 0 {
        return Err(EvalError::EmptyInput("no seeds"));
    }
    if batch_sizes.contains(&0) {
        return Err(EvalError::domain("batch size must be positive"));
    }
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|i| first_seed + i).collect();
    let per_seed = derandomized_e(data, &SplitMode::Seeds(seeds), config)?;
    let e: Vec<f64> = per_seed.per_seed.iter().map(|r| r.e_value).collect();

    let batches = batch_sizes
        .iter()
        .map(|&b| {
            let means: Vec<f64> = e
                .chunks_exact(b)
                .map(|c| c.iter().sum::<f64>() / b as f64)
                .collect();
            BatchSpread {
                batch_size: b,
                n_batches: means.len(),
                spread: sample_std(&means),
            }
        })
        .collect();

    let size = train_size(data.len(), config.train_fraction)?;
    let exhaustive = if binomial_coefficient(data.len(), size) <= MAX_SPLITS {
        let runs = [1, 2, 4]
            .into_iter()
            .map(|t| {
                let cfg = SplitConfig {
                    threads: Some(t),
                    ..config.clone()
                };
                Ok(derandomized_e(data, &SplitMode::Exhaustive, &cfg)?.derandomized_e)
            })
            .collect::<Result<Vec<_>>>()?;
        Some(ExhaustiveSpread {
            runs: runs.len(),
            derandomized_e: runs[0],
            spread: sample_std(&runs).expect("three runs"),
        })
    } else {
        None
    };

    Ok(ReproducibilityReport {
        n_seeds,
        first_seed,
        single_split_log_e_spread: per_seed.e_spread,
        single_split_p_spread: per_seed.p_spread,
        batches,
        exhaustive,
    })
}
