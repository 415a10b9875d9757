//! Coupled Monte Carlo and exhaustive estimators of uniform stability.
//!
//! A trial runs the optimizer on `S` and on its neighbor `S'` with the same
//! seed, hence the same index sequence and the same Gaussian draws. The
//! supremum over `z` is a maximum over a finite probe set.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dist;
use crate::optimizers::{run_optimizer, run_with_indices, OptimizerConfig, OptimizerKind, OutputSelector};
use crate::problems::{Dataset, Example, Loss, ProblemConstants, Sample};
use crate::rng::{derive_seed, tag};
use crate::scalar::{widen, Scalar};
use crate::stats::se_from_sums;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    FunctionValues,
    Gradients,
    Arguments,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::FunctionValues, Measure::Gradients, Measure::Arguments];

    pub fn as_str(&self) -> &'static str {
        match self {
            Measure::FunctionValues => "function_values",
            Measure::Gradients => "gradients",
            Measure::Arguments => "arguments",
        }
    }
}

/// `S` and `S^{(i)}`, identical except at the 1-based position `replaced_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborPair<T: Scalar> {
    pub base: Dataset<T>,
    pub replaced_index: usize,
    pub replacement: Example<T>,
    pub neighbor: Dataset<T>,
}

pub fn neighbor_dataset<T: Scalar>(base: &Dataset<T>, index: usize, replacement: Example<T>) -> Result<NeighborPair<T>> {
    let n = base.n();
    if index == 0 || index > n {
        return Err(Error::IndexOutOfRange { index, len: n });
    }
    let mut examples = base.examples().to_vec();
    examples[index - 1] = replacement.clone();
    Ok(NeighborPair {
        base: base.clone(),
        replaced_index: index,
        replacement,
        neighbor: Dataset::new(examples)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub measure: Measure,
    pub epsilon_hat: f64,
    pub std_error: f64,
    pub trials: usize,
    pub sup_over_z: bool,
    pub theoretical_bound: Option<f64>,
}

/// Outputs of one coupled trial.
#[derive(Debug, Clone)]
pub struct CoupledOutcome<T> {
    pub seed: u64,
    /// The replaced position never appeared in the index sequence.
    pub omits_replaced: bool,
    pub base: Vec<T>,
    pub neighbor: Vec<T>,
}

impl<T: Scalar> CoupledOutcome<T> {
    pub fn identical(&self) -> bool {
        self.base == self.neighbor
    }
}

/// Seed of trial `k` under the configuration's master seed.
pub fn trial_seed(master: u64, k: usize) -> u64 {
    derive_seed(master, &[tag::TRIAL, k as u64])
}

/// Runs `trials` coupled pairs; results are in trial order.
pub fn coupled_runs<T: Scalar>(
    loss: &Loss<T>,
    pair: &NeighborPair<T>,
    config: &OptimizerConfig<T>,
    trials: usize,
) -> Result<Vec<CoupledOutcome<T>>> {
    if !config.is_sampling_determined() {
        return Err(Error::Unsupported("coupling requires a sampling-determined optimizer".into()));
    }
    config.validate(pair.base.n())?;
    (0..trials)
        .into_par_iter()
        .map(|k| {
            let seed = trial_seed(config.seed, k);
            let cfg = config.with_seed(seed);
            let a = run_optimizer(loss, &pair.base, &cfg)?;
            let b = run_optimizer(loss, &pair.neighbor, &cfg)?;
            debug_assert_eq!(a.index_sequence, b.index_sequence);
            Ok(CoupledOutcome {
                seed,
                omits_replaced: a.omits(pair.replaced_index - 1),
                base: a.output,
                neighbor: b.output,
            })
        })
        .collect()
}

fn theoretical_bound<T: Scalar>(measure: Measure, c: &ProblemConstants<T>, iterations: usize, n: usize) -> Option<f64> {
    let ratio = iterations as f64 / n as f64;
    match measure {
        Measure::FunctionValues => c.value_bound.map(|b| 2.0 * widen(b) * ratio),
        Measure::Gradients => Some(2.0 * widen(c.lipschitz) * ratio.sqrt()),
        Measure::Arguments => c.radius.map(|r| 2.0 * widen(r) * ratio),
    }
}

/// Per-probe running sums over trials.
struct ProbeSums {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl ProbeSums {
    fn new(m: usize) -> Self {
        Self {
            sum: vec![0.0; m],
            sum_sq: vec![0.0; m],
        }
    }

    /// Adds one trial's per-probe quantity.
    fn add<T: Scalar>(&mut self, measure: Measure, loss: &Loss<T>, probes: &[Example<T>], u: &[T], v: &[T]) {
        let d = u.len();
        let mut gu = vec![T::zero(); d];
        let mut gv = vec![T::zero(); d];
        for (j, z) in probes.iter().enumerate() {
            let x = match measure {
                Measure::FunctionValues => widen(loss.value(u, z) - loss.value(v, z)),
                Measure::Gradients => {
                    gu.iter_mut().for_each(|x| *x = T::zero());
                    gv.iter_mut().for_each(|x| *x = T::zero());
                    loss.accumulate(u, z, T::one(), &mut gu);
                    loss.accumulate(v, z, T::one(), &mut gv);
                    widen(dist(&gu, &gv).powi(2))
                }
                Measure::Arguments => unreachable!("arguments do not use probes"),
            };
            self.sum[j] += x;
            self.sum_sq[j] += x * x;
        }
    }

    /// `(argmax mean, max mean, se at argmax)`
    fn max_mean(&self, trials: usize) -> (f64, f64) {
        let mut best = 0usize;
        for j in 1..self.sum.len() {
            if self.sum[j] > self.sum[best] {
                best = j;
            }
        }
        (
            self.sum[best] / trials as f64,
            se_from_sums(self.sum[best], self.sum_sq[best], trials),
        )
    }
}

fn summarize<T: Scalar>(
    measure: Measure,
    loss: &Loss<T>,
    probes: &[Example<T>],
    outcomes: &[(f64, &[T], &[T])],
    trials: usize,
) -> (f64, f64) {
    match measure {
        Measure::Arguments => {
            let (s, s2) = outcomes.iter().fold((0.0, 0.0), |(s, s2), &(w, u, v)| {
                let x = widen(dist(u, v));
                (s + w * x, s2 + w * x * x)
            });
            (s / trials as f64, se_from_sums(s, s2, trials))
        }
        Measure::FunctionValues | Measure::Gradients => {
            let mut sums = ProbeSums::new(probes.len());
            for &(_, u, v) in outcomes {
                sums.add(measure, loss, probes, u, v);
            }
            let (mean, se) = sums.max_mean(trials);
            if measure == Measure::Gradients {
                let eps = mean.max(0.0).sqrt();
                let se = if eps > 0.0 { se / (2.0 * eps) } else { 0.0 };
                (eps, se)
            } else {
                (mean, se)
            }
        }
    }
}

/// Monte Carlo estimate of one stability measure from coupled trials.
///
/// Trials whose outputs coincide bit for bit contribute exact zeros and are
/// not re-evaluated on the probe set.
pub fn coupled_stability_estimate<T: Scalar>(
    loss: &Loss<T>,
    pair: &NeighborPair<T>,
    config: &OptimizerConfig<T>,
    measure: Measure,
    trials: usize,
    probes: &[Example<T>],
    constants: Option<&ProblemConstants<T>>,
) -> Result<StabilityReport> {
    if trials == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    if measure != Measure::Arguments && probes.is_empty() {
        return Err(Error::Config("function-value and gradient stability need probe examples".into()));
    }
    let outcomes = coupled_runs(loss, pair, config, trials)?;
    let differing: Vec<(f64, &[T], &[T])> = outcomes
        .iter()
        .filter(|o| !o.identical())
        .map(|o| (1.0, o.base.as_slice(), o.neighbor.as_slice()))
        .collect();
    let (epsilon_hat, std_error) = summarize(measure, loss, probes, &differing, trials);
    Ok(StabilityReport {
        measure,
        epsilon_hat,
        std_error,
        trials,
        sup_over_z: measure != Measure::Arguments,
        theoretical_bound: constants.and_then(|c| theoretical_bound(measure, c, config.iterations, pair.base.n())),
    })
}

/// Largest state space [`exact_expectation_enumerate`] accepts.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// All `n^T` index sequences in lexicographic order, 0-based.
pub fn index_sequences(n: usize, t: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = (n as u128).pow(t as u32);
    (0..total).map(move |mut code| {
        let mut seq = vec![0usize; t];
        for slot in seq.iter_mut().rev() {
            *slot = (code % n as u128) as usize;
            code /= n as u128;
        }
        seq
    })
}

/// Exact coupled expectation of a stability measure by enumerating every
/// index sequence (and every selector value for the random-iterate output).
pub fn exact_expectation_enumerate<T: Scalar>(
    loss: &Loss<T>,
    pair: &NeighborPair<T>,
    config: &OptimizerConfig<T>,
    measure: Measure,
    probes: &[Example<T>],
) -> Result<f64> {
    if config.kind == OptimizerKind::DpSgd {
        return Err(Error::Unsupported("enumeration over continuous noise".into()));
    }
    let n = pair.base.n();
    let t = config.iterations;
    let size = (n as u128).checked_pow(t as u32).unwrap_or(u128::MAX);
    if size > ENUMERATION_LIMIT {
        return Err(Error::StateSpaceTooLarge { size, limit: ENUMERATION_LIMIT });
    }
    if measure != Measure::Arguments && probes.is_empty() {
        return Err(Error::Config("function-value and gradient stability need probe examples".into()));
    }
    let selectors: Vec<Option<usize>> = if config.output == OutputSelector::RandomIterate && t > 0 {
        (0..t).map(Some).collect()
    } else {
        vec![None]
    };
    let mut outputs = Vec::new();
    for seq in index_sequences(n, t) {
        for &r in &selectors {
            let a = run_with_indices(loss, &pair.base, config, &seq, r)?;
            let b = run_with_indices(loss, &pair.neighbor, config, &seq, r)?;
            outputs.push((a.output, b.output));
        }
    }
    let count = outputs.len();
    let view: Vec<(f64, &[T], &[T])> = outputs.iter().map(|(a, b)| (1.0, a.as_slice(), b.as_slice())).collect();
    Ok(summarize(measure, loss, probes, &view, count).0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InclusionMode {
    Exact,
    Bound,
}

/// Probability that a fixed position is drawn at least once in `T` uniform
/// draws from `n`: `1 - (1 - 1/n)^T`, or the union bound `min(T/n, 1)`.
pub fn inclusion_probability(n: usize, iterations: usize, mode: InclusionMode) -> Result<f64> {
    if n == 0 {
        return Err(Error::Config("n must be positive".into()));
    }
    if iterations == 0 {
        return Ok(0.0);
    }
    Ok(match mode {
        InclusionMode::Exact => {
            if n == 1 {
                1.0
            } else {
                1.0 - (1.0 - 1.0 / n as f64).powi(iterations as i32)
            }
        }
        InclusionMode::Bound => (iterations as f64 / n as f64).min(1.0),
    })
}
