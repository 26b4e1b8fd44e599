//! The common interface of every string distribution in the crate.
//!
//! Distributions over the next symbol are vectors over `Σ ∪ {EOS}` with EOS
//! last.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alphabet::Alphabet;

/// Absolute tolerance for the probabilistic (sum-to-one) conditions.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// A left-to-right language model.
///
/// `State` summarises a prefix; for automata it carries unnormalised prefix
/// weights, so `stop_prob` is the probability of the prefix followed by EOS.
pub trait LanguageModel {
    type State: Clone;

    fn sigma(&self) -> &Alphabet;

    fn start(&self) -> Self::State;

    fn advance(&self, state: &Self::State, symbol: usize) -> Self::State;

    /// Probability of exactly the prefix summarised by `state`.
    fn stop_prob(&self, state: &Self::State) -> f64;

    /// Next-symbol distribution after the prefix, `None` if the prefix has
    /// zero probability.
    fn next_dist(&self, state: &Self::State) -> Option<Vec<f64>>;

    fn run(&self, string: &[usize]) -> Self::State {
        string
            .iter()
            .fold(self.start(), |state, &y| self.advance(&state, y))
    }

    fn prob(&self, string: &[usize]) -> f64 {
        self.stop_prob(&self.run(string))
    }
}

/// Outcome of an ancestral sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sample {
    Complete(Vec<usize>),
    /// The sampler reached `max_len` without drawing EOS.
    Truncated(Vec<usize>),
}

impl Sample {
    pub fn symbols(&self) -> &[usize] {
        match self {
            Sample::Complete(s) | Sample::Truncated(s) => s,
        }
    }
}

/// Draws strings by repeatedly sampling from `next_dist` until EOS.
pub fn sample_with<L: LanguageModel, R: Rng>(lm: &L, rng: &mut R, max_len: usize) -> Sample {
    let eos = lm.sigma().len();
    let mut state = lm.start();
    let mut out = Vec::new();
    loop {
        let Some(dist) = lm.next_dist(&state) else {
            return Sample::Truncated(out);
        };
        let drawn = draw(&dist, rng.random::<f64>());
        if drawn == eos {
            return Sample::Complete(out);
        }
        if out.len() == max_len {
            return Sample::Truncated(out);
        }
        out.push(drawn);
        state = lm.advance(&state, drawn);
    }
}

/// Seeded sampling; identical seeds give identical strings.
pub fn sample<L: LanguageModel>(lm: &L, seed: u64, max_len: usize) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with(lm, &mut rng, max_len)
}

fn draw(dist: &[f64], u: f64) -> usize {
    let total: f64 = dist.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if target < acc {
            return i;
        }
    }
    // rounding left `target` at the very end
    dist.iter().rposition(|&p| p > 0.0).unwrap_or(dist.len() - 1)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum MassViolation {
    /// Initial weights do not sum to one.
    Initial { total: f64 },
    /// Outgoing mass plus final weight of a state/configuration is not one.
    Outgoing { at: String, total: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub is_probabilistic: bool,
    pub is_deterministic: bool,
    pub violations: Vec<MassViolation>,
}
