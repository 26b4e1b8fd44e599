//! Probabilistic m-bounded pushdown automata.
//!
//! The only state of a BPDA is its bounded stack. The transition function
//! μ is stored sparsely: absent `(γ, y, γ')` triples weigh zero.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::alphabet::{Alphabet, AlphabetError};
use crate::lm::{self, LanguageModel, MassViolation, Sample, ValidationReport, MASS_TOLERANCE};
use crate::stack::{StackConfig, StackError, StackSpace, DEFAULT_CONFIG_CAP};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BpdaError {
    #[error(transparent)]
    Stack(#[from] StackError),
    #[error(transparent)]
    Alphabet(#[from] AlphabetError),
    #[error("input symbol index {0} out of range")]
    UnknownSymbol(usize),
    #[error("weight {0} is not in [0, 1]")]
    BadWeight(f64),
    #[error("duplicate transition from {from} on `{symbol}` to {to}")]
    DuplicateTransition {
        from: String,
        symbol: String,
        to: String,
    },
    #[error("duplicate {which} weight for {config}")]
    DuplicateWeight { which: &'static str, config: String },
    #[error("no positive-weight transition from {config} on `{symbol}`")]
    DeadTransition { config: String, symbol: String },
    #[error("string is unreachable: dead transition at position {position}")]
    Unreachable { position: usize },
    #[error("automaton is not deterministic")]
    Nondeterministic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bpda {
    sigma: Alphabet,
    gamma: Alphabet,
    space: StackSpace,
    transitions: BTreeMap<(StackConfig, usize), Vec<(StackConfig, f64)>>,
    initial: BTreeMap<StackConfig, f64>,
    final_weights: BTreeMap<StackConfig, f64>,
}

fn check_weight(w: f64) -> Result<(), BpdaError> {
    if w.is_finite() && (0.0..=1.0).contains(&w) {
        Ok(())
    } else {
        Err(BpdaError::BadWeight(w))
    }
}

impl Bpda {
    /// An automaton with no weights over `sigma`, stack symbols `gamma`, bound `m`.
    pub fn new(sigma: Alphabet, gamma: Alphabet, bound: usize) -> Result<Self, BpdaError> {
        let space = StackSpace::new(gamma.len(), bound)?;
        Ok(Self {
            sigma,
            gamma,
            space,
            transitions: BTreeMap::new(),
            initial: BTreeMap::new(),
            final_weights: BTreeMap::new(),
        })
    }

    pub fn sigma(&self) -> &Alphabet {
        &self.sigma
    }

    pub fn gamma(&self) -> &Alphabet {
        &self.gamma
    }

    pub fn space(&self) -> &StackSpace {
        &self.space
    }

    pub fn bound(&self) -> usize {
        self.space.bound()
    }

    pub fn set_initial(&mut self, config: StackConfig, weight: f64) -> Result<(), BpdaError> {
        self.space.check(&config)?;
        check_weight(weight)?;
        if self.initial.contains_key(&config) {
            return Err(BpdaError::DuplicateWeight {
                which: "initial",
                config: self.render_config(&config),
            });
        }
        self.initial.insert(config, weight);
        Ok(())
    }

    pub fn set_final(&mut self, config: StackConfig, weight: f64) -> Result<(), BpdaError> {
        self.space.check(&config)?;
        check_weight(weight)?;
        if self.final_weights.contains_key(&config) {
            return Err(BpdaError::DuplicateWeight {
                which: "final",
                config: self.render_config(&config),
            });
        }
        self.final_weights.insert(config, weight);
        Ok(())
    }

    pub fn add_transition(
        &mut self,
        from: StackConfig,
        symbol: usize,
        to: StackConfig,
        weight: f64,
    ) -> Result<(), BpdaError> {
        self.space.check(&from)?;
        self.space.check(&to)?;
        if symbol >= self.sigma.len() {
            return Err(BpdaError::UnknownSymbol(symbol));
        }
        check_weight(weight)?;
        let existing = self.transitions.get(&(from.clone(), symbol));
        if existing.is_some_and(|outs| outs.iter().any(|(t, _)| *t == to)) {
            return Err(BpdaError::DuplicateTransition {
                from: self.render_config(&from),
                symbol: self.sigma.symbol(symbol).to_string(),
                to: self.render_config(&to),
            });
        }
        self.transitions.entry((from, symbol)).or_default().push((to, weight));
        Ok(())
    }

    pub fn initial_weights(&self) -> &BTreeMap<StackConfig, f64> {
        &self.initial
    }

    pub fn final_weights(&self) -> &BTreeMap<StackConfig, f64> {
        &self.final_weights
    }

    /// All stored `((γ, y), [(γ', w)])` entries in canonical order.
    pub fn transitions(&self) -> &BTreeMap<(StackConfig, usize), Vec<(StackConfig, f64)>> {
        &self.transitions
    }

    pub fn initial_weight(&self, config: &StackConfig) -> f64 {
        self.initial.get(config).copied().unwrap_or(0.0)
    }

    pub fn final_weight(&self, config: &StackConfig) -> f64 {
        self.final_weights.get(config).copied().unwrap_or(0.0)
    }

    /// Positive-weight successors of `(γ, y)`.
    pub fn successors<'a>(
        &'a self,
        config: &StackConfig,
        symbol: usize,
    ) -> impl Iterator<Item = &'a (StackConfig, f64)> + 'a {
        self.transitions
            .get(&(config.clone(), symbol))
            .into_iter()
            .flatten()
            .filter(|(_, w)| *w > 0.0)
    }

    pub fn render_config(&self, config: &StackConfig) -> String {
        render(&self.gamma, config)
    }

    pub fn is_deterministic(&self) -> bool {
        self.initial.values().filter(|&&w| w > 0.0).count() == 1
            && self
                .transitions
                .values()
                .all(|outs| outs.iter().filter(|(_, w)| *w > 0.0).count() <= 1)
    }

    /// Configurations reachable from `supp(λ)` through positive-weight
    /// transitions, in canonical order.
    pub fn reachable_configs(&self, cap: usize) -> Result<Vec<StackConfig>, StackError> {
        let mut seen: BTreeSet<StackConfig> = self
            .initial
            .iter()
            .filter(|(_, &w)| w > 0.0)
            .map(|(c, _)| c.clone())
            .collect();
        let mut frontier: Vec<StackConfig> = seen.iter().cloned().collect();
        while let Some(config) = frontier.pop() {
            for y in 0..self.sigma.len() {
                for (next, _) in self.successors(&config, y) {
                    if seen.insert(next.clone()) {
                        if seen.len() > cap {
                            return Err(StackError::TooManyConfigurations { cap });
                        }
                        frontier.push(next.clone());
                    }
                }
            }
        }
        Ok(seen.into_iter().collect())
    }

    /// Checks the probabilistic and deterministic conditions.
    ///
    /// The per-configuration mass condition is checked on configurations
    /// reachable from the initial support; unreachable configurations
    /// carry no probability.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let initial: f64 = self.initial.values().sum();
        if (initial - 1.0).abs() > MASS_TOLERANCE {
            violations.push(MassViolation::Initial { total: initial });
        }
        match self.reachable_configs(DEFAULT_CONFIG_CAP) {
            Ok(configs) => {
                for config in configs {
                    let total = self.outgoing_mass(&config) + self.final_weight(&config);
                    if (total - 1.0).abs() > MASS_TOLERANCE {
                        violations.push(MassViolation::Outgoing {
                            at: self.render_config(&config),
                            total,
                        });
                    }
                }
            }
            Err(e) => violations.push(MassViolation::Outgoing {
                at: format!("<{e}>"),
                total: f64::NAN,
            }),
        }
        ValidationReport {
            is_probabilistic: violations.is_empty(),
            is_deterministic: self.is_deterministic(),
            violations,
        }
    }

    fn outgoing_mass(&self, config: &StackConfig) -> f64 {
        (0..self.sigma.len())
            .flat_map(|y| self.successors(config, y))
            .map(|(_, w)| w)
            .sum()
    }

    /// The unique configuration with positive initial weight, if any.
    pub fn initial_config(&self) -> Option<&StackConfig> {
        let mut it = self.initial.iter().filter(|(_, &w)| w > 0.0);
        match (it.next(), it.next()) {
            (Some((c, _)), None) => Some(c),
            _ => None,
        }
    }

    fn dead(&self, config: &StackConfig, symbol: usize) -> BpdaError {
        BpdaError::DeadTransition {
            config: self.render_config(config),
            symbol: self.sigma.symbol(symbol).to_string(),
        }
    }

    /// φ(γ, y): the successor along the only positive `y`-transition.
    pub fn next_stack(&self, config: &StackConfig, symbol: usize) -> Result<StackConfig, BpdaError> {
        let mut it = self.successors(config, symbol);
        match (it.next(), it.next()) {
            (Some((next, _)), None) => Ok(next.clone()),
            (None, _) => Err(self.dead(config, symbol)),
            (Some(_), Some(_)) => Err(BpdaError::Nondeterministic),
        }
    }

    /// ω(γ, y), zero when there is no transition. For nondeterministic
    /// automata this is the total `y`-labelled mass leaving γ.
    pub fn transition_weight(&self, config: &StackConfig, symbol: usize) -> f64 {
        self.successors(config, symbol).map(|(_, w)| w).sum()
    }

    /// σ(y⃗): the configuration reached after reading `string`.
    pub fn str_to_stack(&self, string: &[usize]) -> Result<StackConfig, BpdaError> {
        let mut config = self.initial_config().ok_or(BpdaError::Nondeterministic)?.clone();
        for (position, &y) in string.iter().enumerate() {
            config = self
                .next_stack(&config, y)
                .map_err(|_| BpdaError::Unreachable { position })?;
        }
        Ok(config)
    }

    /// `p(· | γ)` over `Σ ∪ {EOS}`: `ω(γ, y)` for each symbol, then `ρ(γ)`.
    pub fn conditional_dist(&self, config: &StackConfig) -> Vec<f64> {
        let mut dist: Vec<f64> = (0..self.sigma.len())
            .map(|y| self.transition_weight(config, y))
            .collect();
        dist.push(self.final_weight(config));
        dist
    }

    /// Probability of `string`. Deterministic automata follow their single
    /// run; others sum over runs by forward accumulation.
    pub fn string_prob(&self, string: &[usize]) -> f64 {
        if !self.is_deterministic() {
            return self.string_prob_forward(string);
        }
        let Some(start) = self.initial_config() else {
            return 0.0;
        };
        let mut weight = self.initial_weight(start);
        let mut config = start.clone();
        for &y in string {
            match self.next_stack(&config, y) {
                Ok(next) => {
                    weight *= self.transition_weight(&config, y);
                    config = next;
                }
                Err(_) => return 0.0,
            }
        }
        weight * self.final_weight(&config)
    }

    /// Sum over all runs, by forward accumulation over configurations.
    pub fn string_prob_forward(&self, string: &[usize]) -> f64 {
        self.prob(string)
    }

    pub fn sample(&self, seed: u64, max_len: usize) -> Sample {
        lm::sample(self, seed, max_len)
    }
}

/// Forward weights: configuration ↦ total weight of runs ending there.
pub type Forward = Vec<(StackConfig, f64)>;

impl LanguageModel for Bpda {
    type State = Forward;

    fn sigma(&self) -> &Alphabet {
        &self.sigma
    }

    fn start(&self) -> Forward {
        self.initial
            .iter()
            .filter(|(_, &w)| w > 0.0)
            .map(|(c, &w)| (c.clone(), w))
            .collect()
    }

    fn advance(&self, state: &Forward, symbol: usize) -> Forward {
        let mut next: BTreeMap<StackConfig, f64> = BTreeMap::new();
        for (config, w) in state {
            for (to, mu) in self.successors(config, symbol) {
                *next.entry(to.clone()).or_insert(0.0) += w * mu;
            }
        }
        next.into_iter().collect()
    }

    fn stop_prob(&self, state: &Forward) -> f64 {
        state.iter().map(|(c, w)| w * self.final_weight(c)).sum()
    }

    fn next_dist(&self, state: &Forward) -> Option<Vec<f64>> {
        let mass: f64 = state.iter().map(|(_, w)| w).sum();
        if mass <= 0.0 {
            return None;
        }
        let mut dist = vec![0.0; self.sigma.len() + 1];
        for (config, w) in state {
            for (p, q) in dist.iter_mut().zip(self.conditional_dist(config)) {
                *p += w * q;
            }
        }
        Some(dist.into_iter().map(|p| p / mass).collect())
    }
}

/// `a|b|c` bottom to top, `ε` for the empty stack.
pub fn render(gamma: &Alphabet, config: &StackConfig) -> String {
    if config.is_empty() {
        "ε".to_string()
    } else {
        config
            .symbols()
            .iter()
            .map(|&s| gamma.symbol(s))
            .collect::<Vec<_>>()
            .join("|")
    }
}
