//! Probabilistic finite-state automata and their correspondence with BPDAs.

use thiserror::Error;

use crate::alphabet::{Alphabet, AlphabetError};
use crate::bpda::{render, Bpda, BpdaError};
use crate::lm::{self, LanguageModel, MassViolation, Sample, ValidationReport, MASS_TOLERANCE};
use crate::stack::{StackConfig, StackError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PfsaError {
    #[error("automaton needs at least one state")]
    NoStates,
    #[error("duplicate or empty state name `{0}`")]
    BadStateName(String),
    #[error("state index {0} out of range")]
    UnknownState(usize),
    #[error("input symbol index {0} out of range")]
    UnknownSymbol(usize),
    #[error("weight {0} is negative or not finite")]
    BadWeight(f64),
    #[error("{which} weights have {got} entries for {expected} states")]
    WeightCount {
        which: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("more than one arc {from} --{symbol}--> {to}")]
    DuplicateArc {
        from: String,
        symbol: String,
        to: String,
    },
    #[error(transparent)]
    Alphabet(#[from] AlphabetError),
    #[error(transparent)]
    Bpda(#[from] BpdaError),
    #[error(transparent)]
    Stack(#[from] StackError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub from: usize,
    pub symbol: usize,
    pub weight: f64,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pfsa {
    sigma: Alphabet,
    states: Vec<String>,
    arcs: Vec<Arc>,
    initial: Vec<f64>,
    final_weights: Vec<f64>,
    // arcs by [state][symbol] as (target, weight)
    outgoing: Vec<Vec<Vec<(usize, f64)>>>,
}

fn check_weight(w: f64) -> Result<(), PfsaError> {
    if w.is_finite() && w >= 0.0 {
        Ok(())
    } else {
        Err(PfsaError::BadWeight(w))
    }
}

impl Pfsa {
    pub fn new(
        sigma: Alphabet,
        states: Vec<String>,
        arcs: Vec<Arc>,
        initial: Vec<f64>,
        final_weights: Vec<f64>,
    ) -> Result<Self, PfsaError> {
        let n = states.len();
        if n == 0 {
            return Err(PfsaError::NoStates);
        }
        let mut names = std::collections::HashSet::new();
        for s in &states {
            if s.is_empty() || !names.insert(s.as_str()) {
                return Err(PfsaError::BadStateName(s.clone()));
            }
        }
        for (which, w) in [("initial", &initial), ("final", &final_weights)] {
            if w.len() != n {
                return Err(PfsaError::WeightCount {
                    which,
                    got: w.len(),
                    expected: n,
                });
            }
            w.iter().try_for_each(|&x| check_weight(x))?;
        }
        let mut outgoing = vec![vec![Vec::new(); sigma.len()]; n];
        for arc in &arcs {
            if arc.from >= n {
                return Err(PfsaError::UnknownState(arc.from));
            }
            if arc.to >= n {
                return Err(PfsaError::UnknownState(arc.to));
            }
            if arc.symbol >= sigma.len() {
                return Err(PfsaError::UnknownSymbol(arc.symbol));
            }
            check_weight(arc.weight)?;
            let slot: &mut Vec<(usize, f64)> = &mut outgoing[arc.from][arc.symbol];
            if slot.iter().any(|&(t, _)| t == arc.to) {
                return Err(PfsaError::DuplicateArc {
                    from: states[arc.from].clone(),
                    symbol: sigma.symbol(arc.symbol).to_string(),
                    to: states[arc.to].clone(),
                });
            }
            slot.push((arc.to, arc.weight));
        }
        Ok(Self {
            sigma,
            states,
            arcs,
            initial,
            final_weights,
            outgoing,
        })
    }

    pub fn sigma(&self) -> &Alphabet {
        &self.sigma
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn final_weights(&self) -> &[f64] {
        &self.final_weights
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    /// Arcs leaving `state` on `symbol`, as `(target, weight)`.
    pub fn arcs_from(&self, state: usize, symbol: usize) -> &[(usize, f64)] {
        &self.outgoing[state][symbol]
    }

    pub fn is_deterministic(&self) -> bool {
        self.initial.iter().filter(|&&w| w > 0.0).count() == 1
            && self
                .outgoing
                .iter()
                .flatten()
                .all(|arcs| arcs.iter().filter(|(_, w)| *w > 0.0).count() <= 1)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let initial: f64 = self.initial.iter().sum();
        if (initial - 1.0).abs() > MASS_TOLERANCE {
            violations.push(MassViolation::Initial { total: initial });
        }
        for (q, name) in self.states.iter().enumerate() {
            let out: f64 = self.outgoing[q].iter().flatten().map(|(_, w)| w).sum();
            let total = out + self.final_weights[q];
            if (total - 1.0).abs() > MASS_TOLERANCE {
                violations.push(MassViolation::Outgoing {
                    at: name.clone(),
                    total,
                });
            }
        }
        ValidationReport {
            is_probabilistic: violations.is_empty(),
            is_deterministic: self.is_deterministic(),
            violations,
        }
    }

    /// Total weight of all paths yielding `string`, by the forward algorithm.
    pub fn stringsum(&self, string: &[usize]) -> f64 {
        self.prob(string)
    }

    pub fn sample(&self, seed: u64, max_len: usize) -> Sample {
        lm::sample(self, seed, max_len)
    }
}

impl LanguageModel for Pfsa {
    /// Forward weights per state.
    type State = Vec<f64>;

    fn sigma(&self) -> &Alphabet {
        &self.sigma
    }

    fn start(&self) -> Vec<f64> {
        self.initial.clone()
    }

    fn advance(&self, state: &Vec<f64>, symbol: usize) -> Vec<f64> {
        let mut next = vec![0.0; self.states.len()];
        for (q, &w) in state.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for &(to, arc_w) in &self.outgoing[q][symbol] {
                next[to] += w * arc_w;
            }
        }
        next
    }

    fn stop_prob(&self, state: &Vec<f64>) -> f64 {
        state.iter().zip(&self.final_weights).map(|(w, r)| w * r).sum()
    }

    fn next_dist(&self, state: &Vec<f64>) -> Option<Vec<f64>> {
        let mass: f64 = state.iter().sum();
        if mass <= 0.0 {
            return None;
        }
        let mut dist = vec![0.0; self.sigma.len() + 1];
        for (q, &w) in state.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (y, arcs) in self.outgoing[q].iter().enumerate() {
                dist[y] += w * arcs.iter().map(|(_, a)| a).sum::<f64>();
            }
            dist[self.sigma.len()] += w * self.final_weights[q];
        }
        Some(dist.into_iter().map(|p| p / mass).collect())
    }
}

/// The 1-bounded BPDA whose stack symbols are the states of `pfsa`.
pub fn pfsa_to_bpda(pfsa: &Pfsa) -> Result<Bpda, PfsaError> {
    let gamma = Alphabet::new(pfsa.states.iter().cloned())?;
    let mut bpda = Bpda::new(pfsa.sigma.clone(), gamma, 1)?;
    let one = |q: usize| StackConfig::new(vec![q]);
    for q in 0..pfsa.states.len() {
        if pfsa.initial[q] != 0.0 {
            bpda.set_initial(one(q), pfsa.initial[q])?;
        }
        if pfsa.final_weights[q] != 0.0 {
            bpda.set_final(one(q), pfsa.final_weights[q])?;
        }
    }
    for arc in &pfsa.arcs {
        bpda.add_transition(one(arc.from), arc.symbol, one(arc.to), arc.weight)?;
    }
    Ok(bpda)
}

/// One PFSA state per configuration of `bpda`, named by the configuration
/// (`a|b` bottom to top, `ε` for the empty stack).
///
/// With `reachable_only` only configurations reachable from the initial
/// support become states; otherwise all of `Γ^≤m` does. Both are capped at
/// `cap` configurations. If two configurations render alike (a stack symbol
/// named `ε`, say), every state is prefixed with its index: `0:ε`, `1:ε`.
pub fn bpda_to_pfsa(bpda: &Bpda, reachable_only: bool, cap: usize) -> Result<Pfsa, PfsaError> {
    let configs = if reachable_only {
        bpda.reachable_configs(cap)?
    } else {
        bpda.space().configurations(cap)?
    };
    let index: std::collections::HashMap<&StackConfig, usize> =
        configs.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let mut states: Vec<String> = configs.iter().map(|c| render(bpda.gamma(), c)).collect();
    let distinct: std::collections::HashSet<&String> = states.iter().collect();
    if distinct.len() < states.len() {
        states = states.iter().enumerate().map(|(i, s)| format!("{i}:{s}")).collect();
    }
    let initial = configs.iter().map(|c| bpda.initial_weight(c)).collect();
    let final_weights = configs.iter().map(|c| bpda.final_weight(c)).collect();
    let mut arcs = Vec::new();
    for ((from, symbol), outs) in bpda.transitions() {
        let Some(&f) = index.get(from) else { continue };
        for (to, weight) in outs {
            // an unreachable target can only hang off a zero-weight arc
            if let Some(&t) = index.get(to) {
                arcs.push(Arc {
                    from: f,
                    symbol: *symbol,
                    weight: *weight,
                    to: t,
                });
            }
        }
    }
    Pfsa::new(bpda.sigma().clone(), states, arcs, initial, final_weights)
}
