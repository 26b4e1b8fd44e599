//! Bounded stacks, their padded slot form, and the binary stack vector χ.
//!
//! A configuration is a string over Γ of length at most `m`, read bottom to
//! top. Its padded form has exactly `m` slots numbered `1..=m`; the stack
//! occupies the upper slots `m-ℓ+1..=m` and the placeholder ι fills the
//! lower ones, so the top of a non-empty stack is always slot `m`.
//!
//! χ concatenates `Bin(slot m), Bin(slot m-1), …, Bin(slot 1)`, each block
//! `G = ⌈log₂(|Γ|+1)⌉` bits wide, most significant bit first, with
//! `Bin(ι) = 0` and stack symbol `i` (0-based) encoded as `i + 1`.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

/// Upper bound on the number of configurations any exhaustive pass visits.
pub const DEFAULT_CONFIG_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StackError {
    #[error("stack bound must be at least 1")]
    ZeroBound,
    #[error("cannot push {pushed} symbols onto a stack bounded by {bound}")]
    PushTooLong { pushed: usize, bound: usize },
    #[error("cannot push an empty string")]
    EmptyPush,
    #[error("pop on empty stack")]
    PopOnEmpty,
    #[error("configuration of length {len} exceeds bound {bound}")]
    OverBound { len: usize, bound: usize },
    #[error("stack symbol index {symbol} out of range for {alphabet} stack symbols")]
    UnknownSymbol { symbol: usize, alphabet: usize },
    #[error("more than {cap} configurations")]
    TooManyConfigurations { cap: usize },
}

/// A stack string `γ₁…γ_ℓ`, bottom to top, over stack-symbol indices.
///
/// Ordered length first, then lexicographically by symbol index.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct StackConfig(Vec<usize>);

impl StackConfig {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn new(symbols: Vec<usize>) -> Self {
        Self(symbols)
    }

    pub fn symbols(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn top(&self) -> Option<usize> {
        self.0.last().copied()
    }

    /// Removes the top symbol.
    pub fn pop(&self) -> Result<(StackConfig, usize), StackError> {
        let mut rest = self.0.clone();
        let top = rest.pop().ok_or(StackError::PopOnEmpty)?;
        Ok((StackConfig(rest), top))
    }
}

impl Ord for StackConfig {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for StackConfig {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for StackConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StackConfig{:?}", self.0)
    }
}

impl From<Vec<usize>> for StackConfig {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

/// Padded slot contents; index `j-1` holds slot `j`, `None` is ι.
///
/// Unlike a [`StackConfig`] a slot vector may have gaps; intermediate
/// results of stack maps are slot vectors.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct SlotVector(pub Vec<Option<usize>>);

impl SlotVector {
    pub fn slots(&self) -> &[Option<usize>] {
        &self.0
    }

    /// The configuration this vector pads, if ι only fills a lower prefix.
    pub fn to_config(&self) -> Option<StackConfig> {
        let first = self.0.iter().position(Option::is_some).unwrap_or(self.0.len());
        let symbols: Option<Vec<usize>> = self.0[first..].iter().copied().collect();
        symbols.map(StackConfig)
    }
}

/// The space `Γ^≤m` of configurations over `symbols` stack symbols.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StackSpace {
    symbols: usize,
    bound: usize,
    bits: usize,
}

impl StackSpace {
    pub fn new(symbols: usize, bound: usize) -> Result<Self, StackError> {
        if bound == 0 {
            return Err(StackError::ZeroBound);
        }
        Ok(Self {
            symbols,
            bound,
            bits: bits_per_slot(symbols),
        })
    }

    /// `|Γ|`.
    pub fn symbols(&self) -> usize {
        self.symbols
    }

    /// `m`.
    pub fn bound(&self) -> usize {
        self.bound
    }

    /// `G = ⌈log₂(|Γ|+1)⌉`.
    pub fn bits(&self) -> usize {
        self.bits
    }

    /// `mG`, the length of χ.
    pub fn width(&self) -> usize {
        self.bound * self.bits
    }

    pub fn check(&self, config: &StackConfig) -> Result<(), StackError> {
        if config.len() > self.bound {
            return Err(StackError::OverBound {
                len: config.len(),
                bound: self.bound,
            });
        }
        if let Some(&bad) = config.symbols().iter().find(|&&s| s >= self.symbols) {
            return Err(StackError::UnknownSymbol {
                symbol: bad,
                alphabet: self.symbols,
            });
        }
        Ok(())
    }

    pub fn is_full(&self, config: &StackConfig) -> bool {
        config.len() == self.bound
    }

    /// Pushes `tau` (bottom to top), discarding the bottom of the stack when
    /// the result would exceed the bound.
    pub fn push(&self, config: &StackConfig, tau: &[usize]) -> Result<StackConfig, StackError> {
        if tau.is_empty() {
            return Err(StackError::EmptyPush);
        }
        if tau.len() > self.bound {
            return Err(StackError::PushTooLong {
                pushed: tau.len(),
                bound: self.bound,
            });
        }
        let overflow = (config.len() + tau.len()).saturating_sub(self.bound);
        let mut out = config.symbols()[overflow..].to_vec();
        out.extend_from_slice(tau);
        Ok(StackConfig(out))
    }

    pub fn slots(&self, config: &StackConfig) -> SlotVector {
        let mut v = vec![None; self.bound - config.len()];
        v.extend(config.symbols().iter().map(|&s| Some(s)));
        SlotVector(v)
    }

    fn encode_slot(&self, slot: Option<usize>, out: &mut Vec<u8>) {
        let code = slot.map_or(0, |s| s + 1);
        for bit in (0..self.bits).rev() {
            out.push(((code >> bit) & 1) as u8);
        }
    }

    /// χ of a padded slot vector: block `i` encodes slot `m - i`.
    pub fn chi_slots(&self, slots: &SlotVector) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.width());
        for slot in slots.slots().iter().rev() {
            self.encode_slot(*slot, &mut out);
        }
        out
    }

    /// The stack vector χ(γ) ∈ {0,1}^{mG}.
    pub fn chi(&self, config: &StackConfig) -> Vec<u8> {
        self.chi_slots(&self.slots(config))
    }

    pub fn chi_f64(&self, config: &StackConfig) -> Vec<f64> {
        self.chi(config).into_iter().map(f64::from).collect()
    }

    /// Inverse of [`StackSpace::chi_slots`]; `None` unless every entry is 0
    /// or 1 and every block encodes ι or a stack symbol.
    pub fn decode(&self, bits: &[u8]) -> Option<SlotVector> {
        if bits.len() != self.width() || bits.iter().any(|&b| b > 1) {
            return None;
        }
        let mut slots = vec![None; self.bound];
        for (block, chunk) in bits.chunks(self.bits).enumerate() {
            let code = chunk.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
            if code > self.symbols {
                return None;
            }
            slots[self.bound - 1 - block] = code.checked_sub(1);
        }
        Some(SlotVector(slots))
    }

    /// All of `Γ^≤m` in canonical order, refusing more than `cap` entries.
    pub fn configurations(&self, cap: usize) -> Result<Vec<StackConfig>, StackError> {
        let mut total = 0usize;
        let mut layer = 1usize;
        for _ in 0..=self.bound {
            total = total.saturating_add(layer);
            layer = layer.saturating_mul(self.symbols);
        }
        if total > cap {
            return Err(StackError::TooManyConfigurations { cap });
        }
        let mut out = vec![StackConfig::empty()];
        let mut frontier = vec![StackConfig::empty()];
        for _ in 0..self.bound {
            let mut next = Vec::with_capacity(frontier.len() * self.symbols);
            for c in &frontier {
                for s in 0..self.symbols {
                    let mut v = c.0.clone();
                    v.push(s);
                    next.push(StackConfig(v));
                }
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        Ok(out)
    }
}

/// `⌈log₂(n+1)⌉`, the bits needed for codes `0..=n`.
pub fn bits_per_slot(symbols: usize) -> usize {
    (usize::BITS - symbols.leading_zeros()) as usize
}
