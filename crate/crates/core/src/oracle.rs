//! Exhaustive enumeration over `Σ^≤L`, weak-equivalence comparison and
//! truncated recognition.

use thiserror::Error;

use crate::lm::LanguageModel;

/// Most strings any exhaustive check will visit.
pub const STRING_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("enumerating all strings up to length {max_len} over {symbols} symbols exceeds the budget of {budget}")]
    Budget {
        symbols: usize,
        max_len: usize,
        budget: u64,
    },
    #[error("alphabets differ: {0:?} vs {1:?}")]
    AlphabetMismatch(Vec<String>, Vec<String>),
}

/// `Σ_{ℓ ≤ L} |Σ|^ℓ`, saturating.
pub fn string_count(symbols: usize, max_len: usize) -> u64 {
    let mut total = 0u64;
    let mut layer = 1u64;
    for _ in 0..=max_len {
        total = total.saturating_add(layer);
        layer = layer.saturating_mul(symbols as u64);
    }
    total
}

pub fn check_budget(symbols: usize, max_len: usize) -> Result<u64, OracleError> {
    let n = string_count(symbols, max_len);
    if n > STRING_BUDGET {
        Err(OracleError::Budget {
            symbols,
            max_len,
            budget: STRING_BUDGET,
        })
    } else {
        Ok(n)
    }
}

/// Visits every string up to `max_len` in length-then-lexicographic order,
/// carrying the model state of each prefix.
pub fn for_each_string<L, F>(lm: &L, max_len: usize, mut visit: F) -> Result<(), OracleError>
where
    L: LanguageModel,
    F: FnMut(&[usize], &L::State),
{
    let n = lm.sigma().len();
    check_budget(n, max_len)?;
    let mut layer = vec![(Vec::new(), lm.start())];
    for len in 0..=max_len {
        for (s, state) in &layer {
            visit(s, state);
        }
        if len == max_len {
            break;
        }
        let mut next = Vec::with_capacity(layer.len() * n);
        for (s, state) in &layer {
            for y in 0..n {
                let mut t = s.clone();
                t.push(y);
                next.push((t, lm.advance(state, y)));
            }
        }
        layer = next;
    }
    Ok(())
}

/// `p(y⃗)` for every string up to `max_len`, in enumeration order.
pub fn enumerate_probs<L: LanguageModel>(lm: &L, max_len: usize) -> Result<Vec<(Vec<usize>, f64)>, OracleError> {
    let mut out = Vec::new();
    for_each_string(lm, max_len, |s, state| out.push((s.to_vec(), lm.stop_prob(state))))?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub strings: usize,
    pub max_abs_diff: f64,
    pub worst_string: Vec<usize>,
    pub tol: f64,
}

impl Comparison {
    pub fn passed(&self) -> bool {
        self.max_abs_diff <= self.tol
    }
}

/// Largest `|p_A(y⃗) - p_B(y⃗)|` over all strings up to `max_len`.
pub fn compare<A, B>(a: &A, b: &B, max_len: usize, tol: f64) -> Result<Comparison, OracleError>
where
    A: LanguageModel,
    B: LanguageModel,
{
    if a.sigma().symbols() != b.sigma().symbols() {
        return Err(OracleError::AlphabetMismatch(
            a.sigma().symbols().to_vec(),
            b.sigma().symbols().to_vec(),
        ));
    }
    let pa = enumerate_probs(a, max_len)?;
    let pb = enumerate_probs(b, max_len)?;
    let mut cmp = Comparison {
        strings: pa.len(),
        max_abs_diff: 0.0,
        worst_string: Vec::new(),
        tol,
    };
    for ((s, p), (_, q)) in pa.iter().zip(&pb) {
        let d = (p - q).abs();
        // NaN counts as the worst possible disagreement
        if d > cmp.max_abs_diff || (d.is_nan() && !cmp.max_abs_diff.is_nan()) {
            cmp.max_abs_diff = d;
            cmp.worst_string = s.clone();
        }
    }
    Ok(cmp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recognition {
    Accept,
    /// Step `t` (1-based) has conditional at most α; step `|y⃗| + 1` is EOS.
    Reject { step: usize },
}

/// Accepts iff every `p(y_t | y_{<t})` and `p(EOS | y⃗)` exceeds `alpha`.
pub fn truncated_recognize<L: LanguageModel>(lm: &L, string: &[usize], alpha: f64) -> Recognition {
    let eos = lm.sigma().len();
    let mut state = lm.start();
    for (t, &y) in string.iter().enumerate() {
        match lm.next_dist(&state) {
            Some(dist) if dist[y] > alpha => {}
            _ => return Recognition::Reject { step: t + 1 },
        }
        state = lm.advance(&state, y);
    }
    match lm.next_dist(&state) {
        Some(dist) if dist[eos] > alpha => Recognition::Accept,
        _ => Recognition::Reject {
            step: string.len() + 1,
        },
    }
}
