//! Built-in certified automata: n-gram LMs, bounded Dyck LMs, a bounded
//! Dyck recognizer, and the 3-gram fixture PFSA.

use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem, Variable};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::alphabet::{Alphabet, AlphabetError};
use crate::bpda::{Bpda, BpdaError};
use crate::pfsa::{Arc, Pfsa, PfsaError};
use crate::stack::{StackConfig, StackError, StackSpace, DEFAULT_CONFIG_CAP};
use crate::structure::{AffineMap, Certificate, Overlay, Readout, SlotAction};

/// Box bound on every readout entry in the recognizer LP.
pub const RECOGNIZER_BOUND: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstructionError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Alphabet(#[from] AlphabetError),
    #[error(transparent)]
    Stack(#[from] StackError),
    #[error(transparent)]
    Bpda(#[from] BpdaError),
    #[error(transparent)]
    Pfsa(#[from] PfsaError),
    #[error("readout must be {rows}x{cols} with a length-{rows} bias")]
    ReadoutShape { rows: usize, cols: usize },
    #[error("no readout separates valid from invalid continuations by margin {margin}: {reason}")]
    Infeasible { margin: f64, reason: String },
    #[error("recognizer check failed at stack {config}: p({symbol}) = {prob} is on the wrong side of {alpha}")]
    Threshold {
        config: String,
        symbol: String,
        prob: f64,
        alpha: f64,
    },
}

/// Where the output layer `(E′, u′)` comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ReadoutSource {
    /// Standard normal entries from a ChaCha8 stream, `E′` row by row then `u′`.
    Seed(u64),
    Given(Readout),
}

impl ReadoutSource {
    fn build(&self, rows: usize, cols: usize) -> Result<Readout, ConstructionError> {
        match self {
            ReadoutSource::Seed(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
                let mut e = DMatrix::zeros(rows, cols);
                for i in 0..rows {
                    for j in 0..cols {
                        e[(i, j)] = draw();
                    }
                }
                let u = DVector::from_fn(rows, |_, _| draw());
                Ok(Readout { e, u })
            }
            ReadoutSource::Given(r) => {
                if r.e.shape() != (rows, cols) || r.u.len() != rows {
                    return Err(ConstructionError::ReadoutShape { rows, cols });
                }
                Ok(r.clone())
            }
        }
    }
}

/// A deterministic BPDA starting from the empty stack, with transitions
/// `phi` and conditionals `softmax(E′χ(γ) + u′)` on every configuration.
fn softmax_bpda(
    sigma: &Alphabet,
    gamma: &Alphabet,
    bound: usize,
    readout: &Readout,
    phi: impl Fn(&StackSpace, &StackConfig, usize) -> Result<StackConfig, StackError>,
) -> Result<Bpda, ConstructionError> {
    let mut bpda = Bpda::new(sigma.clone(), gamma.clone(), bound)?;
    let space = *bpda.space();
    bpda.set_initial(StackConfig::empty(), 1.0)?;
    for config in space.configurations(DEFAULT_CONFIG_CAP)? {
        let dist = readout.dist(&space.chi_f64(&config));
        for (y, &p) in dist.iter().enumerate().take(sigma.len()) {
            let next = phi(&space, &config, y)?;
            bpda.add_transition(config.clone(), y, next, p)?;
        }
        bpda.set_final(config, dist[sigma.len()])?;
    }
    Ok(bpda)
}

/// Block shift moving slot `j+1` into slot `j` (push direction); the top
/// slot becomes ι.
fn shift_down(space: &StackSpace) -> AffineMap {
    let (m, g, w) = (space.bound(), space.bits(), space.width());
    let mut map = AffineMap::identity(w);
    map.matrix.fill(0.0);
    // χ block i encodes slot m - i
    for i in 1..m {
        for bit in 0..g {
            map.matrix[(i * g + bit, (i - 1) * g + bit)] = 1.0;
        }
    }
    map
}

/// Block shift moving slot `j-1` into slot `j` (pop direction); slot 1
/// becomes ι.
fn shift_up(space: &StackSpace) -> AffineMap {
    let (m, g, w) = (space.bound(), space.bits(), space.width());
    let mut map = AffineMap::identity(w);
    map.matrix.fill(0.0);
    for i in 0..m.saturating_sub(1) {
        for bit in 0..g {
            map.matrix[(i * g + bit, (i + 1) * g + bit)] = 1.0;
        }
    }
    map
}

fn write_top(symbol: usize, bound: usize) -> Overlay {
    let mut o = Overlay::keep_all(symbol, bound);
    o.actions[bound - 1] = SlotAction::Write;
    o
}

/// n-gram LM over `sigma`: the stack holds the last `n - 1` symbols
/// (`Γ = Σ`), and every symbol pushes itself, discarding the oldest.
pub fn make_ngram(n: usize, sigma: &Alphabet, source: &ReadoutSource) -> Result<(Bpda, Certificate), ConstructionError> {
    if n < 2 {
        return Err(ConstructionError::Parameter(format!("n-gram order must be at least 2, got {n}")));
    }
    let m = n - 1;
    let space = StackSpace::new(sigma.len(), m)?;
    let readout = source.build(sigma.len() + 1, space.width())?;
    let bpda = softmax_bpda(sigma, sigma, m, &readout, |space, c, y| space.push(c, &[y]))?;
    let cert = Certificate {
        kappa: vec![0; sigma.len()],
        maps: vec![shift_down(&space)],
        overlays: (0..sigma.len()).map(|y| write_top(y, m)).collect(),
        readout,
    };
    Ok((bpda, cert))
}

/// `Σ = {<1..<b, >1..>b}` (openers first) and `Γ = {<1..<b}`.
pub fn dyck_alphabets(b: usize) -> Result<(Alphabet, Alphabet), ConstructionError> {
    if b == 0 {
        return Err(ConstructionError::Parameter("need at least one bracket type".into()));
    }
    let openers: Vec<String> = (1..=b).map(|i| format!("<{i}")).collect();
    let closers = (1..=b).map(|i| format!(">{i}"));
    let sigma = Alphabet::new(openers.iter().cloned().chain(closers))?;
    let gamma = Alphabet::new(openers)?;
    Ok((sigma, gamma))
}

fn dyck_mechanics(b: usize) -> impl Fn(&StackSpace, &StackConfig, usize) -> Result<StackConfig, StackError> {
    move |space, config, y| {
        if y < b {
            space.push(config, &[y])
        } else if config.is_empty() {
            Ok(StackConfig::empty())
        } else {
            config.pop().map(|(c, _)| c)
        }
    }
}

fn dyck_with_readout(b: usize, n: usize, readout: Readout) -> Result<(Bpda, Certificate), ConstructionError> {
    let (sigma, gamma) = dyck_alphabets(b)?;
    let space = StackSpace::new(b, n)?;
    let bpda = softmax_bpda(&sigma, &gamma, n, &readout, dyck_mechanics(b))?;
    let overlays = (0..2 * b)
        .map(|y| {
            if y < b {
                write_top(y, n)
            } else {
                Overlay::keep_all(0, n)
            }
        })
        .collect();
    let cert = Certificate {
        kappa: (0..2 * b).map(|y| usize::from(y >= b)).collect(),
        maps: vec![shift_down(&space), shift_up(&space)],
        overlays,
        readout,
    };
    Ok((bpda, cert))
}

/// LM over bounded Dyck mechanics with `b` bracket types and depth `n`.
/// Openers push (a full stack loses its bottom), closers pop (popping the
/// empty stack leaves it empty). Certified with `K = 2`: openers shift
/// down and write the top slot, closers shift up.
pub fn make_dyck(b: usize, n: usize, source: &ReadoutSource) -> Result<(Bpda, Certificate), ConstructionError> {
    if n == 0 {
        return Err(ConstructionError::Parameter("depth must be at least 1".into()));
    }
    let space = StackSpace::new(b, n)?;
    let readout = source.build(2 * b + 1, space.width())?;
    dyck_with_readout(b, n, readout)
}

/// Valid continuations of a configuration of the Dyck(b, n) mechanics over
/// `Σ ∪ {EOS}`: openers below depth `n`, the closer matching the top, and
/// EOS on the empty stack.
pub fn dyck_valid(b: usize, n: usize, config: &StackConfig) -> Vec<bool> {
    let mut valid = vec![false; 2 * b + 1];
    for v in valid.iter_mut().take(b) {
        *v = config.len() < n;
    }
    if let Some(top) = config.top() {
        valid[b + top] = true;
    }
    valid[2 * b] = config.is_empty();
    valid
}

/// Dyck mechanics with a readout solved so that valid continuations beat
/// invalid ones by at least `margin` in logit space, and valid ones lie
/// within 1 of each other. The result is then checked to put more than
/// `alpha` on exactly the valid continuations of every configuration.
pub fn make_dyck_recognizer(
    b: usize,
    n: usize,
    alpha: f64,
    margin: f64,
) -> Result<(Bpda, Certificate), ConstructionError> {
    if n == 0 {
        return Err(ConstructionError::Parameter("depth must be at least 1".into()));
    }
    let outputs = 2 * b + 1;
    if !(alpha > 0.0 && alpha < 1.0 / outputs as f64) {
        return Err(ConstructionError::Parameter(format!(
            "alpha must lie in (0, 1/{outputs}), got {alpha}"
        )));
    }
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(ConstructionError::Parameter(format!("margin must be positive, got {margin}")));
    }
    let space = StackSpace::new(b, n)?;
    let configs = space.configurations(DEFAULT_CONFIG_CAP)?;
    let w = space.width();

    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let bounds = (-RECOGNIZER_BOUND, RECOGNIZER_BOUND);
    let e: Vec<Vec<Variable>> = (0..outputs)
        .map(|_| (0..w).map(|_| lp.add_var(0.0, bounds)).collect())
        .collect();
    let u: Vec<Variable> = (0..outputs).map(|_| lp.add_var(0.0, bounds)).collect();
    // logit(r) - logit(s) at a fixed χ
    let diff = |r: usize, s: usize, chi: &[f64]| -> LinearExpr {
        let mut expr = LinearExpr::empty();
        for (c, &x) in chi.iter().enumerate() {
            if x != 0.0 {
                expr.add(e[r][c], x);
                expr.add(e[s][c], -x);
            }
        }
        expr.add(u[r], 1.0);
        expr.add(u[s], -1.0);
        expr
    };
    for config in &configs {
        let chi = space.chi_f64(config);
        let valid = dyck_valid(b, n, config);
        for r in (0..outputs).filter(|&r| valid[r]) {
            for (s, &ok) in valid.iter().enumerate() {
                if !ok {
                    lp.add_constraint(diff(r, s, &chi), ComparisonOp::Ge, margin);
                } else if s > r {
                    lp.add_constraint(diff(r, s, &chi), ComparisonOp::Le, 1.0);
                    lp.add_constraint(diff(r, s, &chi), ComparisonOp::Ge, -1.0);
                }
            }
        }
    }
    let solution = lp.solve().map_err(|e| ConstructionError::Infeasible {
        margin,
        reason: e.to_string(),
    })?;
    let readout = Readout {
        e: DMatrix::from_fn(outputs, w, |r, c| *solution.var_value(e[r][c])),
        u: DVector::from_fn(outputs, |r, _| *solution.var_value(u[r])),
    };
    let (bpda, cert) = dyck_with_readout(b, n, readout)?;
    check_recognizer(&bpda, b, n, alpha)?;
    Ok((bpda, cert))
}

/// Checks that every configuration puts more than `alpha` on each valid
/// continuation and at most `alpha` on each invalid one.
pub fn check_recognizer(bpda: &Bpda, b: usize, n: usize, alpha: f64) -> Result<(), ConstructionError> {
    for config in bpda.space().configurations(DEFAULT_CONFIG_CAP)? {
        let dist = bpda.conditional_dist(&config);
        for (r, ok) in dyck_valid(b, n, &config).into_iter().enumerate() {
            if (dist[r] > alpha) != ok {
                return Err(ConstructionError::Threshold {
                    config: bpda.render_config(&config),
                    symbol: bpda.sigma().eos_symbol(r).to_string(),
                    prob: dist[r],
                    alpha,
                });
            }
        }
    }
    Ok(())
}

/// Final weight of every fixture state.
pub const FIG2_FINAL: f64 = 0.1;

/// The 3-gram PFSA over `{a, b}` whose states remember the last two
/// symbols. The drawn arc weights sum to one per state and carry no final
/// weights, so every arc is scaled by 0.9 and every state stops with
/// probability 0.1.
pub fn fixture_fig2() -> Pfsa {
    const STATES: [&str; 7] = ["ε", "a", "b", "aa", "ab", "ba", "bb"];
    // (from, symbol, drawn weight, to)
    const ARCS: [(usize, usize, f64, usize); 14] = [
        (0, 0, 0.9, 1),
        (0, 1, 0.1, 2),
        (1, 0, 0.4, 3),
        (1, 1, 0.6, 4),
        (2, 0, 0.9, 5),
        (2, 1, 0.1, 6),
        (3, 0, 0.5, 3),
        (3, 1, 0.5, 4),
        (4, 0, 0.2, 5),
        (4, 1, 0.8, 6),
        (5, 0, 0.3, 3),
        (5, 1, 0.7, 4),
        (6, 0, 0.5, 5),
        (6, 1, 0.5, 6),
    ];
    let sigma = Alphabet::from_chars("ab").expect("fixed alphabet");
    let arcs = ARCS
        .iter()
        .map(|&(from, symbol, w, to)| Arc {
            from,
            symbol,
            weight: w * (1.0 - FIG2_FINAL),
            to,
        })
        .collect();
    let mut initial = vec![0.0; STATES.len()];
    initial[0] = 1.0;
    Pfsa::new(
        sigma,
        STATES.iter().map(|s| s.to_string()).collect(),
        arcs,
        initial,
        vec![FIG2_FINAL; STATES.len()],
    )
    .expect("fixture is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifts_move_blocks() {
        let space = StackSpace::new(2, 3).unwrap();
        let c = StackConfig::new(vec![0, 1]);
        let down = shift_down(&space).apply(&space.chi_f64(&c));
        // (ι, a, b) → (a, b, ι): χ = [ι, b, a]
        let want = space.chi_slots(&crate::stack::SlotVector(vec![Some(0), Some(1), None]));
        assert_eq!(down.iter().map(|&x| x as u8).collect::<Vec<_>>(), want);
        let up = shift_up(&space).apply(&space.chi_f64(&c));
        let want = space.chi_slots(&crate::stack::SlotVector(vec![None, None, Some(0)]));
        assert_eq!(up.iter().map(|&x| x as u8).collect::<Vec<_>>(), want);
    }

    #[test]
    fn dyck_valid_sets() {
        let empty = dyck_valid(2, 2, &StackConfig::empty());
        assert_eq!(empty, vec![true, true, false, false, true]);
        let full = dyck_valid(2, 2, &StackConfig::new(vec![0, 1]));
        assert_eq!(full, vec![false, false, false, true, false]);
    }

    #[test]
    fn fixture_weights() {
        let f = fixture_fig2();
        assert_eq!(f.arcs_from(0, 0), &[(1, 0.9 * 0.9)]);
        assert!((f.stringsum(&[0]) - 0.081).abs() < 1e-15);
    }

    #[test]
    fn given_readout_shape_is_checked() {
        let sigma = Alphabet::from_chars("ab").unwrap();
        let bad = ReadoutSource::Given(Readout {
            e: DMatrix::zeros(3, 3),
            u: DVector::zeros(3),
        });
        assert_eq!(
            make_ngram(3, &sigma, &bad).unwrap_err(),
            ConstructionError::ReadoutShape { rows: 3, cols: 4 }
        );
        assert!(make_ngram(1, &sigma, &ReadoutSource::Seed(0)).is_err());
    }
}
