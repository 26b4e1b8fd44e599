//! Certificates of compilability and the analyses that build and check them.
//!
//! A certificate factors the deterministic transition function as
//! `φ(γ, y) = α(ζ_{κ(y)}(γ), y)`: a per-class affine map of χ followed by a
//! per-symbol overlay that keeps, writes or clears each slot. Its readout
//! gives the conditionals as `softmax(E′χ(γ) + u′)`.

use std::collections::HashMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::alphabet::{Alphabet, PLACEHOLDER};
use crate::bpda::Bpda;
use crate::linalg;
use crate::lm::softmax;
use crate::stack::{SlotVector, StackConfig, StackError, StackSpace, DEFAULT_CONFIG_CAP};

/// Tolerance on probabilities and logits across the softmax layer.
pub const READOUT_TOLERANCE: f64 = 1e-9;

/// Largest least-squares residual accepted for a stack-affine fit.
pub const AFFINE_TOLERANCE: f64 = 1e-6;

const INTEGRAL_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SlotAction {
    Keep,
    Write,
    Clear,
}

/// The Σ-determined part of a symbol's update.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Overlay {
    /// `s(y)`, the stack symbol written to `Write` slots.
    pub symbol: usize,
    /// `actions[j-1]` acts on slot `j`.
    pub actions: Vec<SlotAction>,
}

impl Overlay {
    pub fn keep_all(symbol: usize, bound: usize) -> Self {
        Self {
            symbol,
            actions: vec![SlotAction::Keep; bound],
        }
    }

    pub fn apply(&self, zeta: &SlotVector) -> SlotVector {
        SlotVector(
            zeta.slots()
                .iter()
                .zip(&self.actions)
                .map(|(&slot, action)| match action {
                    SlotAction::Keep => slot,
                    SlotAction::Write => Some(self.symbol),
                    SlotAction::Clear => None,
                })
                .collect(),
        )
    }

    /// 1-based slot indices carrying `action`.
    pub fn slots_with(&self, action: SlotAction) -> Vec<usize> {
        (1..=self.actions.len())
            .filter(|&j| self.actions[j - 1] == action)
            .collect()
    }
}

/// `χ ↦ Mχ + v`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineMap {
    pub fn identity(width: usize) -> Self {
        Self {
            matrix: DMatrix::identity(width, width),
            offset: DVector::zeros(width),
        }
    }

    pub fn apply(&self, chi: &[f64]) -> DVector<f64> {
        &self.matrix * DVector::from_column_slice(chi) + &self.offset
    }
}

/// Output layer `(E′, u′)` over `Σ ∪ {EOS}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Readout {
    pub e: DMatrix<f64>,
    pub u: DVector<f64>,
}

impl Readout {
    pub fn logits(&self, chi: &[f64]) -> Vec<f64> {
        (&self.e * DVector::from_column_slice(chi) + &self.u)
            .iter()
            .copied()
            .collect()
    }

    pub fn dist(&self, chi: &[f64]) -> Vec<f64> {
        softmax(&self.logits(chi))
    }
}

/// Classes are 0-based here and 1-based in files and reports.
#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    /// κ(y) per input symbol.
    pub kappa: Vec<usize>,
    /// `(Mᵏ, vᵏ)` per class.
    pub maps: Vec<AffineMap>,
    /// Overlay per input symbol.
    pub overlays: Vec<Overlay>,
    pub readout: Readout,
}

impl Certificate {
    /// `K`.
    pub fn classes(&self) -> usize {
        self.maps.len()
    }

    /// `K·m·G`.
    pub fn hidden_size(&self, space: &StackSpace) -> usize {
        self.classes() * space.width()
    }

    /// `ζ_{κ(y)}` followed by the overlay of `y`, on exact bits; `None` if
    /// the affine map leaves `{0,1}` or produces an invalid code.
    pub fn predict(&self, space: &StackSpace, config: &StackConfig, symbol: usize) -> Option<SlotVector> {
        let zeta = class_image(space, &self.maps[self.kappa[symbol]], config).ok()?;
        Some(self.overlays[symbol].apply(&zeta))
    }
}

fn class_image(
    space: &StackSpace,
    map: &AffineMap,
    config: &StackConfig,
) -> Result<SlotVector, ImageError> {
    let out = map.apply(&space.chi_f64(config));
    let mut bits = Vec::with_capacity(out.len());
    for (i, &x) in out.iter().enumerate() {
        let r = x.round();
        if (x - r).abs() > INTEGRAL_TOLERANCE || !(r == 0.0 || r == 1.0) {
            return Err(ImageError::NotBinary { entry: i, value: x });
        }
        bits.push(r as u8);
    }
    space.decode(&bits).ok_or(ImageError::InvalidCode)
}

enum ImageError {
    NotBinary { entry: usize, value: f64 },
    InvalidCode,
}

/// Renders padded slots bottom to top, `ι` for empty slots.
pub fn render_slots(gamma: &Alphabet, slots: &SlotVector) -> String {
    slots
        .slots()
        .iter()
        .map(|s| s.map_or(PLACEHOLDER, |s| gamma.symbol(s)))
        .collect::<Vec<_>>()
        .join("|")
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NotDeterministic,
    Enumeration(String),
    Shape(String),
    ClassOutOfRange { symbol: String, class: usize },
    EmptyClass(usize),
    /// `Mᵏχ(γ) + vᵏ` has an entry outside `{0,1}`.
    NotBinary {
        config: String,
        class: usize,
        entry: usize,
        value: f64,
    },
    /// `Mᵏχ(γ) + vᵏ` is binary but encodes no stack symbol in some slot.
    InvalidCode { config: String, class: usize },
    /// `φ(γ, y)` is undefined.
    Dead { config: String, symbol: String },
    /// `α(ζ(γ), y) ≠ φ(γ, y)`.
    Overlay {
        config: String,
        symbol: String,
        expected: String,
        got: String,
    },
    /// `softmax(E′χ(γ) + u′)` differs from `p(· | γ)`.
    Readout {
        config: String,
        symbol: String,
        expected: f64,
        got: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NotDeterministic => write!(f, "automaton is not deterministic"),
            Violation::Enumeration(e) => write!(f, "cannot enumerate configurations: {e}"),
            Violation::Shape(s) => write!(f, "malformed certificate: {s}"),
            Violation::ClassOutOfRange { symbol, class } => {
                write!(f, "symbol {symbol} assigned to missing class {}", class + 1)
            }
            Violation::EmptyClass(k) => write!(f, "class {} has no symbols", k + 1),
            Violation::NotBinary {
                config,
                class,
                entry,
                value,
            } => write!(
                f,
                "class {} map at stack {config}: entry {entry} is {value}, not 0 or 1",
                class + 1
            ),
            Violation::InvalidCode { config, class } => write!(
                f,
                "class {} map at stack {config}: output is not a stack encoding",
                class + 1
            ),
            Violation::Dead { config, symbol } => {
                write!(f, "no transition from stack {config} on {symbol}")
            }
            Violation::Overlay {
                config,
                symbol,
                expected,
                got,
            } => write!(
                f,
                "stack {config} on {symbol}: automaton goes to {expected}, certificate to {got}"
            ),
            Violation::Readout {
                config,
                symbol,
                expected,
                got,
            } => write!(
                f,
                "stack {config}: p({symbol}) is {expected} but the readout gives {got}"
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub configs_checked: usize,
    pub violations: Vec<Violation>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn check_shapes(bpda: &Bpda, cert: &Certificate) -> Vec<Violation> {
    let space = bpda.space();
    let (n_sigma, w, m) = (bpda.sigma().len(), space.width(), space.bound());
    let mut out = Vec::new();
    let mut shape = |s: String| out.push(Violation::Shape(s));
    if cert.maps.is_empty() {
        shape("no classes".into());
    }
    if cert.kappa.len() != n_sigma {
        shape(format!("kappa has {} entries for {n_sigma} symbols", cert.kappa.len()));
    }
    if cert.overlays.len() != n_sigma {
        shape(format!("overlay has {} entries for {n_sigma} symbols", cert.overlays.len()));
    }
    for (k, map) in cert.maps.iter().enumerate() {
        if map.matrix.shape() != (w, w) || map.offset.len() != w {
            shape(format!("class {} map is not {w}x{w} with a length-{w} offset", k + 1));
        }
    }
    for (y, o) in cert.overlays.iter().enumerate() {
        if o.actions.len() != m {
            shape(format!("overlay of symbol {y} has {} slots, expected {m}", o.actions.len()));
        }
        if o.symbol >= bpda.gamma().len() {
            shape(format!("overlay of symbol {y} writes an unknown stack symbol"));
        }
    }
    let rows = n_sigma + 1;
    if cert.readout.e.shape() != (rows, w) || cert.readout.u.len() != rows {
        shape(format!("readout is not {rows}x{w} with a length-{rows} bias"));
    }
    out
}

/// Checks every hypothesis of the compilation theorem on every reachable
/// configuration: (a) each class map sends χ(γ) to a valid binary stack
/// encoding, (b) κ is a partition into non-empty classes, (c) the overlay
/// applied to the class map reproduces `φ(γ, y)`, and (d) the readout
/// reproduces `p(· | γ)` within `tol`.
pub fn verify_certificate(bpda: &Bpda, cert: &Certificate, tol: f64) -> VerifyReport {
    let fail = |v| VerifyReport {
        configs_checked: 0,
        violations: vec![v],
    };
    if !bpda.is_deterministic() {
        return fail(Violation::NotDeterministic);
    }
    let shapes = check_shapes(bpda, cert);
    if !shapes.is_empty() {
        return VerifyReport {
            configs_checked: 0,
            violations: shapes,
        };
    }
    let configs = match bpda.reachable_configs(DEFAULT_CONFIG_CAP) {
        Ok(c) => c,
        Err(e) => return fail(Violation::Enumeration(e.to_string())),
    };
    let (sigma, gamma, space) = (bpda.sigma(), bpda.gamma(), bpda.space());
    let mut violations = Vec::new();

    // (b)
    let k_count = cert.classes();
    for (y, &k) in cert.kappa.iter().enumerate() {
        if k >= k_count {
            violations.push(Violation::ClassOutOfRange {
                symbol: sigma.symbol(y).to_string(),
                class: k,
            });
        }
    }
    for k in 0..k_count {
        if !cert.kappa.contains(&k) {
            violations.push(Violation::EmptyClass(k));
        }
    }
    if !violations.is_empty() {
        return VerifyReport {
            configs_checked: 0,
            violations,
        };
    }

    for config in &configs {
        let name = bpda.render_config(config);
        // (a)
        let images: Vec<Option<SlotVector>> = cert
            .maps
            .iter()
            .enumerate()
            .map(|(k, map)| match class_image(space, map, config) {
                Ok(s) => Some(s),
                Err(ImageError::NotBinary { entry, value }) => {
                    violations.push(Violation::NotBinary {
                        config: name.clone(),
                        class: k,
                        entry,
                        value,
                    });
                    None
                }
                Err(ImageError::InvalidCode) => {
                    violations.push(Violation::InvalidCode {
                        config: name.clone(),
                        class: k,
                    });
                    None
                }
            })
            .collect();
        // (c)
        for y in 0..sigma.len() {
            let symbol = sigma.symbol(y).to_string();
            let Ok(next) = bpda.next_stack(config, y) else {
                violations.push(Violation::Dead {
                    config: name.clone(),
                    symbol,
                });
                continue;
            };
            let Some(zeta) = &images[cert.kappa[y]] else {
                continue;
            };
            let got = cert.overlays[y].apply(zeta);
            if got != space.slots(&next) {
                violations.push(Violation::Overlay {
                    config: name.clone(),
                    symbol,
                    expected: render_slots(gamma, &space.slots(&next)),
                    got: render_slots(gamma, &got),
                });
            }
        }
        // (d)
        let want = bpda.conditional_dist(config);
        let have = cert.readout.dist(&space.chi_f64(config));
        let worst = (0..want.len())
            .max_by(|&a, &b| {
                (want[a] - have[a])
                    .abs()
                    .total_cmp(&(want[b] - have[b]).abs())
            })
            .expect("distributions are non-empty");
        let gap = (want[worst] - have[worst]).abs();
        if gap.is_nan() || gap > tol {
            violations.push(Violation::Readout {
                config: name,
                symbol: sigma.eos_symbol(worst).to_string(),
                expected: want[worst],
                got: have[worst],
            });
        }
    }
    VerifyReport {
        configs_checked: configs.len(),
        violations,
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum AffineError {
    #[error("empty stack map")]
    Empty,
    #[error("no affine law fits the stack map; worst residual {residual} at input row {row}")]
    Infeasible { row: usize, residual: f64 },
}

fn design(space: &StackSpace, inputs: &[&StackConfig]) -> DMatrix<f64> {
    let w = space.width();
    DMatrix::from_fn(inputs.len(), w + 1, |i, j| {
        if j == w {
            1.0
        } else {
            space.chi(inputs[i])[j] as f64
        }
    })
}

/// Largest absolute residual per row of `x w - y`.
fn row_residuals(x: &DMatrix<f64>, w: &DMatrix<f64>, y: &DMatrix<f64>) -> Vec<f64> {
    let r = x * w - y;
    r.row_iter()
        .map(|row| row.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .collect()
}

fn worst(residuals: &[f64]) -> (usize, f64) {
    residuals
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0, 0.0))
}

/// Finds `(M, v)` with `χ(out) = Mχ(in) + v` on every row of `table`.
///
/// The least-squares fit must have residual at most `1e-6` and its rounding
/// must reproduce every row exactly. When the minimum-norm solution does not
/// round (duplicate columns split their weight), a basic solution on a
/// greedily chosen set of independent columns is tried.
pub fn solve_stack_affine(
    space: &StackSpace,
    table: &[(StackConfig, SlotVector)],
) -> Result<AffineMap, AffineError> {
    if table.is_empty() {
        return Err(AffineError::Empty);
    }
    let w = space.width();
    let inputs: Vec<&StackConfig> = table.iter().map(|(c, _)| c).collect();
    let x = design(space, &inputs);
    let y = DMatrix::from_fn(table.len(), w, |i, j| space.chi_slots(&table[i].1)[j] as f64);

    let min_norm = linalg::lstsq(&x, &y);
    let (row, residual) = worst(&row_residuals(&x, &min_norm, &y));
    if residual > AFFINE_TOLERANCE {
        return Err(AffineError::Infeasible { row, residual });
    }
    let exact = |sol: &DMatrix<f64>| {
        let rounded = sol.map(f64::round);
        (x.clone() * &rounded == y).then_some(rounded)
    };
    let rounded = exact(&min_norm).or_else(|| {
        let cols = linalg::independent_columns(&x);
        let sub = linalg::lstsq(&x.select_columns(&cols), &y);
        let mut basic = DMatrix::zeros(w + 1, w);
        for (i, &c) in cols.iter().enumerate() {
            basic.set_row(c, &sub.row(i));
        }
        exact(&basic)
    });
    match rounded {
        Some(sol) => Ok(AffineMap {
            matrix: sol.rows(0, w).transpose(),
            offset: sol.row(w).transpose(),
        }),
        None => {
            let (row, residual) = worst(&row_residuals(&x, &min_norm.map(f64::round), &y));
            Err(AffineError::Infeasible { row, residual })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum StructureError {
    #[error("automaton is not deterministic")]
    NotDeterministic,
    #[error(transparent)]
    Stack(#[from] StackError),
    #[error("p({symbol} | {config}) is zero; softmax conditionals are strictly positive")]
    NotFullSupport { config: String, symbol: String },
    #[error("conditionals are not softmax-affine in the stack vector: residual {residual} at stack {config}")]
    NotRepresentable { config: String, residual: f64 },
}

/// A least-squares readout with its worst centered-logit residual.
#[derive(Clone, Debug, PartialEq)]
pub struct ReadoutFit {
    pub readout: Readout,
    pub max_residual: f64,
    pub worst_config: StackConfig,
}

/// Reachable configurations and their mean-centered log-conditionals.
fn centered_logits(bpda: &Bpda) -> Result<(Vec<StackConfig>, DMatrix<f64>), StructureError> {
    if !bpda.is_deterministic() {
        return Err(StructureError::NotDeterministic);
    }
    let configs = bpda.reachable_configs(DEFAULT_CONFIG_CAP)?;
    let cols = bpda.sigma().len() + 1;
    let mut t = DMatrix::zeros(configs.len(), cols);
    for (i, config) in configs.iter().enumerate() {
        let dist = bpda.conditional_dist(config);
        if let Some(y) = dist.iter().position(|&p| p <= 0.0) {
            return Err(StructureError::NotFullSupport {
                config: bpda.render_config(config),
                symbol: bpda.sigma().eos_symbol(y).to_string(),
            });
        }
        let logs: Vec<f64> = dist.iter().map(|p| p.ln()).collect();
        let mean = logs.iter().sum::<f64>() / cols as f64;
        for (j, l) in logs.iter().enumerate() {
            t[(i, j)] = l - mean;
        }
    }
    Ok((configs, t))
}

/// Least-squares fit of the centered log-conditionals against `[χ 1]`.
pub fn fit_readout(bpda: &Bpda) -> Result<ReadoutFit, StructureError> {
    let (configs, t) = centered_logits(bpda)?;
    let space = bpda.space();
    let w = space.width();
    let x = design(space, &configs.iter().collect::<Vec<_>>());
    let sol = linalg::lstsq(&x, &t);
    let (row, max_residual) = worst(&row_residuals(&x, &sol, &t));
    Ok(ReadoutFit {
        readout: Readout {
            e: sol.rows(0, w).transpose(),
            u: sol.row(w).transpose(),
        },
        max_residual,
        worst_config: configs[row].clone(),
    })
}

/// A readout `(E′, u′)` reproducing every conditional, if one exists
/// within `tol` on the centered logits.
pub fn check_representation_compatible(bpda: &Bpda, tol: f64) -> Result<ReadoutFit, StructureError> {
    let fit = fit_readout(bpda)?;
    if fit.max_residual > tol {
        return Err(StructureError::NotRepresentable {
            config: bpda.render_config(&fit.worst_config),
            residual: fit.max_residual,
        });
    }
    Ok(fit)
}

/// Numerical rank of the centered log-conditional matrix, one row per
/// reachable configuration. A representation-compatible automaton has rank
/// at most `mG + 1`.
pub fn logit_affine_rank(bpda: &Bpda) -> Result<usize, StructureError> {
    let (_, t) = centered_logits(bpda)?;
    Ok(linalg::numerical_rank(&t))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InferStage {
    Overlay = 1,
    Strip = 2,
    Partition = 3,
    StackAffine = 4,
    Readout = 5,
    Verify = 6,
}

impl fmt::Display for InferStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            InferStage::Overlay => "overlay",
            InferStage::Strip => "strip",
            InferStage::Partition => "partition",
            InferStage::StackAffine => "stack-affine",
            InferStage::Readout => "readout",
            InferStage::Verify => "verify",
        };
        write!(f, "stage {} ({name})", *self as u8)
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
#[error("{stage}: {reason}")]
pub struct InferError {
    pub stage: InferStage,
    pub reason: String,
}

fn infer_err(stage: InferStage, reason: impl fmt::Display) -> InferError {
    InferError {
        stage,
        reason: reason.to_string(),
    }
}

/// Best-effort search for a certificate. Failure does not show that the
/// automaton has none.
pub fn infer_certificate(bpda: &Bpda) -> Result<Certificate, InferError> {
    if !bpda.is_deterministic() {
        return Err(infer_err(InferStage::Overlay, "automaton is not deterministic"));
    }
    let configs = bpda
        .reachable_configs(DEFAULT_CONFIG_CAP)
        .map_err(|e| infer_err(InferStage::Overlay, e))?;
    let (sigma, space) = (bpda.sigma(), bpda.space());
    let m = space.bound();

    // (1) per-slot pattern of φ(·, y)
    let mut targets: Vec<Vec<SlotVector>> = Vec::with_capacity(sigma.len());
    let mut overlays = Vec::with_capacity(sigma.len());
    for y in 0..sigma.len() {
        let mut rows = Vec::with_capacity(configs.len());
        for config in &configs {
            let next = bpda.next_stack(config, y).map_err(|e| infer_err(InferStage::Overlay, e))?;
            rows.push(space.slots(&next));
        }
        let mut written: Option<usize> = None;
        let mut actions = Vec::with_capacity(m);
        for j in 0..m {
            let first = rows[0].slots()[j];
            let constant = rows.iter().all(|r| r.slots()[j] == first);
            actions.push(match (constant, first) {
                (true, None) => SlotAction::Clear,
                (true, Some(s)) if written.is_none_or(|w| w == s) => {
                    written = Some(s);
                    SlotAction::Write
                }
                _ => SlotAction::Keep,
            });
        }
        overlays.push(Overlay {
            symbol: written.unwrap_or(0),
            actions,
        });
        targets.push(rows);
    }

    // (2) candidate ζ tables: kept slots of φ, ι elsewhere
    let zetas: Vec<Vec<SlotVector>> = targets
        .iter()
        .zip(&overlays)
        .map(|(rows, o)| {
            rows.iter()
                .map(|r| {
                    SlotVector(
                        r.slots()
                            .iter()
                            .zip(&o.actions)
                            .map(|(&s, a)| if *a == SlotAction::Keep { s } else { None })
                            .collect(),
                    )
                })
                .collect()
        })
        .collect();

    // (3) symbols sharing a ζ table share a class
    let mut class_of: HashMap<&Vec<SlotVector>, usize> = HashMap::new();
    let mut kappa = Vec::with_capacity(sigma.len());
    let mut representatives = Vec::new();
    for (y, table) in zetas.iter().enumerate() {
        let next = class_of.len();
        let k = *class_of.entry(table).or_insert_with(|| {
            representatives.push(y);
            next
        });
        kappa.push(k);
    }

    // (4)
    let mut maps = Vec::with_capacity(representatives.len());
    for &y in &representatives {
        let table: Vec<(StackConfig, SlotVector)> =
            configs.iter().cloned().zip(zetas[y].iter().cloned()).collect();
        let map = solve_stack_affine(space, &table).map_err(|e| {
            let witness = match &e {
                AffineError::Infeasible { row, .. } => bpda.render_config(&configs[*row]),
                AffineError::Empty => String::new(),
            };
            infer_err(
                InferStage::StackAffine,
                format!("symbol {} (stack {witness}): {e}", sigma.symbol(y)),
            )
        })?;
        maps.push(map);
    }

    // (5)
    let fit = check_representation_compatible(bpda, READOUT_TOLERANCE)
        .map_err(|e| infer_err(InferStage::Readout, e))?;

    let cert = Certificate {
        kappa,
        maps,
        overlays,
        readout: fit.readout,
    };
    let report = verify_certificate(bpda, &cert, READOUT_TOLERANCE);
    if let Some(v) = report.violations.first() {
        return Err(infer_err(InferStage::Verify, v));
    }
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(slots: &[Option<usize>]) -> SlotVector {
        SlotVector(slots.to_vec())
    }

    #[test]
    fn overlay_actions() {
        let o = Overlay {
            symbol: 2,
            actions: vec![SlotAction::Clear, SlotAction::Keep, SlotAction::Write],
        };
        assert_eq!(o.apply(&sv(&[Some(0), Some(1), None])), sv(&[None, Some(1), Some(2)]));
        assert_eq!(o.slots_with(SlotAction::Write), vec![3]);
    }

    #[test]
    fn identity_map_is_recovered() {
        let space = StackSpace::new(2, 2).unwrap();
        let table: Vec<_> = space
            .configurations(100)
            .unwrap()
            .into_iter()
            .map(|c| (c.clone(), space.slots(&c)))
            .collect();
        let map = solve_stack_affine(&space, &table).unwrap();
        assert_eq!(map, AffineMap::identity(4));
    }

    #[test]
    fn shift_down_is_a_block_shift() {
        // n-gram push without the write: slot j takes slot j+1, top becomes ι
        let space = StackSpace::new(2, 2).unwrap();
        let table: Vec<_> = space
            .configurations(100)
            .unwrap()
            .into_iter()
            .map(|c| {
                let mut s = space.slots(&c).0;
                s.remove(0);
                s.push(None);
                (c, SlotVector(s))
            })
            .collect();
        assert_eq!(table.len(), 7);
        let map = solve_stack_affine(&space, &table).unwrap();
        let mut shift = DMatrix::zeros(4, 4);
        shift[(2, 0)] = 1.0;
        shift[(3, 1)] = 1.0;
        assert_eq!(map.matrix, shift);
        assert_eq!(map.offset, DVector::zeros(4));
    }

    #[test]
    fn solver_agrees_with_parallelogram_law() {
        // m = 1, |Γ| = 3: χ(c) = χ(a) + χ(b) - χ(ε), so a map is affine iff
        // its outputs obey the same law.
        let space = StackSpace::new(3, 1).unwrap();
        let configs = space.configurations(10).unwrap();
        let chi = |s: &SlotVector| -> Vec<i32> {
            space.chi_slots(s).into_iter().map(i32::from).collect()
        };
        let outs: Vec<SlotVector> = configs.iter().map(|c| space.slots(c)).collect();
        let mut accepted = 0;
        for code in 0..4usize.pow(4) {
            let pick: Vec<&SlotVector> = (0..4).map(|i| &outs[(code >> (2 * i)) & 3]).collect();
            let table: Vec<_> = configs.iter().cloned().zip(pick.iter().map(|s| (*s).clone())).collect();
            let (e, a, b, c) = (chi(pick[0]), chi(pick[1]), chi(pick[2]), chi(pick[3]));
            let affine = (0..2).all(|i| c[i] == a[i] + b[i] - e[i]);
            let solved = solve_stack_affine(&space, &table);
            assert_eq!(solved.is_ok(), affine, "map {code}");
            if let Ok(map) = solved {
                accepted += 1;
                for (cfg, out) in &table {
                    let got = map.apply(&space.chi_f64(cfg));
                    let want = space.chi_slots(out);
                    assert!(got.iter().zip(want).all(|(g, w)| *g == w as f64));
                }
            }
        }
        assert!(accepted > 0 && accepted < 256);
    }

    #[test]
    fn infer_stage_names() {
        assert_eq!(InferStage::StackAffine.to_string(), "stage 4 (stack-affine)");
    }
}
