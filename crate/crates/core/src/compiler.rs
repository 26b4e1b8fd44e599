//! Certified BPDA → Heaviside Elman RNN LM of hidden size `K·m·G`.
//!
//! The hidden state holds `K` copies of χ, one per class. Reading `y` runs
//! every class map on the (single) active copy, then the input column masks
//! all copies but `κ(y)` with `-1` and applies the overlay of `y` there.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bpda::Bpda;
use crate::format;
use crate::oracle::{self, OracleError};
use crate::rnn::{self, Activation, ElmanRnn, RnnLm};
use crate::stack::StackSpace;
use crate::structure::{verify_certificate, Certificate, SlotAction, Violation, READOUT_TOLERANCE};

const INTEGRAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("class {class} entry ({row}, {col}) of M is {value}, not an integer")]
    NotIntegralMatrix {
        class: usize,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("class {class} entry {row} of v is {value}, not an integer")]
    NotIntegralOffset { class: usize, row: usize, value: f64 },
    #[error("certificate rejected: {}", .0.first().map(ToString::to_string).unwrap_or_default())]
    Rejected(Vec<Violation>),
}

/// Rounds every `Mᵏ` and `vᵏ` entry, refusing entries more than `1e-9`
/// away from an integer. Classes in errors are 1-based.
pub fn round_certificate(cert: &Certificate) -> Result<Certificate, CompileError> {
    let mut out = cert.clone();
    for (k, map) in out.maps.iter_mut().enumerate() {
        for ((row, col), x) in map
            .matrix
            .iter_mut()
            .enumerate()
            .map(|(i, x)| ((i % cert.maps[k].matrix.nrows(), i / cert.maps[k].matrix.nrows()), x))
        {
            let r = x.round();
            if (*x - r).abs() > INTEGRAL_TOLERANCE {
                return Err(CompileError::NotIntegralMatrix {
                    class: k + 1,
                    row,
                    col,
                    value: *x,
                });
            }
            *x = r;
        }
        for (row, x) in map.offset.iter_mut().enumerate() {
            let r = x.round();
            if (*x - r).abs() > INTEGRAL_TOLERANCE {
                return Err(CompileError::NotIntegralOffset {
                    class: k + 1,
                    row,
                    value: *x,
                });
            }
            *x = r;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompilationReport {
    /// `K`.
    pub classes: usize,
    /// `m`.
    pub bound: usize,
    /// `G`.
    pub bits: usize,
    /// `D = K·m·G`.
    pub hidden_size: usize,
    /// `R = |Σ|`.
    pub input_size: usize,
    /// Input symbols of each class.
    pub class_symbols: Vec<Vec<String>>,
    pub configs_checked: usize,
    /// SHA-256 of the certificate file.
    pub certificate_sha256: String,
}

impl fmt::Display for CompilationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "K: {}", self.classes)?;
        writeln!(f, "m: {}", self.bound)?;
        writeln!(f, "G: {}", self.bits)?;
        writeln!(f, "D: {}", self.hidden_size)?;
        writeln!(f, "R: {}", self.input_size)?;
        let w = self.bound * self.bits;
        for (k, symbols) in self.class_symbols.iter().enumerate() {
            writeln!(
                f,
                "copy {}: rows {}..{} symbols {}",
                k + 1,
                k * w,
                (k + 1) * w,
                symbols.join(" ")
            )?;
        }
        writeln!(f, "configurations checked: {}", self.configs_checked)?;
        writeln!(f, "certificate sha256: {}", self.certificate_sha256)
    }
}

#[derive(Debug, Clone)]
pub struct Compiled {
    pub lm: RnnLm,
    pub report: CompilationReport,
}

/// Input column block for one copy: per slot 0 (keep), `2·Bin(s(y)) - 1`
/// (write) or `-1` (clear), laid out like χ (slot `m` first).
fn overlay_column(space: &StackSpace, cert: &Certificate, symbol: usize) -> Vec<f64> {
    let (m, g) = (space.bound(), space.bits());
    let overlay = &cert.overlays[symbol];
    let code = overlay.symbol + 1;
    let mut z = vec![0.0; m * g];
    for j in 1..=m {
        let block = m - j;
        for bit in 0..g {
            let value = match overlay.actions[j - 1] {
                SlotAction::Keep => 0.0,
                SlotAction::Write => 2.0 * ((code >> (g - 1 - bit)) & 1) as f64 - 1.0,
                SlotAction::Clear => -1.0,
            };
            z[block * g + bit] = value;
        }
    }
    z
}

/// Builds the network after rounding and re-verifying the certificate.
pub fn compile(bpda: &Bpda, cert: &Certificate) -> Result<Compiled, CompileError> {
    let cert = round_certificate(cert)?;
    let report = verify_certificate(bpda, &cert, READOUT_TOLERANCE);
    if !report.passed() {
        return Err(CompileError::Rejected(report.violations));
    }
    let space = bpda.space();
    let sigma = bpda.sigma();
    let w = space.width();
    let k_count = cert.classes();
    let d = k_count * w;

    let mut u = DMatrix::zeros(d, d);
    let mut b = DVector::zeros(d);
    for (k, map) in cert.maps.iter().enumerate() {
        for copy in 0..k_count {
            u.view_mut((k * w, copy * w), (w, w)).copy_from(&map.matrix);
        }
        b.rows_mut(k * w, w).copy_from(&map.offset);
    }
    let mut v = DMatrix::from_element(d, sigma.len(), -1.0);
    for y in 0..sigma.len() {
        let k = cert.kappa[y];
        let z = overlay_column(space, &cert, y);
        v.view_mut((k * w, y), (w, 1))
            .copy_from(&DVector::from_vec(z));
    }
    let mut eta = DVector::zeros(d);
    let start = bpda
        .initial_config()
        .expect("verified automata are deterministic");
    eta.rows_mut(0, w)
        .copy_from(&DVector::from_vec(space.chi_f64(start)));
    let mut e = DMatrix::zeros(sigma.len() + 1, d);
    for copy in 0..k_count {
        e.view_mut((0, copy * w), (sigma.len() + 1, w))
            .copy_from(&cert.readout.e);
    }
    let rnn = ElmanRnn::new(u, v, b, eta, Activation::Heaviside).expect("block shapes agree");
    let lm = RnnLm::new(sigma.clone(), rnn, e, cert.readout.u.clone()).expect("readout shapes agree");

    let digest = Sha256::digest(format::certificate_json(&cert, bpda).as_bytes());
    let mut class_symbols = vec![Vec::new(); k_count];
    for (y, &k) in cert.kappa.iter().enumerate() {
        class_symbols[k].push(sigma.symbol(y).to_string());
    }
    Ok(Compiled {
        lm,
        report: CompilationReport {
            classes: k_count,
            bound: space.bound(),
            bits: space.bits(),
            hidden_size: d,
            input_size: sigma.len(),
            class_symbols,
            configs_checked: report.configs_checked,
            certificate_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CopyState {
    /// Copy `k` (0-based) is the only non-zero one.
    Active(usize),
    /// Every copy is zero.
    Empty,
    /// The listed copies are all non-zero.
    Violation(Vec<usize>),
}

/// Which of the `K` copies of width `mG` in `h` are non-zero.
pub fn check_single_copy(h: &[f64], classes: usize, bound: usize, bits: usize) -> CopyState {
    let w = bound * bits;
    assert_eq!(h.len(), classes * w, "hidden size is not K·m·G");
    let nonzero: Vec<usize> = (0..classes)
        .filter(|&k| h[k * w..(k + 1) * w].iter().any(|&x| x != 0.0))
        .collect();
    match nonzero.as_slice() {
        [] => CopyState::Empty,
        [k] => CopyState::Active(*k),
        _ => CopyState::Violation(nonzero),
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error(transparent)]
    Budget(#[from] OracleError),
    #[error("after `{string}`: the automaton has no run")]
    Unreachable { string: String },
    #[error("after `{string}`: hidden entry {entry} is {value}, not 0 or 1")]
    NotBinary { string: String, entry: usize, value: f64 },
    #[error("after `{string}`: copies {copies:?} are all non-zero")]
    Copies { string: String, copies: Vec<usize> },
    #[error("after `{string}`: active copy {got:?} is not χ of stack {stack}")]
    Mismatch {
        string: String,
        stack: String,
        got: Vec<u8>,
    },
    #[error("after `{string}`: precision {bits} bits exceeds 1")]
    Precision { string: String, bits: u32 },
}

/// Summary of an exhaustive hidden-state check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateCheck {
    pub prefixes: usize,
    pub max_precision: u32,
}

/// Checks every string up to `max_len`: the hidden state is `{0,1}`-valued,
/// has at most one non-zero copy, that copy is χ(σ(y⃗)) (or σ(y⃗) is empty
/// when no copy is active), and the precision is at most one bit.
pub fn check_states(
    bpda: &Bpda,
    lm: &RnnLm,
    classes: usize,
    max_len: usize,
) -> Result<StateCheck, StateError> {
    let sigma = bpda.sigma();
    oracle::check_budget(sigma.len(), max_len)?;
    let space = bpda.space();
    let (m, g) = (space.bound(), space.bits());
    let rnn = lm.rnn();
    let start = bpda
        .initial_config()
        .ok_or(StateError::Unreachable { string: "ε".into() })?
        .clone();
    let mut check = StateCheck {
        prefixes: 0,
        max_precision: 0,
    };
    let mut stack = vec![(Vec::<usize>::new(), rnn.eta().clone(), start)];
    while let Some((string, h, config)) = stack.pop() {
        let name = || sigma.render(&string);
        check.prefixes += 1;
        if let Some((entry, &value)) = h.iter().enumerate().find(|(_, &x)| x != 0.0 && x != 1.0) {
            return Err(StateError::NotBinary {
                string: name(),
                entry,
                value,
            });
        }
        let bits = rnn::precision(&h);
        if bits > 1 {
            return Err(StateError::Precision { string: name(), bits });
        }
        check.max_precision = check.max_precision.max(bits);
        let chi = space.chi(&config);
        let active: Vec<u8> = match check_single_copy(h.as_slice(), classes, m, g) {
            CopyState::Active(k) => h.rows(k * m * g, m * g).iter().map(|&x| x as u8).collect(),
            CopyState::Empty => vec![0; m * g],
            CopyState::Violation(copies) => return Err(StateError::Copies { string: name(), copies }),
        };
        if active != chi {
            return Err(StateError::Mismatch {
                string: name(),
                stack: bpda.render_config(&config),
                got: active,
            });
        }
        if string.len() == max_len {
            continue;
        }
        for y in (0..sigma.len()).rev() {
            let mut next = string.clone();
            next.push(y);
            let Ok(next_config) = bpda.next_stack(&config, y) else {
                return Err(StateError::Unreachable {
                    string: sigma.render(&next),
                });
            };
            stack.push((next, rnn.step(&h, y), next_config));
        }
    }
    Ok(check)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::{AffineMap, Overlay, Readout};

    #[test]
    fn single_copy_cases() {
        assert_eq!(check_single_copy(&[0.0, 0.0, 1.0, 0.0], 2, 1, 2), CopyState::Active(1));
        assert_eq!(check_single_copy(&[0.0; 4], 2, 1, 2), CopyState::Empty);
        assert_eq!(
            check_single_copy(&[1.0, 0.0, 0.0, 1.0], 2, 1, 2),
            CopyState::Violation(vec![0, 1])
        );
    }

    #[test]
    fn rounding_refuses_fractions() {
        let cert = Certificate {
            kappa: vec![0],
            maps: vec![AffineMap {
                matrix: DMatrix::from_element(1, 1, 1.0 + 1e-12),
                offset: DVector::from_element(1, 0.5),
            }],
            overlays: vec![Overlay::keep_all(0, 1)],
            readout: Readout {
                e: DMatrix::zeros(2, 1),
                u: DVector::zeros(2),
            },
        };
        assert_eq!(
            round_certificate(&cert),
            Err(CompileError::NotIntegralOffset {
                class: 1,
                row: 0,
                value: 0.5
            })
        );
        let mut ok = cert.clone();
        ok.maps[0].offset[0] = -2.0;
        assert_eq!(round_certificate(&ok).unwrap().maps[0].matrix[(0, 0)], 1.0);
    }

    #[test]
    fn overlay_column_layout() {
        // m = 2, |Γ| = 2 (G = 2); write symbol 1 (code 2 = 10) into slot 2,
        // clear slot 1
        let space = StackSpace::new(2, 2).unwrap();
        let cert = Certificate {
            kappa: vec![0],
            maps: vec![AffineMap::identity(4)],
            overlays: vec![Overlay {
                symbol: 1,
                actions: vec![SlotAction::Clear, SlotAction::Write],
            }],
            readout: Readout {
                e: DMatrix::zeros(2, 4),
                u: DVector::zeros(2),
            },
        };
        assert_eq!(overlay_column(&space, &cert, 0), vec![1.0, -1.0, -1.0, -1.0]);
    }
}
