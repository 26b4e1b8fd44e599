//! JSON model files.
//!
//! Every file is an object with a `kind` field (`bpda`, `pfsa`, `rnn` or
//! `certificate`). Unknown fields are rejected. Stacks are lists of stack
//! symbols, bottom to top. Matrices are lists of rows. Certificate classes
//! and slots are 1-based.

use std::collections::{BTreeMap, HashSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alphabet::{Alphabet, AlphabetError};
use crate::bpda::{Bpda, BpdaError};
use crate::pfsa::{Arc, Pfsa, PfsaError};
use crate::rnn::{Activation, ElmanRnn, RnnError, RnnLm};
use crate::stack::StackConfig;
use crate::structure::{AffineMap, Certificate, Overlay, Readout, SlotAction};

#[derive(Debug, Error)]
pub enum FormatError {
    /// Syntax and schema errors, with line and column.
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("expected a {expected} file, found kind `{found}`")]
    WrongKind {
        expected: &'static str,
        found: &'static str,
    },
}

fn field_err(field: impl Into<String>, message: impl ToString) -> FormatError {
    FormatError::Field {
        field: field.into(),
        message: message.to_string(),
    }
}

macro_rules! kind_tag {
    ($name:ident, $tag:literal) => {
        /// The `kind` field of a file; parses only as the literal tag.
        #[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
        pub enum $name {
            #[default]
            #[serde(rename = $tag)]
            Tag,
        }
    };
}

kind_tag!(BpdaKind, "bpda");
kind_tag!(PfsaKind, "pfsa");
kind_tag!(RnnKind, "rnn");
kind_tag!(CertificateKind, "certificate");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackWeight {
    pub stack: Vec<String>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEntry {
    pub stack: Vec<String>,
    pub symbol: String,
    pub next: Vec<String>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BpdaFile {
    #[serde(default)]
    pub kind: BpdaKind,
    pub sigma: Vec<String>,
    pub gamma: Vec<String>,
    pub m: usize,
    pub initial: Vec<StackWeight>,
    pub transitions: Vec<TransitionEntry>,
    #[serde(rename = "final")]
    pub final_weights: Vec<StackWeight>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateWeight {
    pub state: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArcEntry {
    pub state: String,
    pub symbol: String,
    pub next: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PfsaFile {
    #[serde(default)]
    pub kind: PfsaKind,
    pub sigma: Vec<String>,
    pub states: Vec<String>,
    pub initial: Vec<StateWeight>,
    pub transitions: Vec<ArcEntry>,
    #[serde(rename = "final")]
    pub final_weights: Vec<StateWeight>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlayEntry {
    pub s: String,
    pub keep: Vec<usize>,
    pub write: Vec<usize>,
    pub clear: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateFile {
    #[serde(default)]
    pub kind: CertificateKind,
    #[serde(rename = "K")]
    pub k: usize,
    pub kappa: BTreeMap<String, usize>,
    #[serde(rename = "M")]
    pub m: Vec<Vec<Vec<f64>>>,
    pub v: Vec<Vec<f64>>,
    pub overlay: BTreeMap<String, OverlayEntry>,
    #[serde(rename = "E_prime")]
    pub e_prime: Vec<Vec<f64>>,
    pub u_prime: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationName {
    Heaviside,
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RnnFile {
    #[serde(default)]
    pub kind: RnnKind,
    #[serde(rename = "D")]
    pub d: usize,
    #[serde(rename = "R")]
    pub r: usize,
    pub activation: ActivationName,
    pub sigma: Vec<String>,
    #[serde(rename = "U")]
    pub u_matrix: Vec<Vec<f64>>,
    #[serde(rename = "V")]
    pub v: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub eta: Vec<f64>,
    #[serde(rename = "E")]
    pub e: Vec<Vec<f64>>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelFile {
    Bpda(BpdaFile),
    Pfsa(PfsaFile),
    Rnn(RnnFile),
    Certificate(CertificateFile),
}

#[derive(Deserialize)]
struct KindProbe {
    kind: String,
}

impl ModelFile {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelFile::Bpda(_) => "bpda",
            ModelFile::Pfsa(_) => "pfsa",
            ModelFile::Rnn(_) => "rnn",
            ModelFile::Certificate(_) => "certificate",
        }
    }

    /// Reads the `kind` first, then parses the whole text as that kind so
    /// that errors keep their line and column.
    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let probe: KindProbe = serde_json::from_str(text)?;
        Ok(match probe.kind.as_str() {
            "bpda" => ModelFile::Bpda(serde_json::from_str(text)?),
            "pfsa" => ModelFile::Pfsa(serde_json::from_str(text)?),
            "rnn" => ModelFile::Rnn(serde_json::from_str(text)?),
            "certificate" => ModelFile::Certificate(serde_json::from_str(text)?),
            other => {
                return Err(field_err(
                    "kind",
                    format!("unknown kind `{other}`, expected bpda, pfsa, rnn or certificate"),
                ))
            }
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = match self {
            ModelFile::Bpda(f) => serde_json::to_string_pretty(f),
            ModelFile::Pfsa(f) => serde_json::to_string_pretty(f),
            ModelFile::Rnn(f) => serde_json::to_string_pretty(f),
            ModelFile::Certificate(f) => serde_json::to_string_pretty(f),
        }
        .expect("model files serialize");
        s.push('\n');
        s
    }
}

/// A parsed, validated model. Certificates stay in file form until paired
/// with their automaton.
#[derive(Debug, Clone)]
pub enum Model {
    Bpda(Bpda),
    Pfsa(Pfsa),
    Rnn(RnnLm),
    Certificate(CertificateFile),
}

pub fn parse_model(text: &str) -> Result<Model, FormatError> {
    Ok(match ModelFile::parse(text)? {
        ModelFile::Bpda(f) => Model::Bpda(bpda_from_file(&f)?),
        ModelFile::Pfsa(f) => Model::Pfsa(pfsa_from_file(&f)?),
        ModelFile::Rnn(f) => Model::Rnn(rnn_from_file(&f)?),
        ModelFile::Certificate(f) => Model::Certificate(f),
    })
}

pub fn parse_bpda(text: &str) -> Result<Bpda, FormatError> {
    match ModelFile::parse(text)? {
        ModelFile::Bpda(f) => bpda_from_file(&f),
        other => Err(FormatError::WrongKind {
            expected: "bpda",
            found: other.kind(),
        }),
    }
}

pub fn parse_certificate(text: &str, bpda: &Bpda) -> Result<Certificate, FormatError> {
    match ModelFile::parse(text)? {
        ModelFile::Certificate(f) => certificate_from_file(&f, bpda),
        other => Err(FormatError::WrongKind {
            expected: "certificate",
            found: other.kind(),
        }),
    }
}

fn alphabet(field: &str, symbols: &[String]) -> Result<Alphabet, FormatError> {
    Alphabet::new(symbols.iter().cloned()).map_err(|e| field_err(field, e))
}

fn lookup(field: &str, alphabet: &Alphabet, symbol: &str) -> Result<usize, FormatError> {
    alphabet.lookup(symbol).map_err(|e: AlphabetError| field_err(field, e))
}

fn stack(field: &str, gamma: &Alphabet, symbols: &[String]) -> Result<StackConfig, FormatError> {
    symbols
        .iter()
        .map(|s| lookup(field, gamma, s))
        .collect::<Result<Vec<_>, _>>()
        .map(StackConfig::new)
}

fn names(alphabet: &Alphabet, config: &StackConfig) -> Vec<String> {
    config
        .symbols()
        .iter()
        .map(|&s| alphabet.symbol(s).to_string())
        .collect()
}

pub fn bpda_from_file(f: &BpdaFile) -> Result<Bpda, FormatError> {
    let sigma = alphabet("sigma", &f.sigma)?;
    let gamma = alphabet("gamma", &f.gamma)?;
    let mut bpda = Bpda::new(sigma.clone(), gamma.clone(), f.m).map_err(|e| field_err("m", e))?;
    let at = |what: &str, i: usize, e: BpdaError| field_err(format!("{what}[{i}]"), e);
    for (i, e) in f.initial.iter().enumerate() {
        let c = stack(&format!("initial[{i}].stack"), &gamma, &e.stack)?;
        bpda.set_initial(c, e.weight).map_err(|err| at("initial", i, err))?;
    }
    for (i, e) in f.final_weights.iter().enumerate() {
        let c = stack(&format!("final[{i}].stack"), &gamma, &e.stack)?;
        bpda.set_final(c, e.weight).map_err(|err| at("final", i, err))?;
    }
    for (i, t) in f.transitions.iter().enumerate() {
        let from = stack(&format!("transitions[{i}].stack"), &gamma, &t.stack)?;
        let y = lookup(&format!("transitions[{i}].symbol"), &sigma, &t.symbol)?;
        let to = stack(&format!("transitions[{i}].next"), &gamma, &t.next)?;
        bpda.add_transition(from, y, to, t.weight)
            .map_err(|err| at("transitions", i, err))?;
    }
    Ok(bpda)
}

pub fn bpda_to_file(bpda: &Bpda) -> BpdaFile {
    let (sigma, gamma) = (bpda.sigma(), bpda.gamma());
    let weights = |map: &BTreeMap<StackConfig, f64>| {
        map.iter()
            .map(|(c, &w)| StackWeight {
                stack: names(gamma, c),
                weight: w,
            })
            .collect()
    };
    let transitions = bpda
        .transitions()
        .iter()
        .flat_map(|((from, y), outs)| {
            outs.iter().map(move |(to, w)| TransitionEntry {
                stack: names(gamma, from),
                symbol: sigma.symbol(*y).to_string(),
                next: names(gamma, to),
                weight: *w,
            })
        })
        .collect();
    BpdaFile {
        kind: Default::default(),
        sigma: sigma.symbols().to_vec(),
        gamma: gamma.symbols().to_vec(),
        m: bpda.bound(),
        initial: weights(bpda.initial_weights()),
        transitions,
        final_weights: weights(bpda.final_weights()),
    }
}

pub fn pfsa_from_file(f: &PfsaFile) -> Result<Pfsa, FormatError> {
    let sigma = alphabet("sigma", &f.sigma)?;
    let n = f.states.len();
    let state = |field: String, name: &str| {
        f.states
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| field_err(field, format!("unknown state `{name}`")))
    };
    let weights = |what: &str, entries: &[StateWeight]| -> Result<Vec<f64>, FormatError> {
        let mut out = vec![0.0; n];
        let mut seen = HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            let q = state(format!("{what}[{i}].state"), &e.state)?;
            if !seen.insert(q) {
                return Err(field_err(format!("{what}[{i}]"), format!("duplicate {what} weight for {}", e.state)));
            }
            out[q] = e.weight;
        }
        Ok(out)
    };
    let initial = weights("initial", &f.initial)?;
    let final_weights = weights("final", &f.final_weights)?;
    let mut arcs = Vec::with_capacity(f.transitions.len());
    for (i, t) in f.transitions.iter().enumerate() {
        arcs.push(Arc {
            from: state(format!("transitions[{i}].state"), &t.state)?,
            symbol: lookup(&format!("transitions[{i}].symbol"), &sigma, &t.symbol)?,
            weight: t.weight,
            to: state(format!("transitions[{i}].next"), &t.next)?,
        });
    }
    Pfsa::new(sigma, f.states.clone(), arcs, initial, final_weights).map_err(|e: PfsaError| field_err("transitions", e))
}

pub fn pfsa_to_file(pfsa: &Pfsa) -> PfsaFile {
    let states = pfsa.states();
    let weights = |w: &[f64]| {
        w.iter()
            .enumerate()
            .filter(|(_, &x)| x != 0.0)
            .map(|(q, &x)| StateWeight {
                state: states[q].clone(),
                weight: x,
            })
            .collect()
    };
    PfsaFile {
        kind: Default::default(),
        sigma: pfsa.sigma().symbols().to_vec(),
        states: states.to_vec(),
        initial: weights(pfsa.initial()),
        transitions: pfsa
            .arcs()
            .iter()
            .map(|a| ArcEntry {
                state: states[a.from].clone(),
                symbol: pfsa.sigma().symbol(a.symbol).to_string(),
                next: states[a.to].clone(),
                weight: a.weight,
            })
            .collect(),
        final_weights: weights(pfsa.final_weights()),
    }
}

fn matrix(field: &str, rows: &[Vec<f64>], shape: (usize, usize)) -> Result<DMatrix<f64>, FormatError> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(field_err(field, format!("expected a {}x{} matrix", shape.0, shape.1)));
    }
    Ok(DMatrix::from_fn(shape.0, shape.1, |i, j| rows[i][j]))
}

fn vector(field: &str, v: &[f64], len: usize) -> Result<DVector<f64>, FormatError> {
    if v.len() != len {
        return Err(field_err(field, format!("expected {len} entries, found {}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn rnn_from_file(f: &RnnFile) -> Result<RnnLm, FormatError> {
    let sigma = alphabet("sigma", &f.sigma)?;
    if f.r != sigma.len() {
        return Err(field_err("R", format!("one-hot inputs need R = |sigma| = {}", sigma.len())));
    }
    let out = sigma.len() + 1;
    let activation = match f.activation {
        ActivationName::Heaviside => Activation::Heaviside,
        ActivationName::Relu => Activation::Relu,
    };
    let rnn = ElmanRnn::new(
        matrix("U", &f.u_matrix, (f.d, f.d))?,
        matrix("V", &f.v, (f.d, f.r))?,
        vector("b", &f.b, f.d)?,
        vector("eta", &f.eta, f.d)?,
        activation,
    )
    .map_err(|e: RnnError| field_err("U", e))?;
    RnnLm::new(sigma, rnn, matrix("E", &f.e, (out, f.d))?, vector("u", &f.u, out)?)
        .map_err(|e| field_err("E", e))
}

pub fn rnn_to_file(lm: &RnnLm) -> RnnFile {
    use crate::lm::LanguageModel;
    let rnn = lm.rnn();
    RnnFile {
        kind: Default::default(),
        d: rnn.hidden_size(),
        r: rnn.input_size(),
        activation: match rnn.activation() {
            Activation::Heaviside => ActivationName::Heaviside,
            Activation::Relu => ActivationName::Relu,
        },
        sigma: lm.sigma().symbols().to_vec(),
        u_matrix: rows(rnn.u()),
        v: rows(rnn.v()),
        b: rnn.b().iter().copied().collect(),
        eta: rnn.eta().iter().copied().collect(),
        e: rows(lm.e()),
        u: lm.u().iter().copied().collect(),
    }
}

pub fn certificate_from_file(f: &CertificateFile, bpda: &Bpda) -> Result<Certificate, FormatError> {
    let (sigma, gamma, space) = (bpda.sigma(), bpda.gamma(), bpda.space());
    let (w, m) = (space.width(), space.bound());
    if f.k == 0 {
        return Err(field_err("K", "need at least one class"));
    }
    if f.m.len() != f.k || f.v.len() != f.k {
        return Err(field_err("M", format!("expected one matrix and one offset per class, K = {}", f.k)));
    }
    let mut kappa = vec![None; sigma.len()];
    for (name, &k) in &f.kappa {
        let y = lookup(&format!("kappa.{name}"), sigma, name)?;
        if k == 0 || k > f.k {
            return Err(field_err(format!("kappa.{name}"), format!("class {k} not in 1..={}", f.k)));
        }
        kappa[y] = Some(k - 1);
    }
    let kappa = kappa
        .into_iter()
        .enumerate()
        .map(|(y, k)| k.ok_or_else(|| field_err("kappa", format!("no class for symbol {}", sigma.symbol(y)))))
        .collect::<Result<Vec<_>, _>>()?;
    let maps = f
        .m
        .iter()
        .zip(&f.v)
        .enumerate()
        .map(|(k, (mat, off))| {
            Ok(AffineMap {
                matrix: matrix(&format!("M[{k}]"), mat, (w, w))?,
                offset: vector(&format!("v[{k}]"), off, w)?,
            })
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    let mut overlays = vec![None; sigma.len()];
    for (name, entry) in &f.overlay {
        let field = format!("overlay.{name}");
        let y = lookup(&field, sigma, name)?;
        let symbol = lookup(&format!("{field}.s"), gamma, &entry.s)?;
        let mut actions = vec![None; m];
        for (list, action) in [
            (&entry.keep, SlotAction::Keep),
            (&entry.write, SlotAction::Write),
            (&entry.clear, SlotAction::Clear),
        ] {
            for &j in list {
                if j == 0 || j > m || actions[j - 1].is_some() {
                    return Err(field_err(&field, format!("slot {j} is out of 1..={m} or listed twice")));
                }
                actions[j - 1] = Some(action);
            }
        }
        let actions = actions
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| field_err(&field, "keep, write and clear must partition the slots"))?;
        overlays[y] = Some(Overlay { symbol, actions });
    }
    let overlays = overlays
        .into_iter()
        .enumerate()
        .map(|(y, o)| o.ok_or_else(|| field_err("overlay", format!("no entry for symbol {}", sigma.symbol(y)))))
        .collect::<Result<Vec<_>, _>>()?;
    let out = sigma.len() + 1;
    Ok(Certificate {
        kappa,
        maps,
        overlays,
        readout: Readout {
            e: matrix("E_prime", &f.e_prime, (out, w))?,
            u: vector("u_prime", &f.u_prime, out)?,
        },
    })
}

pub fn certificate_to_file(cert: &Certificate, bpda: &Bpda) -> CertificateFile {
    let (sigma, gamma) = (bpda.sigma(), bpda.gamma());
    CertificateFile {
        kind: Default::default(),
        k: cert.classes(),
        kappa: cert
            .kappa
            .iter()
            .enumerate()
            .map(|(y, &k)| (sigma.symbol(y).to_string(), k + 1))
            .collect(),
        m: cert.maps.iter().map(|a| rows(&a.matrix)).collect(),
        v: cert.maps.iter().map(|a| a.offset.iter().copied().collect()).collect(),
        overlay: cert
            .overlays
            .iter()
            .enumerate()
            .map(|(y, o)| {
                (
                    sigma.symbol(y).to_string(),
                    OverlayEntry {
                        s: gamma.symbol(o.symbol).to_string(),
                        keep: o.slots_with(SlotAction::Keep),
                        write: o.slots_with(SlotAction::Write),
                        clear: o.slots_with(SlotAction::Clear),
                    },
                )
            })
            .collect(),
        e_prime: rows(&cert.readout.e),
        u_prime: cert.readout.u.iter().copied().collect(),
    }
}

pub fn bpda_json(bpda: &Bpda) -> String {
    ModelFile::Bpda(bpda_to_file(bpda)).to_json()
}

pub fn pfsa_json(pfsa: &Pfsa) -> String {
    ModelFile::Pfsa(pfsa_to_file(pfsa)).to_json()
}

pub fn rnn_json(lm: &RnnLm) -> String {
    ModelFile::Rnn(rnn_to_file(lm)).to_json()
}

pub fn certificate_json(cert: &Certificate, bpda: &Bpda) -> String {
    ModelFile::Certificate(certificate_to_file(cert, bpda)).to_json()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"{
  "kind": "bpda",
  "sigma": ["a"],
  "gamma": ["x"],
  "m": 1,
  "initial": [{"stack": [], "weight": 1.0}],
  "transitions": [
    {"stack": [], "symbol": "a", "next": ["x"], "weight": 0.5},
    {"stack": ["x"], "symbol": "a", "next": ["x"], "weight": 0.5}
  ],
  "final": [{"stack": [], "weight": 0.5}, {"stack": ["x"], "weight": 0.5}]
}"#;

    #[test]
    fn bpda_round_trip() {
        let bpda = parse_bpda(TOY).unwrap();
        assert_eq!(bpda.string_prob(&[0, 0]), 0.125);
        let again = parse_bpda(&bpda_json(&bpda)).unwrap();
        assert_eq!(bpda_to_file(&again), bpda_to_file(&bpda));
    }

    #[test]
    fn unknown_fields_are_rejected_with_a_line() {
        let text = TOY.replace("\"m\": 1,", "\"m\": 1,\n  \"bound\": 2,");
        let err = parse_bpda(&text).unwrap_err().to_string();
        assert!(err.contains("unknown field `bound`"), "{err}");
        assert!(err.contains("line 6"), "{err}");
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let text = TOY.replace("\"next\": [\"x\"], \"weight\": 0.5},", "\"next\": [\"y\"], \"weight\": 0.5},");
        let err = parse_bpda(&text).unwrap_err().to_string();
        assert_eq!(err, "field `transitions[0].next`: unknown symbol `y`");
    }

    #[test]
    fn kind_mismatch() {
        let text = TOY.replace("\"bpda\"", "\"pfsa\"");
        assert!(parse_bpda(&text).is_err());
        let text = TOY.replace("\"bpda\"", "\"automaton\"");
        assert!(ModelFile::parse(&text).is_err());
    }

    #[test]
    fn float_entries_round_trip_exactly() {
        let v = [0.1, 1.0 / 3.0, -2.5e-300, 123456.789];
        let json = serde_json::to_string(&v).unwrap();
        let back: Vec<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }
}
