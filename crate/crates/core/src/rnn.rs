//! Elman RNNs with Heaviside or ReLU units and softmax output layers.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::alphabet::Alphabet;
use crate::lm::{self, softmax, LanguageModel, Sample};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    /// `H(x) = 1` iff `x > 0`.
    Heaviside,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Heaviside => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Relu => x.max(0.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Heaviside => "heaviside",
            Activation::Relu => "relu",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RnnError {
    #[error("{what} has shape {got:?}, expected {expected:?}")]
    Shape {
        what: &'static str,
        got: (usize, usize),
        expected: (usize, usize),
    },
    #[error("only Heaviside networks can be lifted to ReLU")]
    NotHeaviside,
}

fn check_shape(what: &'static str, got: (usize, usize), expected: (usize, usize)) -> Result<(), RnnError> {
    if got == expected {
        Ok(())
    } else {
        Err(RnnError::Shape { what, got, expected })
    }
}

/// `h_t = σ(U h_{t-1} + V ⟦y_t⟧ + b)`, `h_0 = η`, with one-hot inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ElmanRnn {
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    b: DVector<f64>,
    eta: DVector<f64>,
    activation: Activation,
}

impl ElmanRnn {
    pub fn new(
        u: DMatrix<f64>,
        v: DMatrix<f64>,
        b: DVector<f64>,
        eta: DVector<f64>,
        activation: Activation,
    ) -> Result<Self, RnnError> {
        let d = u.nrows();
        check_shape("U", u.shape(), (d, d))?;
        check_shape("V", (v.nrows(), 1), (d, 1))?;
        check_shape("b", b.shape(), (d, 1))?;
        check_shape("eta", eta.shape(), (d, 1))?;
        Ok(Self {
            u,
            v,
            b,
            eta,
            activation,
        })
    }

    /// `D`.
    pub fn hidden_size(&self) -> usize {
        self.u.nrows()
    }

    /// `R`, the one-hot input width.
    pub fn input_size(&self) -> usize {
        self.v.ncols()
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn eta(&self) -> &DVector<f64> {
        &self.eta
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn pre_activation(&self, h: &DVector<f64>, symbol: usize) -> DVector<f64> {
        &self.u * h + self.v.column(symbol) + &self.b
    }

    pub fn step(&self, h: &DVector<f64>, symbol: usize) -> DVector<f64> {
        self.pre_activation(h, symbol)
            .map(|x| self.activation.apply(x))
    }

    /// `h(y⃗)`, the state after reading `string` from `η`.
    pub fn hidden(&self, string: &[usize]) -> DVector<f64> {
        string
            .iter()
            .fold(self.eta.clone(), |h, &y| self.step(&h, y))
    }

    /// Hidden states after each prefix of `string`, starting with `η`.
    pub fn trajectory(&self, string: &[usize]) -> Vec<DVector<f64>> {
        let mut out = vec![self.eta.clone()];
        for &y in string {
            let next = self.step(out.last().expect("non-empty"), y);
            out.push(next);
        }
        out
    }

    /// Precision of `h(y⃗)` in bits.
    pub fn precision(&self, string: &[usize]) -> u32 {
        precision(&self.hidden(string))
    }
}

/// Bits to write `x` as a reduced fraction `p/q`: `⌈log₂p⌉ + ⌈log₂q⌉`, and 0
/// for `x = 0`. Every finite double is dyadic, so `q` is a power of two.
pub fn entry_precision(x: f64) -> u32 {
    if x == 0.0 || !x.is_finite() {
        return 0;
    }
    let bits = x.abs().to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i64;
    let fraction = bits & ((1u64 << 52) - 1);
    let (mut mantissa, mut exp) = if biased == 0 {
        (fraction, -1074)
    } else {
        (fraction | (1u64 << 52), biased - 1075)
    };
    let shift = mantissa.trailing_zeros();
    mantissa >>= shift;
    exp += shift as i64;
    // |x| = mantissa · 2^exp with mantissa odd
    let log_odd = if mantissa == 1 {
        0
    } else {
        64 - mantissa.leading_zeros()
    };
    if exp >= 0 {
        log_odd + exp as u32
    } else {
        log_odd + (-exp) as u32
    }
}

/// Largest per-entry precision of a hidden state.
pub fn precision(h: &DVector<f64>) -> u32 {
    h.iter().map(|&x| entry_precision(x)).max().unwrap_or(0)
}

/// An Elman RNN with output layer `softmax(E h + u)` over `Σ ∪ {EOS}`.
#[derive(Clone, Debug, PartialEq)]
pub struct RnnLm {
    sigma: Alphabet,
    rnn: ElmanRnn,
    e: DMatrix<f64>,
    u: DVector<f64>,
}

impl RnnLm {
    pub fn new(sigma: Alphabet, rnn: ElmanRnn, e: DMatrix<f64>, u: DVector<f64>) -> Result<Self, RnnError> {
        let d = rnn.hidden_size();
        let out = sigma.len() + 1;
        check_shape("V", rnn.v.shape(), (d, sigma.len()))?;
        check_shape("E", e.shape(), (out, d))?;
        check_shape("u", u.shape(), (out, 1))?;
        Ok(Self { sigma, rnn, e, u })
    }

    pub fn rnn(&self) -> &ElmanRnn {
        &self.rnn
    }

    pub fn e(&self) -> &DMatrix<f64> {
        &self.e
    }

    pub fn u(&self) -> &DVector<f64> {
        &self.u
    }

    pub fn with_readout(&self, e: DMatrix<f64>, u: DVector<f64>) -> Result<Self, RnnError> {
        Self::new(self.sigma.clone(), self.rnn.clone(), e, u)
    }

    pub fn logits(&self, h: &DVector<f64>) -> Vec<f64> {
        (&self.e * h + &self.u).iter().copied().collect()
    }

    pub fn dist_at(&self, h: &DVector<f64>) -> Vec<f64> {
        softmax(&self.logits(h))
    }

    /// `p(· | y⃗)`.
    pub fn next_dist_after(&self, string: &[usize]) -> Vec<f64> {
        self.dist_at(&self.rnn.hidden(string))
    }

    /// Chain-rule probability of `string` followed by EOS.
    pub fn string_prob(&self, string: &[usize]) -> f64 {
        self.prob(string)
    }

    pub fn sample(&self, seed: u64, max_len: usize) -> Sample {
        lm::sample(self, seed, max_len)
    }

    /// The ReLU network of twice the size whose paired differences follow
    /// this network's Heaviside trajectory.
    pub fn relu_lift(&self) -> Result<ReluLm, RnnError> {
        Ok(ReluLm {
            sigma: self.sigma.clone(),
            lift: heaviside_to_relu(&self.rnn)?,
            e: self.e.clone(),
            u: self.u.clone(),
        })
    }
}

/// Prefix state for chain-rule evaluation: hidden vector and prefix weight.
pub type RnnState = (DVector<f64>, f64);

impl LanguageModel for RnnLm {
    type State = RnnState;

    fn sigma(&self) -> &Alphabet {
        &self.sigma
    }

    fn start(&self) -> RnnState {
        (self.rnn.eta.clone(), 1.0)
    }

    fn advance(&self, (h, w): &RnnState, symbol: usize) -> RnnState {
        let p = self.dist_at(h)[symbol];
        (self.rnn.step(h, symbol), w * p)
    }

    fn stop_prob(&self, (h, w): &RnnState) -> f64 {
        w * self.dist_at(h)[self.sigma.len()]
    }

    fn next_dist(&self, (h, _): &RnnState) -> Option<Vec<f64>> {
        Some(self.dist_at(h))
    }
}

/// A ReLU network of size `2D` with `s = [ReLU(a); ReLU(a - 1)]`, where `a`
/// is the Heaviside pre-activation. For integer `a`,
/// `H(a) = ReLU(a) - ReLU(a - 1)`, so the projection `s[..D] - s[D..]`
/// equals the Heaviside state.
#[derive(Clone, Debug, PartialEq)]
pub struct ReluLift {
    rnn: ElmanRnn,
    d: usize,
}

pub fn heaviside_to_relu(rnn: &ElmanRnn) -> Result<ReluLift, RnnError> {
    if rnn.activation != Activation::Heaviside {
        return Err(RnnError::NotHeaviside);
    }
    let d = rnn.hidden_size();
    let r = rnn.input_size();
    let mut u = DMatrix::zeros(2 * d, 2 * d);
    for (i0, j0, sign) in [(0, 0, 1.0), (0, d, -1.0), (d, 0, 1.0), (d, d, -1.0)] {
        u.view_mut((i0, j0), (d, d)).copy_from(&(&rnn.u * sign));
    }
    let mut v = DMatrix::zeros(2 * d, r);
    v.view_mut((0, 0), (d, r)).copy_from(&rnn.v);
    v.view_mut((d, 0), (d, r)).copy_from(&rnn.v);
    let mut b = DVector::zeros(2 * d);
    b.rows_mut(0, d).copy_from(&rnn.b);
    b.rows_mut(d, d).copy_from(&rnn.b.map(|x| x - 1.0));
    let mut eta = DVector::zeros(2 * d);
    eta.rows_mut(0, d).copy_from(&rnn.eta);
    Ok(ReluLift {
        rnn: ElmanRnn::new(u, v, b, eta, Activation::Relu)?,
        d,
    })
}

impl ReluLift {
    pub fn rnn(&self) -> &ElmanRnn {
        &self.rnn
    }

    /// `D`, the size of the Heaviside network being simulated.
    pub fn projected_size(&self) -> usize {
        self.d
    }

    pub fn project(&self, s: &DVector<f64>) -> DVector<f64> {
        s.rows(0, self.d) - s.rows(self.d, self.d)
    }

    pub fn projected_hidden(&self, string: &[usize]) -> DVector<f64> {
        self.project(&self.rnn.hidden(string))
    }

    pub fn projected_trajectory(&self, string: &[usize]) -> Vec<DVector<f64>> {
        self.rnn
            .trajectory(string)
            .iter()
            .map(|s| self.project(s))
            .collect()
    }
}

/// Language model reading its logits off the projected ReLU state.
#[derive(Clone, Debug, PartialEq)]
pub struct ReluLm {
    sigma: Alphabet,
    lift: ReluLift,
    e: DMatrix<f64>,
    u: DVector<f64>,
}

impl ReluLm {
    pub fn lift(&self) -> &ReluLift {
        &self.lift
    }

    fn dist_at(&self, s: &DVector<f64>) -> Vec<f64> {
        let h = self.lift.project(s);
        softmax(&(&self.e * h + &self.u).iter().copied().collect::<Vec<_>>())
    }

    /// The same model as a plain ReLU RNN LM with output matrix `[E, -E]`.
    pub fn to_rnn_lm(&self) -> RnnLm {
        let (out, d) = self.e.shape();
        let mut e = DMatrix::zeros(out, 2 * d);
        e.view_mut((0, 0), (out, d)).copy_from(&self.e);
        e.view_mut((0, d), (out, d)).copy_from(&(-&self.e));
        RnnLm::new(self.sigma.clone(), self.lift.rnn.clone(), e, self.u.clone())
            .expect("lifted shapes are consistent")
    }
}

impl LanguageModel for ReluLm {
    type State = RnnState;

    fn sigma(&self) -> &Alphabet {
        &self.sigma
    }

    fn start(&self) -> RnnState {
        (self.lift.rnn.eta.clone(), 1.0)
    }

    fn advance(&self, (s, w): &RnnState, symbol: usize) -> RnnState {
        let p = self.dist_at(s)[symbol];
        (self.lift.rnn.step(s, symbol), w * p)
    }

    fn stop_prob(&self, (s, w): &RnnState) -> f64 {
        w * self.dist_at(s)[self.sigma.len()]
    }

    fn next_dist(&self, (s, _): &RnnState) -> Option<Vec<f64>> {
        Some(self.dist_at(s))
    }
}
