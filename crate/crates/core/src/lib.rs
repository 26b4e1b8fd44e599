//! Probabilistic bounded pushdown automata and their compilation to
//! Heaviside Elman RNN language models.

pub mod alphabet;
pub mod bpda;
pub mod cli;
pub mod compiler;
pub mod constructions;
pub mod format;
pub mod linalg;
pub mod lm;
pub mod oracle;
pub mod pfsa;
pub mod rnn;
pub mod stack;
pub mod structure;

pub use alphabet::Alphabet;
pub use bpda::Bpda;
pub use lm::LanguageModel;
pub use pfsa::Pfsa;
pub use rnn::{ElmanRnn, RnnLm};
pub use stack::{StackConfig, StackSpace};
pub use structure::Certificate;
