//! Ordered symbol alphabets.
//!
//! Symbols are referred to by their index in declaration order everywhere
//! else in the crate. The end-of-string marker is never part of an alphabet;
//! distributions over `Σ ∪ {EOS}` put EOS at index `len()`.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Reserved name of the end-of-string marker.
pub const EOS: &str = "EOS";

/// Reserved name of the empty-slot placeholder of a bounded stack.
pub const PLACEHOLDER: &str = "ι";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlphabetError {
    #[error("alphabet must contain at least one symbol")]
    Empty,
    #[error("duplicate symbol `{0}`")]
    Duplicate(String),
    #[error("symbol `{0}` is reserved")]
    Reserved(String),
    #[error("invalid symbol `{0}`: symbols must be non-empty and contain no whitespace")]
    Invalid(String),
    #[error("unknown symbol `{0}`")]
    Unknown(String),
    #[error("cannot tokenize `{text}` at byte {position}")]
    Untokenizable { text: String, position: usize },
}

#[derive(Clone, PartialEq, Eq)]
pub struct Alphabet {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl Alphabet {
    pub fn new<I, S>(symbols: I) -> Result<Self, AlphabetError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        if symbols.is_empty() {
            return Err(AlphabetError::Empty);
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if s.is_empty() || s.chars().any(char::is_whitespace) {
                return Err(AlphabetError::Invalid(s.clone()));
            }
            if s == EOS || s == PLACEHOLDER {
                return Err(AlphabetError::Reserved(s.clone()));
            }
            if index.insert(s.clone(), i).is_some() {
                return Err(AlphabetError::Duplicate(s.clone()));
            }
        }
        Ok(Self { symbols, index })
    }

    /// One symbol per character of `chars`, e.g. `"ab"` gives `{a, b}`.
    pub fn from_chars(chars: &str) -> Result<Self, AlphabetError> {
        Self::new(chars.chars().map(String::from))
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbol(&self, i: usize) -> &str {
        &self.symbols[i]
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn lookup(&self, symbol: &str) -> Result<usize, AlphabetError> {
        self.index_of(symbol)
            .ok_or_else(|| AlphabetError::Unknown(symbol.to_string()))
    }

    /// Name of an entry of `Σ ∪ {EOS}`; index `len()` is EOS.
    pub fn eos_symbol(&self, i: usize) -> &str {
        if i == self.len() {
            EOS
        } else {
            self.symbol(i)
        }
    }

    /// Splits `text` into symbols by greedy longest match. Whitespace
    /// separates tokens and is otherwise ignored.
    pub fn tokenize(&self, text: &str) -> Result<Vec<usize>, AlphabetError> {
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            if let Some(i) = self.index_of(word) {
                out.push(i);
                continue;
            }
            let mut rest = word;
            while !rest.is_empty() {
                let best = self
                    .symbols
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| rest.starts_with(s.as_str()))
                    .max_by_key(|(_, s)| s.len());
                match best {
                    Some((i, s)) => {
                        out.push(i);
                        rest = &rest[s.len()..];
                    }
                    None => {
                        return Err(AlphabetError::Untokenizable {
                            text: text.to_string(),
                            position: text.len() - rest.len(),
                        })
                    }
                }
            }
        }
        Ok(out)
    }

    /// Renders a string of symbol indices. Single-character alphabets are
    /// concatenated, anything else is space separated. `ε` for the empty string.
    pub fn render(&self, string: &[usize]) -> String {
        if string.is_empty() {
            return "ε".to_string();
        }
        let sep = if self.symbols.iter().all(|s| s.chars().count() == 1) {
            ""
        } else {
            " "
        };
        string
            .iter()
            .map(|&i| self.symbol(i))
            .collect::<Vec<_>>()
            .join(sep)
    }
}

impl fmt::Debug for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.symbols).finish()
    }
}
