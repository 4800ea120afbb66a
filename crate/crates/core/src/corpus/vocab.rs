use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{AcmError, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;
pub const DOCSEP: TokenId = 4;

const RESERVED: [&str; 5] = ["<pad>", "<bos>", "<eos>", "<unk>", "<docsep>"];

/// Number of reserved ids preceding every file-listed token.
pub const RESERVED_COUNT: usize = RESERVED.len();

/// Dense token ↔ id map. Ids `0..5` are reserved and never reassigned.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(Vec::<String>::new()).expect("reserved tokens are unique")
    }
}

impl Vocabulary {
    /// Builds a vocabulary from non-reserved tokens in id order.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        all.extend(tokens.into_iter().map(Into::into));
        let mut index = HashMap::with_capacity(all.len());
        for (i, t) in all.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(AcmError::Data(format!("invalid vocabulary token {t:?}")));
            }
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(AcmError::Data(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens: all, index })
    }

    /// Frequency-ranked vocabulary over tokenized texts; ties break
    /// alphabetically. `max_size` counts reserved ids.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, max_size: Option<usize>) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for w in super::tokenize::words(text) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(w, _)| !RESERVED.contains(&w.as_str()))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        if let Some(max) = max_size {
            ranked.truncate(max.saturating_sub(RESERVED_COUNT));
        }
        Self::from_tokens(ranked.into_iter().map(|(w, _)| w)).expect("distinct words")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        self.tokens.get(id as usize).map_or("<unk>", String::as_str)
    }

    pub fn is_special(id: TokenId) -> bool {
        (id as usize) < RESERVED_COUNT
    }

    /// Space-joined surface text, specials dropped.
    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .filter(|&&id| !Self::is_special(id) || id == UNK)
            .map(|&id| self.token(id))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// One token per line, reserved ids omitted.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens[RESERVED_COUNT..] {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_file_string()).map_err(|e| AcmError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| AcmError::io(path, e))?;
        let lines: Vec<&str> = text.lines().collect();
        for (i, l) in lines.iter().enumerate() {
            if l.is_empty() || l.chars().any(char::is_whitespace) {
                return Err(AcmError::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("invalid token {l:?}"),
                });
            }
        }
        Self::from_tokens(lines)
    }
}
