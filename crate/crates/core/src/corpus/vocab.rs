use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::TokenId;
use crate::{Error, Result};

pub const UNK: &str = "<unk>";
pub const EOS: &str = "<eos>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenMode {
    /// One token per Unicode scalar; newlines are ordinary characters.
    Char,
    /// Whitespace-separated words; every line ends with `<eos>`.
    Word,
}

impl std::str::FromStr for TokenMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "char" => Ok(Self::Char),
            "word" => Ok(Self::Word),
            other => Err(Error::Vocab(format!("unknown token mode {other:?}"))),
        }
    }
}

pub fn tokenize(text: &str, mode: TokenMode) -> Vec<String> {
    match mode {
        TokenMode::Char => text.chars().map(String::from).collect(),
        TokenMode::Word => text
            .lines()
            .flat_map(|line| line.split_whitespace().map(str::to_owned).chain([EOS.to_owned()]))
            .collect(),
    }
}

/// Token/id bijection. Ids 0 and 1 are `<unk>` and `<eos>`; the rest follow
/// descending frequency with ties broken by first occurrence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    mode: TokenMode,
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    pub const UNK_ID: TokenId = 0;
    pub const EOS_ID: TokenId = 1;

    pub fn build(text: &str, mode: TokenMode, min_count: usize) -> Result<Self> {
        let tokens = tokenize(text, mode);
        if tokens.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
        for (pos, tok) in tokens.iter().enumerate() {
            if tok == UNK || tok == EOS {
                continue;
            }
            counts.entry(tok.as_str()).or_insert((0, pos)).0 += 1;
        }
        let mut ranked: Vec<(&str, usize, usize)> = counts
            .into_iter()
            .filter(|&(_, (count, _))| count >= min_count.max(1))
            .map(|(tok, (count, first))| (tok, count, first))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        let list = [UNK, EOS]
            .into_iter()
            .chain(ranked.into_iter().map(|(tok, _, _)| tok))
            .map(str::to_owned)
            .collect();
        Self::from_tokens(mode, list)
    }

    /// Rebuilds a vocabulary from its id-ordered token list.
    pub fn from_tokens(mode: TokenMode, tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 || tokens[0] != UNK || tokens[1] != EOS {
            return Err(Error::Vocab(format!("token list must start with {UNK}, {EOS}")));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), id as TokenId).is_some() {
                return Err(Error::Vocab(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Self { mode, tokens, index })
    }

    pub fn mode(&self) -> TokenMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        tokenize(text, self.mode)
            .iter()
            .map(|t| self.id(t).unwrap_or(Self::UNK_ID))
            .collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> String {
        match self.mode {
            TokenMode::Char => ids.iter().map(|&id| self.token(id).unwrap_or(UNK)).collect(),
            TokenMode::Word => {
                let mut out = String::new();
                let mut line_start = true;
                for &id in ids {
                    if id == Self::EOS_ID {
                        out.push('\n');
                        line_start = true;
                        continue;
                    }
                    if !line_start {
                        out.push(' ');
                    }
                    out.push_str(self.token(id).unwrap_or(UNK));
                    line_start = false;
                }
                out
            }
        }
    }
}
