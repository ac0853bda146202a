use std::collections::HashMap;
use std::fmt;

use super::CorpusError;

pub type TokenId = u32;

pub const THINK_OPEN: &str = "<Thinking>";
pub const THINK_CLOSE: &str = "</Thinking>";
pub const ANSWER_OPEN: &str = "<Answer>";
pub const ANSWER_CLOSE: &str = "</Answer>";

/// The four structural tag literals, in the order they appear in a target.
pub const TAG_LITERALS: [&str; 4] = [THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE];

/// Rendering used by [`Vocabulary::detokenize`] for the non-tag specials.
pub const BOS_LITERAL: &str = "<|bos|>";
pub const EOS_LITERAL: &str = "<|eos|>";
pub const PAD_LITERAL: &str = "<|pad|>";

/// Tokens that own a single id and are never produced by [`Vocabulary::tokenize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Special {
    Pad,
    Bos,
    Eos,
    ThinkOpen,
    ThinkClose,
    AnswerOpen,
    AnswerClose,
}

impl Special {
    pub const ALL: [Special; 7] = [
        Special::Pad,
        Special::Bos,
        Special::Eos,
        Special::ThinkOpen,
        Special::ThinkClose,
        Special::AnswerOpen,
        Special::AnswerClose,
    ];

    pub fn literal(self) -> &'static str {
        match self {
            Special::Pad => PAD_LITERAL,
            Special::Bos => BOS_LITERAL,
            Special::Eos => EOS_LITERAL,
            Special::ThinkOpen => THINK_OPEN,
            Special::ThinkClose => THINK_CLOSE,
            Special::AnswerOpen => ANSWER_OPEN,
            Special::AnswerClose => ANSWER_CLOSE,
        }
    }

    pub fn is_tag(self) -> bool {
        matches!(
            self,
            Special::ThinkOpen | Special::ThinkClose | Special::AnswerOpen | Special::AnswerClose
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Token {
    Special(Special),
    Char(char),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Special(s) => f.write_str(s.literal()),
            Token::Char(c) => write!(f, "{c}"),
        }
    }
}

/// Character-level vocabulary: the seven specials followed by newline and
/// printable ASCII.
///
/// Ids `0..7` are the specials in [`Special::ALL`] order, so the layout is
/// stable across builds and checkpoints.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<Token>,
    by_char: HashMap<char, TokenId>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::standard()
    }
}

impl Vocabulary {
    pub fn standard() -> Self {
        let alphabet = std::iter::once('\n').chain((0x20u8..=0x7e).map(char::from));
        Self::with_alphabet(alphabet)
    }

    /// Builds a vocabulary over an arbitrary character set. Duplicate
    /// characters keep their first id.
    pub fn with_alphabet(alphabet: impl IntoIterator<Item = char>) -> Self {
        let mut tokens: Vec<Token> = Special::ALL.iter().copied().map(Token::Special).collect();
        let mut by_char = HashMap::new();
        for c in alphabet {
            if by_char.contains_key(&c) {
                continue;
            }
            by_char.insert(c, tokens.len() as TokenId);
            tokens.push(Token::Char(c));
        }
        Self { tokens, by_char }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, special: Special) -> TokenId {
        Special::ALL.iter().position(|s| *s == special).unwrap() as TokenId
    }

    pub fn token(&self, id: TokenId) -> Option<Token> {
        self.tokens.get(id as usize).copied()
    }

    pub fn special_of(&self, id: TokenId) -> Option<Special> {
        match self.token(id)? {
            Token::Special(s) => Some(s),
            Token::Char(_) => None,
        }
    }

    pub fn is_tag_id(&self, id: TokenId) -> bool {
        self.special_of(id).is_some_and(Special::is_tag)
    }

    /// Character-level tokenization. Tag literals are spelled out character by
    /// character; only [`super::reconstruct`] emits the atomic tag ids.
    pub fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, CorpusError> {
        text.chars()
            .enumerate()
            .map(|(offset, c)| {
                self.by_char
                    .get(&c)
                    .copied()
                    .ok_or(CorpusError::UnknownSymbol { symbol: c, offset })
            })
            .collect()
    }

    pub fn detokenize(&self, ids: &[TokenId]) -> Result<String, CorpusError> {
        let mut out = String::with_capacity(ids.len());
        for &id in ids {
            match self.token(id) {
                Some(Token::Char(c)) => out.push(c),
                Some(Token::Special(s)) => out.push_str(s.literal()),
                None => {
                    return Err(CorpusError::IdOutOfRange {
                        id,
                        vocab_size: self.len(),
                    })
                }
            }
        }
        Ok(out)
    }

    /// Space-separated token rendering, handy for inspecting targets.
    pub fn render_tokens(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&id| match self.token(id) {
                Some(Token::Special(Special::Eos)) => "EOS".to_string(),
                Some(Token::Special(Special::Bos)) => "BOS".to_string(),
                Some(Token::Special(Special::Pad)) => "PAD".to_string(),
                Some(t) => t.to_string(),
                None => format!("#{id}"),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}
