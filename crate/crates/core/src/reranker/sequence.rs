//! Marker-annotated input sequences for the two encoders.

use std::fmt;

use crate::corpus::{EntityRecord, MentionRecord};
use crate::tokenizer::tokenize;

use super::{EncoderConfig, RerankError};

/// Reserved boundary and separator tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Marker {
    MentionStart,
    MentionEnd,
    NameDesc,
}

impl Marker {
    pub(crate) fn row(self) -> usize {
        match self {
            Marker::MentionStart => 0,
            Marker::MentionEnd => 1,
            Marker::NameDesc => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SeqToken {
    Text(String),
    Marker(Marker),
}

impl fmt::Display for SeqToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeqToken::Text(t) => f.write_str(t),
            SeqToken::Marker(Marker::MentionStart) => f.write_str("<M_START>"),
            SeqToken::Marker(Marker::MentionEnd) => f.write_str("<M_END>"),
            SeqToken::Marker(Marker::NameDesc) => f.write_str("<NAME_DESC>"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Mention,
    Entity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkedSequence {
    tokens: Vec<SeqToken>,
    role: Role,
}

impl MarkedSequence {
    pub fn tokens(&self) -> &[SeqToken] {
        &self.tokens
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens rendered as strings, markers in angle brackets.
    pub fn render(&self) -> Vec<String> {
        self.tokens.iter().map(ToString::to_string).collect()
    }
}

fn text_tokens(s: &str) -> impl Iterator<Item = SeqToken> {
    tokenize(s).into_inner().into_iter().map(SeqToken::Text)
}

/// `left ⟨M_START⟩ mention ⟨M_END⟩ right`, trimmed to `max_len` by removing
/// context tokens from the outer end of whichever side is longer (left on ties).
pub fn build_mention_sequence(m: &MentionRecord, cfg: &EncoderConfig) -> Result<MarkedSequence, RerankError> {
    let (left, mention, right) = m
        .split_context()
        .ok_or_else(|| RerankError::InvalidSpan(m.doc_id.clone()))?;
    let left: Vec<SeqToken> = text_tokens(left).collect();
    let span: Vec<SeqToken> = text_tokens(mention).collect();
    let right: Vec<SeqToken> = text_tokens(right).collect();

    let span_len = span.len() + 2;
    if span_len > cfg.max_len {
        return Err(RerankError::MentionTooLong {
            doc_id: m.doc_id.clone(),
            tokens: span_len,
            max_len: cfg.max_len,
        });
    }
    let budget = cfg.max_len - span_len;
    let (mut keep_left, mut keep_right) = (left.len(), right.len());
    while keep_left + keep_right > budget {
        if keep_left >= keep_right {
            keep_left -= 1;
        } else {
            keep_right -= 1;
        }
    }

    let mut tokens = Vec::with_capacity(keep_left + span_len + keep_right);
    tokens.extend(left[left.len() - keep_left..].iter().cloned());
    tokens.push(SeqToken::Marker(Marker::MentionStart));
    tokens.extend(span);
    tokens.push(SeqToken::Marker(Marker::MentionEnd));
    tokens.extend(right.into_iter().take(keep_right));
    Ok(MarkedSequence {
        tokens,
        role: Role::Mention,
    })
}

/// `name ⟨NAME_DESC⟩ description`, with the description cut to fit `max_len`.
pub fn build_entity_sequence(e: &EntityRecord, cfg: &EncoderConfig) -> Result<MarkedSequence, RerankError> {
    let mut tokens: Vec<SeqToken> = text_tokens(&e.name).collect();
    if tokens.len() + 1 > cfg.max_len {
        return Err(RerankError::NameTooLong {
            entity_id: e.id.clone(),
            tokens: tokens.len() + 1,
            max_len: cfg.max_len,
        });
    }
    tokens.push(SeqToken::Marker(Marker::NameDesc));
    let room = cfg.max_len - tokens.len();
    tokens.extend(text_tokens(&e.description).take(room));
    Ok(MarkedSequence {
        tokens,
        role: Role::Entity,
    })
}
